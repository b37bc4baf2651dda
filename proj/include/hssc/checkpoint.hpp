#pragma once

#include <array>
#include <optional>
#include <string>

#include "hssc/networks.hpp"

namespace hssc {

using Digest = std::array<std::uint8_t, 32>;

// SHA-256 over the canonical config and every parameter (id, shape and
// little-endian f32 values) in registry order.
Digest model_digest(Model<double>& model);
std::string to_hex(const Digest& digest);

// Layout, little-endian:
//   "HSSCCKPT" | u16 version | u32 n + canonical config | u32 param count |
//   per param: u16 n + id, u8 rank, u32 dims, f32 values |
//   u8 has_appendix [u64 n + appendix bytes]
// Written to a temporary file and renamed, so a crash never leaves a
// half-written checkpoint behind.
void save_checkpoint(const std::string& path, Model<double>& model,
                     const std::optional<std::string>& appendix = std::nullopt);

struct LoadedCheckpoint {
  ModelConfig config;
  std::optional<std::string> appendix;
};

// Rebuilds the model from the stored config and loads the f32 values.
// Throws FormatError on bad magic, version, truncation or registry mismatch.
LoadedCheckpoint read_checkpoint(const std::string& path, Model<double>& model);

}  // namespace hssc
