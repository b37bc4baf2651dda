#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hssc/checkpoint.hpp"
#include "hssc/metrics.hpp"

namespace hssc {

inline constexpr Index kPadMultiple = 16;

// Replicates the last row and column until both extents are multiples of
// `multiple`. Returns the padded cube; pad_right / pad_bottom receive the
// number of added columns / rows.
Tensor<double> pad_replicate(const Tensor<double>& x, Index multiple, Index& pad_right,
                             Index& pad_bottom);
Tensor<double> crop(const Tensor<double>& x, Index height, Index width);

enum class BppMode { per_band_pixel, per_pixel };

// bits / (H W B), or bits / (H W) in per-pixel mode.
double bpp(std::uint64_t bits, const Shape& cube, BppMode mode = BppMode::per_band_pixel);

// "HSSC0001" | u16 version | 32-byte model digest | u32 B, H, W (original
// cube) | u8 pad_right | u8 pad_bottom | f32 offset | u64 payload bits |
// payload | u8 side flag [u64 side bits | side bytes].
struct BitstreamFile {
  static constexpr std::uint16_t kVersion = 1;

  Digest digest{};
  std::uint32_t bands = 0, height = 0, width = 0;
  std::uint8_t pad_right = 0, pad_bottom = 0;
  float offset = 0.0f;
  std::vector<std::uint8_t> payload;
  std::optional<std::vector<std::uint8_t>> side;

  std::vector<std::uint8_t> serialize() const;
  // Throws FormatError on bad magic or version, BitstreamError on truncation.
  static BitstreamFile parse(std::span<const std::uint8_t> bytes);

  Shape cube_shape() const { return {bands, height, width}; }
  // Latent extent implied by the padded cube for a given model config.
  Shape latent_shape(const ModelConfig& config) const;
};

struct CompressResult {
  BitstreamFile file;
  std::vector<std::uint8_t> bytes;  // serialized file
  std::vector<int> symbols;         // main latent, channel-major
  Tensor<double> reconstruction;    // cropped, clamped to [0, 1]
  Index saturated = 0;
  double bpp = 0.0;
  Psnr psnr;
  double ssim = 0.0;                // NaN when the cube is smaller than the window
};

// Pads, encodes, quantizes and entropy-codes x ([B, H, W], values in
// [0, 1]); the reported metrics use the decoder-side reconstruction.
CompressResult compress(Model<double>& model, const Tensor<double>& x, double offset = 0.0);

struct DecompressResult {
  std::vector<int> symbols;
  Tensor<double> reconstruction;  // cropped, clamped to [0, 1]
};

// Throws FormatError("model/bitstream mismatch") when the digest differs.
DecompressResult decompress(Model<double>& model, const BitstreamFile& file);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace hssc
