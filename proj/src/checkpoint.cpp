#include "hssc/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "hssc/serialize.hpp"

namespace hssc {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'S', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint16_t kVersion = 1;

void write_param(std::ostream& out, const Parameter<double>& p) {
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.id.size()));
  write_bytes(out, p.id);
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
  for (Index d : p.value.shape()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  const Eigen::VectorXf f = p.value.data().cast<float>();
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
}

std::string registry_bytes(Model<double>& model) {
  std::ostringstream os;
  const std::string config = model.config().canonical();
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(config.size()));
  write_bytes(os, config);
  const auto params = model.parameters();
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) write_param(os, *p);
  return os.str();
}

}  // namespace

Digest model_digest(Model<double>& model) {
  const std::string bytes = registry_bytes(model);
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.size()) {
    throw std::runtime_error("sha256 failed");
  }
  return d;
}

std::string to_hex(const Digest& digest) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (auto b : digest) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 15]);
  }
  return s;
}

void save_checkpoint(const std::string& path, Model<double>& model,
                     const std::optional<std::string>& appendix) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint16_t>(out, kVersion);
    write_bytes(out, registry_bytes(model));
    write_le<std::uint8_t>(out, appendix ? 1 : 0);
    if (appendix) {
      write_le<std::uint64_t>(out, appendix->size());
      write_bytes(out, *appendix);
    }
    if (!out.flush()) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

LoadedCheckpoint read_checkpoint(const std::string& path, Model<double>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string magic = read_bytes(in, sizeof(kMagic));
  if (magic != std::string(kMagic, sizeof(kMagic))) throw FormatError(path + ": not a checkpoint (bad magic)");
  const auto version = read_le<std::uint16_t>(in);
  if (version != kVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  LoadedCheckpoint out;
  const auto config_len = read_le<std::uint32_t>(in);
  try {
    out.config = ModelConfig::parse(read_bytes(in, config_len));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path + ": bad config section: " + e.what());
  }
  model = Model<double>(out.config);
  const auto params = model.parameters();
  const auto count = read_le<std::uint32_t>(in);
  if (count != params.size()) throw FormatError(path + ": parameter count mismatch");
  for (auto* p : params) {
    const auto id = read_bytes(in, read_le<std::uint16_t>(in));
    if (id != p->id) throw FormatError(path + ": expected parameter " + p->id + ", found " + id);
    const auto rank = read_le<std::uint8_t>(in);
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(read_le<std::uint32_t>(in));
    if (shape != p->value.shape()) throw FormatError(path + ": shape mismatch for " + id);
    Eigen::VectorXf f(p->value.size());
    if (!in.read(reinterpret_cast<char*>(f.data()),
                 static_cast<std::streamsize>(f.size() * sizeof(float)))) {
      throw FormatError(path + ": payload underrun");
    }
    p->value.data() = f.cast<double>();
  }
  if (read_le<std::uint8_t>(in)) out.appendix = read_bytes(in, read_le<std::uint64_t>(in));
  return out;
}

}  // namespace hssc
