#include "hssc/codec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hssc/range_coder.hpp"

namespace hssc {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'S', 'C', '0', '0', '0', '1'};

Tensor<double> decode_image(Model<double>& model, const Tensor<double>& y_hat, Index height,
                            Index width) {
  Tensor<double> x = crop(model.generate(y_hat), height, width);
  x.array() = x.array().max(0.0).min(1.0);
  return x;
}

Tensor<double> symbols_to_latent(const std::vector<int>& symbols, const Shape& shape, double offset) {
  Tensor<double> y(shape);
  for (Index i = 0; i < y.size(); ++i) y[i] = symbols[static_cast<std::size_t>(i)] + offset;
  return y;
}

}  // namespace

Tensor<double> pad_replicate(const Tensor<double>& x, Index multiple, Index& pad_right,
                             Index& pad_bottom) {
  if (x.rank() != 3) throw ShapeError("pad: expected [B, H, W], got " + to_string(x.shape()));
  const Index h = x.dim(1), w = x.dim(2);
  pad_bottom = (multiple - h % multiple) % multiple;
  pad_right = (multiple - w % multiple) % multiple;
  if (pad_bottom == 0 && pad_right == 0) return x;
  Tensor<double> out(Shape{x.dim(0), h + pad_bottom, w + pad_right});
  for (Index b = 0; b < x.dim(0); ++b)
    for (Index r = 0; r < h + pad_bottom; ++r)
      for (Index c = 0; c < w + pad_right; ++c) out(b, r, c) = x(b, std::min(r, h - 1), std::min(c, w - 1));
  return out;
}

Tensor<double> crop(const Tensor<double>& x, Index height, Index width) {
  if (x.rank() != 3 || x.dim(1) < height || x.dim(2) < width) {
    throw ShapeError("crop: cannot crop " + to_string(x.shape()) + " to " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  if (x.dim(1) == height && x.dim(2) == width) return x;
  Tensor<double> out(Shape{x.dim(0), height, width});
  for (Index b = 0; b < x.dim(0); ++b)
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c) out(b, r, c) = x(b, r, c);
  return out;
}

double bpp(std::uint64_t bits, const Shape& cube, BppMode mode) {
  if (cube.size() != 3) throw ShapeError("bpp: expected a [B, H, W] shape");
  const double pixels = static_cast<double>(cube[1] * cube[2]);
  const double denom = mode == BppMode::per_pixel ? pixels : pixels * static_cast<double>(cube[0]);
  return static_cast<double>(bits) / denom;
}

std::vector<std::uint8_t> BitstreamFile::serialize() const {
  BitWriter w;
  for (char c : kMagic) w.write_bits(static_cast<std::uint8_t>(c), 8);
  w.write_bits(kVersion, 16);
  for (auto b : digest) w.write_bits(b, 8);
  w.write_bits(bands, 32);
  w.write_bits(height, 32);
  w.write_bits(width, 32);
  w.write_bits(pad_right, 8);
  w.write_bits(pad_bottom, 8);
  w.write_f32(offset);
  w.write_u64(static_cast<std::uint64_t>(payload.size()) * 8);
  w.write_bytes(payload);
  w.write_u8(side ? 1 : 0);
  if (side) {
    w.write_u64(static_cast<std::uint64_t>(side->size()) * 8);
    w.write_bytes(*side);
  }
  return w.take();
}

BitstreamFile BitstreamFile::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("bitstream: bad magic (not an HSSC bitstream)");
  }
  BitReader r(bytes.subspan(sizeof(kMagic)));
  const auto version = r.read_bits(16);
  if (version != kVersion) throw FormatError("bitstream: unsupported version " + std::to_string(version));
  BitstreamFile f;
  for (auto& b : f.digest) b = static_cast<std::uint8_t>(r.read_bits(8));
  f.bands = static_cast<std::uint32_t>(r.read_bits(32));
  f.height = static_cast<std::uint32_t>(r.read_bits(32));
  f.width = static_cast<std::uint32_t>(r.read_bits(32));
  if (f.bands == 0 || f.height == 0 || f.width == 0) throw FormatError("bitstream: zero extent");
  f.pad_right = static_cast<std::uint8_t>(r.read_bits(8));
  f.pad_bottom = static_cast<std::uint8_t>(r.read_bits(8));
  f.offset = r.read_f32();
  auto read_section = [&](std::vector<std::uint8_t>& out) {
    const std::uint64_t bits = r.read_bits(64);
    if (bits % 8 != 0) throw FormatError("bitstream: section length is not whole bytes");
    if (bits / 8 > bytes.size()) throw BitstreamError("bitstream underrun");
    out = r.read_bytes(bits / 8);
  };
  read_section(f.payload);
  const auto flag = r.read_bits(8);
  if (flag > 1) throw FormatError("bitstream: bad side-information flag");
  if (flag == 1) {
    f.side.emplace();
    read_section(*f.side);
  }
  if (r.bits_remaining() >= 8) throw FormatError("bitstream: trailing bytes after the last section");
  return f;
}

Shape BitstreamFile::latent_shape(const ModelConfig& config) const {
  return {config.latent_total(), (height + pad_bottom) / kPadMultiple,
          (width + pad_right) / kPadMultiple};
}

CompressResult compress(Model<double>& model, const Tensor<double>& x, double offset) {
  if (x.rank() != 3 || x.dim(0) != model.config().bands) {
    throw ShapeError("compress: model expects " + std::to_string(model.config().bands) +
                     " bands, cube is " + to_string(x.shape()));
  }
  if (x.data().minCoeff() < 0.0 || x.data().maxCoeff() > 1.0) {
    throw std::invalid_argument("compress: cube values must lie in [0, 1]");
  }
  CompressResult res;
  BitstreamFile& f = res.file;
  f.digest = model_digest(model);
  f.bands = static_cast<std::uint32_t>(x.dim(0));
  f.height = static_cast<std::uint32_t>(x.dim(1));
  f.width = static_cast<std::uint32_t>(x.dim(2));
  Index pr = 0, pb = 0;
  const Tensor<double> padded = pad_replicate(x, kPadMultiple, pr, pb);
  f.pad_right = static_cast<std::uint8_t>(pr);
  f.pad_bottom = static_cast<std::uint8_t>(pb);
  f.offset = static_cast<float>(offset);
  EncodedLatent enc = model.bottleneck.compress(model.encode(padded), f.offset);
  f.payload = std::move(enc.payload);
  f.side = std::move(enc.side);
  res.symbols = enc.code.symbols;
  res.saturated = enc.saturated;
  res.bytes = f.serialize();
  res.reconstruction = decode_image(model, symbols_to_latent(res.symbols, enc.shape, f.offset),
                                    x.dim(1), x.dim(2));
  res.bpp = bpp(static_cast<std::uint64_t>(res.bytes.size()) * 8, x.shape());
  res.psnr = psnr(x, res.reconstruction);
  res.ssim = x.dim(1) >= 11 && x.dim(2) >= 11 ? ssim(x, res.reconstruction)
                                               : std::numeric_limits<double>::quiet_NaN();
  return res;
}

DecompressResult decompress(Model<double>& model, const BitstreamFile& file) {
  if (file.digest != model_digest(model)) throw FormatError("model/bitstream mismatch");
  if (file.bands != model.config().bands) throw FormatError("model/bitstream mismatch (bands)");
  const Shape shape = file.latent_shape(model.config());
  std::optional<std::span<const std::uint8_t>> side;
  if (file.side) side = std::span<const std::uint8_t>(*file.side);
  const Tensor<double> y_hat = model.bottleneck.decompress(shape, file.offset, file.payload, side);
  DecompressResult res;
  res.symbols.resize(static_cast<std::size_t>(y_hat.size()));
  for (Index i = 0; i < y_hat.size(); ++i) {
    res.symbols[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(y_hat[i] - file.offset));
  }
  res.reconstruction = decode_image(model, y_hat, file.height, file.width);
  return res;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out.flush()) throw IoError("write failed: " + path);
}

}  // namespace hssc
