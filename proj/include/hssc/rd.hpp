#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hssc/codec.hpp"

namespace hssc {

struct ImageMetrics {
  std::string name;
  double bpp = 0.0;
  double psnr_db = 0.0;
  bool exact = false;
  double ssim = 0.0;
};

struct EvalSummary {
  std::vector<ImageMetrics> images;
  // Means over images.
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct Coded {
  std::uint64_t bits = 0;
  Tensor<double> reconstruction;
};
using CodecFn = std::function<Coded(const Tensor<double>&)>;

// Codes every cube with `codec` and measures bpp (per band-pixel), PSNR and SSIM.
EvalSummary evaluate(const std::vector<std::string>& names, const std::vector<Tensor<double>>& cubes,
                     const CodecFn& codec);
// The full compress / decompress chain of a model.
CodecFn model_codec(Model<double>& model);

// "name,bpp,psnr_db,exact,ssim" rows followed by a "mean" row.
void write_eval_csv(std::ostream& out, const EvalSummary& summary);

struct RdPoint {
  std::string variant;
  double r_t = 0.0;
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

// Sorted by bpp. Throws std::invalid_argument on a repeated (variant, r_t).
std::vector<RdPoint> sort_rd(std::vector<RdPoint> points);

// Indices i (into the sorted points) where PSNR drops from the previous
// point of the same variant although bpp grew.
std::vector<std::size_t> non_monotone_segments(const std::vector<RdPoint>& sorted);

// Header "variant,r_t,bpp,psnr_db,ssim".
void write_rd_csv(std::ostream& out, const std::vector<RdPoint>& sorted);

}  // namespace hssc
