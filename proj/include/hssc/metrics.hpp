#pragma once

#include "hssc/tensor.hpp"

namespace hssc {

// Peak is 1.0 (data normalized to [0, 1]).
inline constexpr double kPsnrCap = 99.0;

struct Psnr {
  double db = 0.0;
  // MSE was exactly zero; db holds the cap.
  bool exact = false;
};

double mse(const Tensor<double>& a, const Tensor<double>& b);
// 10 log10(1 / MSE) over all bands jointly.
Psnr psnr(const Tensor<double>& a, const Tensor<double>& b);

struct SsimOptions {
  Index window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

// Single-scale SSIM per band with a Gaussian window and valid filtering,
// averaged over bands. Inputs are [B, H, W] with H, W >= window.
double ssim(const Tensor<double>& x, const Tensor<double>& y, const SsimOptions& options = {});
// Same value; writes d ssim / d y into grad_y.
double ssim_with_grad(const Tensor<double>& x, const Tensor<double>& y, Tensor<double>& grad_y,
                      const SsimOptions& options = {});

// Normalized 1D Gaussian taps of the SSIM window.
Eigen::VectorXd gaussian_window(Index size, double sigma);

}  // namespace hssc
