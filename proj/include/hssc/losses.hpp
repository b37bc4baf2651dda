#pragma once

#include <map>
#include <vector>

#include "hssc/metrics.hpp"
#include "hssc/networks.hpp"

namespace hssc {

// Target rate -> lambda_a, five rows: 0.2 -> 2^1 down to 1.0 -> 2^-3.
const std::map<double, double>& target_rate_table();

struct LossWeights {
  double theta1 = 0.15 / 32.0;  // MSE
  double theta2 = 0.075 / 8.0;  // 1 - SSIM
  double theta3 = 1.0;          // feature-space distance
  double beta = 0.15;
  std::map<double, double> lambda_a = target_rate_table();
  double lambda_b = 1.0 / 64.0;
  double l1_se = 1e-5;

  // Nonnegative weights, lambda_a strictly decreasing in r_t and at least
  // 8 lambda_b. Throws std::invalid_argument.
  void validate() const;
  // Throws std::invalid_argument listing the known keys when r_t is absent.
  double lambda_a_for(double r_t) const;
};

// lambda_a(r_t) when rate > r_t, lambda_b otherwise.
double lambda_select(double rate, double r_t, const LossWeights& weights);

// Stand-in for a learned perceptual metric: squared distance between
// unit-normalized feature maps of a frozen, fixed-seed three-layer conv
// net, applied to each band as a one-channel image. Summed over layers,
// averaged over positions and bands.
class FeatureDistance {
 public:
  static constexpr std::uint64_t kSeed = 0x4c50495053ULL;

  FeatureDistance();

  double operator()(const Tensor<double>& x, const Tensor<double>& y);
  double with_grad(const Tensor<double>& x, const Tensor<double>& y, Tensor<double>& grad_y);

 private:
  double run(const Tensor<double>& x, const Tensor<double>& y, Tensor<double>* grad_y);
  std::vector<Tensor<double>> features(const Tensor<double>& band);

  std::vector<Conv<double>> layers_;
  std::vector<Tensor<double>> pre_;  // pre-activations of the last forward
};

struct DistortionTerms {
  double mse = 0.0;
  double ssim = 1.0;
  double feature = 0.0;
  double total = 0.0;
};

// theta1 MSE + theta2 (1 - SSIM) + theta3 FeatureDistance.
class Distortion {
 public:
  explicit Distortion(const LossWeights& weights) : weights_(weights) {}

  // Writes d total / d x_hat into grad when given.
  DistortionTerms operator()(const Tensor<double>& x, const Tensor<double>& x_hat,
                             Tensor<double>* grad = nullptr);

 private:
  LossWeights weights_;
  FeatureDistance feature_;
};

// Rate in controller units: bits per pixel of the H x W image.
inline double rate_per_pixel(double bits, const Shape& image) {
  return bits / static_cast<double>(image.at(1) * image.at(2));
}

struct EgpLoss {
  double objective = 0.0;  // batch mean including the SE penalty
  double rate = 0.0;       // batch mean, bits per pixel
  double lambda = 0.0;
  double distortion = 0.0;
  double adversarial = 0.0;
  double se_l1 = 0.0;      // l1_se * sum |SE fc weights|
  Index saturated = 0;
  // Per sample, for the discriminator step.
  std::vector<Tensor<double>> x_hat;
  std::vector<Tensor<double>> y_hat;
};

// The SE fc1/fc2 weight matrices the l1 penalty applies to.
ParamList<double> se_penalty_params(Model<double>& model);

// Mean over the batch of lambda rate + d(x, x_hat) - beta log D(x_hat, y_hat),
// plus l1_se sum |SE fc weights|. lambda follows lambda_select on the batch
// mean rate. With grads, accumulates into E, G and P only. beta = 0 skips D.
// D sees y_hat through a stop-gradient. Throws NumericError naming the
// first non-finite term.
//
// Gradient-check hooks: `quant` other than train, and `d_latent`, a fixed
// per-sample latent fed to D in place of y_hat, which turns the
// stop-gradient into a true constant.
EgpLoss loss_egp(Model<double>& model, Distortion& distortion,
                 const std::vector<Tensor<double>>& batch, const LossWeights& weights,
                 double beta, double r_t, bool grads, QuantMode quant = QuantMode::train,
                 const std::vector<Tensor<double>>* d_latent = nullptr);

// Mean over the batch of -log(1 - D(x_hat, y_hat)) - log D(x, y_hat), each
// averaged over patches. x_hat and y_hat are constants. With grads,
// accumulates into D only.
double loss_d(Discriminator<double>& d, const std::vector<Tensor<double>>& batch,
              const std::vector<Tensor<double>>& x_hat, const std::vector<Tensor<double>>& y_hat,
              bool grads);

}  // namespace hssc
