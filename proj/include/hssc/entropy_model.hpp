#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hssc/range_coder.hpp"
#include "hssc/tensor.hpp"

namespace hssc {

inline constexpr double kProbabilityFloor = 1.0 / 65536.0;
inline constexpr int kDefaultSupport = 64;

// Applies the floor with renormalization: floor + (1 - N floor) q, where q
// is a pmf over N symbols.
double floor_probability(double q, int symbols);

// Quantized latent symbols plus what the decoder needs to pick a table for
// each element. `model_ids` holds one table id per channel (factorized) or
// one per element (conditional).
struct LatentCode {
  Shape shape;
  std::vector<int> symbols;
  double offset = 0.0;
  std::vector<int> model_ids;

  int model_for(std::size_t element) const;
};

// Frozen pmf tables over the integer support [-S, S], as used by the coder.
struct DiscreteModel {
  int support = kDefaultSupport;
  std::vector<std::vector<double>> pmf;
  std::vector<FrequencyTable> tables;

  int symbol_count() const { return 2 * support + 1; }
  void add_table(std::vector<double> p);
  // -log2 pmf(symbol) under table `id`.
  double bits(int id, int symbol) const;
};

// Information content sum(-log2 pmf) of the code under the model.
double rate(const DiscreteModel& model, const LatentCode& code);

// Channel-major, row-major symbol order; the payload is the range coder
// output (empty for an empty code).
std::vector<std::uint8_t> ae_encode(const DiscreteModel& model, const LatentCode& code);
// Fills code.symbols from `bytes`; shape, offset and model_ids must be set.
void ad_decode(const DiscreteModel& model, std::span<const std::uint8_t> bytes, LatentCode& code);

// Per-channel learned factorized density: a monotone network
// x -> logit(CDF(x)) with layer widths 1-3-3-1. Matrices pass through
// softplus to stay positive and every hidden layer adds a tanh-gated
// nonlinearity with gate |tanh(a)| < 1, so the CDF is strictly increasing.
// Mass beyond +-(S + 1/2) is folded into the extreme symbols.
template <typename Scalar>
class FactorizedPrior {
 public:
  static constexpr int kLayers = 3;

  FactorizedPrior() = default;
  FactorizedPrior(const std::string& id, Index channels, int support, std::uint64_t seed);

  Index channels() const { return channels_; }
  int support() const { return support_; }

  double cdf(Index channel, double x) const;
  // Floored pmf over [-S, S]; sums to one.
  std::vector<double> pmf(Index channel) const;
  DiscreteModel freeze() const;

  // Differentiable rate sum(-log2 pmf(y~)) of y~ [C, ...], with the pmf
  // evaluated at y~ +- 1/2. Coincides with rate() when y~ is integral.
  double rate_loss(const Tensor<Scalar>& y_tilde);
  // d(grad_bits * rate_loss)/d y~; accumulates parameter grads when
  // trainable.
  Tensor<Scalar> rate_backward(double grad_bits);

  void collect(ParamList<Scalar>& params);

  std::vector<Parameter<Scalar>> matrices;  // layer l: [C, out, in]
  std::vector<Parameter<Scalar>> biases;    // layer l: [C, out]
  std::vector<Parameter<Scalar>> factors;   // hidden layer l: [C, out]
  bool trainable = true;

 private:
  Index channels_ = 0;
  int support_ = kDefaultSupport;
  Tensor<Scalar> input_;
};

// Zero-mean Gaussian conditional model with per-element scales, coded with
// a fixed ladder of log-spaced scale tables.
struct GaussianConditional {
  static constexpr int kScaleCount = 64;
  static constexpr double kScaleMin = 0.11;
  static constexpr double kScaleMax = 64.0;

  explicit GaussianConditional(int support = kDefaultSupport);

  // Floored probability of the bin around y for scale sigma, tails folded.
  double likelihood(double y, double sigma) const;
  // -log2 likelihood and its partial derivatives.
  double bits(double y, double sigma, double* d_y, double* d_sigma) const;
  int scale_index(double sigma) const;
  double scale(int index) const { return scales[static_cast<std::size_t>(index)]; }

  int support;
  std::vector<double> scales;
  DiscreteModel model;
};

}  // namespace hssc
