#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hssc/conv.hpp"
#include "hssc/entropy_model.hpp"
#include "hssc/quantize.hpp"

namespace hssc {

enum class EntropyModelKind { factorized, hyperprior };

// Scale-hyperprior floor: sigma = softplus(t) + kSigmaFloor.
inline constexpr double kSigmaFloor = 0.11;

// Payload of one coded latent: main symbols plus, in hyperprior mode, the
// side symbols z that carry the per-element scales.
struct EncodedLatent {
  Shape shape;
  double offset = 0.0;
  std::vector<std::uint8_t> payload;
  std::optional<std::vector<std::uint8_t>> side;
  LatentCode code;
  Index saturated = 0;
};

// The bottleneck between E and G: quantizer, entropy model P and coder.
//
// Factorized mode codes y with one learned density per channel. Hyperprior
// mode adds z = Q(Conv3x3/2(|y|)) coded with a factorized density, and codes
// y with zero-mean Gaussians whose scales come from
// softplus(ConvT3x3^2(z)) + 0.11 cropped to the latent extent.
template <typename Scalar>
class EntropyBottleneck {
 public:
  struct Output {
    Tensor<Scalar> y_hat;
    double bits = 0.0;       // main + side, differentiable
    double side_bits = 0.0;
    Index saturated = 0;
  };

  EntropyBottleneck() = default;
  // hyper_channels 0 picks ceil(latent_channels / 2).
  EntropyBottleneck(Index latent_channels, EntropyModelKind kind, int support,
                    std::uint64_t seed, Index hyper_channels = 0);

  EntropyModelKind kind() const { return kind_; }
  int support() const { return support_; }
  Index latent_channels() const { return latent_channels_; }
  Index hyper_channels() const { return hyper_channels_; }

  Output forward(const Tensor<Scalar>& y, QuantMode mode);
  // Gradient of L = <grad_y_hat, y_hat> + rate_weight * bits w.r.t. y;
  // accumulates P's parameter grads when trainable.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_y_hat, double rate_weight);

  EncodedLatent compress(const Tensor<Scalar>& y, double offset = 0.0);
  Tensor<Scalar> decompress(const Shape& shape, double offset,
                            std::span<const std::uint8_t> payload,
                            std::optional<std::span<const std::uint8_t>> side);

  void collect(ParamList<Scalar>& params);
  void set_trainable(bool on);

  FactorizedPrior<Scalar> prior;  // y (factorized) or z (hyperprior)
  Conv<Scalar> hyper_analysis;
  Conv<Scalar> hyper_synthesis;

 private:
  Shape side_shape(const Shape& latent) const;
  Tensor<Scalar> scales_from(const Tensor<Scalar>& z_hat, const Shape& latent, Tensor<Scalar>* pre);

  EntropyModelKind kind_ = EntropyModelKind::factorized;
  Index latent_channels_ = 0;
  Index hyper_channels_ = 0;
  int support_ = kDefaultSupport;
  GaussianConditional gaussian_;

  // Forward cache.
  Tensor<Scalar> y_;
  Tensor<Scalar> y_hat_;
  Tensor<Scalar> sigma_pre_;  // cropped ConvT output
  Tensor<Scalar> sigma_;
  Shape synth_shape_;
};

}  // namespace hssc
