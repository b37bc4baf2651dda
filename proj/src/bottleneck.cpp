#include "hssc/bottleneck.hpp"

#include <cmath>

namespace hssc {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& t, Index h, Index w) {
  Tensor<Scalar> out(Shape{t.dim(0), h, w});
  for (Index c = 0; c < t.dim(0); ++c)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) out(c, i, j) = t(c, i, j);
  return out;
}

template <typename Scalar>
Tensor<Scalar> zero_pad(const Tensor<Scalar>& t, const Shape& full) {
  Tensor<Scalar> out(full);
  for (Index c = 0; c < t.dim(0); ++c)
    for (Index i = 0; i < t.dim(1); ++i)
      for (Index j = 0; j < t.dim(2); ++j) out(c, i, j) = t(c, i, j);
  return out;
}

}  // namespace

template <typename Scalar>
EntropyBottleneck<Scalar>::EntropyBottleneck(Index latent_channels, EntropyModelKind kind,
                                             int support, std::uint64_t seed,
                                             Index hyper_channels)
    : kind_(kind), latent_channels_(latent_channels), support_(support), gaussian_(support) {
  if (kind == EntropyModelKind::factorized) {
    prior = FactorizedPrior<Scalar>("P.prior", latent_channels, support, seed);
    return;
  }
  hyper_channels_ = hyper_channels > 0 ? hyper_channels : (latent_channels + 1) / 2;
  prior = FactorizedPrior<Scalar>("P.prior", hyper_channels_, support, seed);
  hyper_analysis = Conv<Scalar>("P.hyper_analysis",
                                conv2d_spec(latent_channels, hyper_channels_, 3, 2), seed);
  hyper_synthesis = Conv<Scalar>("P.hyper_synthesis",
                                 conv_transpose2d_spec(hyper_channels_, latent_channels, 3), seed);
}

template <typename Scalar>
void EntropyBottleneck<Scalar>::collect(ParamList<Scalar>& params) {
  prior.collect(params);
  if (kind_ == EntropyModelKind::hyperprior) {
    hyper_analysis.collect(params);
    hyper_synthesis.collect(params);
  }
}

template <typename Scalar>
void EntropyBottleneck<Scalar>::set_trainable(bool on) {
  prior.trainable = hyper_analysis.trainable = hyper_synthesis.trainable = on;
}

template <typename Scalar>
Tensor<Scalar> EntropyBottleneck<Scalar>::scales_from(const Tensor<Scalar>& z_hat,
                                                      const Shape& latent, Tensor<Scalar>* pre) {
  const Tensor<Scalar> t = hyper_synthesis.forward(z_hat);
  synth_shape_ = t.shape();
  Tensor<Scalar> cropped = crop(t, latent[1], latent[2]);
  Tensor<Scalar> sigma(cropped.shape());
  for (Index i = 0; i < sigma.size(); ++i) {
    sigma[i] = static_cast<Scalar>(softplus(static_cast<double>(cropped[i])) + kSigmaFloor);
  }
  if (pre) *pre = std::move(cropped);
  return sigma;
}

template <typename Scalar>
typename EntropyBottleneck<Scalar>::Output EntropyBottleneck<Scalar>::forward(
    const Tensor<Scalar>& y, QuantMode mode) {
  if (y.rank() != 3 || y.dim(0) != latent_channels_) {
    throw ShapeError("bottleneck: expected [" + std::to_string(latent_channels_) +
                     ", h, w] latent, got " + to_string(y.shape()));
  }
  y_ = y;
  Quantized<Scalar> q = quantize(y, mode, support_);
  Output out;
  out.saturated = q.saturated;
  if (kind_ == EntropyModelKind::factorized) {
    out.bits = prior.rate_loss(q.values);
  } else {
    Tensor<Scalar> a = y;
    a.array() = a.array().abs();
    Quantized<Scalar> z = quantize(hyper_analysis.forward(a), mode, support_);
    out.saturated += z.saturated;
    out.side_bits = prior.rate_loss(z.values);
    sigma_ = scales_from(z.values, y.shape(), &sigma_pre_);
    double main = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      main += gaussian_.bits(static_cast<double>(q.values[i]), static_cast<double>(sigma_[i]),
                             nullptr, nullptr);
    }
    out.bits = main + out.side_bits;
  }
  y_hat_ = q.values;
  out.y_hat = std::move(q.values);
  return out;
}

template <typename Scalar>
Tensor<Scalar> EntropyBottleneck<Scalar>::backward(const Tensor<Scalar>& grad_y_hat,
                                                   double rate_weight) {
  if (y_.empty()) throw std::logic_error("bottleneck: backward before forward");
  require_same_shape(grad_y_hat.shape(), y_.shape(), "bottleneck backward");
  if (kind_ == EntropyModelKind::factorized) {
    Tensor<Scalar> dy = prior.rate_backward(rate_weight);
    dy.array() += grad_y_hat.array();
    return dy;
  }
  Tensor<Scalar> dy = grad_y_hat;
  Tensor<Scalar> dpre(sigma_.shape());
  for (Index i = 0; i < y_.size(); ++i) {
    double d_y = 0.0, d_sigma = 0.0;
    gaussian_.bits(static_cast<double>(y_hat_[i]), static_cast<double>(sigma_[i]), &d_y, &d_sigma);
    dy[i] += static_cast<Scalar>(rate_weight * d_y);
    dpre[i] = static_cast<Scalar>(rate_weight * d_sigma * sigmoid(static_cast<double>(sigma_pre_[i])));
  }
  Tensor<Scalar> dz = hyper_synthesis.backward(zero_pad(dpre, synth_shape_));
  dz.array() += prior.rate_backward(rate_weight).array();
  const Tensor<Scalar> da = hyper_analysis.backward(dz);
  for (Index i = 0; i < y_.size(); ++i) {
    const Scalar v = y_[i];
    dy[i] += v > 0 ? da[i] : (v < 0 ? -da[i] : Scalar(0));
  }
  return dy;
}

template <typename Scalar>
Shape EntropyBottleneck<Scalar>::side_shape(const Shape& latent) const {
  return Shape{hyper_channels_, (latent[1] + 1) / 2, (latent[2] + 1) / 2};
}

template <typename Scalar>
EncodedLatent EntropyBottleneck<Scalar>::compress(const Tensor<Scalar>& y, double offset) {
  if (y.rank() != 3 || y.dim(0) != latent_channels_) {
    throw ShapeError("bottleneck: expected [" + std::to_string(latent_channels_) +
                     ", h, w] latent, got " + to_string(y.shape()));
  }
  EncodedLatent enc;
  enc.shape = y.shape();
  enc.offset = offset;
  Quantized<Scalar> q = quantize(y, QuantMode::inference, support_, offset);
  enc.saturated = q.saturated;
  enc.code.shape = y.shape();
  enc.code.offset = offset;
  enc.code.symbols = to_symbols(q.values, offset);

  if (kind_ == EntropyModelKind::factorized) {
    for (Index c = 0; c < latent_channels_; ++c) enc.code.model_ids.push_back(static_cast<int>(c));
    enc.payload = ae_encode(prior.freeze(), enc.code);
    return enc;
  }
  Tensor<Scalar> a = y;
  a.array() = a.array().abs();
  Quantized<Scalar> z = quantize(hyper_analysis.forward(a), QuantMode::inference, support_);
  enc.saturated += z.saturated;
  LatentCode side;
  side.shape = z.values.shape();
  side.symbols = to_symbols(z.values);
  for (Index c = 0; c < hyper_channels_; ++c) side.model_ids.push_back(static_cast<int>(c));
  enc.side = ae_encode(prior.freeze(), side);

  const Tensor<Scalar> sigma = scales_from(z.values, y.shape(), nullptr);
  for (Index i = 0; i < sigma.size(); ++i) {
    enc.code.model_ids.push_back(gaussian_.scale_index(static_cast<double>(sigma[i])));
  }
  enc.payload = ae_encode(gaussian_.model, enc.code);
  return enc;
}

template <typename Scalar>
Tensor<Scalar> EntropyBottleneck<Scalar>::decompress(
    const Shape& shape, double offset, std::span<const std::uint8_t> payload,
    std::optional<std::span<const std::uint8_t>> side) {
  if (shape.size() != 3 || shape[0] != latent_channels_) {
    throw ShapeError("bottleneck: latent shape " + to_string(shape) + " does not match the model");
  }
  LatentCode code;
  code.shape = shape;
  code.offset = offset;
  if (kind_ == EntropyModelKind::factorized) {
    for (Index c = 0; c < latent_channels_; ++c) code.model_ids.push_back(static_cast<int>(c));
    ad_decode(prior.freeze(), payload, code);
  } else {
    if (!side) throw BitstreamError("bitstream: hyperprior model needs a side-information section");
    LatentCode zc;
    zc.shape = side_shape(shape);
    for (Index c = 0; c < hyper_channels_; ++c) zc.model_ids.push_back(static_cast<int>(c));
    ad_decode(prior.freeze(), *side, zc);
    Tensor<Scalar> z_hat(zc.shape);
    for (Index i = 0; i < z_hat.size(); ++i) z_hat[i] = static_cast<Scalar>(zc.symbols[static_cast<std::size_t>(i)]);
    const Tensor<Scalar> sigma = scales_from(z_hat, shape, nullptr);
    code.symbols.assign(static_cast<std::size_t>(sigma.size()), 0);
    for (Index i = 0; i < sigma.size(); ++i) {
      code.model_ids.push_back(gaussian_.scale_index(static_cast<double>(sigma[i])));
    }
    ad_decode(gaussian_.model, payload, code);
  }
  Tensor<Scalar> y_hat(shape);
  for (Index i = 0; i < y_hat.size(); ++i) {
    y_hat[i] = static_cast<Scalar>(code.symbols[static_cast<std::size_t>(i)] + offset);
  }
  return y_hat;
}

template class EntropyBottleneck<float>;
template class EntropyBottleneck<double>;

}  // namespace hssc
