#include "hssc/layers.hpp"

#include <cmath>

namespace hssc {

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.array() = x.array().max(Scalar(0));
  return y;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out) {
  require_same_shape(x.shape(), grad_out.shape(), "relu backward");
  Tensor<Scalar> dx(x.shape());
  dx.array() = (x.array() > Scalar(0)).select(grad_out.array(), Scalar(0));
  return dx;
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  Tensor<Scalar> y(x.shape());
  y.array() = (x.array() >= Scalar(0)).select(x.array(), slope * x.array());
  return y;
}

template <typename Scalar>
Tensor<Scalar> leaky_relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out,
                                   Scalar slope) {
  require_same_shape(x.shape(), grad_out.shape(), "leaky_relu backward");
  Tensor<Scalar> dx(x.shape());
  dx.array() = (x.array() >= Scalar(0)).select(grad_out.array(), slope * grad_out.array());
  return dx;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.array() = Scalar(1) / (Scalar(1) + (-x.array()).exp());
  return y;
}

template <typename Scalar>
Tensor<Scalar> nn_upsample(const Tensor<Scalar>& x, Index factor) {
  if (factor < 1) throw ShapeError("nn_upsample: factor must be >= 1");
  if (x.rank() != 3) throw ShapeError("nn_upsample: expected [C,H,W], got " + to_string(x.shape()));
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<Scalar> y(Shape{c, h * factor, w * factor});
  for (Index k = 0; k < c; ++k) {
    for (Index i = 0; i < h * factor; ++i) {
      for (Index j = 0; j < w * factor; ++j) y(k, i, j) = x(k, i / factor, j / factor);
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> nn_upsample_backward(const Tensor<Scalar>& grad_out, Index factor) {
  if (factor < 1) throw ShapeError("nn_upsample: factor must be >= 1");
  const Index c = grad_out.dim(0), h = grad_out.dim(1) / factor, w = grad_out.dim(2) / factor;
  if (h * factor != grad_out.dim(1) || w * factor != grad_out.dim(2)) {
    throw ShapeError("nn_upsample backward: extent not a multiple of the factor");
  }
  Tensor<Scalar> dx(Shape{c, h, w});
  for (Index k = 0; k < c; ++k) {
    for (Index i = 0; i < h * factor; ++i) {
      for (Index j = 0; j < w * factor; ++j) dx(k, i / factor, j / factor) += grad_out(k, i, j);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ChannelNorm

template <typename Scalar>
ChannelNorm<Scalar>::ChannelNorm(std::string id, Index channels, double eps)
    : gain(id + ".gain", Tensor<Scalar>(Shape{channels}, Scalar(1))),
      offset(id + ".offset", Tensor<Scalar>(Shape{channels})),
      eps_(eps) {}

template <typename Scalar>
Tensor<Scalar> ChannelNorm<Scalar>::forward(const Tensor<Scalar>& x) {
  if (x.rank() < 1 || x.dim(0) != channels()) {
    throw ShapeError("channel_norm: expected " + std::to_string(channels()) + " channels, got " +
                     to_string(x.shape()));
  }
  shape_ = x.shape();
  const auto xm = x.matrix();
  const auto mean = xm.colwise().mean();
  normalized_ = xm.rowwise() - mean;
  const auto var = normalized_.array().square().colwise().mean();
  inv_std_ = (var + Scalar(eps_)).rsqrt();
  normalized_.array().rowwise() *= inv_std_;

  Tensor<Scalar> y(shape_);
  y.matrix().array() = (normalized_.array().colwise() * gain.value.data().array()).colwise() +
                       offset.value.data().array();
  return y;
}

template <typename Scalar>
Tensor<Scalar> ChannelNorm<Scalar>::backward(const Tensor<Scalar>& grad_out) {
  if (shape_.empty()) throw std::logic_error("channel_norm: backward before forward");
  require_same_shape(grad_out.shape(), shape_, "channel_norm backward");
  const auto dy = grad_out.matrix();
  if (trainable) {
    gain.grad.data() += (dy.array() * normalized_.array()).rowwise().sum().matrix();
    offset.grad.data() += dy.rowwise().sum();
  }
  const typename Tensor<Scalar>::RowMatrix dxhat =
      (dy.array().colwise() * gain.value.data().array()).matrix();
  const auto mean_d = dxhat.colwise().mean();
  const auto mean_dx = (dxhat.array() * normalized_.array()).colwise().mean();

  Tensor<Scalar> dx(shape_);
  auto dxm = dx.matrix();
  dxm.array() = dxhat.array().rowwise() - mean_d.array();
  dxm.array() -= normalized_.array().rowwise() * mean_dx;
  dxm.array().rowwise() *= inv_std_;
  return dx;
}

// -------------------------------------------------------------------- SEBlock

Index se_hidden_width(Index channels, Index reduction) {
  if (reduction < 1) throw ShapeError("se_block: reduction ratio must be >= 1");
  return (channels + reduction - 1) / reduction;
}

template <typename Scalar>
SEBlock<Scalar>::SEBlock(std::string id, Index channels, Index reduction, std::uint64_t seed) {
  const Index hidden = se_hidden_width(channels, reduction);
  CounterRng root(seed);
  auto r1 = root.fork(id + ".fc1.weight");
  auto r2 = root.fork(id + ".fc2.weight");
  const double b1 = std::sqrt(6.0 / static_cast<double>(channels));
  const double b2 = std::sqrt(6.0 / static_cast<double>(hidden));
  fc1_weight = Parameter<Scalar>(id + ".fc1.weight",
                                 Tensor<Scalar>::uniform(Shape{hidden, channels}, r1, -b1, b1));
  fc1_bias = Parameter<Scalar>(id + ".fc1.bias", Tensor<Scalar>(Shape{hidden}));
  fc2_weight = Parameter<Scalar>(id + ".fc2.weight",
                                 Tensor<Scalar>::uniform(Shape{channels, hidden}, r2, -b2, b2));
  fc2_bias = Parameter<Scalar>(id + ".fc2.bias", Tensor<Scalar>(Shape{channels}));
}

template <typename Scalar>
Tensor<Scalar> SEBlock<Scalar>::forward(const Tensor<Scalar>& x) {
  if (x.rank() < 1 || x.dim(0) != channels()) {
    throw ShapeError("se_block: expected " + std::to_string(channels()) + " channels, got " +
                     to_string(x.shape()));
  }
  input_ = x;
  const auto xm = x.matrix();
  pooled_ = xm.rowwise().mean();
  hidden_pre_ = fc1_weight.value.matrix() * pooled_ + fc1_bias.value.data();
  hidden_ = hidden_pre_.cwiseMax(Scalar(0));
  const typename Tensor<Scalar>::Vector z = fc2_weight.value.matrix() * hidden_ + fc2_bias.value.data();
  scale_ = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();

  Tensor<Scalar> y(x.shape());
  y.matrix().array() = xm.array().colwise() * scale_.array();
  return y;
}

template <typename Scalar>
Tensor<Scalar> SEBlock<Scalar>::backward(const Tensor<Scalar>& grad_out) {
  if (input_.empty()) throw std::logic_error("se_block: backward before forward");
  require_same_shape(grad_out.shape(), input_.shape(), "se_block backward");
  using Vector = typename Tensor<Scalar>::Vector;
  const auto dy = grad_out.matrix();
  const auto xm = input_.matrix();
  const Vector ds = (dy.array() * xm.array()).rowwise().sum().matrix();
  const Vector dz = (ds.array() * scale_.array() * (Scalar(1) - scale_.array())).matrix();
  const Vector dh = fc2_weight.value.matrix().transpose() * dz;
  const Vector dh_pre = (hidden_pre_.array() > Scalar(0)).select(dh.array(), Scalar(0)).matrix();
  if (trainable) {
    auto g2 = fc2_weight.grad.matrix();
    g2.noalias() += dz * hidden_.transpose();
    fc2_bias.grad.data() += dz;
    auto g1 = fc1_weight.grad.matrix();
    g1.noalias() += dh_pre * pooled_.transpose();
    fc1_bias.grad.data() += dh_pre;
  }
  const Vector dpooled = fc1_weight.value.matrix().transpose() * dh_pre;
  const Scalar positions = static_cast<Scalar>(xm.cols());

  Tensor<Scalar> dx(input_.shape());
  auto dxm = dx.matrix();
  dxm.array() = dy.array().colwise() * scale_.array();
  dxm.array().colwise() += dpooled.array() / positions;
  return dx;
}

// -------------------------------------------------------------- ResidualBlock

template <typename Scalar>
ResidualBlock<Scalar>::ResidualBlock(const std::string& id, Index channels, std::uint64_t seed)
    : conv1(id + ".conv1", conv2d_spec(channels, channels, 3), seed),
      norm1(id + ".norm1", channels),
      conv2(id + ".conv2", conv2d_spec(channels, channels, 3), seed),
      norm2(id + ".norm2", channels) {}

template <typename Scalar>
Tensor<Scalar> ResidualBlock<Scalar>::forward(const Tensor<Scalar>& x) {
  pre_relu_ = norm1.forward(conv1.forward(x));
  Tensor<Scalar> y = norm2.forward(conv2.forward(relu(pre_relu_)));
  y.array() += x.array();
  return y;
}

template <typename Scalar>
Tensor<Scalar> ResidualBlock<Scalar>::backward(const Tensor<Scalar>& grad_out) {
  if (pre_relu_.empty()) throw std::logic_error("residual_block: backward before forward");
  Tensor<Scalar> g = conv2.backward(norm2.backward(grad_out));
  g = conv1.backward(norm1.backward(relu_backward(pre_relu_, g)));
  g.array() += grad_out.array();
  return g;
}

template <typename Scalar>
void ResidualBlock<Scalar>::collect(ParamList<Scalar>& params) {
  conv1.collect(params);
  norm1.collect(params);
  conv2.collect(params);
  norm2.collect(params);
}

template <typename Scalar>
void ResidualBlock<Scalar>::set_trainable(bool on) {
  conv1.trainable = norm1.trainable = conv2.trainable = norm2.trainable = on;
}

#define HSSC_INSTANTIATE(S)                                                                 \
  template Tensor<S> relu(const Tensor<S>&);                                                \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> leaky_relu(const Tensor<S>&, S);                                       \
  template Tensor<S> leaky_relu_backward(const Tensor<S>&, const Tensor<S>&, S);            \
  template Tensor<S> sigmoid(const Tensor<S>&);                                             \
  template Tensor<S> nn_upsample(const Tensor<S>&, Index);                                  \
  template Tensor<S> nn_upsample_backward(const Tensor<S>&, Index);                         \
  template class ChannelNorm<S>;                                                            \
  template class SEBlock<S>;                                                                \
  template class ResidualBlock<S>;

HSSC_INSTANTIATE(float)
HSSC_INSTANTIATE(double)

#undef HSSC_INSTANTIATE

}  // namespace hssc
