#pragma once

#include <cstdint>
#include <string>

#include "hssc/conv.hpp"
#include "hssc/tensor.hpp"

namespace hssc {

inline constexpr double kLeakySlope = 0.2;

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
// `x` is the forward input; the gradient at exactly 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope = Scalar(kLeakySlope));
template <typename Scalar>
Tensor<Scalar> leaky_relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out,
                                   Scalar slope = Scalar(kLeakySlope));

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);

// Replicates each pixel of x [C, H, W] into a factor x factor block.
template <typename Scalar>
Tensor<Scalar> nn_upsample(const Tensor<Scalar>& x, Index factor);
// Adjoint: sums each factor x factor block.
template <typename Scalar>
Tensor<Scalar> nn_upsample_backward(const Tensor<Scalar>& grad_out, Index factor);

// Standardizes x [C, ...] across the channel axis independently at every
// position, then applies a per-channel affine map.
template <typename Scalar>
class ChannelNorm {
 public:
  ChannelNorm() = default;
  ChannelNorm(std::string id, Index channels, double eps = 1e-5);

  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out);

  void collect(ParamList<Scalar>& params) {
    params.push_back(&gain);
    params.push_back(&offset);
  }
  Index channels() const { return gain.value.size(); }

  Parameter<Scalar> gain;
  Parameter<Scalar> offset;
  bool trainable = true;

 private:
  double eps_ = 1e-5;
  Shape shape_;
  typename Tensor<Scalar>::RowMatrix normalized_;  // [C, positions]
  Eigen::Array<Scalar, 1, Eigen::Dynamic> inv_std_;
};

// Squeeze-and-excitation: s = sigmoid(fc2(relu(fc1(mean over positions))))
// and the output is x with channel c scaled by s[c].
template <typename Scalar>
class SEBlock {
 public:
  SEBlock() = default;
  // Hidden width is ceil(channels / reduction).
  SEBlock(std::string id, Index channels, Index reduction, std::uint64_t seed);

  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out);

  // Channel scales from the last forward pass, each in (0, 1).
  const typename Tensor<Scalar>::Vector& last_scale() const { return scale_; }

  void collect(ParamList<Scalar>& params) {
    params.push_back(&fc1_weight);
    params.push_back(&fc1_bias);
    params.push_back(&fc2_weight);
    params.push_back(&fc2_bias);
  }
  Index channels() const { return fc2_bias.value.size(); }
  Index hidden() const { return fc1_bias.value.size(); }

  Parameter<Scalar> fc1_weight;  // [hidden, C]
  Parameter<Scalar> fc1_bias;
  Parameter<Scalar> fc2_weight;  // [C, hidden]
  Parameter<Scalar> fc2_bias;
  bool trainable = true;

 private:
  typename Tensor<Scalar>::Vector pooled_;
  typename Tensor<Scalar>::Vector hidden_pre_;
  typename Tensor<Scalar>::Vector hidden_;
  typename Tensor<Scalar>::Vector scale_;
  Tensor<Scalar> input_;
};

Index se_hidden_width(Index channels, Index reduction);

// y = x + CNorm(Conv(ReLU(CNorm(Conv(x))))), 3x3 convolutions, width kept.
template <typename Scalar>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& id, Index channels, std::uint64_t seed);

  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out);

  void collect(ParamList<Scalar>& params);
  void set_trainable(bool on);

  Conv<Scalar> conv1;
  ChannelNorm<Scalar> norm1;
  Conv<Scalar> conv2;
  ChannelNorm<Scalar> norm2;

 private:
  Tensor<Scalar> pre_relu_;
};

}  // namespace hssc
