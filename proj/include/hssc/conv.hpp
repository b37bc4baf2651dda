#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "hssc/tensor.hpp"

namespace hssc {

enum class Padding {
  // Output extent ceil(in / stride); zero padding split as TF does, the odd
  // pixel going after.
  same,
  // Symmetric zero padding of `pad` pixels; out = (in + 2 pad - k) / stride + 1.
  fixed,
};

// Geometry of a 2D or 3D (optionally transposed) convolution. Axes are
// (depth, height, width); 2D convolutions have depth extent and kernel 1.
struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  int spatial_rank = 2;
  std::array<Index, 3> kernel{1, 1, 1};
  std::array<Index, 3> stride{1, 1, 1};
  Padding padding = Padding::same;
  std::array<Index, 3> pad{0, 0, 0};
  bool transposed = false;
};

ConvSpec conv2d_spec(Index in, Index out, Index kernel, Index stride = 1);
ConvSpec conv2d_fixed_pad_spec(Index in, Index out, Index kernel, Index stride, Index pad);
// Spectral (depth) stride is always 1; `stride` applies to height and width.
ConvSpec conv3d_spec(Index in, Index out, Index kernel, Index stride = 1);
ConvSpec conv_transpose2d_spec(Index in, Index out, Index kernel, Index stride = 2);
ConvSpec conv_transpose3d_spec(Index in, Index out, Index kernel, Index stride = 2);

// Per-axis extents and leading padding of a direct convolution.
struct ConvGeometry {
  std::array<Index, 3> in{1, 1, 1};
  std::array<Index, 3> out{1, 1, 1};
  std::array<Index, 3> pad_before{0, 0, 0};
};

// Geometry of the direct convolution with input extents `in`.
ConvGeometry direct_geometry(const ConvSpec& spec, const std::array<Index, 3>& in);

// Output shape for an input of shape [C, H, W] (2D) or [C, D, H, W] (3D).
Shape conv_output_shape(const ConvSpec& spec, const Shape& input);
Index conv_parameter_count(const ConvSpec& spec);

// Unfolds x ([channels, D, H, W] flattened) into a [channels * K, P] matrix
// whose column p holds the receptive field of output position p.
template <typename Scalar>
typename Tensor<Scalar>::RowMatrix im2col(const Scalar* x, Index channels,
                                          const ConvSpec& spec, const ConvGeometry& geo);
// Adjoint of im2col: scatters columns back onto a zero image.
template <typename Scalar>
void col2im(const typename Tensor<Scalar>::RowMatrix& cols, Index channels,
            const ConvSpec& spec, const ConvGeometry& geo, Scalar* x);

// Convolution layer (cross-correlation, no kernel flip).
//
// Direct weights are [out, in, (kd,) kh, kw]. Transposed weights are
// [in, out, (kd,) kh, kw]: the transposed layer is the exact adjoint of the
// direct convolution that maps `out` channels at the upsampled extent back
// to `in` channels, sharing the same weight tensor.
template <typename Scalar>
class Conv {
 public:
  Conv() = default;
  Conv(std::string id, const ConvSpec& spec, std::uint64_t seed);

  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  // Returns dL/dx and, when trainable, accumulates weight and bias grads.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out);

  void collect(ParamList<Scalar>& params) {
    params.push_back(&weight);
    params.push_back(&bias);
  }

  const ConvSpec& spec() const { return spec_; }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;
  bool trainable = true;

 private:
  ConvGeometry geometry_for(const Shape& input) const;

  ConvSpec spec_;
  Shape input_shape_;
  ConvGeometry geo_;
  typename Tensor<Scalar>::RowMatrix cache_;  // im2col(x) or x itself when transposed
  bool has_cache_ = false;
};

}  // namespace hssc
