#include "hssc/conv.hpp"

#include <cmath>

namespace hssc {

namespace {

ConvSpec make_spec(int rank, Index in, Index out, Index kernel, Index stride, bool transposed) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.spatial_rank = rank;
  s.kernel = {rank == 3 ? kernel : 1, kernel, kernel};
  s.stride = {1, stride, stride};
  s.transposed = transposed;
  return s;
}

std::array<Index, 3> spatial_extents(const ConvSpec& spec, const Shape& input) {
  const Index expected_rank = spec.spatial_rank + 1;
  if (static_cast<Index>(input.size()) != expected_rank) {
    throw ShapeError("conv: expected rank-" + std::to_string(expected_rank) + " input, got " +
                     to_string(input));
  }
  if (input[0] != spec.in_channels) {
    throw ShapeError("conv: input has " + std::to_string(input[0]) + " channels, layer expects " +
                     std::to_string(spec.in_channels));
  }
  if (spec.spatial_rank == 3) return {input[1], input[2], input[3]};
  return {1, input[1], input[2]};
}

Shape make_shape(Index channels, int rank, const std::array<Index, 3>& ext) {
  if (rank == 3) return {channels, ext[0], ext[1], ext[2]};
  return {channels, ext[1], ext[2]};
}

}  // namespace

ConvSpec conv2d_spec(Index in, Index out, Index kernel, Index stride) {
  return make_spec(2, in, out, kernel, stride, false);
}

ConvSpec conv2d_fixed_pad_spec(Index in, Index out, Index kernel, Index stride, Index pad) {
  ConvSpec s = make_spec(2, in, out, kernel, stride, false);
  s.padding = Padding::fixed;
  s.pad = {0, pad, pad};
  return s;
}

ConvSpec conv3d_spec(Index in, Index out, Index kernel, Index stride) {
  return make_spec(3, in, out, kernel, stride, false);
}

ConvSpec conv_transpose2d_spec(Index in, Index out, Index kernel, Index stride) {
  return make_spec(2, in, out, kernel, stride, true);
}

ConvSpec conv_transpose3d_spec(Index in, Index out, Index kernel, Index stride) {
  return make_spec(3, in, out, kernel, stride, true);
}

ConvGeometry direct_geometry(const ConvSpec& spec, const std::array<Index, 3>& in) {
  ConvGeometry g;
  g.in = in;
  for (int a = 0; a < 3; ++a) {
    const Index k = spec.kernel[a];
    const Index s = spec.stride[a];
    if (spec.padding == Padding::same) {
      g.out[a] = (in[a] + s - 1) / s;
      const Index total = std::max<Index>((g.out[a] - 1) * s + k - in[a], 0);
      g.pad_before[a] = total / 2;
    } else {
      const Index span = in[a] + 2 * spec.pad[a] - k;
      if (span < 0) {
        throw ShapeError("conv: input extent " + std::to_string(in[a]) +
                         " smaller than kernel " + std::to_string(k));
      }
      g.out[a] = span / s + 1;
      g.pad_before[a] = spec.pad[a];
    }
  }
  return g;
}

Shape conv_output_shape(const ConvSpec& spec, const Shape& input) {
  const auto ext = spatial_extents(spec, input);
  if (spec.transposed) {
    std::array<Index, 3> out{ext[0] * spec.stride[0], ext[1] * spec.stride[1],
                             ext[2] * spec.stride[2]};
    return make_shape(spec.out_channels, spec.spatial_rank, out);
  }
  return make_shape(spec.out_channels, spec.spatial_rank, direct_geometry(spec, ext).out);
}

Index conv_parameter_count(const ConvSpec& spec) {
  return spec.in_channels * spec.out_channels * spec.kernel[0] * spec.kernel[1] *
             spec.kernel[2] +
         spec.out_channels;
}

template <typename Scalar>
typename Tensor<Scalar>::RowMatrix im2col(const Scalar* x, Index channels, const ConvSpec& spec,
                                          const ConvGeometry& g) {
  const auto& k = spec.kernel;
  const auto& s = spec.stride;
  const Index plane = g.out[1] * g.out[2];
  typename Tensor<Scalar>::RowMatrix cols(channels * k[0] * k[1] * k[2], g.out[0] * plane);
  Index row = 0;
  for (Index c = 0; c < channels; ++c) {
    for (Index a = 0; a < k[0]; ++a) {
      for (Index b = 0; b < k[1]; ++b) {
        for (Index e = 0; e < k[2]; ++e, ++row) {
          Scalar* dst = cols.row(row).data();
          for (Index od = 0; od < g.out[0]; ++od) {
            const Index id = od * s[0] - g.pad_before[0] + a;
            Scalar* dplane = dst + od * plane;
            if (id < 0 || id >= g.in[0]) {
              std::fill(dplane, dplane + plane, Scalar(0));
              continue;
            }
            for (Index oh = 0; oh < g.out[1]; ++oh) {
              const Index ih = oh * s[1] - g.pad_before[1] + b;
              Scalar* drow = dplane + oh * g.out[2];
              if (ih < 0 || ih >= g.in[1]) {
                std::fill(drow, drow + g.out[2], Scalar(0));
                continue;
              }
              const Scalar* src = x + ((c * g.in[0] + id) * g.in[1] + ih) * g.in[2];
              for (Index ow = 0; ow < g.out[2]; ++ow) {
                const Index iw = ow * s[2] - g.pad_before[2] + e;
                drow[ow] = (iw >= 0 && iw < g.in[2]) ? src[iw] : Scalar(0);
              }
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im(const typename Tensor<Scalar>::RowMatrix& cols, Index channels, const ConvSpec& spec,
            const ConvGeometry& g, Scalar* x) {
  const auto& k = spec.kernel;
  const auto& s = spec.stride;
  const Index plane = g.out[1] * g.out[2];
  std::fill(x, x + channels * g.in[0] * g.in[1] * g.in[2], Scalar(0));
  Index row = 0;
  for (Index c = 0; c < channels; ++c) {
    for (Index a = 0; a < k[0]; ++a) {
      for (Index b = 0; b < k[1]; ++b) {
        for (Index e = 0; e < k[2]; ++e, ++row) {
          const Scalar* src = cols.row(row).data();
          for (Index od = 0; od < g.out[0]; ++od) {
            const Index id = od * s[0] - g.pad_before[0] + a;
            if (id < 0 || id >= g.in[0]) continue;
            for (Index oh = 0; oh < g.out[1]; ++oh) {
              const Index ih = oh * s[1] - g.pad_before[1] + b;
              if (ih < 0 || ih >= g.in[1]) continue;
              Scalar* dst = x + ((c * g.in[0] + id) * g.in[1] + ih) * g.in[2];
              const Scalar* srow = src + od * plane + oh * g.out[2];
              for (Index ow = 0; ow < g.out[2]; ++ow) {
                const Index iw = ow * s[2] - g.pad_before[2] + e;
                if (iw >= 0 && iw < g.in[2]) dst[iw] += srow[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
Conv<Scalar>::Conv(std::string id, const ConvSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1) throw ShapeError("conv: empty channel count");
  for (int a = 0; a < 3; ++a) {
    if (spec.kernel[a] < 1 || spec.stride[a] < 1 || spec.stride[a] > 2) {
      throw ShapeError("conv: kernel must be >= 1 and stride in {1, 2}");
    }
  }
  Shape wshape = spec.transposed ? Shape{spec.in_channels, spec.out_channels}
                                 : Shape{spec.out_channels, spec.in_channels};
  if (spec.spatial_rank == 3) wshape.push_back(spec.kernel[0]);
  wshape.push_back(spec.kernel[1]);
  wshape.push_back(spec.kernel[2]);

  const Index taps = spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
  const double fan_in = static_cast<double>(spec.in_channels * taps);
  const double bound = std::sqrt(6.0 / fan_in);
  CounterRng rng = CounterRng(seed).fork(id + ".weight");
  weight = Parameter<Scalar>(id + ".weight", Tensor<Scalar>::uniform(wshape, rng, -bound, bound));
  bias = Parameter<Scalar>(id + ".bias", Tensor<Scalar>(Shape{spec.out_channels}));
}

template <typename Scalar>
ConvGeometry Conv<Scalar>::geometry_for(const Shape& input) const {
  const auto ext = spatial_extents(spec_, input);
  if (!spec_.transposed) return direct_geometry(spec_, ext);
  std::array<Index, 3> up{ext[0] * spec_.stride[0], ext[1] * spec_.stride[1],
                          ext[2] * spec_.stride[2]};
  ConvGeometry g = direct_geometry(spec_, up);
  if (g.out != ext) throw ShapeError("conv_transpose: padding does not invert the stride");
  return g;
}

template <typename Scalar>
Tensor<Scalar> Conv<Scalar>::forward(const Tensor<Scalar>& x) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  input_shape_ = x.shape();
  geo_ = geometry_for(x.shape());
  const auto w = weight.value.matrix();

  if (!spec_.transposed) {
    cache_ = im2col(x.data().data(), spec_.in_channels, spec_, geo_);
    Tensor<Scalar> out(make_shape(spec_.out_channels, spec_.spatial_rank, geo_.out));
    auto om = out.matrix();
    om.noalias() = w * cache_;
    om.colwise() += bias.value.data();
    has_cache_ = true;
    return out;
  }

  cache_ = x.matrix();
  RowMatrix cols = w.transpose() * cache_;
  Tensor<Scalar> out(make_shape(spec_.out_channels, spec_.spatial_rank, geo_.in));
  col2im<Scalar>(cols, spec_.out_channels, spec_, geo_, out.data().data());
  out.matrix().colwise() += bias.value.data();
  has_cache_ = true;
  return out;
}

template <typename Scalar>
Tensor<Scalar> Conv<Scalar>::backward(const Tensor<Scalar>& grad_out) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  if (!has_cache_) throw std::logic_error("conv: backward before forward");
  const auto w = weight.value.matrix();
  Tensor<Scalar> dx(input_shape_);

  if (!spec_.transposed) {
    require_same_shape(grad_out.shape(), make_shape(spec_.out_channels, spec_.spatial_rank, geo_.out),
                       "conv backward");
    const auto dy = grad_out.matrix();
    if (trainable) {
      auto gw = weight.grad.matrix();
      gw.noalias() += dy * cache_.transpose();
      bias.grad.data() += dy.rowwise().sum();
    }
    RowMatrix dcols = w.transpose() * dy;
    col2im<Scalar>(dcols, spec_.in_channels, spec_, geo_, dx.data().data());
    return dx;
  }

  require_same_shape(grad_out.shape(), make_shape(spec_.out_channels, spec_.spatial_rank, geo_.in),
                     "conv_transpose backward");
  RowMatrix dcols = im2col(grad_out.data().data(), spec_.out_channels, spec_, geo_);
  auto dxm = dx.matrix();
  dxm.noalias() = w * dcols;
  if (trainable) {
    auto gw = weight.grad.matrix();
    gw.noalias() += cache_ * dcols.transpose();
    bias.grad.data() += grad_out.matrix().rowwise().sum();
  }
  return dx;
}

template typename Tensor<float>::RowMatrix im2col(const float*, Index, const ConvSpec&,
                                                  const ConvGeometry&);
template typename Tensor<double>::RowMatrix im2col(const double*, Index, const ConvSpec&,
                                                   const ConvGeometry&);
template void col2im<float>(const Tensor<float>::RowMatrix&, Index, const ConvSpec&,
                            const ConvGeometry&, float*);
template void col2im<double>(const Tensor<double>::RowMatrix&, Index, const ConvSpec&,
                             const ConvGeometry&, double*);
template class Conv<float>;
template class Conv<double>;

}  // namespace hssc
