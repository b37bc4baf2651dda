#include "hssc/quantize.hpp"

#include <cmath>

namespace hssc {

template <typename Scalar>
Quantized<Scalar> quantize(const Tensor<Scalar>& y, QuantMode mode, int support, double offset) {
  if (!y.all_finite()) throw NumericError("quantize: non-finite latent");
  Quantized<Scalar> q{y, 0};
  if (mode == QuantMode::identity) return q;
  const double s = static_cast<double>(support);
  for (Index i = 0; i < y.size(); ++i) {
    // std::round rounds halfway cases away from zero.
    double r = std::round(static_cast<double>(y[i]) - offset);
    if (r > s || r < -s) {
      ++q.saturated;
      r = std::clamp(r, -s, s);
    }
    q.values[i] = static_cast<Scalar>(r + offset);
  }
  return q;
}

template <typename Scalar>
std::vector<int> to_symbols(const Tensor<Scalar>& y_hat, double offset) {
  std::vector<int> out(static_cast<std::size_t>(y_hat.size()));
  for (Index i = 0; i < y_hat.size(); ++i) {
    out[static_cast<std::size_t>(i)] =
        static_cast<int>(std::lround(static_cast<double>(y_hat[i]) - offset));
  }
  return out;
}

template Quantized<float> quantize(const Tensor<float>&, QuantMode, int, double);
template Quantized<double> quantize(const Tensor<double>&, QuantMode, int, double);
template std::vector<int> to_symbols(const Tensor<float>&, double);
template std::vector<int> to_symbols(const Tensor<double>&, double);

}  // namespace hssc
