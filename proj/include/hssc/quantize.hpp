#pragma once

#include "hssc/tensor.hpp"

namespace hssc {

enum class QuantMode {
  // Round half away from zero and clamp to the symbol support.
  inference,
  // Same forward values; backward treats the rounding as the identity (STE).
  train,
  // No rounding at all. A test hook: substituting the identity is the oracle
  // against which pipelines containing the STE are gradient-checked.
  identity,
};

template <typename Scalar>
struct Quantized {
  Tensor<Scalar> values;
  // Elements whose rounded value fell outside [-support, support].
  Index saturated = 0;
};

// Symbols are round(y - offset) clamped to [-support, support]; the returned
// values are symbol + offset. Backward is the identity in every mode.
template <typename Scalar>
Quantized<Scalar> quantize(const Tensor<Scalar>& y, QuantMode mode, int support,
                           double offset = 0.0);

// Integer symbols of an already-quantized tensor.
template <typename Scalar>
std::vector<int> to_symbols(const Tensor<Scalar>& y_hat, double offset = 0.0);

}  // namespace hssc
