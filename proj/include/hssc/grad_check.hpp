#pragma once

#include <functional>
#include <string>

#include "hssc/tensor.hpp"

namespace hssc {

struct GradCheckOptions {
  double eps = 1e-4;
  // Elements whose relative error exceeds this are counted as failures.
  double tolerance = 1e-4;
  // Check at most this many randomly chosen elements per parameter (<= 0: all).
  Index max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index checked = 0;
  Index failures = 0;
  // Elements where the one-sided slopes disagree beyond curvature (kinks of
  // ReLU, |x|, max). They are excluded from max_rel_error.
  Index nondifferentiable = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  std::string summary() const;
};

// Compares analytic gradients against central differences
// (f(t + eps e_i) - f(t - eps e_i)) / (2 eps) for every checked element.
//
// `loss` evaluates f from the current parameter values. `loss_and_grad`
// must accumulate df/dparam into each Parameter::grad; grads are zeroed
// before it is called. Relative error uses max(|a|, |n|, 1e-8 max(1, |f|))
// as the denominator. Throws NumericError("function not pure") when two
// evaluations at the same point differ.
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<void()>& loss_and_grad,
                           const ParamList<double>& params, const GradCheckOptions& options = {});

}  // namespace hssc
