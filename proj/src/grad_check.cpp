#include "hssc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hssc {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "max rel err " << max_rel_error << " over " << checked << " elements";
  if (!worst_param.empty()) {
    os << " (worst " << worst_param << "[" << worst_index << "] analytic " << worst_analytic
       << " numeric " << worst_numeric << ")";
  }
  if (nondifferentiable) os << ", " << nondifferentiable << " kink points skipped";
  return os.str();
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<void()>& loss_and_grad,
                           const ParamList<double>& params, const GradCheckOptions& options) {
  GradCheckReport report;
  const double base = loss();
  if (loss() != base) throw NumericError("grad_check: function not pure");

  zero_grads(params);
  loss_and_grad();

  // The 1e-8 floor is in units of the loss: differences of f carry roundoff
  // proportional to |f|, so an absolute floor would make the verdict depend
  // on how the loss happens to be scaled.
  const double floor = 1e-8 * std::max(1.0, std::abs(base));

  CounterRng rng(options.seed ^ 0x5eedULL);
  const double eps = options.eps;
  for (auto* p : params) {
    const Index n = p->value.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    if (options.max_elements_per_param > 0 && n > options.max_elements_per_param) {
      for (Index i = 0; i < options.max_elements_per_param; ++i) {
        const Index j = i + rng.uniform_index(n - i);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      order.resize(static_cast<std::size_t>(options.max_elements_per_param));
    }

    for (Index i : order) {
      double& theta = p->value[i];
      const double saved = theta;
      theta = saved + eps;
      const double plus = loss();
      theta = saved - eps;
      const double minus = loss();
      theta = saved + 2.0 * eps;
      const double plus2 = loss();
      theta = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p->grad[i];
      ++report.checked;

      // Consecutive slope increments agree for smooth f: (fwd - bwd) and
      // (fwd2 - fwd) both equal f'' eps up to O(eps^2). A kink inside
      // [theta - eps, theta + 2 eps] breaks this by the jump in slope.
      const double fwd = (plus - base) / eps;
      const double bwd = (base - minus) / eps;
      const double fwd2 = (plus2 - plus) / eps;
      const double scale = std::max({std::abs(fwd), std::abs(bwd), 1e-2});
      if (std::abs((fwd - bwd) - (fwd2 - fwd)) > 1e-3 * scale) {
        ++report.nondifferentiable;
        continue;
      }

      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > options.tolerance) {
        // Many small kinks (a bias feeding every pixel) slip past the test
        // above. A smooth f gives the same central difference at eps / 10;
        // only if it does is the mismatch charged to the analytic gradient.
        const double e = eps / 10.0;
        theta = saved + e;
        const double p1 = loss();
        theta = saved - e;
        const double m1 = loss();
        theta = saved;
        const double fine = (p1 - m1) / (2.0 * e);
        const double spread = std::abs(fine - numeric) /
                              std::max({std::abs(fine), std::abs(numeric), floor});
        if (spread > options.tolerance) {
          ++report.nondifferentiable;
          continue;
        }
      }
      if (rel > options.tolerance) ++report.failures;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p->id;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace hssc
