#pragma once

#include <iosfwd>
#include <vector>

#include "hssc/tensor.hpp"

namespace hssc {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<double> params, const AdamOptions& options);

  // Applies one update from each parameter's grad.
  void step();

  Index steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

  // Moments and step count, bit-exact.
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  ParamList<double> params_;
  AdamOptions options_;
  std::vector<Eigen::VectorXd> m_, v_;
  Index steps_ = 0;
};

}  // namespace hssc
