#include "hssc/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "hssc/serialize.hpp"

namespace hssc {

Adam::Adam(ParamList<double> params, const AdamOptions& options)
    : params_(std::move(params)), options_(options) {
  if (!(options.lr > 0)) throw std::invalid_argument("adam: lr must be > 0");
  for (auto* p : params_) {
    m_.push_back(Eigen::VectorXd::Zero(p->value.size()));
    v_.push_back(Eigen::VectorXd::Zero(p->value.size()));
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto g = params_[i]->grad.array();
    m_[i].array() = options_.beta1 * m_[i].array() + (1.0 - options_.beta1) * g;
    v_[i].array() = options_.beta2 * v_[i].array() + (1.0 - options_.beta2) * g * g;
    params_[i]->value.array() -=
        options_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
  }
}

void Adam::save(std::ostream& out) const {
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(steps_));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m_.size()));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    write_doubles(out, m_[i]);
    write_doubles(out, v_[i]);
  }
}

void Adam::load(std::istream& in) {
  const auto steps = read_le<std::uint64_t>(in);
  const auto count = read_le<std::uint32_t>(in);
  if (count != m_.size()) throw FormatError("adam state: parameter count mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) {
    read_doubles(in, m_[i]);
    read_doubles(in, v_[i]);
  }
  steps_ = static_cast<Index>(steps);
}

}  // namespace hssc
