#include "hssc/entropy_model.hpp"

#include <array>
#include <cmath>

#include "hssc/errors.hpp"

namespace hssc {

namespace {

constexpr std::array<int, FactorizedPrior<double>::kLayers + 1> kFilters = {1, 3, 3, 1};
constexpr int kWidth = 3;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
double std_normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }

// One channel's monotone network with its parameters unpacked to double.
struct ChannelNet {
  struct Layer {
    double h[kWidth][kWidth];      // softplus(raw)
    double dh[kWidth][kWidth];     // softplus'(raw) = sigmoid(raw)
    double b[kWidth];
    double gate[kWidth];           // tanh(factor)
  };
  // Activations of one evaluation, kept for the backward sweep.
  struct Trace {
    double in[FactorizedPrior<double>::kLayers][kWidth];
    double tz[FactorizedPrior<double>::kLayers][kWidth];  // tanh(z)
  };
  struct Grads {
    double h[FactorizedPrior<double>::kLayers][kWidth][kWidth] = {};
    double b[FactorizedPrior<double>::kLayers][kWidth] = {};
    double a[FactorizedPrior<double>::kLayers][kWidth] = {};
  };

  std::array<Layer, FactorizedPrior<double>::kLayers> layers;

  double logit(double x, Trace* trace) const {
    double v[kWidth] = {x, 0, 0};
    for (int l = 0; l < FactorizedPrior<double>::kLayers; ++l) {
      const int in = kFilters[l], out = kFilters[l + 1];
      double z[kWidth];
      for (int o = 0; o < out; ++o) {
        z[o] = layers[l].b[o];
        for (int i = 0; i < in; ++i) z[o] += layers[l].h[o][i] * v[i];
      }
      if (trace) for (int i = 0; i < in; ++i) trace->in[l][i] = v[i];
      const bool hidden = l + 1 < FactorizedPrior<double>::kLayers;
      for (int o = 0; o < out; ++o) {
        if (hidden) {
          const double t = std::tanh(z[o]);
          if (trace) trace->tz[l][o] = t;
          v[o] = z[o] + layers[l].gate[o] * t;
        } else {
          v[o] = z[o];
        }
      }
    }
    return v[0];
  }

  // Back-propagates g = dL/dlogit; returns dL/dx.
  double backward(const Trace& trace, double g, Grads& grads) const {
    double dv[kWidth] = {g, 0, 0};
    for (int l = FactorizedPrior<double>::kLayers - 1; l >= 0; --l) {
      const int in = kFilters[l], out = kFilters[l + 1];
      const bool hidden = l + 1 < FactorizedPrior<double>::kLayers;
      double dz[kWidth];
      for (int o = 0; o < out; ++o) {
        if (hidden) {
          const double t = trace.tz[l][o];
          const double gt = layers[l].gate[o];
          dz[o] = dv[o] * (1.0 + gt * (1.0 - t * t));
          grads.a[l][o] += dv[o] * t * (1.0 - gt * gt);
        } else {
          dz[o] = dv[o];
        }
      }
      double din[kWidth] = {0, 0, 0};
      for (int o = 0; o < out; ++o) {
        grads.b[l][o] += dz[o];
        for (int i = 0; i < in; ++i) {
          grads.h[l][o][i] += dz[o] * trace.in[l][i] * layers[l].dh[o][i];
          din[i] += layers[l].h[o][i] * dz[o];
        }
      }
      for (int i = 0; i < kWidth; ++i) dv[i] = din[i];
    }
    return dv[0];
  }
};

template <typename Scalar>
ChannelNet unpack(const FactorizedPrior<Scalar>& prior, Index c) {
  ChannelNet net;
  for (int l = 0; l < FactorizedPrior<Scalar>::kLayers; ++l) {
    const int in = kFilters[l], out = kFilters[l + 1];
    auto& L = net.layers[static_cast<std::size_t>(l)];
    const auto& m = prior.matrices[static_cast<std::size_t>(l)].value;
    const auto& b = prior.biases[static_cast<std::size_t>(l)].value;
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) {
        const double raw = static_cast<double>(m[(c * out + o) * in + i]);
        L.h[o][i] = softplus(raw);
        L.dh[o][i] = sigmoid(raw);
      }
      L.b[o] = static_cast<double>(b[c * out + o]);
      L.gate[o] = 0.0;
      if (l + 1 < FactorizedPrior<Scalar>::kLayers) {
        L.gate[o] = std::tanh(static_cast<double>(
            prior.factors[static_cast<std::size_t>(l)].value[c * out + o]));
      }
    }
  }
  return net;
}

// Probability of the unit bin centred on x with lower/upper tails folded in
// when x sits at the support edge. Uses the sign flip that keeps the
// subtraction on the flat side of the sigmoid.
struct BinProbability {
  double q;
  double dq_dlower;
  double dq_dupper;
};

BinProbability bin_probability(double lower_logit, double upper_logit, bool fold_lower,
                               bool fold_upper) {
  auto sig_prime = [](double l) {
    const double s = sigmoid(-std::abs(l));
    return s * (1.0 - s);
  };
  if (fold_lower && fold_upper) return {1.0, 0.0, 0.0};
  if (fold_lower) return {sigmoid(upper_logit), 0.0, sig_prime(upper_logit)};
  if (fold_upper) return {sigmoid(-lower_logit), -sig_prime(lower_logit), 0.0};
  const double sign = (lower_logit + upper_logit) > 0.0 ? -1.0 : 1.0;
  const double q = std::abs(sigmoid(sign * upper_logit) - sigmoid(sign * lower_logit));
  return {q, -sig_prime(lower_logit), sig_prime(upper_logit)};
}

}  // namespace

double floor_probability(double q, int symbols) {
  return kProbabilityFloor + (1.0 - symbols * kProbabilityFloor) * q;
}

// ---------------------------------------------------------------- LatentCode

int LatentCode::model_for(std::size_t element) const {
  if (model_ids.size() == symbols.size()) return model_ids[element];
  const std::size_t channels = model_ids.size();
  if (channels == 0 || shape.empty()) return 0;
  const std::size_t plane = symbols.size() / static_cast<std::size_t>(shape[0]);
  return model_ids[element / plane];
}

void DiscreteModel::add_table(std::vector<double> p) {
  if (static_cast<int>(p.size()) != symbol_count()) {
    throw std::invalid_argument("discrete model: table size does not match the support");
  }
  tables.push_back(FrequencyTable::from_pmf(p));
  pmf.push_back(std::move(p));
}

double DiscreteModel::bits(int id, int symbol) const {
  if (symbol < -support || symbol > support) {
    throw std::out_of_range("symbol " + std::to_string(symbol) + " outside support +-" +
                            std::to_string(support));
  }
  return -std::log2(pmf.at(static_cast<std::size_t>(id))[static_cast<std::size_t>(symbol + support)]);
}

double rate(const DiscreteModel& model, const LatentCode& code) {
  double total = 0.0;
  for (std::size_t i = 0; i < code.symbols.size(); ++i) {
    total += model.bits(code.model_for(i), code.symbols[i]);
  }
  return total;
}

std::vector<std::uint8_t> ae_encode(const DiscreteModel& model, const LatentCode& code) {
  RangeEncoder enc;
  for (std::size_t i = 0; i < code.symbols.size(); ++i) {
    const int s = code.symbols[i];
    if (s < -model.support || s > model.support) {
      throw std::out_of_range("ae_encode: symbol outside support");
    }
    enc.encode(model.tables.at(static_cast<std::size_t>(code.model_for(i))), s + model.support);
  }
  return enc.finish();
}

void ad_decode(const DiscreteModel& model, std::span<const std::uint8_t> bytes, LatentCode& code) {
  const std::size_t n = static_cast<std::size_t>(shape_size(code.shape));
  code.symbols.assign(n, 0);
  RangeDecoder dec(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    code.symbols[i] =
        dec.decode(model.tables.at(static_cast<std::size_t>(code.model_for(i)))) - model.support;
  }
}

// ------------------------------------------------------------ FactorizedPrior

template <typename Scalar>
FactorizedPrior<Scalar>::FactorizedPrior(const std::string& id, Index channels, int support,
                                         std::uint64_t seed)
    : channels_(channels), support_(support) {
  if (channels < 1) throw ShapeError("factorized prior: need at least one channel");
  if (support < 1) throw std::invalid_argument("factorized prior: support must be >= 1");
  // Initial density is a logistic-like bump of width ~init_scale (the product
  // of the softplus(matrix) entries starts near 1 / init_scale). Latents here
  // are O(1); a width of 10 leaves the rate flat in y for hundreds of steps.
  const double init_scale = 1.0;
  const double scale = std::pow(init_scale, 1.0 / kLayers);
  for (int l = 0; l < kLayers; ++l) {
    const Index in = kFilters[l], out = kFilters[l + 1];
    const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(out)));
    const std::string n = std::to_string(l);
    matrices.emplace_back(id + ".matrix" + n,
                          Tensor<Scalar>(Shape{channels, out, in}, static_cast<Scalar>(init)));
    CounterRng rng = CounterRng(seed).fork(id + ".bias" + n);
    biases.emplace_back(id + ".bias" + n, Tensor<Scalar>::uniform(Shape{channels, out}, rng, -0.5, 0.5));
    if (l + 1 < kLayers) factors.emplace_back(id + ".factor" + n, Tensor<Scalar>(Shape{channels, out}));
  }
}

template <typename Scalar>
void FactorizedPrior<Scalar>::collect(ParamList<Scalar>& params) {
  for (int l = 0; l < kLayers; ++l) {
    params.push_back(&matrices[static_cast<std::size_t>(l)]);
    params.push_back(&biases[static_cast<std::size_t>(l)]);
    if (l + 1 < kLayers) params.push_back(&factors[static_cast<std::size_t>(l)]);
  }
}

template <typename Scalar>
double FactorizedPrior<Scalar>::cdf(Index channel, double x) const {
  return sigmoid(unpack(*this, channel).logit(x, nullptr));
}

template <typename Scalar>
std::vector<double> FactorizedPrior<Scalar>::pmf(Index channel) const {
  const ChannelNet net = unpack(*this, channel);
  const int n = 2 * support_ + 1;
  std::vector<double> p(static_cast<std::size_t>(n));
  double lower = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = k - support_;
    const double upper = net.logit(x + 0.5, nullptr);
    p[static_cast<std::size_t>(k)] =
        floor_probability(bin_probability(lower, upper, k == 0, k == n - 1).q, n);
    lower = upper;
  }
  return p;
}

template <typename Scalar>
DiscreteModel FactorizedPrior<Scalar>::freeze() const {
  DiscreteModel m;
  m.support = support_;
  for (Index c = 0; c < channels_; ++c) m.add_table(pmf(c));
  return m;
}

template <typename Scalar>
double FactorizedPrior<Scalar>::rate_loss(const Tensor<Scalar>& y_tilde) {
  if (y_tilde.rank() < 1 || y_tilde.dim(0) != channels_) {
    throw ShapeError("factorized prior: expected " + std::to_string(channels_) +
                     " channels, got " + to_string(y_tilde.shape()));
  }
  input_ = y_tilde;
  const Index plane = y_tilde.size() / channels_;
  const int n = 2 * support_ + 1;
  const double s = support_;
  double total = 0.0;
  for (Index c = 0; c < channels_; ++c) {
    const ChannelNet net = unpack(*this, c);
    for (Index j = 0; j < plane; ++j) {
      const double x = static_cast<double>(y_tilde[c * plane + j]);
      const bool fl = x <= -s, fu = x >= s;
      const double lo = fl ? 0.0 : net.logit(x - 0.5, nullptr);
      const double up = fu ? 0.0 : net.logit(x + 0.5, nullptr);
      total -= std::log2(floor_probability(bin_probability(lo, up, fl, fu).q, n));
    }
  }
  return total;
}

template <typename Scalar>
Tensor<Scalar> FactorizedPrior<Scalar>::rate_backward(double grad_bits) {
  if (input_.empty()) throw std::logic_error("factorized prior: backward before rate_loss");
  const Index plane = input_.size() / channels_;
  const int n = 2 * support_ + 1;
  const double s = support_;
  const double mass = 1.0 - n * kProbabilityFloor;
  Tensor<Scalar> dx(input_.shape());
  for (Index c = 0; c < channels_; ++c) {
    const ChannelNet net = unpack(*this, c);
    ChannelNet::Grads g;
    for (Index j = 0; j < plane; ++j) {
      const double x = static_cast<double>(input_[c * plane + j]);
      const bool fl = x <= -s, fu = x >= s;
      ChannelNet::Trace tl, tu;
      const double lo = fl ? 0.0 : net.logit(x - 0.5, &tl);
      const double up = fu ? 0.0 : net.logit(x + 0.5, &tu);
      const BinProbability bp = bin_probability(lo, up, fl, fu);
      const double p = floor_probability(bp.q, n);
      const double dq = -grad_bits * mass / (p * std::log(2.0));
      double d = 0.0;
      if (!fl) d += net.backward(tl, dq * bp.dq_dlower, g);
      if (!fu) d += net.backward(tu, dq * bp.dq_dupper, g);
      dx[c * plane + j] = static_cast<Scalar>(d);
    }
    if (!trainable) continue;
    for (int l = 0; l < kLayers; ++l) {
      const int in = kFilters[l], out = kFilters[l + 1];
      auto& gm = matrices[static_cast<std::size_t>(l)].grad;
      auto& gb = biases[static_cast<std::size_t>(l)].grad;
      for (int o = 0; o < out; ++o) {
        for (int i = 0; i < in; ++i) gm[(c * out + o) * in + i] += static_cast<Scalar>(g.h[l][o][i]);
        gb[c * out + o] += static_cast<Scalar>(g.b[l][o]);
        if (l + 1 < kLayers) {
          factors[static_cast<std::size_t>(l)].grad[c * out + o] += static_cast<Scalar>(g.a[l][o]);
        }
      }
    }
  }
  return dx;
}

// -------------------------------------------------------- GaussianConditional

GaussianConditional::GaussianConditional(int support_) : support(support_) {
  const double lmin = std::log(kScaleMin), lmax = std::log(kScaleMax);
  model.support = support;
  const int n = 2 * support + 1;
  for (int k = 0; k < kScaleCount; ++k) {
    scales.push_back(std::exp(lmin + (lmax - lmin) * k / (kScaleCount - 1)));
    std::vector<double> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = likelihood(i - support, scales.back());
    model.add_table(std::move(p));
  }
}

double GaussianConditional::likelihood(double y, double sigma) const {
  const double m = std::abs(y);
  const double a = (0.5 - m) / sigma;
  double q = std_normal_cdf(a);
  if (m + 0.5 <= support) q -= std_normal_cdf((-0.5 - m) / sigma);
  return floor_probability(q, 2 * support + 1);
}

double GaussianConditional::bits(double y, double sigma, double* d_y, double* d_sigma) const {
  const int n = 2 * support + 1;
  const double m = std::abs(y);
  const double a = (0.5 - m) / sigma;
  const double b = (-0.5 - m) / sigma;
  const bool fold = m + 0.5 > support;
  const double pa = std_normal_pdf(a);
  const double pb = fold ? 0.0 : std_normal_pdf(b);
  const double q = std_normal_cdf(a) - (fold ? 0.0 : std_normal_cdf(b));
  const double p = floor_probability(q, n);
  const double dbits_dq = -(1.0 - n * kProbabilityFloor) / (p * std::log(2.0));
  if (d_y) {
    const double sign = y > 0 ? 1.0 : (y < 0 ? -1.0 : 0.0);
    *d_y = dbits_dq * (pb - pa) / sigma * sign;
  }
  if (d_sigma) *d_sigma = dbits_dq * (b * pb - a * pa) / sigma;
  return -std::log2(p);
}

int GaussianConditional::scale_index(double sigma) const {
  const double lmin = std::log(kScaleMin), lmax = std::log(kScaleMax);
  const double t = (std::log(std::max(sigma, kScaleMin)) - lmin) / (lmax - lmin);
  return static_cast<int>(std::clamp(std::lround(t * (kScaleCount - 1)), 0L,
                                     static_cast<long>(kScaleCount - 1)));
}

template class FactorizedPrior<float>;
template class FactorizedPrior<double>;

}  // namespace hssc
