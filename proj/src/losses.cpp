#include "hssc/losses.hpp"

#include <cmath>
#include <sstream>

namespace hssc {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_finite(double value, const char* term) {
  if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + term + " loss");
}

Tensor<double> band(const Tensor<double>& x, Index b) {
  const Index plane = x.dim(1) * x.dim(2);
  return Tensor<double>(Shape{1, x.dim(1), x.dim(2)}, x.data().segment(b * plane, plane).eval());
}

constexpr double kNormEps = 1e-10;

// Unit-normalizes each position's feature vector across channels.
Tensor<double> normalize(const Tensor<double>& f) {
  Tensor<double> out = f;
  auto m = out.matrix();
  const Eigen::RowVectorXd norm = (m.colwise().squaredNorm().array() + kNormEps).sqrt();
  m.array().rowwise() /= norm.array();
  return out;
}

Tensor<double> normalize_backward(const Tensor<double>& f, const Tensor<double>& unit,
                                  const Tensor<double>& grad) {
  Tensor<double> out(f.shape());
  const auto u = unit.matrix();
  const auto g = grad.matrix();
  const Eigen::RowVectorXd norm = (f.matrix().colwise().squaredNorm().array() + kNormEps).sqrt();
  const Eigen::RowVectorXd proj = u.cwiseProduct(g).colwise().sum();
  auto o = out.matrix();
  o = g - (u.array().rowwise() * proj.array()).matrix();
  o.array().rowwise() /= norm.array();
  return out;
}

}  // namespace

const std::map<double, double>& target_rate_table() {
  static const std::map<double, double> table = {
      {0.2, 2.0}, {0.4, 1.0}, {0.6, 0.5}, {0.8, 0.25}, {1.0, 0.125}};
  return table;
}

void LossWeights::validate() const {
  for (double v : {theta1, theta2, theta3, beta, lambda_b, l1_se}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("loss weights must be finite and nonnegative");
    }
  }
  if (lambda_a.empty()) throw std::invalid_argument("lambda_a table is empty");
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& [rt, la] : lambda_a) {
    if (!(la < prev)) throw std::invalid_argument("lambda_a must strictly decrease in r_t");
    if (!(la >= 8.0 * lambda_b)) {
      throw std::invalid_argument("lambda_a must be at least 8 lambda_b");
    }
    prev = la;
    (void)rt;
  }
}

double LossWeights::lambda_a_for(double r_t) const {
  auto it = lambda_a.find(r_t);
  if (it == lambda_a.end()) {
    std::ostringstream os;
    os << "target rate " << r_t << " has no lambda_a; known targets:";
    for (const auto& [k, v] : lambda_a) os << " " << k;
    os << " (or give lambda_a explicitly)";
    throw std::invalid_argument(os.str());
  }
  return it->second;
}

double lambda_select(double rate, double r_t, const LossWeights& weights) {
  if (!(rate >= 0.0)) throw std::invalid_argument("lambda_select: rate must be >= 0");
  return rate > r_t ? weights.lambda_a_for(r_t) : weights.lambda_b;
}

// ------------------------------------------------------------ features

FeatureDistance::FeatureDistance() {
  const ConvSpec specs[3] = {conv2d_spec(1, 8, 3), conv2d_spec(8, 16, 3, 2),
                             conv2d_spec(16, 32, 3, 2)};
  for (int i = 0; i < 3; ++i) {
    layers_.emplace_back("F.conv" + std::to_string(i), specs[i], kSeed);
    layers_.back().trainable = false;
  }
  pre_.resize(3);
}

std::vector<Tensor<double>> FeatureDistance::features(const Tensor<double>& image) {
  std::vector<Tensor<double>> acts;
  Tensor<double> h = image;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    pre_[l] = layers_[l].forward(h);
    h = leaky_relu(pre_[l]);
    acts.push_back(h);
  }
  return acts;
}

double FeatureDistance::run(const Tensor<double>& x, const Tensor<double>& y,
                            Tensor<double>* grad_y) {
  require_same_shape(x.shape(), y.shape(), "feature distance");
  if (x.rank() != 3) throw ShapeError("feature distance: expected [B, H, W]");
  const Index bands = x.dim(0), plane = x.dim(1) * x.dim(2);
  if (grad_y) *grad_y = Tensor<double>(x.shape());
  double total = 0.0;
  for (Index b = 0; b < bands; ++b) {
    std::vector<Tensor<double>> ux;
    for (const auto& f : features(band(x, b))) ux.push_back(normalize(f));
    // Forward y last so the layer caches belong to it.
    const std::vector<Tensor<double>> fy = features(band(y, b));
    std::vector<Tensor<double>> diff;
    for (std::size_t l = 0; l < fy.size(); ++l) {
      diff.push_back(normalize(fy[l]) - ux[l]);
      const double positions = static_cast<double>(fy[l].dim(1) * fy[l].dim(2));
      total += diff[l].data().squaredNorm() / positions;
    }
    if (!grad_y) continue;
    Tensor<double> carry;
    for (std::size_t l = fy.size(); l-- > 0;) {
      const double positions = static_cast<double>(fy[l].dim(1) * fy[l].dim(2));
      Tensor<double> g = diff[l];
      g.array() *= 2.0 / (positions * static_cast<double>(bands));
      g = normalize_backward(fy[l], diff[l] + ux[l], g);
      if (!carry.empty()) g.array() += carry.array();
      carry = layers_[l].backward(leaky_relu_backward(pre_[l], g));
    }
    grad_y->data().segment(b * plane, plane) = carry.data();
  }
  return total / static_cast<double>(bands);
}

double FeatureDistance::operator()(const Tensor<double>& x, const Tensor<double>& y) {
  return run(x, y, nullptr);
}

double FeatureDistance::with_grad(const Tensor<double>& x, const Tensor<double>& y,
                                  Tensor<double>& grad_y) {
  return run(x, y, &grad_y);
}

DistortionTerms Distortion::operator()(const Tensor<double>& x, const Tensor<double>& x_hat,
                                       Tensor<double>* grad) {
  require_same_shape(x.shape(), x_hat.shape(), "distortion");
  DistortionTerms t;
  t.mse = mse(x, x_hat);
  if (!grad) {
    t.ssim = weights_.theta2 > 0 ? ssim(x, x_hat) : 1.0;
    t.feature = weights_.theta3 > 0 ? feature_(x, x_hat) : 0.0;
  } else {
    *grad = x_hat - x;
    grad->array() *= 2.0 * weights_.theta1 / static_cast<double>(x.size());
    if (weights_.theta2 > 0) {
      Tensor<double> gs;
      t.ssim = ssim_with_grad(x, x_hat, gs);
      grad->data() -= weights_.theta2 * gs.data();
    }
    if (weights_.theta3 > 0) {
      Tensor<double> gf;
      t.feature = feature_.with_grad(x, x_hat, gf);
      grad->data() += weights_.theta3 * gf.data();
    }
  }
  t.total = weights_.theta1 * t.mse + weights_.theta2 * (1.0 - t.ssim) + weights_.theta3 * t.feature;
  return t;
}

// -------------------------------------------------------------- objectives

ParamList<double> se_penalty_params(Model<double>& model) {
  ParamList<double> out;
  for (auto* p : model.parameters()) {
    if (p->id.ends_with(".fc1.weight") || p->id.ends_with(".fc2.weight")) out.push_back(p);
  }
  return out;
}

EgpLoss loss_egp(Model<double>& model, Distortion& distortion,
                 const std::vector<Tensor<double>>& batch, const LossWeights& weights,
                 double beta, double r_t, bool grads, QuantMode quant,
                 const std::vector<Tensor<double>>* d_latent) {
  if (batch.empty()) throw std::invalid_argument("loss_egp: empty batch");
  if (d_latent && d_latent->size() != batch.size()) {
    throw std::invalid_argument("loss_egp: d_latent and batch sizes differ");
  }
  const double n = static_cast<double>(batch.size());
  EgpLoss out;

  // lambda depends on the batch-mean rate, so with grads the rate is
  // measured in a first forward pass over E and P.
  if (grads) {
    double rate = 0.0;
    for (const auto& x : batch) {
      const auto bo = model.bottleneck.forward(model.encode(x), quant);
      // Accumulated exactly like out.rate below, so logs replay bit-exactly.
      rate += rate_per_pixel(bo.bits, x.shape()) / n;
    }
    require_finite(rate, "rate");
    out.lambda = lambda_select(rate, r_t, weights);
  }

  model.discriminator.set_trainable(false);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor<double>& x = batch[i];
    const Tensor<double> y = model.encode(x);
    const auto bo = model.bottleneck.forward(y, quant);
    const double rate = rate_per_pixel(bo.bits, x.shape());
    require_finite(rate, "rate");
    Tensor<double> x_hat = model.generate(bo.y_hat);
    Tensor<double> g_hat;
    const DistortionTerms dt = distortion(x, x_hat, grads ? &g_hat : nullptr);
    require_finite(dt.total, "distortion");
    double adv = 0.0;
    if (beta > 0) {
      const Tensor<double> logits = model.discriminator.forward(x_hat, d_latent ? (*d_latent)[i] : bo.y_hat);
      const double patches = static_cast<double>(logits.size());
      Tensor<double> gl(logits.shape());
      for (Index i = 0; i < logits.size(); ++i) {
        adv += softplus(-logits[i]) / patches;
        gl[i] = -beta * logistic(-logits[i]) / patches;
      }
      adv *= beta;
      require_finite(adv, "adversarial");
      if (grads) g_hat.data() += model.discriminator.backward(gl).first.data();
    }
    out.rate += rate / n;
    out.distortion += dt.total / n;
    out.adversarial += adv / n;
    out.saturated += bo.saturated;
    if (grads) {
      g_hat.array() /= n;
      const Tensor<double> g_y_hat = model.generate_backward(bo.y_hat, g_hat);
      const double rate_weight = out.lambda / static_cast<double>(x.dim(1) * x.dim(2)) / n;
      model.encode_backward(x, model.bottleneck.backward(g_y_hat, rate_weight));
    }
    out.x_hat.push_back(std::move(x_hat));
    out.y_hat.push_back(bo.y_hat);
  }
  model.discriminator.set_trainable(true);
  if (!grads) out.lambda = lambda_select(out.rate, r_t, weights);

  for (auto* p : se_penalty_params(model)) {
    out.se_l1 += weights.l1_se * p->value.data().lpNorm<1>();
    if (grads) p->grad.array() += weights.l1_se * p->value.array().sign();
  }
  require_finite(out.se_l1, "se_l1");
  out.objective = out.lambda * out.rate + out.distortion + out.adversarial + out.se_l1;
  return out;
}

double loss_d(Discriminator<double>& d, const std::vector<Tensor<double>>& batch,
              const std::vector<Tensor<double>>& x_hat, const std::vector<Tensor<double>>& y_hat,
              bool grads) {
  if (batch.empty() || x_hat.size() != batch.size() || y_hat.size() != batch.size()) {
    throw std::invalid_argument("loss_d: batch, x_hat and y_hat sizes differ");
  }
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  // fake: -log(1 - sigmoid(l)) = softplus(l); real: -log sigmoid(l) = softplus(-l).
  auto term = [&](const Tensor<double>& x, const Tensor<double>& y, double sign) {
    const Tensor<double> logits = d.forward(x, y);
    const double patches = static_cast<double>(logits.size());
    Tensor<double> g(logits.shape());
    for (Index i = 0; i < logits.size(); ++i) {
      loss += softplus(sign * logits[i]) / patches / n;
      g[i] = sign * logistic(sign * logits[i]) / patches / n;
    }
    if (grads) d.backward(g);
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    term(x_hat[i], y_hat[i], 1.0);
    term(batch[i], y_hat[i], -1.0);
  }
  require_finite(loss, "discriminator");
  return loss;
}

}  // namespace hssc
