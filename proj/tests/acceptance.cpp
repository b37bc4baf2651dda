// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [criterion numbers...]   (default: all)

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>

#include "hssc/codec.hpp"
#include "hssc/dataset.hpp"
#include "hssc/layers.hpp"
#include "hssc/losses.hpp"
#include "hssc/range_coder.hpp"
#include "hssc/rd.hpp"
#include "hssc/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace hssc;
using hssc::testing::check_op;
using hssc::testing::random_tensor;
using T = Tensor<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "hssc_acceptance";
  fs::create_directories(d);
  return d;
}

// ---------------------------------------------------------------- 1

struct Worst {
  double err = 0.0;
  std::string where;
  Index checks = 0;
  Index elements = 0;
  Index kinks = 0;
  void add(const GradCheckReport& r, const std::string& name) {
    ++checks;
    elements += r.checked;
    kinks += r.nondifferentiable;
    if (r.max_rel_error >= err) {
      err = r.max_rel_error;
      where = name + " (" + r.worst_param + ")";
    }
  }
};

ModelConfig tiny(Variant v, Index bands, double w = 0.125) {
  ModelConfig c;
  c.variant = v;
  c.bands = bands;
  c.width_scale = w;
  c.seed = 11;
  return c;
}

Outcome gradients() {
  Worst layers;
  const std::uint64_t seeds[] = {1, 2, 3};
  const std::vector<std::pair<ConvSpec, Shape>> convs = {
      {conv2d_spec(2, 3, 3), {2, 5, 5}},           {conv2d_spec(2, 3, 5, 2), {2, 6, 5}},
      {conv2d_fixed_pad_spec(2, 2, 4, 2, 1), {2, 6, 6}}, {conv3d_spec(1, 2, 3), {1, 3, 4, 4}},
      {conv3d_spec(2, 2, 3, 2), {2, 3, 4, 4}},      {conv_transpose2d_spec(3, 2, 3), {3, 3, 3}},
      {conv_transpose3d_spec(2, 2, 3), {2, 2, 2, 3}}};
  for (std::uint64_t s : seeds) {
    for (const auto& [spec, shape] : convs) {
      Conv<double> conv("c", spec, s);
      conv.bias.value = random_tensor({spec.out_channels}, s + 5);
      Parameter<double> x("x", random_tensor(shape, s + 6));
      ParamList<double> params;
      conv.collect(params);
      layers.add(check_op(x, params, [&](const T& in) { return conv.forward(in); },
                          [&](const T& g) { return conv.backward(g); }, s),
                 "conv");
    }
    T cached;
    Parameter<double> a("x", random_tensor({3, 4, 4}, s));
    layers.add(check_op(a, {}, [&](const T& in) { cached = in; return relu(in); },
                        [&](const T& g) { return relu_backward(cached, g); }, s),
               "relu");
    layers.add(check_op(a, {}, [&](const T& in) { cached = in; return leaky_relu(in); },
                        [&](const T& g) { return leaky_relu_backward(cached, g); }, s),
               "leaky_relu");
    layers.add(check_op(a, {}, [&](const T& in) { return nn_upsample(in, 3); },
                        [&](const T& g) { return nn_upsample_backward(g, 3); }, s),
               "upsample");
    {
      ChannelNorm<double> n("n", 4);
      n.gain.value = random_tensor({4}, s + 1, 0.5, 1.5);
      n.offset.value = random_tensor({4}, s + 2);
      Parameter<double> x("x", random_tensor({4, 3, 3}, s));
      ParamList<double> params;
      n.collect(params);
      layers.add(check_op(x, params, [&](const T& in) { return n.forward(in); },
                          [&](const T& g) { return n.backward(g); }, s),
                 "channel_norm");
    }
    {
      SEBlock<double> se("se", 4, 2, s);
      se.fc1_bias.value = random_tensor({2}, s + 1);
      se.fc2_bias.value = random_tensor({4}, s + 2);
      Parameter<double> x("x", random_tensor({4, 3, 3}, s));
      ParamList<double> params;
      se.collect(params);
      layers.add(check_op(x, params, [&](const T& in) { return se.forward(in); },
                          [&](const T& g) { return se.backward(g); }, s),
                 "se_block");
    }
    {
      ResidualBlock<double> block("r", 3, s);
      Parameter<double> x("x", random_tensor({3, 4, 4}, s));
      ParamList<double> params;
      block.collect(params);
      layers.add(check_op(x, params, [&](const T& in) { return block.forward(in); },
                          [&](const T& g) { return block.backward(g); }, s),
                 "residual_block");
    }
    for (auto kind : {EntropyModelKind::factorized, EntropyModelKind::hyperprior}) {
      EntropyBottleneck<double> b(2, kind, 16, s);
      Parameter<double> y("y", random_tensor({2, 4, 3}, s, -3, 3));
      const T probe = random_tensor({2, 4, 3}, s + 1);
      ParamList<double> params;
      b.collect(params);
      params.push_back(&y);
      auto loss = [&] {
        const auto out = b.forward(y.value, QuantMode::identity);
        return dot(out.y_hat, probe) + 0.5 * out.bits;
      };
      auto grad = [&] {
        b.forward(y.value, QuantMode::identity);
        y.grad.data() += b.backward(probe, 0.5).data();
      };
      GradCheckOptions o;
      o.seed = s;
      layers.add(grad_check(loss, grad, params, o),
                 kind == EntropyModelKind::factorized ? "bottleneck" : "hyperprior_bottleneck");
    }
    for (Variant v : {Variant::opt, Variant::se, Variant::conv3d}) {
      ModelConfig c = tiny(v, 2, 0.05);
      c.latent_channels = 3;
      c.seed = s;
      Model<double> m(c);
      Parameter<double> x("x", random_tensor({2, 16, 16}, s + 7, 0.0, 1.0));
      layers.add(check_op(x, m.encoder_params(), [&](const T& in) { return m.encoder.forward(in); },
                          [&](const T& g) { return m.encoder.backward(g); }, s, 20),
                 "encoder/" + to_string(v));
      Parameter<double> y("y", random_tensor({3, 1, 1}, s + 8, 0.0, 2.0));
      // Deep ReLU stacks cross many small kinks within +-1e-4.
      layers.add(check_op(y, m.generator_params(), [&](const T& in) { return m.generator.forward(in); },
                          [&](const T& g) { return m.generator.backward(g); }, s, 10, 1e-5),
                 "generator/" + to_string(v));
    }
    {
      ModelConfig c = tiny(Variant::opt, 2);
      c.latent_channels = 3;
      c.seed = s;
      Model<double> m(c);
      Parameter<double> x("x", random_tensor({2, 16, 16}, s, 0.0, 1.0));
      Parameter<double> y("y", random_tensor({3, 1, 1}, s + 10, 0.0, 2.0));
      ParamList<double> params;
      m.discriminator.collect(params);
      params.push_back(&y);
      layers.add(check_op(x, params, [&](const T& in) { return m.discriminator.forward(in, y.value); },
                          [&](const T& g) {
                            auto [dx, dy] = m.discriminator.backward(g);
                            y.grad.data() += dy.data();
                            return dx;
                          },
                          s, 40),
                 "discriminator");
    }
  }

  Worst losses;
  for (std::uint64_t s : seeds) {
    const T x = random_tensor({2, 16, 16}, 10 + s, 0, 1);
    Parameter<double> y("x_hat", random_tensor({2, 16, 16}, 20 + s, 0, 1));
    GradCheckOptions o;
    o.seed = s;
    losses.add(grad_check([&] { return ssim(x, y.value); },
                          [&] {
                            T g;
                            ssim_with_grad(x, y.value, g);
                            y.grad.data() += g.data();
                          },
                          {&y}, o),
               "ssim");
    FeatureDistance f;
    losses.add(grad_check([&] { return f(x, y.value); },
                          [&] {
                            T g;
                            f.with_grad(x, y.value, g);
                            y.grad.data() += g.data();
                          },
                          {&y}, o),
               "feature_distance");
    Distortion d{LossWeights{}};
    losses.add(grad_check([&] { return d(x, y.value).total; },
                          [&] {
                            T g;
                            d(x, y.value, &g);
                            y.grad.data() += g.data();
                          },
                          {&y}, o),
               "distortion");
    Model<double> m(tiny(Variant::opt, 2));
    const std::vector<T> batch = {x}, x_hat = {y.value};
    const std::vector<T> y_hat = {random_tensor(m.encode(x).shape(), s)};
    GradCheckOptions od = o;
    od.max_elements_per_param = 6;
    losses.add(grad_check([&] { return loss_d(m.discriminator, batch, x_hat, y_hat, false); },
                          [&] { loss_d(m.discriminator, batch, x_hat, y_hat, true); },
                          m.discriminator_params(), od),
               "discriminator_loss");
  }

  Worst full;
  for (Variant v : {Variant::opt, Variant::se, Variant::conv3d}) {
    Model<double> m(tiny(v, 2));
    LossWeights w;
    w.l1_se = 1e-3;
    Distortion d(w);
    const std::vector<T> batch = {random_tensor({2, 16, 16}, 7, 0, 1)};
    auto params = m.encoder_params();
    for (auto* p : m.generator_params()) params.push_back(p);
    for (auto* p : m.prior_params()) params.push_back(p);
    const auto pinned = loss_egp(m, d, batch, w, 0.15, 0.2, false, QuantMode::identity).y_hat;
    GradCheckOptions o;
    o.max_elements_per_param = 3;
    o.eps = 1e-5;
    o.tolerance = 1e-3;
    full.add(grad_check(
                 [&] {
                   return loss_egp(m, d, batch, w, 0.15, 0.2, false, QuantMode::identity, &pinned)
                       .objective;
                 },
                 [&] { loss_egp(m, d, batch, w, 0.15, 0.2, true, QuantMode::identity, &pinned); },
                 params, o),
             "objective/" + to_string(v));
  }

  const bool pass = layers.err < 1e-4 && losses.err < 1e-4 && full.err < 1e-3;
  return {pass, fmt("layers max rel err %.2e over %ld checks / %ld elements (worst %s, %ld kink points "
                    "skipped); losses %.2e over %ld checks; full E/G/P objective %.2e over %ld elements",
                    layers.err, long(layers.checks), long(layers.elements), layers.where.c_str(),
                    long(layers.kinks), losses.err, long(losses.checks), full.err, long(full.elements))};
}

// ---------------------------------------------------------------- 2

std::vector<double> random_pmf(CounterRng& rng, int n, int kind) {
  std::vector<double> p(static_cast<std::size_t>(n));
  switch (kind) {
    case 0:  // uniform
      std::fill(p.begin(), p.end(), 1.0);
      break;
    case 1: {  // peaked random
      const double k = rng.uniform(1, 8);
      for (double& v : p) v = std::pow(rng.uniform(), k);
      break;
    }
    case 2: {  // discretized Laplace around a random centre
      const double c = rng.uniform(0, n), b = rng.uniform(0.05, n / 2.0 + 0.1);
      for (int i = 0; i < n; ++i) p[std::size_t(i)] = std::exp(-std::abs(i - c) / b);
      break;
    }
    case 3: {  // sparse support
      for (double& v : p) v = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
      p[rng.uniform_index(n)] = 1.0;
      break;
    }
    default: {  // one dominant symbol
      for (double& v : p) v = 1e-9 * rng.uniform();
      p[rng.uniform_index(n)] = 1.0;
      break;
    }
  }
  double sum = 0.0;
  for (double v : p) sum += v;
  for (double& v : p) v /= sum;
  return p;
}

int sample(const FrequencyTable& t, CounterRng& rng) {
  return t.find(static_cast<std::uint32_t>(rng.uniform_index(FrequencyTable::kTotal)));
}

Outcome lossless() {
  const int trials = 100000;
  CounterRng root(2024);
  Index failures = 0, long_checked = 0, long_over = 0, long_low_info = 0;
  double worst_excess = -1e9, worst_long_ratio = 0.0, low_info_excess = 0.0;
  std::uint64_t symbols = 0;
  for (int trial = 0; trial < trials; ++trial) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(trial));
    const int models = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<FrequencyTable> tables;
    for (int m = 0; m < models; ++m) {
      const int n = 1 + static_cast<int>(rng.uniform_index(rng.uniform() < 0.2 ? 1024 : 64));
      const auto p = random_pmf(rng, n, static_cast<int>(rng.uniform_index(5)));
      tables.push_back(FrequencyTable::from_pmf(p));
    }
    // Log-uniform lengths over [0, 1e4]; every 50th trial is exactly 1e4 long.
    const Index length = trial % 50 == 0 ? 10000
                         : rng.uniform() < 0.02 ? 0
                                                : static_cast<Index>(std::exp(rng.uniform(0, std::log(10000.0))));
    // Sequences: 0 sampled from the model, 1 rarest symbols, 2 alternating
    // extremes, 3 uniform over the support, 4 last symbol repeated.
    const int kind = trial % 50 == 0 ? (trial / 50) % 5 : static_cast<int>(rng.uniform_index(5));
    std::vector<int> seq(static_cast<std::size_t>(length));
    for (Index i = 0; i < length; ++i) {
      const auto& t = tables[static_cast<std::size_t>(i % models)];
      int lo = -1, hi = -1, rare = -1;
      for (int s = 0; s < t.size(); ++s) {
        if (t.freq(s) == 0) continue;
        if (lo < 0) lo = s;
        hi = s;
        if (rare < 0 || t.freq(s) < t.freq(rare)) rare = s;
      }
      int v = 0;
      switch (kind) {
        case 0: v = sample(t, rng); break;
        case 1: v = rare; break;
        case 2: v = i % 2 ? lo : hi; break;
        case 3:
          do v = static_cast<int>(rng.uniform_index(t.size())); while (t.freq(v) == 0);
          break;
        default: v = hi; break;
      }
      seq[static_cast<std::size_t>(i)] = v;
    }
    RangeEncoder enc;
    double info = 0.0;
    for (Index i = 0; i < length; ++i) {
      const auto& t = tables[static_cast<std::size_t>(i % models)];
      enc.encode(t, seq[std::size_t(i)]);
      info += t.bits(seq[std::size_t(i)]);
    }
    const auto bytes = enc.finish();
    const double bits = 8.0 * static_cast<double>(bytes.size());
    RangeDecoder dec(bytes);
    bool ok = true;
    for (Index i = 0; i < length && ok; ++i) {
      ok = dec.decode(tables[static_cast<std::size_t>(i % models)]) == seq[std::size_t(i)];
    }
    ok = ok && bits <= info + 256.0;
    failures += !ok;
    worst_excess = std::max(worst_excess, bits - info);
    // A coder with 32-bit renormalization may spend up to 32 bits on the
    // final flush, so a relative bound only means something once the
    // information content is at least 100 times that.
    if (length >= 10000) {
      if (info >= 3200.0) {
        ++long_checked;
        worst_long_ratio = std::max(worst_long_ratio, bits / info - 1.0);
        long_over += bits > 1.01 * info;
      } else {
        ++long_low_info;
        low_info_excess = std::max(low_info_excess, bits - info);
      }
    }
    symbols += static_cast<std::uint64_t>(length);
  }
  const bool pass = failures == 0 && long_over == 0;
  return {pass, fmt("%d round trips (%llu symbols), %ld failures; max overhead %.1f bits over the "
                    "information content; %ld sequences >= 1e4 long with >= 3200 bits of information, "
                    "max relative overhead %.4f%%; %ld near-certain long sequences, max overhead %.1f bits",
                    trials, static_cast<unsigned long long>(symbols), long(failures), worst_excess,
                    long(long_checked), 100.0 * worst_long_ratio, long(long_low_info), low_info_excess)};
}

// ---------------------------------------------------------------- 3

Outcome architecture() {
  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  for (Variant v : {Variant::opt, Variant::se, Variant::conv3d}) {
    ModelConfig c = tiny(v, 369, 1.0);
    expect(encoder_output_shape(c, {369, 96, 96}) == Shape{220, 6, 6}, "latent/" + to_string(v));
    expect(generator_output_shape(c, {220, 6, 6}) == Shape{369, 96, 96}, "recon/" + to_string(v));
    expect(discriminator_output_shape(c, {369, 96, 96}) == Shape{1, 12, 12}, "D/" + to_string(v));
  }
  // Real full-width discriminator pass (float to halve memory).
  ModelConfig full = tiny(Variant::opt, 369, 1.0);
  Discriminator<float> d(full);
  CounterRng rng(5);
  const auto x = Tensor<float>::uniform({369, 96, 96}, rng, 0.0, 1.0);
  const auto y = Tensor<float>::normal({220, 6, 6}, rng, 2.0);
  const auto p = d.probabilities(x, y);
  expect(p.shape() == Shape{1, 12, 12}, "full D output shape");
  expect(p.data().minCoeff() > 0.0f && p.data().maxCoeff() < 1.0f, "D values in (0,1)");
  const double dmin = p.data().minCoeff(), dmax = p.data().maxCoeff();
  // Real tiny-width passes for every variant.
  for (Variant v : {Variant::opt, Variant::se, Variant::conv3d}) {
    Model<double> m(tiny(v, 16));
    const T xi = random_tensor({16, 96, 96}, 3, 0, 1);
    const T lat = m.encode(xi);
    expect(lat.shape() == Shape{m.config().latent(), 6, 6}, "tiny latent/" + to_string(v));
    expect(m.generate(lat).shape() == xi.shape(), "tiny recon/" + to_string(v));
    const T dp = m.discriminator.probabilities(xi, lat);
    expect(dp.shape() == Shape{1, 12, 12}, "tiny D/" + to_string(v));
  }
  std::string detail = fmt("w=1 B=369 96x96: latent [220,6,6], reconstruction [369,96,96], "
                           "D [1,12,12] with values in [%.4f, %.4f]; tiny-width passes for 3 variants",
                           dmin, dmax);
  for (const auto& s : problems) detail += "; MISMATCH " + s;
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------- 4

std::map<std::string, Parameter<double>*> by_id(ParamList<double> params) {
  std::map<std::string, Parameter<double>*> out;
  for (auto* p : params) out[p->id] = p;
  return out;
}

void share(Model<double>& from, Model<double>& to) {
  auto dst = by_id(to.parameters());
  for (auto* p : from.parameters()) {
    auto it = dst.find(p->id);
    if (it != dst.end() && it->second->value.shape() == p->value.shape()) it->second->value = p->value;
  }
}

void embed_conv(const Conv<double>& c2, Conv<double>& c3) {
  T& w3 = c3.weight.value;
  const T& w2 = c2.weight.value;
  w3.set_zero();
  const Index kd = w3.dim(2), plane = w3.dim(3) * w3.dim(4);
  for (Index ab = 0; ab < w2.dim(0) * w2.dim(1); ++ab) {
    w3.data().segment((ab * kd + kd / 2) * plane, plane) = w2.data().segment(ab * plane, plane);
  }
  c3.bias.value = c2.bias.value;
}

Outcome equivalences() {
  double se_err = 0.0;
  for (auto arm : {SePlacement::encoder_initial, SePlacement::encoder_all,
                   SePlacement::encoder_and_generator}) {
    Model<double> opt(tiny(Variant::opt, 4));
    ModelConfig c = tiny(Variant::se, 4);
    c.se_placement = arm;
    Model<double> se(c);
    share(opt, se);
    for (auto* s : se.se_blocks()) {
      s->fc1_weight.value.set_zero();
      s->fc1_bias.value.set_zero();
      s->fc2_weight.value.set_zero();
      s->fc2_bias.value.data().setConstant(20.0);
    }
    const T x = random_tensor({4, 32, 32}, 3, 0.0, 1.0);
    const T y = opt.encode(x);
    se_err = std::max({se_err, max_abs_diff(se.encode(x), y), max_abs_diff(se.generate(y), opt.generate(y))});
  }

  double layer_err = 0.0;
  for (std::uint64_t s : {1, 2, 3}) {
    for (Index k : {3, 5, 7}) {
      for (Index stride : {1, 2}) {
        Conv<double> c3("c", conv3d_spec(3, 4, k, stride), s);
        Conv<double> c2("c", conv2d_spec(3, 4, k, stride), s + 100);
        c3.bias.value = random_tensor({4}, s + 7);
        embed_conv(c2, c3);  // zero all but the centre slice ...
        // ... then restore random values off-centre: a depth-1 input must ignore them.
        for (Index i = 0; i < c3.weight.value.size(); ++i) {
          const Index depth = (i / (k * k)) % k;
          if (depth != k / 2) c3.weight.value[i] = 0.37 * std::sin(double(i));
        }
        const T x = random_tensor({3, 9, 8}, s + 9);
        const T y3 = c3.forward(x.reshaped({3, 1, 9, 8}));
        const T y2 = c2.forward(x);
        layer_err = std::max(layer_err, max_abs_diff(y3.reshaped(y2.shape()), y2));
      }
    }
  }

  double net_err = 0.0;
  for (auto arm : {Conv3dPlacement::first_and_last, Conv3dPlacement::all}) {
    Model<double> opt(tiny(Variant::opt, 1));
    ModelConfig c = tiny(Variant::conv3d, 1);
    c.conv3d_placement = arm;
    Model<double> v3(c);
    share(opt, v3);
    for (std::size_t i = 0; i < v3.encoder.blocks.size(); ++i) {
      if (v3.encoder.blocks[i].conv.spec().spatial_rank == 3) embed_conv(opt.encoder.blocks[i].conv, v3.encoder.blocks[i].conv);
    }
    for (std::size_t i = 0; i < v3.generator.up.size(); ++i) {
      if (v3.generator.up[i].conv.spec().spatial_rank == 3) embed_conv(opt.generator.up[i].conv, v3.generator.up[i].conv);
    }
    embed_conv(opt.generator.out.conv, v3.generator.out.conv);
    const T x = random_tensor({1, 32, 32}, 4, 0.0, 1.0);
    const T y = opt.encode(x);
    net_err = std::max({net_err, max_abs_diff(v3.encode(x), y), max_abs_diff(v3.generate(y), opt.generate(y))});
  }
  const bool pass = se_err <= 1e-6 && layer_err <= 1e-12;
  return {pass, fmt("SE forced to identity vs opt: max diff %.2e (3 placements); depth-1 conv3d vs conv2d "
                    "layers: %.2e (18 cases); depth-1 conv3d network vs opt: %.2e",
                    se_err, layer_err, net_err)};
}

// ---------------------------------------------------------------- 5

Outcome controller() {
  const LossWeights w;
  const std::pair<double, double> rows[] = {
      {0.2, 2.0}, {0.4, 1.0}, {0.6, 0.5}, {0.8, 0.25}, {1.0, 0.125}};
  int table_ok = 0;
  for (const auto& [rt, la] : rows) {
    table_ok += lambda_select(std::nextafter(rt, 2.0), rt, w) == la &&
                lambda_select(rt, rt, w) == w.lambda_b;
  }
  // Short runs at every target; their logs are replayed through the rule.
  const SynthDataset ds = synth_dataset(20, 8, 32, 32, 77);
  Index rows_checked = 0, violations = 0, hi = 0, lo = 0;
  for (const auto& [rt, la] : rows) {
    ModelConfig c = tiny(Variant::opt, 8);
    Model<double> m(c);
    TrainOptions o;
    o.r_t = rt;
    o.batch = 2;
    o.steps_pretrain = 8;
    o.steps_gan = 4;
    o.lr = 3e-3;
    o.seed = 1;
    Trainer t(m, ds.subset(ds.split.train), o);
    std::stringstream log;
    log << metrics_header() << "\n";
    LoopOptions loop;
    loop.log = &log;
    run_training(t, m, loop);
    for (const auto& r : read_metrics(log)) {
      ++rows_checked;
      violations += r.lambda != lambda_select(r.rate, rt, w);
      (r.lambda == la ? hi : lo) += 1;
    }
  }
  const bool pass = table_ok == 5 && violations == 0 && rows_checked > 0;
  return {pass, fmt("%d/5 table pairs exact; %ld replayed log rows, %ld violations (%ld at lambda_a, "
                    "%ld at lambda_b)",
                    table_ok, long(rows_checked), long(violations), long(hi), long(lo))};
}

// ---------------------------------------------------------------- 6, 7

struct ToyRun {
  double first = 0.0, last_pretrain = 0.0;
  bool finite = true;
  std::string error;
  double bpp = 0.0;
  double psnr = 0.0;
  double rate_ema = 0.0;
  double seconds = 0.0;
};

const SynthDataset& toy_data() {
  static const SynthDataset ds = synth_dataset(40, 8, 32, 32, 2024);
  return ds;
}

ToyRun toy_run(double r_t, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const SynthDataset& ds = toy_data();
  ModelConfig c = tiny(Variant::opt, 8);
  c.seed = seed;
  Model<double> m(c);
  TrainOptions o;
  o.r_t = r_t;
  o.seed = seed;
  Trainer t(m, ds.subset(ds.split.train), o);
  ToyRun run;
  try {
    LoopOptions loop;
    const auto records = run_training(t, m, loop);
    run.first = records.front().objective;
    run.last_pretrain = records[static_cast<std::size_t>(o.steps_pretrain - 1)].objective;
    for (const auto& r : records) {
      run.finite = run.finite && std::isfinite(r.objective) && std::isfinite(r.d_loss);
    }
    run.rate_ema = t.average_rate();
  } catch (const NumericError& e) {
    run.finite = false;
    run.error = e.what();
  }
  const EvalSummary s = evaluate(std::vector<std::string>(ds.split.test.size(), "x"),
                                 ds.subset(ds.split.test), model_codec(m));
  run.bpp = s.bpp;
  run.psnr = s.psnr_db;
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::map<std::pair<double, std::uint64_t>, ToyRun>& toy_cache() {
  static std::map<std::pair<double, std::uint64_t>, ToyRun> cache;
  return cache;
}

const ToyRun& toy(double r_t, std::uint64_t seed) {
  auto& cache = toy_cache();
  auto it = cache.find({r_t, seed});
  if (it == cache.end()) it = cache.emplace(std::make_pair(r_t, seed), toy_run(r_t, seed)).first;
  return it->second;
}

Outcome toy_training() {
  std::vector<double> drops;
  bool finite = true;
  double seconds = 0.0;
  std::string errors;
  for (std::uint64_t seed : {1, 2, 3}) {
    const ToyRun& r = toy(0.2, seed);
    drops.push_back(1.0 - r.last_pretrain / r.first);
    finite = finite && r.finite;
    seconds += r.seconds;
    if (!r.error.empty()) errors += " " + r.error;
  }
  const double drop = median3(drops);
  const bool pass = drop >= 0.5 && finite && seconds < 900;
  return {pass, fmt("stage-1 objective drop per seed %.1f%% %.1f%% %.1f%% (median %.1f%%); 200 adversarial "
                    "steps %s; %.0f s for 3 seeds%s",
                    100 * drops[0], 100 * drops[1], 100 * drops[2], 100 * drop,
                    finite ? "all finite" : "hit non-finite losses", seconds, errors.c_str())};
}

Outcome rate_trend() {
  std::vector<double> lo, hi, ema_lo, ema_hi;
  for (std::uint64_t seed : {1, 2, 3}) {
    lo.push_back(toy(0.2, seed).bpp);
    hi.push_back(toy(0.8, seed).bpp);
    ema_lo.push_back(toy(0.2, seed).rate_ema);
    ema_hi.push_back(toy(0.8, seed).rate_ema);
  }
  const double a = median3(lo), b = median3(hi);
  return {a < b, fmt("median coded bpp r_t=0.2: %.5f, r_t=0.8: %.5f (per seed %.5f/%.5f %.5f/%.5f "
                     "%.5f/%.5f); controller rate %.4f vs %.4f bits per pixel",
                     a, b, lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], median3(ema_lo), median3(ema_hi))};
}

// ---------------------------------------------------------------- 8

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(HSSC_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  CliResult r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Outcome codec_end_to_end() {
  const fs::path dir = work_dir() / "codec";
  fs::remove_all(dir);
  auto q = [&](const std::string& name) { return "'" + (dir / name).string() + "'"; };
  if (cli("synth --n 10 --bands 8 --size 48 --seed 4 --out-dir " + q("data")).code != 0 ||
      cli("train --data " + q("data/manifest.txt") + " --out " + q("model.ckpt") +
          " --width-scale 0.125 --batch 2 --steps-pretrain 6 --steps-gan 2 --lr 1e-3 --seed 4")
              .code != 0) {
    return {false, "CLI synth/train failed"};
  }
  // One cube with extents that need padding.
  const T odd = crop(read_cube((dir / "data/cube_0000.raw").string()), 37, 45);
  write_cube((dir / "odd.raw").string(), odd);

  Model<double> m;
  read_checkpoint((dir / "model.ckpt").string(), m);
  int cubes = 0, exact = 0, deterministic = 0, bpp_ok = 0;
  double worst_bpp = 0.0;
  std::vector<std::string> inputs = {"odd.raw"};
  for (int i = 1; i <= 4; ++i) inputs.push_back(fmt("data/cube_%04d.raw", i));
  for (const auto& in : inputs) {
    ++cubes;
    const CliResult c1 = cli("compress --ckpt " + q("model.ckpt") + " --in " + q(in) + " --out " + q("a.bin"));
    const CliResult c2 = cli("compress --ckpt " + q("model.ckpt") + " --in " + q(in) + " --out " + q("b.bin"));
    const CliResult d = cli("decompress --ckpt " + q("model.ckpt") + " --in " + q("a.bin") + " --out " + q("r.raw"));
    if (c1.code || c2.code || d.code) continue;
    const auto bytes = read_file((dir / "a.bin").string());
    deterministic += bytes == read_file((dir / "b.bin").string());

    // Independent decode of the CLI's file against the library encoder.
    const T x = read_cube((dir / in).string());
    const CompressResult ref = compress(m, x);
    const DecompressResult dec = decompress(m, BitstreamFile::parse(bytes));
    const T r = read_cube((dir / "r.raw").string());
    exact += bytes == ref.bytes && dec.symbols == ref.symbols &&
             max_abs_diff(r, dec.reconstruction) < 1e-7;

    std::smatch mt;
    if (!std::regex_search(c1.out, mt, std::regex("bpp=([-+0-9.eE]+)"))) continue;
    const double reported = std::stod(mt[1]);
    const double recount = 8.0 * static_cast<double>(fs::file_size(dir / "a.bin")) /
                           static_cast<double>(x.size());
    worst_bpp = std::max(worst_bpp, std::abs(reported - recount));
    bpp_ok += std::abs(reported - recount) <= 1e-9;
  }
  const bool pass = exact == cubes && deterministic == cubes && bpp_ok == cubes;
  return {pass, fmt("%d cubes (one padded 37x45): %d symbol-exact, %d byte-identical on repeat, reported "
                    "bpp within %.1e of the file-size recount",
                    cubes, exact, deterministic, worst_bpp)};
}

// ---------------------------------------------------------------- 9

Outcome metric_oracles() {
  double psnr_err = 0.0, ssim_err = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    CounterRng rng(900 + s);
    const Index b = 1 + rng.uniform_index(4), h = 11 + rng.uniform_index(14), w = 11 + rng.uniform_index(14);
    const T x = random_tensor({b, h, w}, 1000 + s, 0, 1);
    const double amp = rng.uniform(0.01, 0.5);
    T y = x + random_tensor(x.shape(), 2000 + s, -amp, amp);
    for (Index i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i], 0.0, 1.0);
    psnr_err = std::max(psnr_err, std::abs(psnr(x, y).db - hssc::testing::naive_psnr(x, y)));
    ssim_err = std::max(ssim_err, std::abs(ssim(x, y) - hssc::testing::naive_ssim(x, y)));
  }
  const T x = random_tensor({3, 20, 20}, 5, 0, 1);
  const double self = ssim(x, x);
  T y = x;
  y.array() += 0.1;
  const double db = psnr(x, y).db;
  const bool pass = psnr_err <= 1e-8 && ssim_err <= 1e-8 && std::abs(self - 1.0) <= 1e-12 &&
                    std::abs(db - 20.0) <= 1e-9;
  return {pass, fmt("50 random pairs: max |PSNR - naive| %.1e dB, max |SSIM - naive| %.1e; ssim(x,x) = "
                    "%.15f; PSNR at MSE 0.01 = %.12f dB",
                    psnr_err, ssim_err, self, db)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},   {"lossless bottleneck", lossless},
      {"architecture fidelity", architecture}, {"variant equivalences", equivalences},
      {"controller fidelity", controller},   {"toy training", toy_training},
      {"rate targeting trend", rate_trend},  {"codec end-to-end", codec_end_to_end},
      {"metric oracles", metric_oracles}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << "criterion " << n << " " << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL")
              << " [" << fmt("%.1f", s) << " s] " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
