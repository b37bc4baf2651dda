#include <cmath>

#include <gtest/gtest.h>

#include "hssc/bottleneck.hpp"
#include "hssc/entropy_model.hpp"
#include "hssc/quantize.hpp"
#include "test_util.hpp"

namespace hssc {
namespace {

using T = Tensor<double>;
using testing::random_tensor;

TEST(Quantize, RoundsHalfAwayFromZero) {
  const auto q = quantize(T({4}, {2.4, -2.5, 2.5, -0.4}), QuantMode::inference, 64);
  EXPECT_EQ(q.values[0], 2.0);
  EXPECT_EQ(q.values[1], -3.0);
  EXPECT_EQ(q.values[2], 3.0);
  EXPECT_EQ(q.values[3], 0.0);
  EXPECT_EQ(q.saturated, 0);
}

TEST(Quantize, ClampsAndCountsSaturation) {
  const auto q = quantize(T({3}, {70.2, -64.4, -99.0}), QuantMode::train, 64);
  EXPECT_EQ(q.values[0], 64.0);
  EXPECT_EQ(q.values[1], -64.0);
  EXPECT_EQ(q.values[2], -64.0);
  EXPECT_EQ(q.saturated, 2);
}

TEST(Quantize, OffsetShiftsTheGrid) {
  const auto q = quantize(T({2}, {1.2, -0.1}), QuantMode::inference, 64, 0.25);
  EXPECT_EQ(q.values[0], 1.25);
  EXPECT_EQ(q.values[1], 0.25);
  EXPECT_EQ(to_symbols(q.values, 0.25), (std::vector<int>{1, 0}));
}

TEST(Quantize, IdentityModeKeepsValues) {
  const T y = random_tensor({5}, 1, -3, 3);
  EXPECT_EQ(max_abs_diff(quantize(y, QuantMode::identity, 64).values, y), 0.0);
}

DiscreteModel two_symbol_uniform() {
  DiscreteModel m;
  m.support = 1;
  m.add_table({0.5, 0.5, 0.0});
  return m;
}

TEST(Rate, UniformOverTwoSymbolsIsOneBitEach) {
  const DiscreteModel m = two_symbol_uniform();
  LatentCode code;
  code.shape = {1, 10, 10};
  code.model_ids = {0};
  CounterRng rng(1);
  for (int i = 0; i < 100; ++i) code.symbols.push_back(static_cast<int>(rng.uniform_index(2)) - 1);
  EXPECT_DOUBLE_EQ(rate(m, code), 100.0);
  const auto bytes = ae_encode(m, code);
  LatentCode back = code;
  back.symbols.clear();
  ad_decode(m, bytes, back);
  EXPECT_EQ(back.symbols, code.symbols);
}

TEST(Rate, CertainSymbolCostsAlmostNothing) {
  DiscreteModel m;
  m.support = 64;
  std::vector<double> p(129, 0.0);
  p[64] = 1.0;
  for (double& v : p) v = floor_probability(v, 129);
  m.add_table(p);
  LatentCode code;
  code.shape = {1, 1, 1000};
  code.model_ids = {0};
  code.symbols.assign(1000, 0);
  const double bound = 1000 * -std::log2(1.0 - std::pow(2.0, 15) * kProbabilityFloor);
  EXPECT_LE(rate(m, code), bound);
  EXPECT_LT(rate(m, code), 3.0);
}

TEST(Rate, OutOfSupportThrows) {
  const DiscreteModel m = two_symbol_uniform();
  LatentCode code;
  code.shape = {1, 1, 1};
  code.model_ids = {0};
  code.symbols = {2};
  EXPECT_THROW(rate(m, code), std::out_of_range);
}

TEST(Rate, MatchesPerElementSummation) {
  FactorizedPrior<double> prior("P", 3, 8, 5);
  const DiscreteModel m = prior.freeze();
  LatentCode code;
  code.shape = {3, 4, 4};
  code.model_ids = {0, 1, 2};
  CounterRng rng(2);
  double oracle = 0.0;
  for (int i = 0; i < 48; ++i) {
    const int s = static_cast<int>(rng.uniform_index(17)) - 8;
    code.symbols.push_back(s);
    const int c = i / 16;
    const double q = prior.cdf(c, s + 0.5 >= 8 ? 1e9 : s + 0.5) -
                     prior.cdf(c, s - 0.5 <= -8 ? -1e9 : s - 0.5);
    oracle += -std::log2(kProbabilityFloor + (1 - 17 * kProbabilityFloor) * q);
  }
  EXPECT_NEAR(rate(m, code), oracle, 1e-9);
}

TEST(FactorizedPrior, PmfNormalizedAndCdfMonotone) {
  FactorizedPrior<double> prior("P", 4, 64, 3);
  CounterRng rng(4);
  for (auto& f : prior.factors) f.value = T::uniform(f.value.shape(), rng, -2, 2);
  for (auto& m : prior.matrices) m.value = T::uniform(m.value.shape(), rng, -1, 1);
  for (Index c = 0; c < 4; ++c) {
    const auto p = prior.pmf(c);
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, kProbabilityFloor);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    double prev = prior.cdf(c, -64.5);
    for (double x = -64.5; x <= 64.5; x += 0.25) {
      const double v = prior.cdf(c, x);
      EXPECT_GE(v - prev, 0.0);
      prev = v;
    }
  }
}

TEST(FactorizedPrior, RateLossEqualsRateOnIntegers) {
  FactorizedPrior<double> prior("P", 2, 64, 9);
  T y({2, 3, 3});
  CounterRng rng(5);
  LatentCode code;
  code.shape = y.shape();
  code.model_ids = {0, 1};
  for (Index i = 0; i < y.size(); ++i) {
    const int s = static_cast<int>(rng.uniform_index(11)) - 5;
    y[i] = s;
    code.symbols.push_back(s);
  }
  y[0] = 64;
  code.symbols[0] = 64;
  y[1] = -64;
  code.symbols[1] = -64;
  EXPECT_NEAR(prior.rate_loss(y), rate(prior.freeze(), code), 1e-9);
}

TEST(FactorizedPrior, RateLossGradCheck) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    FactorizedPrior<double> prior("P", 2, 16, seed);
    CounterRng rng(seed + 10);
    for (auto& f : prior.factors) f.value = T::uniform(f.value.shape(), rng, -1, 1);
    Parameter<double> y("y", random_tensor({2, 3, 2}, seed, -4, 4));
    ParamList<double> params;
    prior.collect(params);
    params.push_back(&y);
    auto loss = [&] { return prior.rate_loss(y.value); };
    auto loss_and_grad = [&] {
      prior.rate_loss(y.value);
      y.grad.data() += prior.rate_backward(1.0).data();
    };
    GradCheckOptions opt;
    opt.seed = seed;
    const auto r = grad_check(loss, loss_and_grad, params, opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.summary();
  }
}

TEST(FactorizedPrior, WiderModelCostsMoreOnNarrowSymbols) {
  // Symbols drawn from the narrow model cost more under a wider density.
  FactorizedPrior<double> narrow("P", 1, 64, 1), wide("P", 1, 64, 1);
  for (auto& m : narrow.matrices) m.value.array() += 1.0;
  for (auto& m : wide.matrices) m.value.array() -= 1.0;
  const auto p = narrow.pmf(0);
  CounterRng rng(8);
  T y({1, 1, 2000});
  for (Index i = 0; i < y.size(); ++i) {
    double u = rng.uniform(), acc = 0.0;
    int s = 0;
    for (; s < 128; ++s) {
      acc += p[static_cast<std::size_t>(s)];
      if (u < acc) break;
    }
    y[i] = s - 64;
  }
  EXPECT_GT(wide.rate_loss(y), narrow.rate_loss(y));
}

TEST(GaussianConditional, TablesNormalizedAndBitsDerivatives) {
  const GaussianConditional g(16);
  for (const auto& p : g.model.pmf) {
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  for (double y : {-3.0, -0.7, 0.4, 2.0, 15.6}) {
    for (double s : {0.3, 1.0, 4.0}) {
      double dy = 0, ds = 0;
      g.bits(y, s, &dy, &ds);
      const double e = 1e-6;
      const double ny = (g.bits(y + e, s, nullptr, nullptr) - g.bits(y - e, s, nullptr, nullptr)) / (2 * e);
      const double ns = (g.bits(y, s + e, nullptr, nullptr) - g.bits(y, s - e, nullptr, nullptr)) / (2 * e);
      EXPECT_NEAR(dy, ny, 1e-5 * std::max(1.0, std::abs(ny)));
      EXPECT_NEAR(ds, ns, 1e-5 * std::max(1.0, std::abs(ns)));
    }
  }
  EXPECT_EQ(g.scale_index(0.01), 0);
  EXPECT_EQ(g.scale_index(1e6), GaussianConditional::kScaleCount - 1);
}

class BottleneckTest : public ::testing::TestWithParam<EntropyModelKind> {};

TEST_P(BottleneckTest, CompressRoundTripIsSymbolExact) {
  EntropyBottleneck<double> b(4, GetParam(), 64, 3);
  const T y = random_tensor({4, 3, 5}, 7, -20, 20);
  for (double offset : {0.0, 0.3}) {
    const EncodedLatent enc = b.compress(y, offset);
    const T y_hat = b.decompress(enc.shape, offset, enc.payload,
                                 enc.side ? std::optional<std::span<const std::uint8_t>>(*enc.side)
                                          : std::nullopt);
    const auto q = quantize(y, QuantMode::inference, 64, offset);
    EXPECT_EQ(max_abs_diff(y_hat, q.values), 0.0);
    EXPECT_EQ(b.compress(y, offset).payload, enc.payload);
  }
}

TEST_P(BottleneckTest, SteGradientMatchesIdentityOracle) {
  // With identity quantization the pipeline is smooth and finite differences
  // apply; the STE backward must then give the same gradient at integral y.
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    EntropyBottleneck<double> b(2, GetParam(), 16, seed);
    Parameter<double> y("y", random_tensor({2, 4, 3}, seed, -3, 3));
    const T probe = random_tensor({2, 4, 3}, seed + 1);
    ParamList<double> params;
    b.collect(params);
    params.push_back(&y);
    auto loss = [&] {
      const auto out = b.forward(y.value, QuantMode::identity);
      return dot(out.y_hat, probe) + 0.5 * out.bits;
    };
    auto loss_and_grad = [&] {
      b.forward(y.value, QuantMode::identity);
      y.grad.data() += b.backward(probe, 0.5).data();
    };
    GradCheckOptions opt;
    opt.seed = seed;
    const auto r = grad_check(loss, loss_and_grad, params, opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.summary();

    // STE at integral inputs reproduces the identity-mode gradient.
    T yi = y.value;
    yi.array() = yi.array().round();
    b.forward(yi, QuantMode::identity);
    const T g_identity = b.backward(probe, 0.5);
    T shifted = yi;
    shifted.array() += 0.2;
    const auto out = b.forward(shifted, QuantMode::train);
    EXPECT_EQ(max_abs_diff(out.y_hat, yi), 0.0);
    if (GetParam() == EntropyModelKind::factorized) {
      EXPECT_LT(max_abs_diff(b.backward(probe, 0.5), g_identity), 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, BottleneckTest,
                         ::testing::Values(EntropyModelKind::factorized,
                                           EntropyModelKind::hyperprior));

}  // namespace
}  // namespace hssc
