#include <cmath>

#include <gtest/gtest.h>

#include "hssc/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace hssc {
namespace {

using T = Tensor<double>;
using testing::random_tensor;

T noisy_copy(const T& x, double amplitude, std::uint64_t seed) {
  T y = x + random_tensor(x.shape(), seed, -amplitude, amplitude);
  for (Index i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i], 0.0, 1.0);
  return y;
}

TEST(Psnr, KnownMseGivesTwentyDb) {
  const T x(Shape{2, 4, 4});
  T y = x;
  y.array() += 0.1;  // MSE 0.01
  const Psnr p = psnr(x, y);
  EXPECT_NEAR(p.db, 20.0, 1e-12);
  EXPECT_FALSE(p.exact);
}

TEST(Psnr, IdenticalImagesHitTheCap) {
  const T x = random_tensor({3, 8, 8}, 1, 0, 1);
  const Psnr p = psnr(x, x);
  EXPECT_TRUE(p.exact);
  EXPECT_EQ(p.db, kPsnrCap);
}

TEST(Psnr, MatchesNaiveAndDecreasesWithNoise) {
  const T x = random_tensor({3, 16, 16}, 2, 0, 1);
  double prev = kPsnrCap;
  for (double amp : {0.01, 0.05, 0.1, 0.3}) {
    const T y = noisy_copy(x, amp, 10);
    const double db = psnr(x, y).db;
    EXPECT_NEAR(db, testing::naive_psnr(x, y), 1e-8);
    EXPECT_LT(db, prev);
    prev = db;
  }
}

TEST(Ssim, SelfSimilarityIsOne) {
  const T x = random_tensor({4, 16, 20}, 3, 0, 1);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-14);
}

TEST(Ssim, MatchesNaiveWindowedReference) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const T x = random_tensor({2, 14 + Index(s % 3), 12 + Index(s % 5)}, 100 + s, 0, 1);
    const T y = noisy_copy(x, 0.05 + 0.05 * double(s), 200 + s);
    EXPECT_NEAR(ssim(x, y), testing::naive_ssim(x, y), 1e-8) << "seed " << s;
  }
}

TEST(Ssim, SmallerThanWindowThrows) {
  const T x(Shape{1, 10, 20});
  EXPECT_THROW(ssim(x, x), ShapeError);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const T x = random_tensor({2, 13, 14}, 300 + s, 0, 1);
    Parameter<double> y("y", noisy_copy(x, 0.2, 400 + s));
    auto loss = [&] { return ssim(x, y.value); };
    auto loss_and_grad = [&] {
      T g;
      ssim_with_grad(x, y.value, g);
      y.grad.data() += g.data();
    };
    GradCheckOptions o;
    o.seed = s;
    const auto r = grad_check(loss, loss_and_grad, {&y}, o);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.summary();
  }
}

TEST(GaussianWindow, NormalizedAndSymmetric) {
  const auto g = gaussian_window(11, 1.5);
  EXPECT_NEAR(g.sum(), 1.0, 1e-15);
  for (Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g[i], g[10 - i]);
  EXPECT_GT(g[5], g[4]);
}

}  // namespace
}  // namespace hssc
