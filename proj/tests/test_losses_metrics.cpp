#include <gtest/gtest.h>

#include <cmath>

#include "csnorm/losses.hpp"
#include "csnorm/metrics.hpp"
#include "csnorm/spectral.hpp"
#include "test_util.hpp"

using namespace csnorm;
using testutil::random_tensor;

namespace {

Tensor4 pattern(double scale, double wobble) {
  Tensor4 t({1, 3, 16, 16});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const double base = 0.5 + 0.4 * std::sin(0.7 * y + 1.3 * x + c);
        t.at(0, c, y, x) = scale * base + wobble * std::cos(0.5 * x * y / 7.0 + c);
      }
  return t;
}

}  // namespace

TEST(Psnr, HandValues) {
  EXPECT_NEAR(psnr(Tensor4({1, 3, 4, 4}, 0.0), Tensor4({1, 3, 4, 4}, 0.1)), 20.0, 1e-9);
  EXPECT_NEAR(psnr(Tensor4({1, 1, 2, 2}, 0.5), Tensor4({1, 1, 2, 2}, 0.51)), 40.0, 1e-9);
  // peak 255 with an error of 1 level: 20 log10(255)
  EXPECT_NEAR(psnr(Tensor4({1, 1, 1, 1}, 10.0), Tensor4({1, 1, 1, 1}, 11.0), 255.0), 20.0 * std::log10(255.0),
              1e-9);
}

TEST(Psnr, IdenticalImagesHitTheCap) {
  const Tensor4 a = random_tensor({1, 3, 5, 5}, 1, 0.0, 1.0);
  EXPECT_EQ(psnr(a, a), kPsnrCapDb);
}

TEST(Psnr, Errors) {
  EXPECT_THROW(psnr(Tensor4({1, 1, 2, 2}), Tensor4({1, 1, 2, 3})), ShapeError);
  EXPECT_THROW(psnr(Tensor4({1, 1, 2, 2}), Tensor4({1, 1, 2, 2}), 0.0), std::invalid_argument);
}

TEST(Ssim, MatchesReferenceImplementation) {
  // Golden value from scikit-image structural_similarity with gaussian
  // weights, sigma 1.5, population covariance, data range 1.
  EXPECT_NEAR(ssim(pattern(1.0, 0.0), pattern(0.8, 0.1)), 0.9055446200841946, 1e-9);
}

TEST(Ssim, IdenticalIsOneAndSymmetric) {
  const Tensor4 a = random_tensor({2, 3, 12, 13}, 2, 0.0, 1.0);
  const Tensor4 b = random_tensor({2, 3, 12, 13}, 3, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 0.5);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
  EXPECT_THROW(ssim(Tensor4({1, 3, 10, 16}), Tensor4({1, 3, 10, 16})), ShapeError);
}

TEST(Losses, StepOneIsPixelMse) {
  const Tensor4 p({1, 1, 1, 4}, std::vector<double>{0, 1, 2, 3});
  const Tensor4 g({1, 1, 1, 4}, std::vector<double>{1, 1, 1, 1});
  const LossBreakdown l = loss_step1(p, g);
  EXPECT_DOUBLE_EQ(l.pixel, (1.0 + 0.0 + 1.0 + 4.0) / 4.0);
  EXPECT_DOUBLE_EQ(l.total, l.pixel);
  EXPECT_EQ(l.amplitude, 0.0);
}

TEST(Losses, StepTwoAddsWeightedAmplitudeTerm) {
  const Tensor4 p = random_tensor({2, 3, 6, 6}, 4, 0.0, 1.0);
  const Tensor4 g = random_tensor({2, 3, 6, 6}, 5, 0.0, 1.0);
  const LossBreakdown l0 = loss_step2(p, g, 0.0);
  const LossBreakdown l1 = loss_step2(p, g, 0.25);
  EXPECT_DOUBLE_EQ(l0.total, loss_step1(p, g).pixel);
  EXPECT_GT(l1.amplitude, 0.0);
  EXPECT_NEAR(l1.total, l1.pixel + 0.25 * l1.amplitude, 1e-12);
  Tape t;
  EXPECT_DOUBLE_EQ(l1.amplitude, t.value(amplitude_l2(t, t.constant(p), t.constant(g)))[0]);
  EXPECT_THROW(loss_step2(p, g, -1.0), std::invalid_argument);
}

TEST(Losses, BrightnessOnlyErrorIsMostlyAmplitude) {
  // A constant offset moves only the DC bin.
  Tensor4 g = random_tensor({1, 1, 8, 8}, 6, 0.2, 0.8);
  Tensor4 p = g;
  for (double& v : p.data()) v += 0.1;
  const LossBreakdown l = loss_step2(p, g, 1.0);
  EXPECT_NEAR(l.pixel, 0.01, 1e-12);
  // DC difference is 64 * 0.1 = 6.4, averaged over 64 bins
  EXPECT_NEAR(l.amplitude, 6.4 * 6.4 / 64.0, 1e-9);
}
