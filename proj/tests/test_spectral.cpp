#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "csnorm/spectral.hpp"
#include "test_util.hpp"

using namespace csnorm;
using testutil::random_tensor;

namespace {

// O(H^2 W^2) textbook DFT with std::complex and freshly computed twiddles.
std::vector<std::complex<double>> naive_dft(const Tensor4& img, std::size_t c) {
  const std::size_t h = img.shape().h, w = img.shape().w;
  std::vector<std::complex<double>> out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double ang = -2.0 * std::numbers::pi * (double(u * y) / h + double(v * x) / w);
          acc += img.at(0, c, y, x) * std::polar(1.0, ang);
        }
      out[u * w + v] = acc;
    }
  return out;
}

}  // namespace

class DftOracle : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(DftOracle, MatchesNaiveTransform) {
  const auto [h, w] = GetParam();
  const Tensor4 img = random_tensor({1, 3, h, w}, h * 31 + w, 0.0, 1.0);
  const Spectrum s = dft2d(img);
  ASSERT_EQ(s.size(), 3 * h * w);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto ref = naive_dft(img, c);
    for (std::size_t i = 0; i < h * w; ++i) {
      EXPECT_NEAR(s.re[c * h * w + i], ref[i].real(), 1e-10);
      EXPECT_NEAR(s.im[c * h * w + i], ref[i].imag(), 1e-10);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(SmallSizes, DftOracle,
                         ::testing::Values(std::pair<std::size_t, std::size_t>{1, 1}, std::pair<std::size_t, std::size_t>{2, 3},
                                           std::pair<std::size_t, std::size_t>{4, 4}, std::pair<std::size_t, std::size_t>{5, 8},
                                           std::pair<std::size_t, std::size_t>{7, 6}, std::pair<std::size_t, std::size_t>{8, 8}));

TEST(Spectral, RoundTrip) {
  for (std::size_t n : {3u, 8u, 16u, 21u}) {
    const Tensor4 img = random_tensor({1, 3, n, n + 1}, n, 0.0, 1.0);
    double imag = 1.0;
    const Tensor4 back = idft2d(dft2d(img), &imag);
    EXPECT_LT(testutil::max_abs_diff(back, img), 1e-9);
    EXPECT_LT(imag, 1e-9);
  }
}

TEST(Spectral, Parseval) {
  const Tensor4 img = random_tensor({1, 3, 12, 10}, 44, 0.0, 1.0);
  const Spectrum s = dft2d(img);
  double spatial = 0.0, freq = 0.0;
  for (double v : img.data()) spatial += v * v;
  for (double a : s.amplitudes()) freq += a * a;
  freq /= 12.0 * 10.0;
  EXPECT_NEAR(freq / spatial, 1.0, 1e-9);
}

TEST(Spectral, DcBinIsPixelSum) {
  const Tensor4 img = random_tensor({1, 1, 6, 6}, 45, 0.0, 1.0);
  double total = 0.0;
  for (double v : img.data()) total += v;
  const Spectrum s = dft2d(img);
  EXPECT_NEAR(s.re[0], total, 1e-12);
  EXPECT_NEAR(s.im[0], 0.0, 1e-12);
}

TEST(Spectral, PolarRoundTrip) {
  const Spectrum s = dft2d(random_tensor({1, 2, 5, 7}, 46));
  const Spectrum back = from_polar(to_polar(s));
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(back.re[i], s.re[i], 1e-12);
    EXPECT_NEAR(back.im[i], s.im[i], 1e-12);
  }
}

TEST(AmpInterp, LambdaOneReproducesLowImage) {
  const Tensor4 low = random_tensor({1, 3, 9, 9}, 47, 0.0, 0.4);
  const Tensor4 norm = random_tensor({1, 3, 9, 9}, 48, 0.0, 1.0);
  EXPECT_LT(testutil::max_abs_diff(perturb_lightness(low, norm, 1.0, false), low), 1e-9);
  EXPECT_LT(testutil::max_abs_diff(perturb_lightness(low, norm, 1.0, true), low), 1e-9);
}

TEST(AmpInterp, PhaseIsCarriedBitExact) {
  const Tensor4 low = random_tensor({1, 3, 8, 8}, 49, 0.0, 0.4);
  const Tensor4 norm = random_tensor({1, 3, 8, 8}, 50, 0.0, 1.0);
  const Spectrum sl = dft2d(low), sn = dft2d(norm);
  const PolarSpectrum ref = to_polar(sl);
  for (double lambda : {0.0, 0.3, 0.5, 1.0}) {
    const PolarSpectrum p = amp_interp(sl, sn, lambda);
    ASSERT_EQ(p.phase.size(), ref.phase.size());
    for (std::size_t i = 0; i < p.phase.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(p.phase[i]), std::bit_cast<std::uint64_t>(ref.phase[i]));
    }
  }
}

TEST(AmpInterp, AmplitudeIsLinearInLambda) {
  const Spectrum sl = dft2d(random_tensor({1, 3, 6, 6}, 51, 0.0, 0.4));
  const Spectrum sn = dft2d(random_tensor({1, 3, 6, 6}, 52, 0.0, 1.0));
  const auto al = sl.amplitudes(), an = sn.amplitudes();
  for (double lambda : {0.0, 0.25, 0.8}) {
    const PolarSpectrum p = amp_interp(sl, sn, lambda);
    for (std::size_t i = 0; i < al.size(); ++i) {
      EXPECT_NEAR(p.amplitude[i], lambda * al[i] + (1 - lambda) * an[i], 1e-12);
    }
  }
}

TEST(AmpInterp, LambdaZeroTakesNormAmplitudeKeepsStructure) {
  // A uniform brightening of a constant image only changes the DC amplitude.
  const Tensor4 low({1, 1, 4, 4}, 0.1);
  const Tensor4 norm({1, 1, 4, 4}, 0.6);
  const Tensor4 out = perturb_lightness(low, norm, 0.0);
  for (double v : out.data()) EXPECT_NEAR(v, 0.6, 1e-12);
}

TEST(AmpInterp, OutputIsClampedByDefault) {
  const Tensor4 low = random_tensor({1, 3, 8, 8}, 53, 0.0, 0.2);
  const Tensor4 norm = random_tensor({1, 3, 8, 8}, 54, 0.5, 1.0);
  for (double v : perturb_lightness(low, norm, 0.3).data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(AmpInterp, Errors) {
  const Spectrum a = dft2d(Tensor4({1, 3, 4, 4}, 0.1));
  const Spectrum b = dft2d(Tensor4({1, 3, 4, 5}, 0.1));
  EXPECT_THROW(amp_interp(a, a, -0.1), std::invalid_argument);
  EXPECT_THROW(amp_interp(a, a, 1.5), std::invalid_argument);
  EXPECT_THROW(amp_interp(a, b, 0.5), ShapeError);
}

TEST(AmplitudeL2, MatchesNaiveAmplitudes) {
  const Tensor4 a = random_tensor({2, 3, 5, 4}, 55, 0.0, 1.0);
  const Tensor4 b = random_tensor({2, 3, 5, 4}, 56, 0.0, 1.0);
  double ref = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    const Tensor4 ai = a.instance(n), bi = b.instance(n);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto fa = naive_dft(ai, c), fb = naive_dft(bi, c);
      for (std::size_t i = 0; i < fa.size(); ++i) {
        const double d = std::abs(fa[i]) - std::abs(fb[i]);
        ref += d * d;
      }
    }
  }
  ref /= static_cast<double>(a.size());
  Tape t;
  const double got = t.value(amplitude_l2(t, t.constant(a), t.constant(b)))[0];
  EXPECT_NEAR(got, ref, 1e-10 * std::max(1.0, ref));
  Tape t2;
  EXPECT_EQ(t2.value(amplitude_l2(t2, t2.constant(a), t2.constant(a)))[0], 0.0);
}

TEST(AmplitudeL2, InvariantToCircularShift) {
  // Amplitude spectra ignore translation, so a rolled copy costs nothing.
  const Tensor4 a = random_tensor({1, 1, 6, 6}, 57, 0.0, 1.0);
  Tensor4 b(a.shape());
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) b.at(0, 0, (y + 2) % 6, (x + 1) % 6) = a.at(0, 0, y, x);
  Tape t;
  EXPECT_LT(t.value(amplitude_l2(t, t.constant(a), t.constant(b)))[0], 1e-20);
}
