#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "csnorm/csnorm_layer.hpp"
#include "csnorm/ops.hpp"
#include "test_util.hpp"

using namespace csnorm;
using testutil::random_tensor;

namespace {

Tensor4 alphas(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor4({1, n, 1, 1}, std::move(v));
}

CSNormLayer make_layer(std::size_t c, std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed, 5);
  return CSNormLayer(c, hidden, kGateEps, rng);
}

}  // namespace

TEST(GateFunction, ZeroIsExactlyClosed) {
  const Tensor4 g = gate_values(alphas({0.0, -0.0}), kGateEps);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(GateFunction, HalfWhenAlphaSquaredEqualsEpsilon) {
  for (double a : {0.01, 0.3, 2.0, 1e-3}) {
    const double eps = a * a;
    EXPECT_NEAR(gate_values(alphas({a}), eps)[0], 0.5, 1e-12) << "alpha " << a;
  }
}

TEST(GateFunction, UnitAlphaAtDefaultEpsilon) {
  EXPECT_NEAR(gate_values(alphas({1.0}), 1e-4)[0], 1.0 / (1.0 + 1e-4), 1e-6);
}

TEST(GateFunction, EvenMonotoneAndBelowOne) {
  Rng rng(11, 0);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-3.0, 3.0);
    const double b = std::abs(a) * rng.uniform(1.0, 2.0);
    const Tensor4 g = gate_values(alphas({a, -a, b}), kGateEps);
    EXPECT_EQ(g[0], g[1]);
    EXPECT_GE(g[0], 0.0);
    EXPECT_LT(g[0], 1.0);
    EXPECT_LE(g[0], g[2]);
  }
}

TEST(GateFunction, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(gate_values(alphas({1.0}), 0.0), NumericError);
}

TEST(CSNormMix, ClosedGateIsBitIdentity) {
  CSNormLayer layer = make_layer(4, 8, 1);
  Tensor4 x = random_tensor({2, 4, 5, 5}, 3);
  x[0] = -0.0;
  Tape t;
  const CSNormBinding b = bind(t, layer, false);
  const Value out = csnorm_mix(t, t.constant(x), b, t.constant(Tensor4({2, 4, 1, 1}, 0.0)));
  EXPECT_TRUE(t.value(out).bit_equal(x));
  EXPECT_TRUE(std::signbit(t.value(out)[0]));
}

TEST(CSNormMix, OpenGateIsBitInstanceNorm) {
  CSNormLayer layer = make_layer(4, 8, 1);
  for (double& v : layer.gamma.data()) v = 1.7;
  for (double& v : layer.beta.data()) v = -0.2;
  const Tensor4 x = random_tensor({2, 4, 5, 5}, 4);
  Tape t;
  const CSNormBinding b = bind(t, layer, false);
  const Value xv = t.constant(x);
  const Value mixed = csnorm_mix(t, xv, b, t.constant(Tensor4({2, 4, 1, 1}, 1.0)));
  const Value in = instance_norm(t, xv, b.gamma, b.beta);
  EXPECT_TRUE(t.value(mixed).bit_equal(t.value(in)));
}

TEST(CSNormMix, ForcedModesMatchDegenerateGates) {
  CSNormLayer layer = make_layer(3, 6, 2);
  const Tensor4 x = random_tensor({1, 3, 4, 4}, 5);
  {
    layer.mode = GateMode::forced_off;
    Tape t;
    const Value out = csnorm_forward(t, t.constant(x), layer, bind(t, layer, false));
    EXPECT_TRUE(t.value(out).bit_equal(x));
  }
  {
    layer.mode = GateMode::forced_on;
    Tape t;
    const CSNormBinding b = bind(t, layer, false);
    const Value xv = t.constant(x);
    const Value out = csnorm_forward(t, xv, layer, b);
    EXPECT_TRUE(t.value(out).bit_equal(t.value(instance_norm(t, xv, b.gamma, b.beta))));
  }
}

TEST(CSNormMix, InteriorGateIsConvexBlend) {
  CSNormLayer layer = make_layer(2, 4, 3);
  const Tensor4 x = random_tensor({1, 2, 3, 3}, 6);
  Tape t;
  const CSNormBinding b = bind(t, layer, false);
  const Value xv = t.constant(x);
  const Tensor4 g({1, 2, 1, 1}, std::vector<double>{0.25, 0.75});
  const Tensor4 out = t.value(csnorm_mix(t, xv, b, t.constant(g)));
  const Tensor4 in = t.value(instance_norm(t, xv, b.gamma, b.beta));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double expect = (1 - g[c]) * x.at(0, c, i, j) + g[c] * in.at(0, c, i, j);
        EXPECT_NEAR(out.at(0, c, i, j), expect, 1e-15);
      }
}

TEST(InstanceNorm, StandardizesEveryInstanceChannel) {
  Rng rng(21, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const double scale = rng.uniform(0.1, 50.0);  // spatial variance >= 0.01 * 1/3
    const double shift = rng.uniform(-100.0, 100.0);
    Tensor4 x = random_tensor({3, 5, 7, 6}, 100 + trial, -std::sqrt(3.0), std::sqrt(3.0));
    for (double& v : x.data()) v = shift + scale * v;
    Tape t;
    const Tensor4 ones({1, 5, 1, 1}, 1.0), zeros({1, 5, 1, 1}, 0.0);
    const Tensor4 z = t.value(instance_norm(t, t.constant(x), t.constant(ones), t.constant(zeros)));
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t c = 0; c < 5; ++c) {
        double m = 0.0, v = 0.0, xm = 0.0, xv = 0.0;
        const auto plane = z.plane(n, c);
        const auto xp = x.plane(n, c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
          m += plane[i];
          xm += xp[i];
        }
        m /= plane.size();
        xm /= plane.size();
        for (std::size_t i = 0; i < plane.size(); ++i) {
          v += (plane[i] - m) * (plane[i] - m);
          xv += (xp[i] - xm) * (xp[i] - xm);
        }
        v /= plane.size();
        xv /= plane.size();
        ASSERT_GE(xv, 0.01);
        EXPECT_LT(std::abs(m), 1e-10);
        EXPECT_LT(std::abs(v - 1.0), 1e-3);
      }
  }
}

TEST(InstanceNorm, ConstantPlaneStaysFinite) {
  Tape t;
  const Tensor4 x({1, 1, 4, 4}, 3.0);
  const Tensor4 ones({1, 1, 1, 1}, 1.0), zeros({1, 1, 1, 1}, 0.0);
  const Tensor4 z = t.value(instance_norm(t, t.constant(x), t.constant(ones), t.constant(zeros)));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(InstanceNorm, BrightnessAffineShiftIsRemoved) {
  // a*x + b with a > 0 normalizes to (nearly) the same map as x.
  const Tensor4 x = random_tensor({1, 2, 6, 6}, 8);
  Tensor4 y = x;
  for (double& v : y.data()) v = 3.0 * v + 0.7;
  Tape t;
  const Tensor4 ones({1, 2, 1, 1}, 1.0), zeros({1, 2, 1, 1}, 0.0);
  const Tensor4 zx = t.value(instance_norm(t, t.constant(x), t.constant(ones), t.constant(zeros)));
  const Tensor4 zy = t.value(instance_norm(t, t.constant(y), t.constant(ones), t.constant(zeros)));
  EXPECT_LT(testutil::max_abs_diff(zx, zy), 1e-4);
}

TEST(ParamBudget, SixtyFourChannelsWithHidden128) {
  EXPECT_EQ(param_count(64, 128), 16704u);
  EXPECT_LE(std::abs(16704.0 - 16500.0) / 16500.0, 0.02);
}

TEST(ParamBudget, MatchesAllocatedTensors) {
  for (std::size_t c : {1u, 4u, 32u, 64u}) {
    CSNormLayer layer = make_layer(c, 2 * c, c);
    std::size_t total = 0;
    for (const auto& p : layer.parameters("")) total += p.tensor->size();
    EXPECT_EQ(total, param_count(c, 2 * c));
  }
}

TEST(ParamBudget, LinearInChannels) {
  // With hidden = 2C the MLP term is quadratic; with fixed hidden it is linear.
  const std::size_t h = 128;
  const std::size_t d1 = param_count(33, h) - param_count(32, h);
  const std::size_t d2 = param_count(65, h) - param_count(64, h);
  EXPECT_EQ(d1, d2);
}

TEST(Gates, RecomputedPerInstance) {
  CSNormLayer layer = make_layer(4, 8, 9);
  Tensor4 x = random_tensor({2, 4, 4, 4}, 10, 0.0, 1.0);
  for (std::size_t i = x.size() / 2; i < x.size(); ++i) x[i] *= 5.0;
  const auto rows = inspect_gates(x, layer);
  ASSERT_EQ(rows.size(), 8u);
  bool differs = false;
  for (std::size_t c = 0; c < 4; ++c) differs = differs || rows[c].g != rows[4 + c].g;
  EXPECT_TRUE(differs);
  for (const auto& r : rows) {
    EXPECT_EQ(r.selected, r.g > kSelectThreshold);
    EXPECT_DOUBLE_EQ(r.g, r.alpha * r.alpha / (r.alpha * r.alpha + kGateEps));
  }
}

TEST(Gates, CsvHeader) {
  std::ostringstream os;
  write_gate_csv(os, {GateReportRow{0, 1, 0.5, 0.9, true}});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "batch,channel,alpha,g,selected");
}

TEST(CSNormLayer, RejectsChannelMismatch) {
  CSNormLayer layer = make_layer(4, 8, 1);
  Tape t;
  EXPECT_THROW(csnorm_forward(t, t.constant(Tensor4({1, 3, 4, 4})), layer, bind(t, layer, false)), ShapeError);
}
