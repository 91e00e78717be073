#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "csnorm/autodiff.hpp"
#include "csnorm/ops.hpp"
#include "csnorm/tensor.hpp"
#include "test_util.hpp"

using namespace csnorm;
using testutil::random_tensor;

namespace {

// Direct seven-loop cross-correlation, written independently of ops.cpp.
Tensor4 naive_conv(const Tensor4& x, const Tensor4& k, int stride, int pad) {
  const Shape xs = x.shape(), ks = k.shape();
  const std::size_t oh = (xs.h + 2 * pad - ks.h) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pad - ks.w) / stride + 1;
  Tensor4 y({xs.n, ks.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ks.n; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t a = 0; a < ks.h; ++a)
              for (std::size_t b = 0; b < ks.w; ++b) {
                const long r = static_cast<long>(i * stride + a) - pad;
                const long c = static_cast<long>(j * stride + b) - pad;
                if (r < 0 || c < 0 || r >= static_cast<long>(xs.h) || c >= static_cast<long>(xs.w)) continue;
                acc += x.at(n, ci, r, c) * k.at(co, ci, a, b);
              }
          y.at(n, co, i, j) = acc;
        }
  return y;
}

}  // namespace

struct ConvCase {
  Shape x, k;
  int stride, pad;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, MatchesNaiveLoop) {
  const auto& c = GetParam();
  const Tensor4 x = random_tensor(c.x, 1), k = random_tensor(c.k, 2);
  Tape t;
  const Tensor4 y = t.value(conv2d(t, t.constant(x), t.constant(k), c.stride, c.pad));
  const Tensor4 ref = naive_conv(x, k, c.stride, c.pad);
  ASSERT_EQ(y.shape(), ref.shape());
  EXPECT_LT(testutil::max_abs_diff(y, ref), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle,
                         ::testing::Values(ConvCase{{1, 1, 5, 5}, {1, 1, 3, 3}, 1, 0},
                                           ConvCase{{2, 3, 6, 7}, {4, 3, 3, 3}, 1, 1},
                                           ConvCase{{1, 2, 8, 8}, {3, 2, 3, 3}, 2, 1},
                                           ConvCase{{1, 2, 7, 5}, {2, 2, 1, 1}, 1, 0},
                                           ConvCase{{2, 1, 4, 4}, {1, 1, 3, 3}, 3, 2}));

TEST(Conv2d, RejectsChannelMismatchAndBadStride) {
  Tape t;
  const Value x = t.constant(Tensor4({1, 2, 4, 4}));
  EXPECT_THROW(conv2d(t, x, t.constant(Tensor4({1, 3, 3, 3})), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(t, x, t.constant(Tensor4({1, 2, 3, 3})), 0, 1), ShapeError);
  EXPECT_THROW(conv2d(t, x, t.constant(Tensor4({1, 2, 7, 7})), 1, 0), ShapeError);
}

TEST(Tape, BackwardAccumulatesIntoParameters) {
  Tensor4 a({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tape t;
  const Value va = t.parameter(a);
  // loss = sum(a * a) + sum(a)  ->  grad = 2a + 1
  const Value loss = add(t, sum(t, mul(t, va, va)), sum(t, va));
  t.backward(loss);
  const std::vector<double> expect{3, 5, 7, 9};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(a.grad()[i], expect[i]);
}

TEST(Tape, NonScalarLossThrows) {
  Tensor4 a({1, 1, 2, 2}, 1.0);
  Tape t;
  const Value v = t.parameter(a);
  EXPECT_THROW(t.backward(relu(t, v)), ShapeError);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Value c = t.constant(Tensor4({1, 1, 1, 1}, 2.0));
  EXPECT_FALSE(t.requires_grad(mul_scalar(t, c, 3.0)));
}

TEST(Ops, BroadcastReplicatesSizeOneDims) {
  Tape t;
  const Tensor4 a({1, 2, 1, 1}, std::vector<double>{5, 7});
  const Tensor4 b = t.value(broadcast_to(t, t.constant(a), {2, 2, 3, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 3; ++w) {
        EXPECT_EQ(b.at(n, 0, h, w), 5.0);
        EXPECT_EQ(b.at(n, 1, h, w), 7.0);
      }
  EXPECT_THROW(broadcast_to(t, t.constant(Tensor4({1, 3, 1, 1})), {1, 2, 1, 1}), ShapeError);
}

TEST(Ops, DenseMatchesHandComputation) {
  Tape t;
  const Tensor4 x({1, 2, 1, 1}, std::vector<double>{1, -2});
  const Tensor4 w({3, 2, 1, 1}, std::vector<double>{1, 0, 0, 1, 2, 3});
  const Tensor4 b({1, 3, 1, 1}, std::vector<double>{0.5, 0, -1});
  const Tensor4 y = t.value(dense(t, t.constant(x), t.constant(w), t.constant(b)));
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], -2.0);
  EXPECT_DOUBLE_EQ(y[2], -5.0);
}

TEST(Ops, ChannelStatsAreBiasedMoments) {
  Tape t;
  const Tensor4 x({1, 1, 1, 4}, std::vector<double>{1, 2, 3, 6});
  const auto [m, v] = channel_stats(t, t.constant(x));
  EXPECT_DOUBLE_EQ(t.value(m)[0], 3.0);
  EXPECT_DOUBLE_EQ(t.value(v)[0], (4.0 + 1.0 + 0.0 + 9.0) / 4.0);
}

TEST(Ops, InitUniformRespectsFanInBound) {
  Rng rng(3, 0);
  const Tensor4 w = init_uniform_fan_in({8, 4, 3, 3}, rng);
  const double bound = 1.0 / std::sqrt(36.0);
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(T4F, RoundTripIsBitExact) {
  const Tensor4 a = random_tensor({2, 3, 4, 5}, 9, -1e6, 1e6);
  std::stringstream ss;
  write_t4f(ss, a);
  EXPECT_EQ(ss.str().size(), 4u + 16u + a.size() * 8u);
  EXPECT_TRUE(read_t4f(ss).bit_equal(a));
}

TEST(T4F, TruncationAndBadMagicAreFormatErrors) {
  const Tensor4 a = random_tensor({1, 2, 3, 3}, 4);
  std::stringstream ss;
  write_t4f(ss, a);
  const std::string bytes = ss.str();
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() - 1}) {
    std::istringstream is(bytes.substr(0, cut));
    EXPECT_THROW(read_t4f(is), FormatError) << "cut at " << cut;
  }
  std::istringstream bad("XXXX" + bytes.substr(4));
  EXPECT_THROW(read_t4f(bad), FormatError);
}

TEST(Tensor, StackAndInstanceAreInverse) {
  const Tensor4 a = random_tensor({1, 3, 2, 2}, 5), b = random_tensor({1, 3, 2, 2}, 6);
  const std::vector<Tensor4> items{a, b};
  const Tensor4 s = stack(items);
  EXPECT_EQ(s.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_TRUE(s.instance(0).bit_equal(a));
  EXPECT_TRUE(s.instance(1).bit_equal(b));
}

TEST(Tensor, RequireFiniteNamesTheTensor) {
  Tensor4 a({1, 1, 1, 2}, std::vector<double>{1.0, std::nan("")});
  try {
    a.require_finite("probe");
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("probe"), std::string::npos);
  }
}
