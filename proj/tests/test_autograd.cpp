#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ecpenet/autograd.h"
#include "test_support.h"

using namespace ecpenet;
using ecpenet::testing::random_tensor;

namespace {

// Direct nested-loop cross-correlation, written independently of im2col.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, bool replicate) {
  const Shape s = x.shape();
  const Shape k = w.shape();
  const std::int64_t r = k.h / 2;
  Tensor<double> out(Shape{s.n, k.n, s.h, s.w});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t o = 0; o < k.n; ++o)
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t xx = 0; xx < s.w; ++xx) {
          double acc = b.at(0, o, 0, 0);
          for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t i = 0; i < k.h; ++i)
              for (std::int64_t j = 0; j < k.w; ++j) {
                std::int64_t sy = y + i - r, sx = xx + j - r;
                if (replicate) {
                  sy = std::clamp<std::int64_t>(sy, 0, s.h - 1);
                  sx = std::clamp<std::int64_t>(sx, 0, s.w - 1);
                } else if (sy < 0 || sx < 0 || sy >= s.h || sx >= s.w) {
                  continue;
                }
                acc += w.at(o, c, i, j) * x.at(n, c, sy, sx);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Parameter<double> make_param(Tensor<double> v) {
  Parameter<double> p;
  p.name = "p";
  p.value = std::move(v);
  p.zero_grad();
  return p;
}

}  // namespace

class AutogradTest : public ::testing::Test {
 protected:
  Rng rng{1234};
};

TEST_F(AutogradTest, ConvMatchesNestedLoopOracle) {
  for (const int k : {1, 3, 5}) {
    const auto x = random_tensor({2, 3, 7, 5}, rng);
    const auto w = random_tensor({4, 3, k, k}, rng);
    const auto b = random_tensor({1, 4, 1, 1}, rng);
    EXPECT_LT(max_abs_diff(conv2d_forward(x, w, b, Padding::kEdgeReplicate), conv_oracle(x, w, b, true)), 1e-12);
    EXPECT_LT(max_abs_diff(conv2d_forward(x, w, b, Padding::kZero), conv_oracle(x, w, b, false)), 1e-12);
  }
}

TEST_F(AutogradTest, ConvIdentityKernelReturnsInput) {
  const auto x = random_tensor({1, 2, 4, 4}, rng);
  Tensor<double> w({2, 2, 3, 3});
  w.at(0, 0, 1, 1) = 1;
  w.at(1, 1, 1, 1) = 1;
  EXPECT_EQ(conv2d_forward(x, w, Tensor<double>({1, 2, 1, 1}), Padding::kEdgeReplicate), x);
}

TEST_F(AutogradTest, ConvRejectsMismatchedChannels) {
  Tape<double> t;
  const auto x = t.constant(random_tensor({1, 3, 4, 4}, rng));
  const auto w = t.constant(random_tensor({2, 4, 3, 3}, rng));
  const auto b = t.constant(Tensor<double>({1, 2, 1, 1}));
  EXPECT_THROW(conv2d(x, w, b), ContractViolation);
}

TEST_F(AutogradTest, ConvRejectsEvenKernel) {
  Tape<double> t;
  const auto x = t.constant(random_tensor({1, 3, 4, 4}, rng));
  const auto w = t.constant(random_tensor({2, 3, 2, 2}, rng));
  const auto b = t.constant(Tensor<double>({1, 2, 1, 1}));
  EXPECT_THROW(conv2d(x, w, b), ContractViolation);
}

TEST_F(AutogradTest, PreluTakesPositiveBranchAtZero) {
  Tape<double> t;
  Tensor<double> x({1, 1, 1, 3}, std::vector<double>{-2, 0, 3});
  const auto y = prelu(t.constant(x), t.constant(Tensor<double>({1, 1, 1, 1}, 0.25)));
  EXPECT_EQ(y.value().values(), (std::vector<double>{-0.5, 0, 3}));
}

TEST_F(AutogradTest, ShuffleChannelOrderIsPhaseMajor) {
  // Input channel c, phase (ry, rx) lands in output channel (ry*2 + rx)*C + c.
  Tensor<double> x({1, 2, 2, 2});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
  const auto u = pixel_unshuffle(x, 2);
  ASSERT_EQ(u.shape(), (Shape{1, 8, 1, 1}));
  for (int c = 0; c < 2; ++c)
    for (int ry = 0; ry < 2; ++ry)
      for (int rx = 0; rx < 2; ++rx) EXPECT_EQ(u.at(0, (ry * 2 + rx) * 2 + c, 0, 0), x.at(0, c, ry, rx));
}

TEST_F(AutogradTest, ShuffleRoundTripIsExact) {
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor({2, 3, 6, 4}, rng);
    EXPECT_EQ(pixel_shuffle(pixel_unshuffle(x, 2), 2), x);
    const auto y = random_tensor({1, 12, 3, 5}, rng);
    EXPECT_EQ(pixel_unshuffle(pixel_shuffle(y, 2), 2), y);
  }
}

TEST_F(AutogradTest, UnshuffleRejectsOddDimensions) {
  EXPECT_THROW(pixel_unshuffle(random_tensor({1, 1, 3, 4}, rng), 2), ContractViolation);
  EXPECT_THROW(pixel_shuffle(random_tensor({1, 3, 2, 2}, rng), 2), ContractViolation);
}

TEST_F(AutogradTest, L1DistanceHasZeroSubgradientAtEquality) {
  Parameter<double> a = make_param(Tensor<double>({1, 1, 1, 2}, std::vector<double>{1, 2}));
  Tape<double> t;
  const auto loss = l1_distance(t.parameter(a), t.constant(Tensor<double>({1, 1, 1, 2}, std::vector<double>{1, 3})));
  EXPECT_DOUBLE_EQ(loss.value()[0], 0.5);
  t.backward(loss);
  EXPECT_EQ(a.grad.values(), (std::vector<double>{0, -0.5}));
}

TEST_F(AutogradTest, SharedParameterAccumulatesBothUses) {
  Parameter<double> p = make_param(Tensor<double>({1, 1, 1, 1}, 3.0));
  Tape<double> t;
  const auto a = t.parameter(p);
  const auto b = t.parameter(p);
  EXPECT_EQ(a.id(), b.id());
  t.backward(sum(add(a, b)));
  EXPECT_DOUBLE_EQ(p.grad[0], 2.0);
}

TEST_F(AutogradTest, BackwardAddsIntoExistingGradient) {
  Parameter<double> p = make_param(Tensor<double>({1, 1, 1, 2}, 1.0));
  for (int i = 0; i < 2; ++i) {
    Tape<double> t;
    t.backward(sum(t.parameter(p)));
  }
  EXPECT_EQ(p.grad.values(), (std::vector<double>{2, 2}));
}

TEST_F(AutogradTest, BackwardRequiresScalar) {
  Tape<double> t;
  const auto x = t.constant(random_tensor({1, 1, 2, 2}, rng));
  EXPECT_THROW(t.backward(x), ContractViolation);
}

TEST_F(AutogradTest, ConstantsReceiveNoGradient) {
  Tape<double> t;
  const auto x = t.constant(random_tensor({1, 1, 2, 2}, rng));
  EXPECT_FALSE(t.requires_grad(x.id()));
  t.backward(sum(x));
  EXPECT_EQ(t.gradient(x), Tensor<double>(x.shape()));
}

TEST_F(AutogradTest, ConcatSplitsGradientByChannel) {
  Parameter<double> a = make_param(random_tensor({1, 1, 2, 2}, rng));
  Parameter<double> b = make_param(random_tensor({1, 2, 2, 2}, rng));
  const auto w = random_tensor({1, 3, 2, 2}, rng);
  Tape<double> t;
  const std::vector<Var<double>> parts{t.parameter(a), t.parameter(b)};
  t.backward(inner_product(concat_channels<double>(parts), w));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a.grad[i], w[i]);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(b.grad[i], w[4 + i]);
}

TEST_F(AutogradTest, FiniteDifferenceOfQuadratic) {
  const auto x = random_tensor({1, 1, 2, 3}, rng);
  const auto g = finite_diff_grad<double>(
      [](const Tensor<double>& v) {
        double s = 0;
        for (std::int64_t i = 0; i < v.numel(); ++i) s += v[i] * v[i];
        return s;
      },
      x, 1e-5);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(g[i], 2 * x[i], 1e-9);
}

TEST_F(AutogradTest, RelativeErrorScalesByLargerNorm) {
  const Tensor<double> a({1, 1, 1, 2}, std::vector<double>{1, 2});
  const Tensor<double> b({1, 1, 1, 2}, std::vector<double>{1, 4});
  EXPECT_DOUBLE_EQ(relative_error(a, b), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(a, a), 0.0);
}

TEST_F(AutogradTest, FirstNonFiniteReportsNode) {
  Tape<double> t;
  const auto ok = t.constant(Tensor<double>({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(t.first_non_finite(), t.size());
  const auto bad = t.constant(Tensor<double>({1, 1, 1, 1}, std::nan("")));
  sum(add(ok, bad));
  EXPECT_EQ(t.first_non_finite(), bad.id());
}
