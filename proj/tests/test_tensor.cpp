#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "miqa/ops.hpp"
#include "miqa/rng.hpp"
#include "support/gradcheck.hpp"

using namespace miqa;
using miqa::testing::random_tensor;

namespace {

using F = Tensor<float>;
using D = Tensor<double>;

D naive_matmul(const D& a, const D& b) {
  const auto m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> c(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * p + j] += a.at({i, t}) * b.at({t, j});
  return D({m, p}, c);
}

// Direct nested-loop cross-correlation.
D naive_conv(const D& x, const D& w, std::size_t stride, std::size_t pad) {
  const auto cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const auto cout = w.dim(0), k = w.dim(2);
  const auto oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> y(cout * oh * ow, 0.0);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const auto yy = static_cast<std::ptrdiff_t>(i * stride + u) - static_cast<std::ptrdiff_t>(pad);
              const auto xx = static_cast<std::ptrdiff_t>(j * stride + v) - static_cast<std::ptrdiff_t>(pad);
              if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(wd))
                continue;
              acc += x.at({c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)}) * w.at({o, c, u, v});
            }
        y[(o * oh + i) * ow + j] = acc;
      }
  return D({cout, oh, ow}, y);
}

}  // namespace

TEST(TensorType, ShapeMustMatchData) {
  EXPECT_THROW(F({2, 3}, std::vector<float>(5)), DimensionError);
  EXPECT_THROW(F({0, 3}, {}), DimensionError);
  F t({2, 3}, std::vector<float>(6, 1.0f));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Rng, SplitMixReferenceOutput) {
  // First SplitMix64 output for seed 0 (published reference value).
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(c.normal(), d.normal());
}

TEST(Rng, NormalConsumesWholePairs) {
  Rng a(3);
  a.normal();
  EXPECT_EQ(a.draws(), 2u);
  std::vector<double> v(5);
  Rng b(3);
  b.fill_normal(std::span<double>(v));
  EXPECT_EQ(b.draws(), 6u);
  // The first value of a filled buffer is the cosine half of the first pair.
  Rng c(3);
  EXPECT_EQ(v[0], c.normal());
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  std::vector<double> v(200000);
  rng.fill_normal(std::span<double>(v));
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= v.size();
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(Matmul, HandExample) {
  F a({2, 2}, {1, 2, 3, 4}), b({2, 2}, {5, 6, 7, 8});
  const auto c = matmul(a, b);
  EXPECT_EQ(c.values(), (std::vector<float>{19, 22, 43, 50}));
}

TEST(Matmul, IdentityAndZero) {
  Rng rng(1);
  const auto a = random_tensor({3, 4}, rng);
  D eye = D::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.mutable_data()[i * 5] = 1.0;
  EXPECT_EQ(matmul(a, eye).values(), a.values());
  EXPECT_EQ(matmul(a, D::zeros({4, 2})).values(), std::vector<double>(6, 0.0));
}

TEST(Matmul, MatchesNaiveOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = 1 + rng.below(6), k = 1 + rng.below(6), p = 1 + rng.below(6);
    const auto a = random_tensor({m, k}, rng), b = random_tensor({k, p}, rng);
    const auto got = matmul(a, b), want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-12);
  }
}

TEST(Matmul, InnerMismatchThrows) {
  EXPECT_THROW(matmul(F::zeros({2, 3}), F::zeros({2, 3})), DimensionError);
}

TEST(Conv2d, ScalarKernelScales) {
  F x({1, 2, 2}, {1, 2, 3, 4}), w({1, 1, 1, 1}, {2});
  EXPECT_EQ(conv2d(x, w).values(), (std::vector<float>{2, 4, 6, 8}));
}

TEST(Conv2d, OnesKernelSums) {
  const auto y = conv2d(F::full({1, 3, 3}, 1.0f), F::full({1, 1, 3, 3}, 1.0f));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0f);
}

TEST(Conv2d, ZeroWeightsGiveZeroOutput) {
  Rng rng(4);
  const auto y = conv2d(random_tensor({2, 5, 5}, rng), D::zeros({3, 2, 3, 3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 3, 3}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, MatchesDirectOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = rng.below(2) ? 3 : 1;
    const std::size_t stride = 1 + rng.below(2), pad = k == 3 ? rng.below(2) : 0;
    const auto cin = 1 + rng.below(3), cout = 1 + rng.below(3);
    const auto h = 3 + rng.below(5), w = 3 + rng.below(5);
    const auto x = random_tensor({cin, h, w}, rng), wt = random_tensor({cout, cin, k, k}, rng);
    const auto got = conv2d(x, wt, stride, pad), want = naive_conv(x, wt, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-12);
  }
}

TEST(Conv2d, RejectsEmptyOutputAndOddKernels) {
  EXPECT_THROW(conv2d(F::zeros({1, 2, 2}), F::zeros({1, 1, 3, 3})), DimensionError);
  EXPECT_THROW(conv2d(F::zeros({1, 5, 5}), F::zeros({1, 1, 5, 5})), DimensionError);
  EXPECT_THROW(conv2d(F::zeros({2, 5, 5}), F::zeros({1, 1, 1, 1})), DimensionError);
}

TEST(Gelu, Values) {
  D x({3}, {0.0, 1.0, -1.0});
  const auto y = gelu(x);
  EXPECT_EQ(y.values()[0], 0.0);
  // Phi(1) from the erf series.
  EXPECT_NEAR(y.values()[1], 0.8413447460685429, 1e-15);
  EXPECT_NEAR(y.values()[2], -0.15865525393145707, 1e-15);
}

TEST(Gelu, DerivativeAtZeroIsHalf) {
  D x({1}, {0.0}, true);
  backward(sum(gelu(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
}

TEST(Softmax, ClosedForm) {
  D x({1, 2}, {0.0, std::log(2.0)});
  const auto y = softmax(x, 1);
  EXPECT_NEAR(y.values()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.values()[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, UniformAndShiftInvariant) {
  const auto u = softmax(F::full({2, 5}, 3.0f), 1);
  for (float v : u.values()) EXPECT_FLOAT_EQ(v, 0.2f);
  Rng rng(6);
  const auto x = random_tensor({3, 4}, rng);
  const auto shifted = add(x, D::full({3, 4}, 7.5));
  const auto a = softmax(x, 0), b = softmax(shifted, 0);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-12);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = 1 + rng.below(6), c = 1 + rng.below(40);
    std::vector<float> v(r * c);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-30.0, 30.0));
    const auto y = softmax(F({r, c}, v), 1);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += y.at({i, j});
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  EXPECT_THROW(softmax(F::zeros({2, 2}), 2), DimensionError);
}

TEST(AdaptivePool, Examples) {
  const auto ones = adaptive_avg_pool2d(F::full({1, 4, 4}, 1.0f), 2, 2);
  EXPECT_EQ(ones.values(), std::vector<float>(4, 1.0f));
  EXPECT_EQ(adaptive_avg_pool2d(F({1, 2, 2}, {1, 2, 3, 4}), 1, 1).item(), 2.5f);
  Rng rng(8);
  const auto x = random_tensor({2, 3, 5}, rng);
  EXPECT_EQ(adaptive_avg_pool2d(x, 3, 5).values(), x.values());
  EXPECT_THROW(adaptive_avg_pool2d(x, 4, 5), DimensionError);
}

TEST(AdaptivePool, UnevenBinsUseFloorBoundaries) {
  // H=5 -> 2 bins: rows [0, 2) and [2, 5).
  D x({1, 5, 1}, {1, 3, 5, 7, 9});
  EXPECT_EQ(adaptive_avg_pool2d(x, 2, 1).values(), (std::vector<double>{2.0, 7.0}));
}

TEST(AdaptivePool, PreservesMeanOnEvenBins) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto oh = 1 + rng.below(4), ow = 1 + rng.below(4);
    const auto x = random_tensor({2, oh * (1 + rng.below(3)), ow * (1 + rng.below(3))}, rng);
    EXPECT_NEAR(mean(adaptive_avg_pool2d(x, oh, ow)).item(), mean(x).item(), 1e-12);
  }
}

TEST(ReshapePermute, RoundTripsAreBitExact) {
  Rng rng(10);
  const auto x = random_tensor({4, 3, 5}, rng);
  EXPECT_EQ(reshape(reshape(x, {3, 20}), {4, 3, 5}).values(), x.values());
  const auto p = permute(x, {1, 0, 2});
  EXPECT_EQ(p.shape(), (Shape{3, 4, 5}));
  EXPECT_EQ(permute(p, {1, 0, 2}).values(), x.values());
  const auto q = permute(x, {2, 0, 1});
  EXPECT_EQ(permute(q, {1, 2, 0}).values(), x.values());
  EXPECT_THROW(reshape(x, {7, 9}), DimensionError);
  EXPECT_THROW(permute(x, {0, 0, 1}), DimensionError);
}

TEST(ReshapePermute, ChannelViewIndexMapping) {
  // C x D x N -> D x (C*N): element (c, d, n) lands at (d, c*N + n).
  const std::size_t c = 2, d = 3, n = 4;
  std::vector<double> v(c * d * n);
  std::iota(v.begin(), v.end(), 0.0);
  const D f({c, d, n}, v);
  const auto view = reshape(permute(f, {1, 0, 2}), {d, c * n});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t di = 0; di < d; ++di)
      for (std::size_t ni = 0; ni < n; ++ni) EXPECT_EQ(view.at({di, ci * n + ni}), f.at({ci, di, ni}));
}

TEST(Backward, LinearMapGradientIsInput) {
  D w({3}, {0.5, -1.0, 2.0}, true);
  const D x({3}, {4.0, 5.0, 6.0});
  backward(sum(mul(w, x)));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), x.values());
}

TEST(Backward, DisconnectedParameterStaysZero) {
  D w({2}, {1.0, 2.0}, true), unused({2}, {3.0, 4.0}, true);
  unused.mutable_grad();
  backward(sum(w));
  EXPECT_EQ(unused.grad()[0], 0.0);
  EXPECT_EQ(unused.grad()[1], 0.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  D w({2}, {1.0, 2.0}, true);
  const auto loss = sum(scale(w, 3.0));
  backward(loss);
  backward(loss);
  EXPECT_EQ(w.grad()[0], 6.0);
  EXPECT_EQ(w.grad()[1], 6.0);
}

TEST(Backward, SharedSubgraphCountedOnce) {
  D w({1}, {2.0}, true);
  const auto y = mul(w, w);
  backward(sum(add(y, y)));  // d(2 w^2)/dw = 4w
  EXPECT_EQ(w.grad()[0], 8.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  D w({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(scale(w, 2.0)), ContractError);
}

TEST(Backward, NoGradModeRecordsNothing) {
  D w({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  const auto y = sum(w);
  EXPECT_FALSE(y.requires_grad());
}

TEST(MacScope, CountsPrimitiveWork) {
  MacScope scope;
  matmul(F::zeros({2, 3}), F::zeros({3, 4}));
  EXPECT_EQ(scope.count(), 24u);
  conv2d(F::zeros({4, 2, 2}), F::zeros({8, 4, 1, 1}));
  EXPECT_EQ(scope.count(), 24u + 128u);
}
