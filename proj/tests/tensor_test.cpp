// Copyright 2026 The meshmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "meshmark/grad_check.hpp"
#include "meshmark/nn.hpp"
#include "meshmark/ops.hpp"

namespace meshmark {
namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = dist(rng);
  return T(std::move(shape), std::move(v));
}

// Weighted sum with fixed pseudo-random weights, so every output element
// contributes a distinct amount to the scalar under test.
T weighted_sum(const T& y) {
  std::vector<double> w(static_cast<size_t>(y.size()));
  for (size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + std::sin(1.7 * static_cast<double>(i) + 0.4);
  return sum(mul(y, T(y.shape(), w)));
}

TEST(Elementwise, AbsAndBinarizationPattern) {
  const T x({2}, {-2.0, 3.0});
  const T a = abs(x);
  EXPECT_EQ(a[0], 2.0);
  EXPECT_EQ(a[1], 3.0);

  const T m({2}, {0.2, 0.7});
  const T b = clamp(sign(m - 0.5), 0.0, 1.0);
  EXPECT_EQ(b[0], 0.0);
  EXPECT_EQ(b[1], 1.0);
}

TEST(Elementwise, SumOfSquaresGradient) {
  Tape<double> tape;
  const T x = tape.leaf(T({2}, {1.0, 2.0}));
  const T g = tape.backward(sum(mul(x, x)), x);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
}

TEST(Elementwise, KinkConventions) {
  Tape<double> tape;
  const T x = tape.leaf(T({3}, {0.0, -1.0, 1.0}));
  EXPECT_EQ(sign(T({1}, {0.0}))[0], 0.0);
  const T gr = tape.backward(sum(relu(x)), x);
  EXPECT_EQ(gr[0], 0.0);
  EXPECT_EQ(gr[2], 1.0);
  const T gc = tape.backward(sum(clamp(x, -1.0, 1.0)), x);
  EXPECT_EQ(gc[0], 1.0);
  EXPECT_EQ(gc[1], 0.0);
  EXPECT_EQ(gc[2], 0.0);
  const T gs = tape.backward(sum(sign(x)), x);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(gs[i], 0.0);
}

TEST(Elementwise, ErrorsOnShapeMismatchAndNonFinite) {
  EXPECT_THROW(add(T::zeros({2, 3}), T::zeros({4})), ShapeError);
  EXPECT_THROW(div(T({1}, {1.0}), T({1}, {0.0})), NumericError);
  EXPECT_THROW(T({2}, {1.0}), ShapeError);
}

// Independent index mapping: decode each output index into coordinates and
// read the input at the same coordinates with size-1 axes pinned to zero.
std::vector<double> broadcast_oracle(const T& a, const T& b, const Shape& out) {
  auto read = [&](const T& t, const std::vector<int64_t>& coord) {
    const size_t lead = out.size() - t.shape().size();
    int64_t idx = 0;
    for (size_t i = 0; i < t.shape().size(); ++i) {
      const int64_t d = t.shape()[i];
      idx = idx * d + (d == 1 ? 0 : coord[i + lead]);
    }
    return t[idx];
  };
  std::vector<double> res(static_cast<size_t>(numel(out)));
  for (int64_t k = 0; k < numel(out); ++k) {
    std::vector<int64_t> coord(out.size());
    int64_t rem = k;
    for (size_t i = out.size(); i-- > 0;) {
      coord[i] = rem % out[i];
      rem /= out[i];
    }
    res[static_cast<size_t>(k)] = read(a, coord) * 10.0 + read(b, coord);
  }
  return res;
}

TEST(Broadcast, MatchesIndexMappingOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> rank_dist(0, 4);
  std::uniform_int_distribution<int> ext_dist(1, 4);
  std::bernoulli_distribution squash(0.4);
  for (int trial = 0; trial < 300; ++trial) {
    const int r = rank_dist(rng);
    Shape out(static_cast<size_t>(r));
    for (auto& d : out) d = ext_dist(rng);
    auto derive = [&](int drop) {
      Shape s(out.begin() + std::min(drop, r), out.end());
      for (auto& d : s) {
        if (squash(rng)) d = 1;
      }
      return s;
    };
    const Shape sa = derive(std::uniform_int_distribution<int>(0, r)(rng));
    const Shape sb = derive(std::uniform_int_distribution<int>(0, r)(rng));
    const T a = random_tensor(sa, rng);
    const T b = random_tensor(sb, rng);
    const T c = add(mul(a, T::scalar(10.0)), b);
    Shape expect_shape = detail::broadcast_shape(sa, sb, "test");
    ASSERT_EQ(c.shape(), expect_shape);
    const auto oracle = broadcast_oracle(a, b, expect_shape);
    for (int64_t k = 0; k < c.size(); ++k) ASSERT_DOUBLE_EQ(c[k], oracle[static_cast<size_t>(k)]);

    // Broadcast adjoints sum over the stretched axes.
    Tape<double> tape;
    const T la = tape.leaf(a);
    const T lb = tape.leaf(b);
    const std::vector<T> leaves{la, lb};
    const auto grads = tape.backward(sum(add(la, lb)), leaves);
    const double ratio_a = static_cast<double>(numel(expect_shape)) / static_cast<double>(a.size());
    const double ratio_b = static_cast<double>(numel(expect_shape)) / static_cast<double>(b.size());
    for (int64_t k = 0; k < a.size(); ++k) ASSERT_DOUBLE_EQ(grads[0][k], ratio_a);
    for (int64_t k = 0; k < b.size(); ++k) ASSERT_DOUBLE_EQ(grads[1][k], ratio_b);
  }
}

struct UnaryCase {
  const char* name;
  std::function<T(const T&)> op;
  double lo, hi;
};

TEST(GradCheck, EveryDifferentiableOpPasses) {
  std::mt19937_64 rng(3);
  const std::vector<UnaryCase> cases = {
      {"neg", [](const T& x) { return neg(x); }, -1, 1},
      {"abs", [](const T& x) { return abs(x); }, 0.1, 1},
      {"relu", [](const T& x) { return relu(x); }, 0.1, 1},
      {"exp", [](const T& x) { return exp(x); }, -1, 1},
      {"log", [](const T& x) { return log(x); }, 0.5, 2},
      {"sqrt", [](const T& x) { return sqrt(x); }, 0.5, 2},
      {"square", [](const T& x) { return square(x); }, -1, 1},
      {"power", [](const T& x) { return power(x, 2.5); }, 0.5, 2},
      {"clamp", [](const T& x) { return clamp(x, -2.0, 2.0); }, -1, 1},
      {"sigmoid", [](const T& x) { return sigmoid(x); }, -3, 3},
      {"mean_axis", [](const T& x) { return mean_axis(x, 1, true); }, -1, 1},
      {"sum_axis", [](const T& x) { return sum_axis(x, 0); }, -1, 1},
      {"slice", [](const T& x) { return slice(x, 1, 1, 3); }, -1, 1},
      {"reshape", [](const T& x) { return reshape(x, {4, 3}); }, -1, 1},
      {"broadcast_to", [](const T& x) { return broadcast_to(reshape(x, {1, 3, 4}), {2, 3, 4}); }, -1, 1},
      {"gather", [](const T& x) { return gather_rows(x, {2, 0, 2}); }, -1, 1},
      {"scatter", [](const T& x) { return scatter_rows(x, {4, 0, 4}, 5); }, -1, 1},
      {"concat", [](const T& x) { return concat<double>({x, square(x)}, 1); }, -1, 1},
      {"stack", [](const T& x) { return stack<double>({x, exp(x)}); }, -1, 1},
      {"mul_self_bcast", [](const T& x) { return mul(x, slice(x, 1, 0, 1)); }, -1, 1},
      {"div_bcast", [](const T& x) { return div(x, add(slice(x, 0, 1, 2), T::scalar(3.0))); }, -1, 1},
      {"sub_bcast", [](const T& x) { return sub(slice(x, 0, 0, 1), x); }, -1, 1},
  };
  for (const auto& c : cases) {
    const T x = random_tensor({3, 4}, rng, c.lo, c.hi);
    const double err = grad_check([&](const T& v) { return weighted_sum(c.op(v)); }, x);
    EXPECT_LT(err, 1e-4) << c.name;
  }
}

TEST(GradCheck, HarnessSanity) {
  std::mt19937_64 rng(5);
  const T x = random_tensor({10}, rng);
  EXPECT_LT(grad_check([](const T& v) { return sum(mul(v, v)); }, x, 1e-5), 1e-8);
  const T pos = random_tensor({10}, rng, 0.1, 1.0);
  EXPECT_LT(grad_check([](const T& v) { return sum(relu(v)); }, pos, 1e-5), 1e-6);
}

TEST(GradCheck, KinkFilterSkipsOnlyStraddlingCoordinates) {
  // |x| with the first coordinate 3e-6 from the kink.
  const T x({3}, {3e-6, 0.4, -0.7});
  auto f = [](const T& v) { return sum(abs(v)); };
  EXPECT_GT(grad_check(f, x, 1e-5), 0.5);
  GradCheckOptions o;
  o.skip_kinks = true;
  const GradCheckResult r = grad_check_report(f, x, o);
  EXPECT_EQ(r.kinks_skipped, 1);
  EXPECT_EQ(r.coords_checked, 2);
  EXPECT_LT(r.max_rel_err, 1e-8);
  // A wrong tape gradient on a smooth function is still reported: the value
  // is sum(v^2) but the tape sees v instead of 2v.
  auto wrong = [](const T& v) { return sum(mul(v, v.detach())); };
  const GradCheckResult w = grad_check_report(wrong, T({2}, {0.4, -0.7}), o);
  EXPECT_EQ(w.kinks_skipped, 0);
  EXPECT_GT(w.max_rel_err, 0.4);
}

TEST(Matmul, HandArithmetic) {
  const T a({2, 2}, {1, 2, 3, 4});
  const T b({2, 1}, {1, 1});
  const T c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 7.0);
  const T eye({2, 2}, {1, 0, 0, 1});
  const T x({2, 3}, {1, 2, 3, 4, 5, 6});
  const T ix = matmul(eye, x);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(ix[i], x[i]);
  EXPECT_THROW(matmul(a, T::zeros({3, 1})), ShapeError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const T a = random_tensor({3, 4}, rng);
  const T b = random_tensor({4, 2}, rng);
  EXPECT_LT(grad_check([&](const T& v) { return weighted_sum(matmul(v, b)); }, a), 1e-6);
  EXPECT_LT(grad_check([&](const T& v) { return weighted_sum(matmul(a, v)); }, b), 1e-6);
}

// Direct nested-loop convolution used as the oracle for the im2col path.
T conv_oracle(const T& x, const T& k, Padding padding, int stride) {
  const int64_t h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const int64_t kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  int64_t oh, ow, pt = 0, pl = 0;
  if (padding == Padding::kValid) {
    oh = (h - kh) / stride + 1;
    ow = (w - kw) / stride + 1;
  } else {
    oh = (h + stride - 1) / stride;
    ow = (w + stride - 1) / stride;
    pt = std::max<int64_t>((oh - 1) * stride + kh - h, 0) / 2;
    pl = std::max<int64_t>((ow - 1) * stride + kw - w, 0) / 2;
  }
  std::vector<double> out(static_cast<size_t>(oh * ow * co), 0.0);
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox)
      for (int64_t o = 0; o < co; ++o) {
        double s = 0;
        for (int64_t ky = 0; ky < kh; ++ky)
          for (int64_t kx = 0; kx < kw; ++kx)
            for (int64_t c = 0; c < ci; ++c) {
              const int64_t iy = oy * stride + ky - pt, ix = ox * stride + kx - pl;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              s += x[(iy * w + ix) * ci + c] * k[((ky * kw + kx) * ci + c) * co + o];
            }
        out[static_cast<size_t>((oy * ow + ox) * co + o)] = s;
      }
  return T({oh, ow, co}, out);
}

TEST(Conv2d, BoxFilterValid) {
  std::vector<double> v(25);
  for (int i = 0; i < 25; ++i) v[static_cast<size_t>(i)] = i;
  const T x({5, 5, 1}, v);
  const T k = T::full({3, 3, 1, 1}, 1.0);
  const T y = conv2d(x, k, Padding::kValid, 1);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 1}));
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 3; ++ox) {
      double s = 0;
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx) s += v[static_cast<size_t>((oy + dy) * 5 + ox + dx)];
      EXPECT_DOUBLE_EQ(y[oy * 3 + ox], s);
    }
}

TEST(Conv2d, ShapesAndErrors) {
  EXPECT_EQ(conv2d(T::zeros({8, 8, 2}), T::zeros({3, 3, 2, 5}), Padding::kSame, 2).shape(),
            (Shape{4, 4, 5}));
  EXPECT_EQ(conv2d(T::zeros({2, 9, 7, 1}), T::zeros({3, 3, 1, 1}), Padding::kValid, 2).shape(),
            (Shape{2, 4, 3, 1}));
  EXPECT_THROW(conv2d(T::zeros({2, 5, 1}), T::zeros({3, 3, 1, 1}), Padding::kValid, 1), ShapeError);
  EXPECT_THROW(conv2d(T::zeros({5, 5, 2}), T::zeros({3, 3, 1, 1}), Padding::kSame, 1), ShapeError);
}

TEST(Conv2d, MatchesDirectLoopOracle) {
  std::mt19937_64 rng(19);
  for (Padding p : {Padding::kValid, Padding::kSame}) {
    for (int stride : {1, 2}) {
      for (int64_t h : {6, 7}) {
        const T x = random_tensor({h, 9, 2}, rng);
        const T k = random_tensor({3, 3, 2, 3}, rng);
        const T y = conv2d(x, k, p, stride);
        const T ref = conv_oracle(x, k, p, stride);
        ASSERT_EQ(y.shape(), ref.shape());
        for (int64_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
      }
    }
  }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(23);
  const T x = random_tensor({6, 6, 2}, rng);
  const T k = random_tensor({3, 3, 2, 3}, rng);
  for (Padding p : {Padding::kValid, Padding::kSame}) {
    for (int stride : {1, 2}) {
      EXPECT_LT(grad_check([&](const T& v) { return weighted_sum(conv2d(x, v, p, stride)); }, k), 1e-4);
      EXPECT_LT(grad_check([&](const T& v) { return weighted_sum(conv2d(v, k, p, stride)); }, x), 1e-4);
    }
  }
}

TEST(BatchNorm, ConstantInputGivesBeta) {
  T rm = T::zeros({2}), rv = T::full({2}, 1.0);
  const T x = T::full({5, 2}, 3.5);
  const T y = batchnorm(x, T::full({2}, 2.0), T({2}, {0.25, -1.0}), rm, rv, BatchNormMode::kTrain);
  for (int r = 0; r < 5; ++r) {
    EXPECT_DOUBLE_EQ(y[r * 2], 0.25);
    EXPECT_DOUBLE_EQ(y[r * 2 + 1], -1.0);
  }
  // momentum 0.9 towards the batch statistics
  EXPECT_NEAR(rm[0], 0.35, 1e-12);
  EXPECT_NEAR(rv[0], 0.9, 1e-12);
}

TEST(BatchNorm, StandardizedInputIsNearlyUnchanged) {
  T rm = T::zeros({1}), rv = T::full({1}, 1.0);
  const T x({4, 1}, {-1.0, 1.0, -1.0, 1.0});  // mean 0, biased variance 1
  const T y = batchnorm(x, T::full({1}, 1.0), T::zeros({1}), rm, rv, BatchNormMode::kTrain);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  T rm({1}, {2.0}), rv({1}, {4.0});
  const T y = batchnorm(T({2, 1}, {2.0, 6.0}), T::full({1}, 1.0), T::zeros({1}), rm, rv,
                        BatchNormMode::kEval);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(rm[0], 2.0);
  EXPECT_THROW(batchnorm(T::zeros({0, 1}), T::full({1}, 1.0), T::zeros({1}), rm, rv,
                         BatchNormMode::kTrain),
               ShapeError);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(29);
  const T x = random_tensor({2, 3, 3, 4}, rng);
  const T gamma = random_tensor({4}, rng, 0.5, 1.5);
  const T beta = random_tensor({4}, rng);
  for (BatchNormMode mode : {BatchNormMode::kTrain, BatchNormMode::kEval}) {
    auto run = [&](const T& xi, const T& gi, const T& bi) {
      T rm = T::full({4}, 0.1), rv = T::full({4}, 0.8);
      return weighted_sum(batchnorm(xi, gi, bi, rm, rv, mode));
    };
    EXPECT_LT(grad_check([&](const T& v) { return run(v, gamma, beta); }, x), 1e-3);
    EXPECT_LT(grad_check([&](const T& v) { return run(x, v, beta); }, gamma), 1e-3);
    EXPECT_LT(grad_check([&](const T& v) { return run(x, gamma, v); }, beta), 1e-3);
  }
}

TEST(Pool, GlobalVariants) {
  const T ones = T::full({4, 4, 1}, 1.0);
  const T m = pool(ones, PoolKind::kGlobalMean);
  EXPECT_EQ(m.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(m[0], 1.0);

  Tape<double> tape;
  const T x = tape.leaf(T({3}, {1.0, 5.0, 3.0}));
  const T mx = pool(x, PoolKind::kGlobalMax);
  EXPECT_EQ(mx[0], 5.0);
  const T g = tape.backward(sum(mx), x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);

  const T tie = tape.leaf(T({3}, {2.0, 2.0, 1.0}));
  const T gt = tape.backward(sum(pool(tie, PoolKind::kGlobalMax)), tie);
  EXPECT_EQ(gt[0], 1.0);
  EXPECT_EQ(gt[1], 0.0);

  EXPECT_EQ(pool(T::zeros({3, 5, 6, 2}), PoolKind::kGlobalMean).shape(), (Shape{3, 2}));
}

TEST(Pool, MaxWindowMatchesBruteForce) {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[static_cast<size_t>(i)] = i;
  const T x({4, 4, 1}, v);
  const T y = pool(x, PoolKind::kMaxWindow, 2, 2);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 1}));
  for (int oy = 0; oy < 2; ++oy)
    for (int ox = 0; ox < 2; ++ox) {
      double best = -1;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          best = std::max(best, v[static_cast<size_t>((2 * oy + dy) * 4 + 2 * ox + dx)]);
      EXPECT_EQ(y[oy * 2 + ox], best);
    }
  std::mt19937_64 rng(31);
  const T r = random_tensor({2, 6, 6, 3}, rng);
  EXPECT_LT(grad_check([](const T& v2) { return weighted_sum(pool(v2, PoolKind::kMaxWindow)); }, r), 1e-6);
  EXPECT_LT(grad_check([](const T& v2) { return weighted_sum(pool(v2, PoolKind::kGlobalMean)); }, r), 1e-6);
  EXPECT_LT(grad_check([](const T& v2) { return weighted_sum(pool(v2, PoolKind::kGlobalMax)); }, r), 1e-6);
}

TEST(Backward, SumGivesOnesAndConstantGivesZeros) {
  Tape<double> tape;
  std::mt19937_64 rng(37);
  const T x = tape.leaf(random_tensor({2, 3}, rng));
  const T g = tape.backward(sum(x), x);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(g[i], 1.0);

  const T y = tape.leaf(random_tensor({4}, rng));
  const T g0 = tape.backward(sum(y), x);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(g0[i], 0.0);
}

TEST(Backward, Errors) {
  Tape<double> tape, other;
  const T x = tape.leaf(T({2}, {1.0, 2.0}));
  EXPECT_THROW(tape.backward(mul(x, x), x), ShapeError);
  const T z = other.leaf(T({1}, {1.0}));
  EXPECT_THROW(tape.backward(sum(x), z), ShapeError);
  EXPECT_THROW(tape.backward(sum(x), T({1}, {0.0})), ShapeError);
  EXPECT_THROW(add(x, z), ShapeError);
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  std::mt19937_64 rng(41);
  const T x = random_tensor({2, 9, 9, 3}, rng);
  const T k = random_tensor({3, 3, 3, 8}, rng);
  auto run = [&] {
    T rm = T::zeros({8}), rv = T::full({8}, 1.0);
    const T y = relu(batchnorm(conv2d(x, k, Padding::kSame, 2), T::full({8}, 1.0),
                               T::zeros({8}), rm, rv, BatchNormMode::kTrain));
    return pool(y, PoolKind::kGlobalMean);
  };
  const T a = run(), b = run();
  for (int64_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Precision, FloatTensorsWork) {
  Tape<float> tape;
  const Tensor<float> x = tape.leaf(Tensor<float>({3}, {1.f, 2.f, 3.f}));
  const Tensor<float> g = tape.backward(sum(mul(x, x)), x);
  EXPECT_FLOAT_EQ(g[2], 6.f);
}

}  // namespace
}  // namespace meshmark
