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

#include <random>

#include "meshmark/grad_check.hpp"
#include "meshmark/losses.hpp"

namespace meshmark {
namespace {

using T = Tensor<double>;

TEST(VertexLoss, ZeroForEqualAndHandEvaluatedPerturbation) {
  const T v({2, 5}, {0, 0, 1, 0.2, 0.3, 1, 0, 0, 0.7, 0.1});
  EXPECT_EQ(vertex_loss(v, v).item(), 0.0);
  const T ve = add(v, T::scalar(0.1));
  // Normal group: 6 entries off by 0.1, texcoord group: 4 entries; N_v*C_v = 10.
  EXPECT_NEAR(vertex_loss(v, ve).item(), 1.0 * 0.6 / 10 + 1.0 * 0.4 / 10, 1e-12);
  EXPECT_NEAR(vertex_loss(v, ve, 2.0, 1.0).item(), 2.0 * 0.6 / 10 + 0.4 / 10, 1e-12);
  EXPECT_NEAR(vertex_loss(v, ve, 3.0, 0.0).item(), 3.0 * 0.6 / 10, 1e-12);
  EXPECT_THROW(vertex_loss(v, T::zeros({3, 5})), ShapeError);
}

TEST(TextureLoss, Examples) {
  const T a = T::zeros({2, 2, 3});
  EXPECT_EQ(texture_loss(a, a).item(), 0.0);
  EXPECT_EQ(texture_loss(a, T::full({2, 2, 3}, 1.0)).item(), 1.0);
  auto v = a.vec();
  v[7] = 0.5;
  EXPECT_NEAR(texture_loss(a, T({2, 2, 3}, v)).item(), 0.5 / 12, 1e-15);
  EXPECT_THROW(texture_loss(a, T::zeros({2, 3, 2})), ShapeError);
}

TEST(ImageLoss, Examples) {
  const T img({2, 2, 3}, {1, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1});
  EXPECT_EQ(image_loss(img, img).item(), 0.0);
  EXPECT_EQ(image_loss(img, sub(T::scalar(1.0), img)).item(), 1.0);
  auto v = img.vec();
  v[4] -= 0.3;
  EXPECT_NEAR(image_loss(img, T({2, 2, 3}, v)).item(), 0.3 / 12, 1e-15);
}

TEST(MessageLoss, Examples) {
  const T m({2}, {1, 0});
  EXPECT_EQ(message_loss(m, m).item(), 0.0);
  EXPECT_EQ(message_loss(m, T({2}, {0.5, 0.5})).item(), 0.5);
  EXPECT_NEAR(message_loss(T({1}, {1}), T({1}, {0.2})).item(), 0.8, 1e-15);
  EXPECT_THROW(message_loss(m, T({3}, {0, 0, 0})), ShapeError);
}

NetworkParams<double> small_params() {
  NetworkParams<double> p;
  p.add("a.w", ParamKind::kWeight, T({2}, {1, -2}));
  p.add("a.b", ParamKind::kBias, T({1}, {5}));
  p.add("a.bn.gamma", ParamKind::kScale, T({1}, {3}));
  p.add("a.bn.mean", ParamKind::kRunningMean, T({1}, {7}));
  p.add("b.w", ParamKind::kWeight, T({1}, {0.5}));
  return p;
}

TEST(RegLoss, WeightsOnly) {
  NetworkParams<double> p = small_params();
  EXPECT_DOUBLE_EQ(reg_loss(p).item(), 1 + 4 + 0.25);
  p.at("a.w") = T::zeros({2});
  p.at("b.w") = T({1}, {2});
  EXPECT_DOUBLE_EQ(reg_loss(p).item(), 4.0);
  p.at("b.w") = T({1}, {4});
  EXPECT_DOUBLE_EQ(reg_loss(p).item(), 16.0);
  p.at("b.w") = T::zeros({1});
  EXPECT_EQ(reg_loss(p).item(), 0.0);
}

TEST(TotalLoss, DefaultsAndWeighting) {
  const LossWeights w;
  EXPECT_EQ(w.lambda, 2.0);
  EXPECT_EQ(w.gamma, 1.0);
  EXPECT_EQ(w.delta, 1.0);
  EXPECT_EQ(w.eta, 0.01);
  LossParts<double> parts{T::scalar(0.1), T::scalar(0.2), T::scalar(0.3), T::scalar(0.4), T::scalar(5.0)};
  EXPECT_NEAR(total_loss(parts, w).item(), 2 * 0.1 + 0.2 + 0.3 + w.theta * 0.4 + 0.01 * 5, 1e-15);
  LossWeights only_msg{0, 0, 0, 0.7, 0, 1, 1};
  EXPECT_NEAR(total_loss(parts, only_msg).item(), 0.7 * 0.4, 1e-15);
  LossParts<double> zero{T::scalar(0.0), T::scalar(0.0), T::scalar(0.0), T::scalar(0.0), T::scalar(0.0)};
  EXPECT_EQ(total_loss(zero, w).item(), 0.0);
  LossWeights bad;
  bad.delta = -1;
  EXPECT_THROW(total_loss(parts, bad), DataError);
}

TEST(TotalLoss, GradientIsWeightedSumOfPartGradients) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  auto rnd = [&](Shape s) {
    std::vector<double> v(static_cast<size_t>(numel(s)));
    for (auto& x : v) x = u(rng);
    return T(std::move(s), std::move(v));
  };
  const T v0 = rnd({6, 5}), t0 = rnd({4, 4, 3}), i0 = rnd({5, 5, 3}), m0({3}, {1, 0, 1});
  const T x = rnd({6 * 5 + 4 * 4 * 3 + 5 * 5 * 3 + 3});
  LossWeights w;
  w.theta = 0.5;
  auto parts_of = [&](const T& flat) {
    int64_t off = 0;
    auto take = [&](Shape s) {
      const int64_t n = numel(s);
      T out = reshape(slice(flat, 0, off, off + n), s);
      off += n;
      return out;
    };
    const T ve = take({6, 5}), te = take({4, 4, 3}), iw = take({5, 5, 3}), mr = take({3});
    NetworkParams<double> p;
    p.add("w", ParamKind::kWeight, slice(flat, 0, 0, 4));
    return LossParts<double>{vertex_loss(v0, ve), texture_loss(t0, te), image_loss(i0, iw), message_loss(m0, mr),
                             reg_loss(p)};
  };
  Tape<double> tape;
  const T leaf = tape.leaf(x);
  const auto parts = parts_of(leaf);
  const T g_total = tape.backward(total_loss(parts, w), leaf);
  std::vector<double> expect(static_cast<size_t>(x.size()), 0.0);
  const std::pair<const T*, double> terms[] = {{&parts.vertex, w.lambda}, {&parts.texture, w.gamma},
                                               {&parts.image, w.delta},   {&parts.message, w.theta},
                                               {&parts.reg, w.eta}};
  for (const auto& [part, weight] : terms) {
    const T g = tape.backward(*part, leaf);
    for (size_t i = 0; i < expect.size(); ++i) expect[i] += weight * g[static_cast<int64_t>(i)];
  }
  for (size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(g_total[static_cast<int64_t>(i)], expect[i], 1e-12);
  EXPECT_LT(grad_check([&](const T& f) { return total_loss(parts_of(f), w); }, x, 1e-6), 1e-5);
}

}  // namespace
}  // namespace meshmark
