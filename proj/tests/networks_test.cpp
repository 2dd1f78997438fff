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

#include <algorithm>
#include <random>

#include "meshmark/grad_check.hpp"
#include "meshmark/losses.hpp"
#include "meshmark/networks.hpp"
#include "meshmark/texture.hpp"
#include "test_util.hpp"

namespace meshmark {
namespace {

using T = Tensor<double>;
using P = NetworkParams<double>;
using testing::weighted_sum;

ArchConfig tiny_arch(int n_bits = 4) {
  ArchConfig a;
  a.n_bits = n_bits;
  a.vertex_mlp = {8, 12, 16};
  a.vertex_head = 10;
  a.texture_width = 6;
  a.decoder_width = 6;
  return a;
}

P tiny_params(int n_bits = 4, uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return init_params<double>(rng, tiny_arch(n_bits));
}

// Replaces every zero-initialized head with small random values.
void randomize_heads(P& p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const char* name : {"vertex.head1.w", "vertex.head1.b", "texture.out.w", "decoder.fc.b"}) {
    p.at(name) = detail::uniform_tensor<double>(p.at(name).shape(), 0.2, rng);
  }
}

T random_attrs(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1), w(0, 1);
  std::vector<double> v;
  for (int64_t i = 0; i < n; ++i) v.insert(v.end(), {u(rng), u(rng), u(rng) + 2.0, w(rng), w(rng)});
  return T({n, 5}, v);
}

std::vector<uint8_t> bits_of(std::initializer_list<int> b) { return std::vector<uint8_t>(b.begin(), b.end()); }

TEST(TileMessage, VertexColumnsRepeatBits) {
  const T attrs = T::zeros({3, 5});
  const T out = tile_message_vertices(attrs, bits_of({1, 0}));
  ASSERT_EQ(out.shape(), (Shape{3, 7}));
  for (int v = 0; v < 3; ++v) {
    EXPECT_EQ(out[v * 7 + 5], 1.0);
    EXPECT_EQ(out[v * 7 + 6], 0.0);
  }
  const T zero = tile_message_vertices(random_attrs(4, 1), bits_of({0, 0, 0}));
  for (int v = 0; v < 4; ++v) {
    for (int b = 5; b < 8; ++b) EXPECT_EQ(zero[v * 8 + b], 0.0);
  }
  EXPECT_THROW(tile_message_vertices(attrs, {}), ShapeError);
}

TEST(TileMessage, TextureGridPerBatchItem) {
  const T t = tile_message_texture<double>({bits_of({1, 0}), bits_of({0, 1})}, 2, 3);
  ASSERT_EQ(t.shape(), (Shape{2, 2, 3, 2}));
  for (int p = 0; p < 6; ++p) {
    EXPECT_EQ(t[p * 2], 1.0);
    EXPECT_EQ(t[p * 2 + 1], 0.0);
    EXPECT_EQ(t[12 + p * 2], 0.0);
    EXPECT_EQ(t[12 + p * 2 + 1], 1.0);
  }
}

TEST(InitParams, DeterministicWithZeroHeadsAndUnitBatchnorm) {
  const P a = tiny_params(4, 7), b = tiny_params(4, 7), c = tiny_params(4, 8);
  ASSERT_EQ(a.entries().size(), b.entries().size());
  bool differs = false;
  for (size_t i = 0; i < a.entries().size(); ++i) {
    EXPECT_EQ(a.entries()[i].name, b.entries()[i].name);
    EXPECT_EQ(a.entries()[i].value.vec(), b.entries()[i].value.vec());
    differs |= a.entries()[i].value.vec() != c.entries()[i].value.vec();
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.count(), c.count());
  for (const char* name : {"vertex.head1.w", "vertex.head1.b", "texture.out.w"}) {
    for (double v : a.at(name).data()) EXPECT_EQ(v, 0.0);
  }
  for (double v : a.at("decoder.cbr3.bn.gamma").data()) EXPECT_EQ(v, 1.0);
  for (double v : a.at("decoder.cbr3.bn.beta").data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(a.at("nope"), DataError);
}

TEST(InitParams, DefaultArchitectureCount) {
  std::mt19937_64 rng(0);
  ArchConfig arch;
  arch.n_bits = 8;
  const auto p = init_params<float>(rng, arch);
  // Closed-form count for the default widths.
  auto bn = [](int64_t c) { return 4 * c; };
  int64_t expect = 13 * 64 + bn(64) + 64 * 128 + bn(128) + 128 * 256 + bn(256) + 320 * 128 + bn(128) + 128 * 5 + 5;
  expect += 9 * 3 * 64 + bn(64) + 3 * (9 * 64 * 64 + bn(64)) + 9 * 72 * 64 + bn(64) + 9 * 64 * 3;
  expect += 9 * 3 * 64 + bn(64) + 6 * (9 * 64 * 64 + bn(64)) + 64 * 8 + 8;
  EXPECT_EQ(p.count(), expect);
}

TEST(VertexEncoder, ZeroHeadIsExactIdentity) {
  P p = tiny_params();
  const T attrs = random_attrs(20, 2);
  const T out = vertex_encoder_forward(p, tile_message_vertices(attrs, bits_of({1, 0, 1, 1})), BatchNormMode::kTrain);
  EXPECT_EQ(out.vec(), attrs.vec());
}

TEST(VertexEncoder, KeepsNormalLengthAndMovesTexcoords) {
  P p = tiny_params();
  randomize_heads(p, 3);
  const T attrs = random_attrs(20, 4);
  const T out = vertex_encoder_forward(p, tile_message_vertices(attrs, bits_of({1, 0, 1, 1})), BatchNormMode::kTrain);
  double moved = 0;
  for (int64_t v = 0; v < 20; ++v) {
    double a = 0, b = 0;
    for (int k = 0; k < 3; ++k) {
      a += attrs[v * 5 + k] * attrs[v * 5 + k];
      b += out[v * 5 + k] * out[v * 5 + k];
    }
    EXPECT_NEAR(std::sqrt(a), std::sqrt(b), 1e-12);
    moved += std::abs(out[v * 5 + 3] - attrs[v * 5 + 3]);
  }
  EXPECT_GT(moved, 0.0);
}

TEST(VertexEncoder, GlobalPoolIsPermutationEquivariantForAnySize) {
  P p = tiny_params();
  randomize_heads(p, 5);
  const T attrs = random_attrs(100, 6);
  const auto bits = bits_of({0, 1, 1, 0});
  const T out = vertex_encoder_forward(p, tile_message_vertices(attrs, bits), BatchNormMode::kTrain);
  std::vector<int64_t> perm(100);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
  const T out_perm = vertex_encoder_forward(p, tile_message_vertices(gather_rows(attrs, perm), bits), BatchNormMode::kTrain);
  for (int64_t i = 0; i < 100; ++i) {
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(out_perm[i * 5 + k], out[perm[static_cast<size_t>(i)] * 5 + k], 1e-10);
  }
  const T big = vertex_encoder_forward(p, tile_message_vertices(random_attrs(5000, 8), bits), BatchNormMode::kEval);
  EXPECT_EQ(big.shape(), (Shape{5000, 5}));
}

TEST(VertexEncoder, MaxPoolVariantNeedsConfiguredCount) {
  ArchConfig a = tiny_arch();
  a.vertex_pool = VertexPool::kMax;
  EXPECT_THROW(a.validate(), DataError);
  a.num_vertices = 16;
  std::mt19937_64 rng(1);
  P p = init_params<double>(rng, a);
  randomize_heads(p, 9);
  const auto bits = bits_of({1, 1, 0, 0});
  EXPECT_EQ(vertex_encoder_forward(p, tile_message_vertices(random_attrs(16, 1), bits), BatchNormMode::kTrain).shape(),
            (Shape{16, 5}));
  EXPECT_THROW(vertex_encoder_forward(p, tile_message_vertices(random_attrs(17, 1), bits), BatchNormMode::kTrain),
               ShapeError);
  EXPECT_THROW(vertex_encoder_forward(p, tile_message_vertices(random_attrs(16, 1), bits_of({1})), BatchNormMode::kTrain),
               ShapeError);
}

TEST(VertexEncoder, ParameterGradientsMatchFiniteDifferences) {
  for (VertexPool pool : {VertexPool::kGlobal, VertexPool::kMax}) {
    ArchConfig a = tiny_arch();
    a.vertex_pool = pool;
    a.num_vertices = 16;
    std::mt19937_64 rng(2);
    P p = init_params<double>(rng, a);
    randomize_heads(p, 10);
    const std::vector<T> batch = {tile_message_vertices(random_attrs(16, 11), bits_of({1, 0, 0, 1})),
                                  tile_message_vertices(random_attrs(16, 12), bits_of({0, 1, 1, 0}))};
    auto f = [&](const T& flat) {
      P q = p.with_trainable(flat);
      const auto out = vertex_encoder_forward(q, batch, BatchNormMode::kTrain);
      return add(weighted_sum(out[0]), weighted_sum(mul(out[1], T::scalar(0.7))));
    };
    // Only the vertex encoder's own parameters.
    int64_t n = 0;
    for (const auto& e : p.entries()) {
      if (e.trainable() && e.name.rfind("vertex.", 0) == 0) n += e.value.size();
    }
    GradCheckOptions opt;
    opt.max_coords = 150;
    opt.seed = 3;
    const T flat = p.flat_trainable();
    const T head = slice(flat, 0, 0, n);
    const T rest = slice(flat, 0, n, flat.size());
    const auto r = grad_check_report([&](const T& x) { return f(concat<double>({x, rest}, 0)); }, head, opt);
    EXPECT_LT(r.max_rel_err, 1e-3) << to_string(pool) << " worst index " << r.worst_index;
  }
}

TEST(VertexEncoder, MessageReachesOutputInBatches) {
  P p = tiny_params();
  randomize_heads(p, 14);
  const T attrs = random_attrs(30, 15);
  const T other = random_attrs(25, 16);
  auto run = [&](std::vector<uint8_t> bits) {
    return vertex_encoder_forward(p, {tile_message_vertices(attrs, bits), tile_message_vertices(other, bits_of({1, 1, 0, 0}))},
                                  BatchNormMode::kTrain)
        .front();
  };
  EXPECT_GT(texture_loss(run(bits_of({1, 0, 1, 0})), run(bits_of({0, 0, 1, 0}))).item(), 1e-6);
}

TEST(TextureEncoder, ZeroHeadIdentityAndShape) {
  P p = tiny_params();
  const T tex = reshape(synth_noise_texture<double>(1, 16, 20, 1.0), {1, 16, 20, 3});
  const T bits = tile_message_texture<double>({bits_of({1, 0, 1, 0})}, 16, 20);
  const T out = texture_encoder_forward(p, tex, bits, BatchNormMode::kTrain);
  EXPECT_EQ(out.shape(), tex.shape());
  EXPECT_EQ(out.vec(), tex.vec());
  EXPECT_THROW(texture_encoder_forward(p, reshape(synth_noise_texture<double>(1, 12, 20, 1.0), {1, 12, 20, 3}),
                                       tile_message_texture<double>({bits_of({1, 0, 1, 0})}, 12, 20),
                                       BatchNormMode::kTrain),
               ShapeError);
  EXPECT_THROW(texture_encoder_forward(p, tex, tile_message_texture<double>({bits_of({1, 0, 1, 0})}, 16, 16),
                                       BatchNormMode::kTrain),
               ShapeError);
}

TEST(TextureEncoder, GradientsMatchFiniteDifferences) {
  P p = tiny_params();
  randomize_heads(p, 12);
  // Interior texture values keep the output clamp away from its kinks.
  std::vector<double> tv(2 * 16 * 16 * 3);
  for (size_t i = 0; i < tv.size(); ++i) tv[i] = 0.5 + 0.2 * std::sin(0.37 * static_cast<double>(i));
  const T tex({2, 16, 16, 3}, tv);
  const T bits = tile_message_texture<double>({bits_of({1, 0, 1, 0}), bits_of({0, 0, 1, 1})}, 16, 16);
  auto f = [&](const T& flat) {
    P q = p.with_trainable(flat);
    return weighted_sum(texture_encoder_forward(q, tex, bits, BatchNormMode::kTrain));
  };
  GradCheckOptions opt;
  opt.max_coords = 60;
  EXPECT_LT(grad_check_report(f, p.flat_trainable(), opt).max_rel_err, 1e-3);
  auto g = [&](const T& t) { return weighted_sum(texture_encoder_forward(p, t, bits, BatchNormMode::kTrain)); };
  EXPECT_LT(grad_check_report(g, tex, opt).max_rel_err, 1e-3);
}

TEST(TextureEncoder, MessageMattersAfterTraining) {
  // 50 plain gradient steps of texture encoder + decoder on one texture.
  P p = tiny_params(4, 21);
  const T tex = reshape(synth_noise_texture<double>(3, 32, 32, 1.5), {1, 32, 32, 3});
  const auto bits = bits_of({1, 0, 1, 1});
  const T tiles = tile_message_texture<double>({bits}, 32, 32);
  const T target({1, 4}, {1, 0, 1, 1});
  for (int step = 0; step < 50; ++step) {
    Tape<double> tape;
    P q = p.attach(tape);
    const T te = texture_encoder_forward(q, tex, tiles, BatchNormMode::kTrain);
    const T loss = add(message_loss(target, decoder_forward(q, te, BatchNormMode::kTrain)), texture_loss(tex, te));
    std::vector<T> leaves;
    for (const auto& e : q.entries()) {
      if (e.trainable()) leaves.push_back(e.value);
    }
    const auto grads = tape.backward(loss, leaves);
    size_t k = 0;
    for (auto& e : p.entries()) {
      if (!e.trainable()) continue;
      e.value = sub(e.value, mul(grads[k++], T::scalar(0.05)));
    }
    p.absorb_stats(q);
  }
  auto flipped = bits;
  flipped[2] ^= 1;
  const T a = texture_encoder_forward(p, tex, tiles, BatchNormMode::kEval);
  const T b = texture_encoder_forward(p, tex, tile_message_texture<double>({flipped}, 32, 32), BatchNormMode::kEval);
  EXPECT_GT(texture_loss(a, b).item(), 0.0);
}

TEST(Decoder, OutputLengthForAnySizeAndZeroImage) {
  P p = tiny_params(5);
  const T a = decoder_forward(p, T::full({1, 40, 60, 3}, 0.3), BatchNormMode::kEval);
  const T b = decoder_forward(p, T::full({2, 32, 48, 3}, 0.3), BatchNormMode::kEval);
  EXPECT_EQ(a.shape(), (Shape{1, 5}));
  EXPECT_EQ(b.shape(), (Shape{2, 5}));
  p.at("decoder.fc.w") = T::zeros(p.at("decoder.fc.w").shape());
  const T z = decoder_forward(p, T::zeros({1, 32, 32, 3}), BatchNormMode::kTrain);
  for (double v : z.data()) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(decoder_forward(p, T::zeros({1, 31, 64, 3}), BatchNormMode::kEval), ShapeError);
}

TEST(Decoder, GradientsMatchFiniteDifferences) {
  P p = tiny_params();
  randomize_heads(p, 13);
  std::vector<double> iv(32 * 32 * 3);
  for (size_t i = 0; i < iv.size(); ++i) iv[i] = 0.5 + 0.4 * std::sin(0.11 * static_cast<double>(i) + std::cos(0.7 * static_cast<double>(i)));
  const T img({1, 32, 32, 3}, iv);
  GradCheckOptions opt;
  opt.max_coords = 60;
  auto f = [&](const T& x) { return weighted_sum(decoder_forward(p, x, BatchNormMode::kTrain)); };
  EXPECT_LT(grad_check_report(f, img, opt).max_rel_err, 1e-3);
  auto g = [&](const T& flat) {
    P q = p.with_trainable(flat);
    return weighted_sum(decoder_forward(q, img, BatchNormMode::kTrain));
  };
  EXPECT_LT(grad_check_report(g, p.flat_trainable(), opt).max_rel_err, 1e-3);
}

TEST(Binarize, ThresholdAndIdempotence) {
  const T b = binarize(T({4}, {0.9, 0.1, 0.51, 0.49}));
  EXPECT_EQ(b.vec(), (std::vector<double>{1, 0, 1, 0}));
  EXPECT_EQ(binarize(T({1}, {0.5})).vec(), (std::vector<double>{0}));
  EXPECT_EQ(binarize(b).vec(), b.vec());
}

TEST(NetworkParams, FlatRoundTripAndCast) {
  const P p = tiny_params();
  const T flat = p.flat_trainable();
  EXPECT_EQ(flat.size(), p.trainable_count());
  const P back = p.with_trainable(flat);
  for (size_t i = 0; i < p.entries().size(); ++i) EXPECT_EQ(back.entries()[i].value.vec(), p.entries()[i].value.vec());
  const auto f = p.cast<float>();
  EXPECT_EQ(f.count(), p.count());
}

}  // namespace
}  // namespace meshmark
