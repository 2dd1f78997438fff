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

// The learned components: a point-network vertex encoder, a convolutional
// texture encoder and an image decoder, plus message tiling and
// binarization.

#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "meshmark/mesh.hpp"
#include "meshmark/nn.hpp"
#include "meshmark/ops.hpp"

namespace meshmark {

enum class VertexPool { kMax, kGlobal };

inline std::string to_string(VertexPool p) { return p == VertexPool::kMax ? "maxpool" : "globalpool"; }

inline VertexPool vertex_pool_from_string(const std::string& s) {
  if (s == "maxpool") return VertexPool::kMax;
  if (s == "globalpool") return VertexPool::kGlobal;
  throw DataError("unknown vertex encoder variant '" + s + "'");
}

struct ArchConfig {
  int n_bits = 8;
  std::vector<int> vertex_mlp{64, 128, 256};
  int vertex_head = 128;
  VertexPool vertex_pool = VertexPool::kGlobal;
  // Fixed vertex count the max-pool variant is built for.
  int64_t num_vertices = 0;
  int texture_width = 64;
  int decoder_width = 64;
  int decoder_blocks = 7;
  int decoder_strided = 2;  // trailing blocks with stride 2

  void validate() const {
    if (n_bits < 1) throw DataError("arch: n_bits must be >= 1");
    if (vertex_mlp.empty()) throw DataError("arch: vertex_mlp needs at least one layer");
    for (int w : vertex_mlp) {
      if (w < 1) throw DataError("arch: vertex_mlp widths must be positive");
    }
    if (vertex_head < 1 || texture_width < 1 || decoder_width < 1) throw DataError("arch: widths must be positive");
    if (decoder_blocks < 1 || decoder_strided < 0 || decoder_strided > decoder_blocks) {
      throw DataError("arch: decoder needs 0 <= strided <= blocks and blocks >= 1");
    }
    if (vertex_pool == VertexPool::kMax && num_vertices < 1) {
      throw DataError("arch: maxpool vertex encoder needs num_vertices");
    }
  }

  // Smallest image side the decoder accepts.
  int64_t min_image_side() const { return 32; }
};

enum class ParamKind { kWeight, kBias, kScale, kShift, kRunningMean, kRunningVar };

template <class Real>
struct Param {
  std::string name;
  ParamKind kind = ParamKind::kWeight;
  Tensor<Real> value;

  bool trainable() const { return kind != ParamKind::kRunningMean && kind != ParamKind::kRunningVar; }
  bool regularized() const { return kind == ParamKind::kWeight; }
};

template <class Real>
class NetworkParams {
 public:
  ArchConfig arch;

  void add(std::string name, ParamKind kind, Tensor<Real> value) {
    if (index_.count(name)) throw DataError("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), kind, std::move(value)});
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Real>& at(const std::string& name) { return entries_[lookup(name)].value; }
  const Tensor<Real>& at(const std::string& name) const { return entries_[lookup(name)].value; }

  std::vector<Param<Real>>& entries() { return entries_; }
  const std::vector<Param<Real>>& entries() const { return entries_; }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& p : entries_) n += p.value.size();
    return n;
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& p : entries_) n += p.trainable() ? p.value.size() : 0;
    return n;
  }

  // Copy whose trainable tensors are leaves of `tape`.
  NetworkParams attach(Tape<Real>& tape) const {
    NetworkParams out = *this;
    for (auto& p : out.entries_) {
      if (p.trainable()) p.value = tape.leaf(p.value);
    }
    return out;
  }

  // Copies running statistics from `other` (same layout).
  void absorb_stats(const NetworkParams& other) {
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (!entries_[i].trainable()) entries_[i].value = other.entries_[i].value.detach();
    }
  }

  // Trainable values laid end to end in entry order.
  Tensor<Real> flat_trainable() const {
    std::vector<Real> v;
    for (const auto& p : entries_) {
      if (p.trainable()) v.insert(v.end(), p.value.data().begin(), p.value.data().end());
    }
    const auto n = static_cast<int64_t>(v.size());
    return Tensor<Real>({n}, std::move(v));
  }

  // Inverse of flat_trainable; slices of `flat` keep their tape links.
  NetworkParams with_trainable(const Tensor<Real>& flat) const {
    NetworkParams out = *this;
    int64_t off = 0;
    for (auto& p : out.entries_) {
      if (!p.trainable()) continue;
      const int64_t n = p.value.size();
      p.value = reshape(slice(flat, 0, off, off + n), p.value.shape());
      off += n;
    }
    if (off != flat.size()) throw ShapeError("with_trainable: size mismatch");
    return out;
  }

  template <class To>
  NetworkParams<To> cast() const {
    NetworkParams<To> out;
    out.arch = arch;
    for (const auto& p : entries_) out.add(p.name, p.kind, p.value.template cast<To>());
    return out;
  }

 private:
  size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Param<Real>> entries_;
  std::map<std::string, size_t> index_;
};

namespace detail {

template <class Real, class Rng>
Tensor<Real> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<Real> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return Tensor<Real>(std::move(shape), std::move(v));
}

template <class Real>
void add_batchnorm(NetworkParams<Real>& p, const std::string& prefix, int64_t c) {
  p.add(prefix + ".bn.gamma", ParamKind::kScale, Tensor<Real>::full({c}, Real(1)));
  p.add(prefix + ".bn.beta", ParamKind::kShift, Tensor<Real>::zeros({c}));
  p.add(prefix + ".bn.mean", ParamKind::kRunningMean, Tensor<Real>::zeros({c}));
  p.add(prefix + ".bn.var", ParamKind::kRunningVar, Tensor<Real>::full({c}, Real(1)));
}

// Layers feeding batchnorm + relu use the He uniform bound.
template <class Real, class Rng>
void add_dense_bn(NetworkParams<Real>& p, const std::string& prefix, int64_t in, int64_t out, Rng& rng) {
  p.add(prefix + ".w", ParamKind::kWeight, uniform_tensor<Real>({in, out}, std::sqrt(6.0 / static_cast<double>(in)), rng));
  add_batchnorm(p, prefix, out);
}

template <class Real, class Rng>
void add_cbr(NetworkParams<Real>& p, const std::string& prefix, int64_t in, int64_t out, Rng& rng) {
  p.add(prefix + ".w", ParamKind::kWeight,
        uniform_tensor<Real>({3, 3, in, out}, std::sqrt(6.0 / static_cast<double>(9 * in)), rng));
  add_batchnorm(p, prefix, out);
}

template <class Real>
Tensor<Real> bn(NetworkParams<Real>& p, const std::string& prefix, const Tensor<Real>& x, BatchNormMode mode) {
  return batchnorm(x, p.at(prefix + ".bn.gamma"), p.at(prefix + ".bn.beta"), p.at(prefix + ".bn.mean"),
                   p.at(prefix + ".bn.var"), mode);
}

template <class Real>
Tensor<Real> cbr(NetworkParams<Real>& p, const std::string& prefix, const Tensor<Real>& x, BatchNormMode mode,
                 int stride = 1) {
  return relu(bn(p, prefix, conv2d(x, p.at(prefix + ".w"), Padding::kSame, stride), mode));
}

// (n + d) rescaled to |n| per row; rows with d == 0 pass n through unchanged.
template <class Real>
Tensor<Real> rescale_normals(const Tensor<Real>& n, const Tensor<Real>& d) {
  const int64_t rows = n.dim(0);
  const auto& nv = n.vec();
  const auto& dv = d.vec();
  std::vector<Real> out(nv.size(), Real(0));
  struct Row {
    Real ratio = 0;  // |n| / |n + d|
    Real s[3] = {0, 0, 0};
    Real nh[3] = {0, 0, 0};
  };
  auto ctx = std::make_shared<std::vector<Row>>(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    const auto k = static_cast<size_t>(i * 3);
    Row& r = (*ctx)[static_cast<size_t>(i)];
    Real ln = 0, ls = 0;
    for (size_t a = 0; a < 3; ++a) {
      r.s[a] = nv[k + a] + dv[k + a];
      ln += nv[k + a] * nv[k + a];
      ls += r.s[a] * r.s[a];
    }
    ln = std::sqrt(ln);
    ls = std::sqrt(ls);
    if (!(ls > Real(0))) continue;
    r.ratio = ln / ls;
    for (size_t a = 0; a < 3; ++a) {
      r.s[a] /= ls;
      r.nh[a] = ln > Real(0) ? nv[k + a] / ln : Real(0);
    }
    const bool unchanged = dv[k] == Real(0) && dv[k + 1] == Real(0) && dv[k + 2] == Real(0);
    for (size_t a = 0; a < 3; ++a) out[k + a] = unchanged ? nv[k + a] : r.s[a] * ln;
  }
  return make_result<Real>("rescale_normals", n.shape(), std::move(out), {&n, &d},
                           [ctx, rows](std::span<const Real> g, std::span<Real* const> gin) {
                             for (int64_t i = 0; i < rows; ++i) {
                               const Row& r = (*ctx)[static_cast<size_t>(i)];
                               if (r.ratio == Real(0)) continue;
                               const auto k = static_cast<size_t>(i * 3);
                               const Real gs = g[k] * r.s[0] + g[k + 1] * r.s[1] + g[k + 2] * r.s[2];
                               for (size_t a = 0; a < 3; ++a) {
                                 const Real gd = r.ratio * (g[k + a] - gs * r.s[a]);
                                 if (gin[1]) gin[1][k + a] += gd;
                                 if (gin[0]) gin[0][k + a] += gd + gs * r.nh[a];
                               }
                             }
                           });
}

}  // namespace detail

template <class Real, class Rng>
NetworkParams<Real> init_params(Rng& rng, const ArchConfig& arch) {
  arch.validate();
  NetworkParams<Real> p;
  p.arch = arch;
  const int64_t nb = arch.n_bits;

  int64_t in = kAttributeChannels + nb;
  for (size_t l = 0; l < arch.vertex_mlp.size(); ++l) {
    detail::add_dense_bn(p, "vertex.mlp" + std::to_string(l), in, arch.vertex_mlp[l], rng);
    in = arch.vertex_mlp[l];
  }
  detail::add_dense_bn(p, "vertex.head0", arch.vertex_mlp.front() + arch.vertex_mlp.back(), arch.vertex_head, rng);
  p.add("vertex.head1.w", ParamKind::kWeight, Tensor<Real>::zeros({arch.vertex_head, kAttributeChannels}));
  p.add("vertex.head1.b", ParamKind::kBias, Tensor<Real>::zeros({kAttributeChannels}));

  const int64_t tw = arch.texture_width;
  detail::add_cbr(p, "texture.cbr0", 3, tw, rng);
  for (int l = 1; l < 4; ++l) detail::add_cbr(p, "texture.cbr" + std::to_string(l), tw, tw, rng);
  detail::add_cbr(p, "texture.cbr4", tw + nb, tw, rng);
  p.add("texture.out.w", ParamKind::kWeight, Tensor<Real>::zeros({3, 3, tw, 3}));

  const int64_t dw = arch.decoder_width;
  for (int l = 0; l < arch.decoder_blocks; ++l) detail::add_cbr(p, "decoder.cbr" + std::to_string(l), l ? dw : 3, dw, rng);
  p.add("decoder.fc.w", ParamKind::kWeight,
        detail::uniform_tensor<Real>({dw, nb}, 1.0 / std::sqrt(static_cast<double>(dw)), rng));
  p.add("decoder.fc.b", ParamKind::kBias, Tensor<Real>::zeros({nb}));
  return p;
}

// Appends each message bit as a constant column: [N,5] -> [N,5+N_b].
template <class Real>
Tensor<Real> tile_message_vertices(const Tensor<Real>& attributes, const std::vector<uint8_t>& bits) {
  if (bits.empty()) throw ShapeError("tile_message_vertices: empty message");
  if (attributes.rank() != 2) throw ShapeError("tile_message_vertices: attributes must be [N,C]");
  const int64_t n = attributes.dim(0);
  const auto nb = static_cast<int64_t>(bits.size());
  std::vector<Real> block(static_cast<size_t>(n * nb));
  for (int64_t v = 0; v < n; ++v) {
    for (int64_t b = 0; b < nb; ++b) block[static_cast<size_t>(v * nb + b)] = bits[static_cast<size_t>(b)] ? Real(1) : Real(0);
  }
  return concat<Real>({attributes, Tensor<Real>({n, nb}, std::move(block))}, 1);
}

// Message bits per batch item broadcast over an H x W grid: [B,H,W,N_b].
template <class Real>
Tensor<Real> tile_message_texture(const std::vector<std::vector<uint8_t>>& bits, int64_t h, int64_t w) {
  if (bits.empty() || bits.front().empty()) throw ShapeError("tile_message_texture: empty message");
  const auto b = static_cast<int64_t>(bits.size());
  const auto nb = static_cast<int64_t>(bits.front().size());
  std::vector<Real> out(static_cast<size_t>(b * h * w * nb));
  size_t k = 0;
  for (int64_t i = 0; i < b; ++i) {
    if (static_cast<int64_t>(bits[static_cast<size_t>(i)].size()) != nb) throw ShapeError("tile_message_texture: ragged batch");
    for (int64_t p = 0; p < h * w; ++p) {
      for (int64_t j = 0; j < nb; ++j) out[k++] = bits[static_cast<size_t>(i)][static_cast<size_t>(j)] ? Real(1) : Real(0);
    }
  }
  return Tensor<Real>({b, h, w, nb}, std::move(out));
}

// Watermarked attributes [N_v,5] per mesh from V_m [N_v,5+N_b] per mesh.
// Batch statistics span every vertex of every mesh in the batch: under
// per-mesh statistics the tiled message bits and the pooled feature, both
// constant within a mesh, would be normalized away.
template <class Real>
std::vector<Tensor<Real>> vertex_encoder_forward(NetworkParams<Real>& p, const std::vector<Tensor<Real>>& batch,
                                                 BatchNormMode mode) {
  const ArchConfig& a = p.arch;
  if (batch.empty()) throw ShapeError("vertex encoder: empty batch");
  std::vector<int64_t> offsets{0};
  for (const auto& vm : batch) {
    if (vm.rank() != 2 || vm.dim(1) != kAttributeChannels + a.n_bits) {
      throw ShapeError("vertex encoder: input must be [N_v," + std::to_string(kAttributeChannels + a.n_bits) +
                       "], got " + to_string(vm.shape()));
    }
    const int64_t n = vm.dim(0);
    if (n < 1) throw ShapeError("vertex encoder: mesh has no vertices");
    if (a.vertex_pool == VertexPool::kMax && n != a.num_vertices) {
      throw ShapeError("vertex encoder: maxpool variant is built for " + std::to_string(a.num_vertices) +
                       " vertices, got " + std::to_string(n));
    }
    offsets.push_back(offsets.back() + n);
  }
  const Tensor<Real> all = batch.size() == 1 ? batch.front() : concat<Real>(batch, 0);
  Tensor<Real> h = all;
  Tensor<Real> local;
  for (size_t l = 0; l < a.vertex_mlp.size(); ++l) {
    const std::string name = "vertex.mlp" + std::to_string(l);
    h = relu(detail::bn(p, name, matmul(h, p.at(name + ".w")), mode));
    if (l == 0) local = h;
  }
  const PoolKind kind = a.vertex_pool == VertexPool::kMax ? PoolKind::kGlobalMax : PoolKind::kGlobalMean;
  std::vector<Tensor<Real>> globals;
  for (size_t i = 0; i < batch.size(); ++i) {
    const int64_t n = offsets[i + 1] - offsets[i];
    const Tensor<Real> g = pool(batch.size() == 1 ? h : slice(h, 0, offsets[i], offsets[i + 1]), kind);
    globals.push_back(broadcast_to(g, {n, g.dim(1)}));
  }
  const Tensor<Real> global = globals.size() == 1 ? globals.front() : concat<Real>(globals, 0);
  const Tensor<Real> feat = concat<Real>({local, global}, 1);
  const Tensor<Real> hidden = relu(detail::bn(p, "vertex.head0", matmul(feat, p.at("vertex.head0.w")), mode));
  const Tensor<Real> delta = add(matmul(hidden, p.at("vertex.head1.w")), p.at("vertex.head1.b"));

  const Tensor<Real> attrs = slice(all, 1, 0, kAttributeChannels);
  const Tensor<Real> normals = detail::rescale_normals(slice(attrs, 1, kNormalBegin, kNormalBegin + 3),
                                                       slice(delta, 1, kNormalBegin, kNormalBegin + 3));
  const Tensor<Real> uv =
      add(slice(attrs, 1, kTexcoordBegin, kAttributeChannels), slice(delta, 1, kTexcoordBegin, kAttributeChannels));
  const Tensor<Real> out = concat<Real>({normals, uv}, 1);
  if (batch.size() == 1) return {out};
  std::vector<Tensor<Real>> parts;
  for (size_t i = 0; i < batch.size(); ++i) parts.push_back(slice(out, 0, offsets[i], offsets[i + 1]));
  return parts;
}

template <class Real>
Tensor<Real> vertex_encoder_forward(NetworkParams<Real>& p, const Tensor<Real>& vm, BatchNormMode mode) {
  return vertex_encoder_forward(p, std::vector<Tensor<Real>>{vm}, mode).front();
}

// Watermarked textures [B,H,W,3] from textures [B,H,W,3] and tiled bits
// [B,H,W,N_b].
template <class Real>
Tensor<Real> texture_encoder_forward(NetworkParams<Real>& p, const Tensor<Real>& texture, const Tensor<Real>& bits,
                                     BatchNormMode mode) {
  if (texture.rank() != 4 || texture.dim(3) != 3) {
    throw ShapeError("texture encoder: texture must be [B,H,W,3], got " + to_string(texture.shape()));
  }
  if (texture.dim(1) < 16 || texture.dim(2) < 16) throw ShapeError("texture encoder: texture must be at least 16x16");
  if (bits.rank() != 4 || bits.dim(0) != texture.dim(0) || bits.dim(1) != texture.dim(1) ||
      bits.dim(2) != texture.dim(2) || bits.dim(3) != p.arch.n_bits) {
    throw ShapeError("texture encoder: message tiles " + to_string(bits.shape()) + " do not match texture " +
                     to_string(texture.shape()));
  }
  Tensor<Real> h = texture;
  for (int l = 0; l < 4; ++l) h = detail::cbr(p, "texture.cbr" + std::to_string(l), h, mode);
  h = detail::cbr(p, "texture.cbr4", concat<Real>({h, bits}, 3), mode);
  const Tensor<Real> delta = conv2d(h, p.at("texture.out.w"), Padding::kSame, 1);
  return clamp(add(texture, delta), Real(0), Real(1));
}

// Real-valued message estimates [B,N_b] in (0,1) from images [B,H,W,3].
template <class Real>
Tensor<Real> decoder_forward(NetworkParams<Real>& p, const Tensor<Real>& images, BatchNormMode mode) {
  const ArchConfig& a = p.arch;
  if (images.rank() != 4 || images.dim(3) != 3) {
    throw ShapeError("decoder: images must be [B,H,W,3], got " + to_string(images.shape()));
  }
  if (images.dim(1) < a.min_image_side() || images.dim(2) < a.min_image_side()) {
    throw ShapeError("decoder: image " + std::to_string(images.dim(1)) + "x" + std::to_string(images.dim(2)) +
                     " is smaller than the 32x32 minimum");
  }
  Tensor<Real> h = images;
  for (int l = 0; l < a.decoder_blocks; ++l) {
    const int stride = l >= a.decoder_blocks - a.decoder_strided ? 2 : 1;
    h = detail::cbr(p, "decoder.cbr" + std::to_string(l), h, mode, stride);
  }
  const Tensor<Real> pooled = pool(h, PoolKind::kGlobalMean);
  return sigmoid(add(matmul(pooled, p.at("decoder.fc.w")), p.at("decoder.fc.b")));
}

// clamp(sign(m - 0.5), 0, 1); exactly 0.5 maps to 0.
template <class Real>
Tensor<Real> binarize(const Tensor<Real>& m) {
  return clamp(sign(sub(m, Tensor<Real>::scalar(Real(0.5)))), Real(0), Real(1));
}

}  // namespace meshmark
