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

// Mesh data model and the preprocessing passes applied before training:
// position normalization, spherical texture coordinates and vertex normals.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "meshmark/tensor.hpp"

namespace meshmark {

using Face = std::array<int32_t, 3>;

// Attribute channel layout shared by the encoder, losses and renderer.
inline constexpr int64_t kAttributeChannels = 5;
inline constexpr int64_t kNormalBegin = 0;
inline constexpr int64_t kTexcoordBegin = 3;
inline constexpr int64_t kMaterialSize = 10;

// Material layout: ambient rgb, diffuse rgb, specular rgb, shininess.
template <class Real>
Tensor<Real> default_material() {
  return Tensor<Real>({kMaterialSize}, {Real(0.5), Real(0.5), Real(0.5), Real(0.5), Real(0.5),
                                        Real(0.5), Real(0.5), Real(0.5), Real(0.5), Real(10)});
}

template <class Real>
struct Mesh {
  Tensor<Real> positions;   // [N_v, 3]
  Tensor<Real> attributes;  // [N_v, 5]: normal xyz, texcoord uv
  std::vector<Face> faces;
  Tensor<Real> texture;     // [H_t, W_t, 3] in [0, 1]; may be undefined
  Tensor<Real> material = default_material<Real>();
  // Per-vertex visibility; empty means every vertex is kept. Faces touching a
  // masked vertex are skipped by the rasterizer.
  std::vector<uint8_t> vertex_mask;

  int64_t num_vertices() const { return positions.defined() ? positions.dim(0) : 0; }
  int64_t num_faces() const { return static_cast<int64_t>(faces.size()); }

  bool face_visible(const Face& f) const {
    if (vertex_mask.empty()) return true;
    return vertex_mask[static_cast<size_t>(f[0])] && vertex_mask[static_cast<size_t>(f[1])] &&
           vertex_mask[static_cast<size_t>(f[2])];
  }

  // Throws DataError when a structural invariant is broken.
  void validate() const {
    const int64_t nv = num_vertices();
    if (positions.defined() && (positions.rank() != 2 || positions.dim(1) != 3)) {
      throw DataError("mesh positions must be [N_v,3], got " + to_string(positions.shape()));
    }
    if (attributes.defined() &&
        (attributes.rank() != 2 || attributes.dim(0) != nv ||
         attributes.dim(1) != kAttributeChannels)) {
      throw DataError("mesh attributes must be [N_v,5], got " + to_string(attributes.shape()));
    }
    for (const Face& f : faces) {
      for (int32_t i : f) {
        if (i < 0 || i >= nv) throw DataError("face index " + std::to_string(i) + " out of range");
      }
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) throw DataError("degenerate face");
    }
    if (texture.defined() && (texture.rank() != 3 || texture.dim(2) != 3)) {
      throw DataError("texture must be [H,W,3], got " + to_string(texture.shape()));
    }
    if (material.size() != kMaterialSize) throw DataError("material must have 10 entries");
    if (!vertex_mask.empty() && static_cast<int64_t>(vertex_mask.size()) != nv) {
      throw DataError("vertex mask size mismatch");
    }
  }
};

// Centers positions on their bounding-box center and scales uniformly so the
// largest half-extent becomes 1.
template <class Real>
Mesh<Real> normalize_positions(const Mesh<Real>& mesh) {
  const int64_t n = mesh.num_vertices();
  if (n < 1) throw DataError("normalize_positions: mesh has no vertices");
  const auto& p = mesh.positions.vec();
  std::array<Real, 3> lo{p[0], p[1], p[2]}, hi = lo;
  for (int64_t v = 0; v < n; ++v) {
    for (int a = 0; a < 3; ++a) {
      lo[static_cast<size_t>(a)] = std::min(lo[static_cast<size_t>(a)], p[static_cast<size_t>(v * 3 + a)]);
      hi[static_cast<size_t>(a)] = std::max(hi[static_cast<size_t>(a)], p[static_cast<size_t>(v * 3 + a)]);
    }
  }
  Real half = 0;
  std::array<Real, 3> center{};
  for (size_t a = 0; a < 3; ++a) {
    center[a] = (lo[a] + hi[a]) / Real(2);
    half = std::max(half, (hi[a] - lo[a]) / Real(2));
  }
  if (!(half > Real(0))) throw DataError("normalize_positions: mesh has zero extent");
  std::vector<Real> out(p.size());
  for (int64_t v = 0; v < n; ++v) {
    for (size_t a = 0; a < 3; ++a) {
      const auto k = static_cast<size_t>(v * 3) + a;
      out[k] = (p[k] - center[a]) / half;
    }
  }
  Mesh<Real> result = mesh;
  result.positions = Tensor<Real>(mesh.positions.shape(), std::move(out));
  return result;
}

// Equirectangular texture coordinates from each vertex's direction about the
// origin: u = 0.5 + atan2(y, x) / 2pi, v = 0.5 + asin(z / |p|) / pi. A vertex
// at the origin maps to (0.5, 0.5).
template <class Real>
Mesh<Real> spherical_uv(const Mesh<Real>& mesh) {
  const int64_t n = mesh.num_vertices();
  const auto& p = mesh.positions.vec();
  std::vector<Real> attrs = mesh.attributes.defined()
                                ? mesh.attributes.vec()
                                : std::vector<Real>(static_cast<size_t>(n * kAttributeChannels), Real(0));
  for (int64_t v = 0; v < n; ++v) {
    const double x = p[static_cast<size_t>(v * 3)];
    const double y = p[static_cast<size_t>(v * 3 + 1)];
    const double z = p[static_cast<size_t>(v * 3 + 2)];
    const double r = std::sqrt(x * x + y * y + z * z);
    double u = 0.5, w = 0.5;
    if (r > 0) {
      u = 0.5 + std::atan2(y, x) / (2.0 * std::numbers::pi);
      w = 0.5 + std::asin(std::clamp(z / r, -1.0, 1.0)) / std::numbers::pi;
    }
    attrs[static_cast<size_t>(v * kAttributeChannels + kTexcoordBegin)] = static_cast<Real>(u);
    attrs[static_cast<size_t>(v * kAttributeChannels + kTexcoordBegin + 1)] = static_cast<Real>(w);
  }
  Mesh<Real> result = mesh;
  result.attributes = Tensor<Real>({n, kAttributeChannels}, std::move(attrs));
  return result;
}

// Area-weighted vertex normals. Vertices without incident area get +z.
template <class Real>
Mesh<Real> compute_normals(const Mesh<Real>& mesh) {
  mesh.validate();
  const int64_t n = mesh.num_vertices();
  const auto& p = mesh.positions.vec();
  std::vector<double> acc(static_cast<size_t>(n * 3), 0.0);
  for (const Face& f : mesh.faces) {
    std::array<std::array<double, 3>, 3> q{};
    for (size_t c = 0; c < 3; ++c) {
      for (size_t a = 0; a < 3; ++a) q[c][a] = p[static_cast<size_t>(f[c]) * 3 + a];
    }
    const std::array<double, 3> e1{q[1][0] - q[0][0], q[1][1] - q[0][1], q[1][2] - q[0][2]};
    const std::array<double, 3> e2{q[2][0] - q[0][0], q[2][1] - q[0][1], q[2][2] - q[0][2]};
    // |e1 x e2| is twice the face area, so summing raw cross products weights by area.
    const std::array<double, 3> cr{e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                                   e1[0] * e2[1] - e1[1] * e2[0]};
    for (size_t c = 0; c < 3; ++c) {
      for (size_t a = 0; a < 3; ++a) acc[static_cast<size_t>(f[c]) * 3 + a] += cr[a];
    }
  }
  std::vector<Real> attrs = mesh.attributes.defined()
                                ? mesh.attributes.vec()
                                : std::vector<Real>(static_cast<size_t>(n * kAttributeChannels), Real(0));
  for (int64_t v = 0; v < n; ++v) {
    const auto k = static_cast<size_t>(v * 3);
    const double len = std::sqrt(acc[k] * acc[k] + acc[k + 1] * acc[k + 1] + acc[k + 2] * acc[k + 2]);
    std::array<double, 3> nrm{0.0, 0.0, 1.0};
    if (len > 0) nrm = {acc[k] / len, acc[k + 1] / len, acc[k + 2] / len};
    for (size_t a = 0; a < 3; ++a) {
      attrs[static_cast<size_t>(v * kAttributeChannels + kNormalBegin) + a] = static_cast<Real>(nrm[a]);
    }
  }
  Mesh<Real> result = mesh;
  result.attributes = Tensor<Real>({n, kAttributeChannels}, std::move(attrs));
  return result;
}

template <class To, class From>
Mesh<To> mesh_cast(const Mesh<From>& m) {
  Mesh<To> out;
  if (m.positions.defined()) out.positions = m.positions.template cast<To>();
  if (m.attributes.defined()) out.attributes = m.attributes.template cast<To>();
  if (m.texture.defined()) out.texture = m.texture.template cast<To>();
  out.material = m.material.template cast<To>();
  out.faces = m.faces;
  out.vertex_mask = m.vertex_mask;
  return out;
}

}  // namespace meshmark
