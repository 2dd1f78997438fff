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

// Procedural meshes for demos, tests and desk-scale training sets.
// All are centered at the origin and fit in [-1, 1]^3.

#pragma once

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "meshmark/mesh.hpp"

namespace meshmark {

namespace detail {

template <class Real>
Mesh<Real> assemble(const std::vector<std::array<double, 3>>& pts, std::vector<Face> faces) {
  std::vector<Real> p;
  p.reserve(pts.size() * 3);
  for (const auto& q : pts) p.insert(p.end(), {static_cast<Real>(q[0]), static_cast<Real>(q[1]), static_cast<Real>(q[2])});
  Mesh<Real> m;
  const auto n = static_cast<int64_t>(pts.size());
  m.positions = Tensor<Real>({n, 3}, std::move(p));
  m.attributes = Tensor<Real>::zeros({n, kAttributeChannels});
  m.faces = std::move(faces);
  return m;
}

}  // namespace detail

template <class Real>
Mesh<Real> make_icosphere(int subdivisions, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<std::array<double, 3>> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                                          {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                                          {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  auto unit = [radius](std::array<double, 3> p) {
    const double l = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    return std::array<double, 3>{radius * p[0] / l, radius * p[1] / l, radius * p[2] / l};
  };
  for (auto& p : v) p = unit(p);
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int32_t, int32_t>, int32_t> mid;
    auto midpoint = [&](int32_t a, int32_t b) {
      const auto key = std::minmax(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      const auto& pa = v[static_cast<size_t>(a)];
      const auto& pb = v[static_cast<size_t>(b)];
      v.push_back(unit({(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2, (pa[2] + pb[2]) / 2}));
      const auto idx = static_cast<int32_t>(v.size() - 1);
      mid.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    for (const Face& tri : f) {
      const int32_t a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  return detail::assemble<Real>(v, std::move(f));
}

// Axis-aligned box with half extents (hx, hy, hz), each face split into
// `segments` x `segments` quads.
template <class Real>
Mesh<Real> make_box(double hx, double hy, double hz, int segments = 1) {
  std::vector<std::array<double, 3>> v;
  std::vector<Face> f;
  const std::array<double, 3> half{hx, hy, hz};
  for (int axis = 0; axis < 3; ++axis) {
    for (int side : {-1, 1}) {
      const int u = (axis + 1) % 3, w = (axis + 2) % 3;
      const auto base = static_cast<int32_t>(v.size());
      for (int i = 0; i <= segments; ++i) {
        for (int j = 0; j <= segments; ++j) {
          std::array<double, 3> p{};
          p[static_cast<size_t>(axis)] = side * half[static_cast<size_t>(axis)];
          p[static_cast<size_t>(u)] = (2.0 * i / segments - 1.0) * half[static_cast<size_t>(u)];
          p[static_cast<size_t>(w)] = (2.0 * j / segments - 1.0) * half[static_cast<size_t>(w)];
          v.push_back(p);
        }
      }
      for (int i = 0; i < segments; ++i) {
        for (int j = 0; j < segments; ++j) {
          const int32_t a = base + i * (segments + 1) + j, b = a + segments + 1;
          if (side > 0) {
            f.push_back({a, b, b + 1});
            f.push_back({a, b + 1, a + 1});
          } else {
            f.push_back({a, b + 1, b});
            f.push_back({a, a + 1, b + 1});
          }
        }
      }
    }
  }
  return detail::assemble<Real>(v, std::move(f));
}

template <class Real>
Mesh<Real> make_torus(double major, double minor, int rings = 16, int sides = 8) {
  std::vector<std::array<double, 3>> v;
  std::vector<Face> f;
  for (int i = 0; i < rings; ++i) {
    const double a = 2.0 * std::numbers::pi * i / rings;
    for (int j = 0; j < sides; ++j) {
      const double b = 2.0 * std::numbers::pi * j / sides;
      v.push_back({(major + minor * std::cos(b)) * std::cos(a), (major + minor * std::cos(b)) * std::sin(a),
                   minor * std::sin(b)});
    }
  }
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < sides; ++j) {
      const int32_t a = i * sides + j, b = ((i + 1) % rings) * sides + j;
      const int32_t c = ((i + 1) % rings) * sides + (j + 1) % sides, d = i * sides + (j + 1) % sides;
      f.push_back({a, b, c});
      f.push_back({a, c, d});
    }
  }
  return detail::assemble<Real>(v, std::move(f));
}

// Closed cylinder (or cone when top_radius is 0) along z.
template <class Real>
Mesh<Real> make_cylinder(double bottom_radius, double top_radius, double half_height, int sides = 16) {
  std::vector<std::array<double, 3>> v;
  std::vector<Face> f;
  for (int k = 0; k < 2; ++k) {
    const double r = k ? top_radius : bottom_radius;
    const double z = k ? half_height : -half_height;
    for (int j = 0; j < sides; ++j) {
      const double a = 2.0 * std::numbers::pi * j / sides;
      v.push_back({r * std::cos(a), r * std::sin(a), z});
    }
  }
  const auto bottom = static_cast<int32_t>(v.size());
  v.push_back({0, 0, -half_height});
  const auto top = static_cast<int32_t>(v.size());
  v.push_back({0, 0, half_height});
  for (int j = 0; j < sides; ++j) {
    const int32_t a = j, b = (j + 1) % sides, c = sides + (j + 1) % sides, d = sides + j;
    f.push_back({a, b, c});
    if (top_radius > 0) f.push_back({a, c, d});
    f.push_back({bottom, b, a});
    if (top_radius > 0) f.push_back({top, d, c});
  }
  if (top_radius <= 0) {
    // Cone: the top ring collapses onto the apex.
    for (auto& face : f) {
      for (auto& idx : face) {
        if (idx >= sides && idx < 2 * sides) idx = top;
      }
    }
    std::vector<Face> kept;
    for (const auto& face : f) {
      if (face[0] != face[1] && face[1] != face[2] && face[0] != face[2]) kept.push_back(face);
    }
    f = std::move(kept);
  }
  return detail::assemble<Real>(v, std::move(f));
}

// Eight distinct shapes used as the desk-scale training set.
template <class Real>
std::vector<Mesh<Real>> toy_shapes() {
  return {make_icosphere<Real>(2, 0.9),
          make_box<Real>(0.8, 0.6, 0.5, 3),
          make_torus<Real>(0.7, 0.25, 20, 10),
          make_cylinder<Real>(0.6, 0.6, 0.8, 20),
          make_cylinder<Real>(0.8, 0.0, 0.8, 20),
          make_box<Real>(0.9, 0.3, 0.7, 3),
          make_torus<Real>(0.6, 0.35, 18, 12),
          make_icosphere<Real>(1, 0.8)};
}

}  // namespace meshmark
