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

// Pinhole camera, point lights and the clip-space projection.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "meshmark/ops.hpp"

namespace meshmark {

using Vec3 = std::array<double, 3>;
using Mat4 = std::array<std::array<double, 4>, 4>;

namespace detail {

inline Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }
inline Vec3 scale3(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline Mat4 matmul4(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

}  // namespace detail

struct Camera {
  Vec3 position{0, -2.5, 3};
  Vec3 look_at{0, 0, 0};
  Vec3 up{0, 0, 1};
  double fov_y = 60;  // degrees
  double aspect = 1.5;
  double near = 0.1;
  double far = 100;

  void validate() const {
    const Vec3 dir = detail::sub3(look_at, position);
    if (detail::norm3(dir) == 0) throw DataError("camera position equals look_at");
    if (detail::norm3(detail::cross3(dir, up)) <= 1e-12 * detail::norm3(dir) * detail::norm3(up)) {
      throw DataError("camera up is parallel to the view direction");
    }
    if (!(near > 0 && near < far)) throw DataError("camera needs 0 < near < far");
    if (!(fov_y > 0 && fov_y < 180)) throw DataError("camera fov_y must be in (0, 180)");
    if (!(aspect > 0)) throw DataError("camera aspect must be positive");
  }
};

template <class Real>
struct PointLight {
  Vec3 position{2, 1, 2};
  Tensor<Real> color = Tensor<Real>::full({3}, Real(1));
  std::array<double, 3> attenuation{1.0, 0.07, 0.017};  // constant, linear, quadratic

  void validate() const {
    if (color.size() != 3) throw DataError("light color must have 3 components");
    for (Real c : color.data()) {
      if (c < 0) throw DataError("light color must be non-negative");
    }
    if (!(attenuation[0] > 0)) throw DataError("light attenuation K_c must be positive");
  }
};

// Right-handed look-at view matrix.
inline Mat4 view_matrix(const Camera& cam) {
  cam.validate();
  const Vec3 f = detail::scale3(detail::sub3(cam.look_at, cam.position),
                                1.0 / detail::norm3(detail::sub3(cam.look_at, cam.position)));
  Vec3 s = detail::cross3(f, cam.up);
  s = detail::scale3(s, 1.0 / detail::norm3(s));
  const Vec3 u = detail::cross3(s, f);
  Mat4 m{};
  for (int j = 0; j < 3; ++j) {
    m[0][j] = s[static_cast<size_t>(j)];
    m[1][j] = u[static_cast<size_t>(j)];
    m[2][j] = -f[static_cast<size_t>(j)];
  }
  m[0][3] = -detail::dot3(s, cam.position);
  m[1][3] = -detail::dot3(u, cam.position);
  m[2][3] = detail::dot3(f, cam.position);
  m[3][3] = 1;
  return m;
}

// Perspective projection mapping view depth -near..-far to NDC z -1..1.
inline Mat4 projection_matrix(const Camera& cam) {
  cam.validate();
  const double t = 1.0 / std::tan(cam.fov_y * std::numbers::pi / 360.0);
  Mat4 m{};
  m[0][0] = t / cam.aspect;
  m[1][1] = t;
  m[2][2] = (cam.far + cam.near) / (cam.near - cam.far);
  m[2][3] = 2.0 * cam.far * cam.near / (cam.near - cam.far);
  m[3][2] = -1;
  return m;
}

// Homogeneous clip coordinates [N,4] of world positions [N,3].
template <class Real>
Tensor<Real> project_vertices(const Tensor<Real>& positions, const Camera& cam) {
  if (positions.rank() != 2 || positions.dim(1) != 3) {
    throw ShapeError("project_vertices: positions must be [N,3], got " + to_string(positions.shape()));
  }
  const Mat4 m = detail::matmul4(projection_matrix(cam), view_matrix(cam));
  const int64_t n = positions.dim(0);
  const auto& p = positions.vec();
  std::vector<Real> out(static_cast<size_t>(n * 4));
  for (int64_t v = 0; v < n; ++v) {
    const double x = p[static_cast<size_t>(v * 3)], y = p[static_cast<size_t>(v * 3 + 1)],
                 z = p[static_cast<size_t>(v * 3 + 2)];
    if (x == cam.position[0] && y == cam.position[1] && z == cam.position[2]) {
      throw NumericError("project_vertices: vertex " + std::to_string(v) + " sits at the camera position");
    }
    for (int r = 0; r < 4; ++r) {
      out[static_cast<size_t>(v * 4 + r)] =
          static_cast<Real>(m[r][0] * x + m[r][1] * y + m[r][2] * z + m[r][3]);
    }
  }
  return detail::make_result<Real>(
      "project_vertices", {n, 4}, std::move(out), {&positions},
      [m, n](std::span<const Real> g, std::span<Real* const> gin) {
        for (int64_t v = 0; v < n; ++v) {
          for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int r = 0; r < 4; ++r) acc += m[r][c] * g[static_cast<size_t>(v * 4 + r)];
            gin[0][v * 3 + c] += static_cast<Real>(acc);
          }
        }
      });
}

struct CameraSampling {
  std::array<double, 2> x{0, 0};
  std::array<double, 2> y{-3, -2};
  std::array<double, 2> z{2, 4};
  Vec3 look_at{0, 0, 0};
  Vec3 up{0, 0, 1};
  double fov_y = 60;
};

struct LightSampling {
  Vec3 mean{2, 1, 2};
  double sigma = 0.2;
};

template <class Rng>
Camera sample_camera(Rng& rng, const CameraSampling& s = {}, double aspect = 1.5) {
  auto uniform = [&rng](const std::array<double, 2>& r) {
    return r[0] == r[1] ? r[0] : std::uniform_real_distribution<double>(r[0], r[1])(rng);
  };
  Camera cam;
  cam.position = {uniform(s.x), uniform(s.y), uniform(s.z)};
  cam.look_at = s.look_at;
  cam.up = s.up;
  cam.fov_y = s.fov_y;
  cam.aspect = aspect;
  return cam;
}

template <class Real, class Rng>
PointLight<Real> sample_light(Rng& rng, const LightSampling& s = {}) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PointLight<Real> light;
  for (size_t a = 0; a < 3; ++a) light.position[a] = s.mean[a] + s.sigma * normal(rng);
  return light;
}

}  // namespace meshmark
