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

// Random 3D distortions applied to a watermarked mesh before rendering.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "meshmark/mesh.hpp"
#include "meshmark/ops.hpp"

namespace meshmark {

enum class DistortionKind { kNone, kNoise, kRotation, kScaling, kCropping };

inline std::string to_string(DistortionKind k) {
  switch (k) {
    case DistortionKind::kNone: return "none";
    case DistortionKind::kNoise: return "noise";
    case DistortionKind::kRotation: return "rotation";
    case DistortionKind::kScaling: return "scaling";
    case DistortionKind::kCropping: return "cropping";
  }
  return "none";
}

inline DistortionKind distortion_kind_from_string(const std::string& s) {
  for (auto k : {DistortionKind::kNone, DistortionKind::kNoise, DistortionKind::kRotation, DistortionKind::kScaling,
                 DistortionKind::kCropping}) {
    if (to_string(k) == s) return k;
  }
  throw DataError("unknown distortion kind '" + s + "'");
}

struct DistortionSpec {
  DistortionKind kind = DistortionKind::kNone;
  double mean = 0;       // noise
  double sigma = 0;      // noise
  double max_angle = 0;  // rotation, radians
  double max_scale = 0;  // scaling: factor in [1 - s, 1 + s]
  double max_crop = 0;   // cropping: removed vertex fraction in [0, c]

  void validate() const {
    if (!(sigma >= 0)) throw DataError("distortion: noise sigma must be >= 0");
    if (!std::isfinite(mean)) throw DataError("distortion: noise mean must be finite");
    if (!(max_angle >= 0 && max_angle <= std::numbers::pi)) throw DataError("distortion: angle must be in [0, pi]");
    if (!(max_scale >= 0 && max_scale < 1)) throw DataError("distortion: scale must be in [0, 1)");
    if (!(max_crop >= 0 && max_crop < 1)) throw DataError("distortion: crop fraction must be in [0, 1)");
  }

  // Spec of `kind` whose single strength parameter is `strength`.
  static DistortionSpec of(DistortionKind kind, double strength) {
    DistortionSpec s;
    s.kind = kind;
    switch (kind) {
      case DistortionKind::kNone: break;
      case DistortionKind::kNoise: s.sigma = strength; break;
      case DistortionKind::kRotation: s.max_angle = strength; break;
      case DistortionKind::kScaling: s.max_scale = strength; break;
      case DistortionKind::kCropping: s.max_crop = strength; break;
    }
    return s;
  }
};

// Rotation matrix about a unit axis (Rodrigues).
inline std::array<double, 9> axis_angle_matrix(const std::array<double, 3>& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,  //
          t * x * y + s * z, t * y * y + c,     t * y * z - s * x,  //
          t * x * z - s * y, t * y * z + s * x, t * z * z + c};
}

namespace detail {

template <class Rng>
std::array<double, 3> random_unit_vector(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    std::array<double, 3> v{normal(rng), normal(rng), normal(rng)};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len > 1e-9) return {v[0] / len, v[1] / len, v[2] / len};
  }
}

// Rows of x [N,3] multiplied by R: x R^T.
template <class Real>
Tensor<Real> rotate_rows(const Tensor<Real>& x, const std::array<double, 9>& r) {
  std::vector<Real> rt(9);
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 3; ++j) rt[i * 3 + j] = static_cast<Real>(r[j * 3 + i]);
  }
  return matmul(x, Tensor<Real>({3, 3}, std::move(rt)));
}

}  // namespace detail

template <class Real, class Rng>
Mesh<Real> apply(const Mesh<Real>& mesh, const DistortionSpec& spec, Rng& rng) {
  spec.validate();
  Mesh<Real> out = mesh;
  const int64_t n = mesh.num_vertices();
  switch (spec.kind) {
    case DistortionKind::kNone:
      return out;
    case DistortionKind::kNoise: {
      std::normal_distribution<double> normal(spec.mean, spec.sigma > 0 ? spec.sigma : 1.0);
      std::vector<Real> noise(static_cast<size_t>(n * 3));
      for (auto& v : noise) v = static_cast<Real>(spec.sigma > 0 ? normal(rng) : spec.mean);
      out.positions = add(mesh.positions, Tensor<Real>({n, 3}, std::move(noise)));
      return out;
    }
    case DistortionKind::kRotation: {
      const auto axis = detail::random_unit_vector(rng);
      const double angle =
          spec.max_angle > 0 ? std::uniform_real_distribution<double>(-spec.max_angle, spec.max_angle)(rng) : 0.0;
      const auto r = axis_angle_matrix(axis, angle);
      out.positions = detail::rotate_rows(mesh.positions, r);
      if (mesh.attributes.defined()) {
        out.attributes = concat<Real>({detail::rotate_rows(slice(mesh.attributes, 1, kNormalBegin, kNormalBegin + 3), r),
                                       slice(mesh.attributes, 1, kTexcoordBegin, kAttributeChannels)},
                                      1);
      }
      return out;
    }
    case DistortionKind::kScaling: {
      const double f =
          spec.max_scale > 0 ? std::uniform_real_distribution<double>(1 - spec.max_scale, 1 + spec.max_scale)(rng) : 1.0;
      out.positions = mul(mesh.positions, Tensor<Real>::scalar(static_cast<Real>(f)));
      return out;
    }
    case DistortionKind::kCropping: {
      const auto dir = detail::random_unit_vector(rng);
      const double frac = spec.max_crop > 0 ? std::uniform_real_distribution<double>(0, spec.max_crop)(rng) : 0.0;
      const auto removed = static_cast<int64_t>(std::floor(frac * static_cast<double>(n)));
      const auto& p = mesh.positions.vec();
      std::vector<double> proj(static_cast<size_t>(n));
      for (int64_t v = 0; v < n; ++v) {
        const auto k = static_cast<size_t>(v * 3);
        proj[static_cast<size_t>(v)] = dir[0] * p[k] + dir[1] * p[k + 1] + dir[2] * p[k + 2];
      }
      std::vector<int64_t> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), int64_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](int64_t a, int64_t b) { return proj[static_cast<size_t>(a)] > proj[static_cast<size_t>(b)]; });
      if (out.vertex_mask.empty()) out.vertex_mask.assign(static_cast<size_t>(n), 1);
      for (int64_t i = 0; i < removed; ++i) out.vertex_mask[static_cast<size_t>(order[static_cast<size_t>(i)])] = 0;
      return out;
    }
  }
  return out;
}

// One distorted copy per strength, each drawn from its own fixed seed.
template <class Real>
std::vector<Mesh<Real>> sweep(const Mesh<Real>& mesh, DistortionKind kind, const std::vector<double>& strengths,
                              uint64_t seed = 0) {
  if (!std::is_sorted(strengths.begin(), strengths.end())) throw DataError("sweep: strengths must be sorted");
  std::vector<Mesh<Real>> out;
  out.reserve(strengths.size());
  for (size_t i = 0; i < strengths.size(); ++i) {
    if (strengths[i] == 0) {
      out.push_back(mesh);
      continue;
    }
    std::mt19937_64 rng(seed + 7919 * (i + 1));
    out.push_back(apply(mesh, DistortionSpec::of(kind, strengths[i]), rng));
  }
  return out;
}

}  // namespace meshmark
