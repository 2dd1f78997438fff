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

// Visibility pass: front-most triangle id and perspective-correct
// barycentrics per pixel. Not differentiated.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "meshmark/mesh.hpp"

namespace meshmark {

template <class Real>
struct RasterBuffers {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<int32_t> tri_id;  // [H*W], -1 = background
  Tensor<Real> bary;            // [H,W,3]
  Tensor<Real> clip_pos;        // [H,W,4], zero on background

  int32_t at(int64_t y, int64_t x) const { return tri_id[static_cast<size_t>(y * width + x)]; }

  std::vector<int64_t> covered() const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < tri_id.size(); ++i) {
      if (tri_id[i] >= 0) out.push_back(static_cast<int64_t>(i));
    }
    return out;
  }
};

// Pixel centers sit at (x + 0.5, y + 0.5) with a top-left origin. Faces
// touching a masked vertex (mask[v] == 0) or a vertex with w <= 0 are skipped.
// Ties in depth keep the lower face index.
template <class Real>
RasterBuffers<Real> rasterize(const Tensor<Real>& clip, const std::vector<Face>& faces, int64_t height,
                              int64_t width, std::span<const uint8_t> vertex_mask = {}) {
  if (height < 1 || width < 1) throw ShapeError("rasterize: image size must be at least 1x1");
  if (clip.rank() != 2 || clip.dim(1) != 4) {
    throw ShapeError("rasterize: clip positions must be [N,4], got " + to_string(clip.shape()));
  }
  const int64_t nv = clip.dim(0);
  const auto& c = clip.vec();
  const auto npx = static_cast<size_t>(height * width);
  std::vector<int32_t> tri(npx, -1);
  std::vector<double> depth(npx, 2.0);
  std::vector<std::array<double, 3>> bary(npx, {0, 0, 0});

  for (size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    double sx[3], sy[3], sz[3], iw[3];
    bool skip = false;
    for (int k = 0; k < 3; ++k) {
      const int32_t v = face[static_cast<size_t>(k)];
      if (v < 0 || v >= nv) throw ShapeError("rasterize: face index out of range");
      if (!vertex_mask.empty() && !vertex_mask[static_cast<size_t>(v)]) skip = true;
      const double w = c[static_cast<size_t>(v * 4 + 3)];
      if (!(w > 0)) {
        skip = true;
        break;
      }
      iw[k] = 1.0 / w;
      sx[k] = (c[static_cast<size_t>(v * 4)] * iw[k] + 1.0) * 0.5 * static_cast<double>(width);
      sy[k] = (1.0 - c[static_cast<size_t>(v * 4 + 1)] * iw[k]) * 0.5 * static_cast<double>(height);
      sz[k] = c[static_cast<size_t>(v * 4 + 2)] * iw[k];
    }
    if (skip) continue;
    const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
    if (area == 0 || !std::isfinite(area)) continue;
    const double lo_x = std::min({sx[0], sx[1], sx[2]}), hi_x = std::max({sx[0], sx[1], sx[2]});
    const double lo_y = std::min({sy[0], sy[1], sy[2]}), hi_y = std::max({sy[0], sy[1], sy[2]});
    const auto x0 = static_cast<int64_t>(std::max(0.0, std::floor(lo_x - 0.5)));
    const auto x1 = static_cast<int64_t>(std::min(static_cast<double>(width - 1), std::ceil(hi_x - 0.5)));
    const auto y0 = static_cast<int64_t>(std::max(0.0, std::floor(lo_y - 0.5)));
    const auto y1 = static_cast<int64_t>(std::min(static_cast<double>(height - 1), std::ceil(hi_y - 0.5)));
    for (int64_t y = y0; y <= y1; ++y) {
      const double py = static_cast<double>(y) + 0.5;
      for (int64_t x = x0; x <= x1; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        // Screen-space barycentrics from edge functions.
        double l[3];
        for (int k = 0; k < 3; ++k) {
          const int a = (k + 1) % 3, b = (k + 2) % 3;
          l[k] = ((sx[b] - sx[a]) * (py - sy[a]) - (sy[b] - sy[a]) * (px - sx[a])) / area;
        }
        if (l[0] < 0 || l[1] < 0 || l[2] < 0) continue;
        const double z = l[0] * sz[0] + l[1] * sz[1] + l[2] * sz[2];
        if (z < -1 || z > 1) continue;
        const size_t p = static_cast<size_t>(y * width + x);
        if (!(z < depth[p])) continue;
        const double q0 = l[0] * iw[0], q1 = l[1] * iw[1], q2 = l[2] * iw[2];
        const double s = q0 + q1 + q2;
        depth[p] = z;
        tri[p] = static_cast<int32_t>(f);
        bary[p] = {q0 / s, q1 / s, q2 / s};
      }
    }
  }

  RasterBuffers<Real> out;
  out.height = height;
  out.width = width;
  std::vector<Real> b(npx * 3, Real(0)), cp(npx * 4, Real(0));
  for (size_t p = 0; p < npx; ++p) {
    if (tri[p] < 0) continue;
    const Face& face = faces[static_cast<size_t>(tri[p])];
    for (int k = 0; k < 3; ++k) {
      b[p * 3 + static_cast<size_t>(k)] = static_cast<Real>(bary[p][static_cast<size_t>(k)]);
      for (int r = 0; r < 4; ++r) {
        cp[p * 4 + static_cast<size_t>(r)] += static_cast<Real>(
            bary[p][static_cast<size_t>(k)] * c[static_cast<size_t>(face[static_cast<size_t>(k)] * 4 + r)]);
      }
    }
  }
  out.tri_id = std::move(tri);
  out.bary = Tensor<Real>({height, width, 3}, std::move(b));
  out.clip_pos = Tensor<Real>({height, width, 4}, std::move(cp));
  return out;
}

}  // namespace meshmark
