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

// Differentiable deferred shading: interpolate vertex data at covered pixels,
// sample the texture, shade with Phong and splat the shaded points back onto
// the pixel grid.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "meshmark/camera.hpp"
#include "meshmark/raster.hpp"

namespace meshmark {

struct ShadingConstants {
  double k_a = 0.8;
  double k_d = 1.4;
  double k_r = 0.0;
};

struct SplatOptions {
  int radius = 1;
  double sigma = 0.5;
};

struct RenderOptions {
  int64_t height = 400;
  int64_t width = 600;
  ShadingConstants shading;
  SplatOptions splat;
};

namespace detail {

// Row p of the result is sum_k w[p*3+k] * values[corner[p*3+k]].
template <class Real>
Tensor<Real> blend_rows(const Tensor<Real>& values, std::vector<int64_t> corner, std::vector<Real> weight) {
  const int64_t n = values.dim(0);
  const int64_t ch = values.dim(1);
  const auto p = static_cast<int64_t>(corner.size() / 3);
  const auto& v = values.vec();
  std::vector<Real> out(static_cast<size_t>(p * ch), Real(0));
  for (int64_t i = 0; i < p; ++i) {
    for (int k = 0; k < 3; ++k) {
      const auto j = static_cast<size_t>(i * 3 + k);
      if (corner[j] < 0 || corner[j] >= n) throw ShapeError("interpolate: vertex index out of range");
      for (int64_t c = 0; c < ch; ++c) {
        out[static_cast<size_t>(i * ch + c)] += weight[j] * v[static_cast<size_t>(corner[j] * ch + c)];
      }
    }
  }
  auto ctx = std::make_shared<std::pair<std::vector<int64_t>, std::vector<Real>>>(std::move(corner),
                                                                                 std::move(weight));
  return make_result<Real>("interpolate", {p, ch}, std::move(out), {&values},
                           [ctx, p, ch](std::span<const Real> g, std::span<Real* const> gin) {
                             const auto& [cr, w] = *ctx;
                             for (int64_t i = 0; i < p; ++i) {
                               for (int k = 0; k < 3; ++k) {
                                 const auto j = static_cast<size_t>(i * 3 + k);
                                 Real* dst = gin[0] + cr[j] * ch;
                                 for (int64_t c = 0; c < ch; ++c) dst[c] += w[j] * g[static_cast<size_t>(i * ch + c)];
                               }
                             }
                           });
}

// Values [N,C] interpolated at the given pixels -> [P,C].
template <class Real>
Tensor<Real> interpolate_at(const Tensor<Real>& values, const std::vector<Face>& faces,
                            const RasterBuffers<Real>& raster, const std::vector<int64_t>& pixels) {
  if (values.rank() != 2) throw ShapeError("interpolate: values must be [N,C]");
  std::vector<int64_t> corner(pixels.size() * 3);
  std::vector<Real> weight(pixels.size() * 3);
  const auto& b = raster.bary.vec();
  for (size_t i = 0; i < pixels.size(); ++i) {
    const int32_t t = raster.tri_id[static_cast<size_t>(pixels[i])];
    if (t < 0 || static_cast<size_t>(t) >= faces.size()) throw ShapeError("interpolate: pixel is not covered");
    for (size_t k = 0; k < 3; ++k) {
      corner[i * 3 + k] = faces[static_cast<size_t>(t)][k];
      weight[i * 3 + k] = b[static_cast<size_t>(pixels[i]) * 3 + k];
    }
  }
  return blend_rows(values, std::move(corner), std::move(weight));
}

// x / |x| per row of [P,3]; rows shorter than 1e-12 map to zero.
template <class Real>
Tensor<Real> safe_normalize(const Tensor<Real>& x) {
  const int64_t p = x.dim(0);
  const auto& v = x.vec();
  std::vector<Real> out(v.size(), Real(0));
  auto inv = std::make_shared<std::vector<Real>>(static_cast<size_t>(p), Real(0));
  for (int64_t i = 0; i < p; ++i) {
    const auto k = static_cast<size_t>(i * 3);
    const Real len = std::sqrt(v[k] * v[k] + v[k + 1] * v[k + 1] + v[k + 2] * v[k + 2]);
    if (len > Real(1e-12)) {
      (*inv)[static_cast<size_t>(i)] = Real(1) / len;
      for (size_t a = 0; a < 3; ++a) out[k + a] = v[k + a] / len;
    }
  }
  auto normed = std::make_shared<std::vector<Real>>(out);
  return make_result<Real>("normalize", x.shape(), std::move(out), {&x},
                           [inv, normed, p](std::span<const Real> g, std::span<Real* const> gin) {
                             for (int64_t i = 0; i < p; ++i) {
                               const Real s = (*inv)[static_cast<size_t>(i)];
                               if (s == Real(0)) continue;
                               const auto k = static_cast<size_t>(i * 3);
                               const Real* n = normed->data() + k;
                               const Real gn = g[k] * n[0] + g[k + 1] * n[1] + g[k + 2] * n[2];
                               for (size_t a = 0; a < 3; ++a) gin[0][k + a] += s * (g[k + a] - gn * n[a]);
                             }
                           });
}

// base^e for base > 0, else 0; e is a one-element tensor.
template <class Real>
Tensor<Real> positive_power(const Tensor<Real>& base, const Tensor<Real>& e) {
  const Real ex = e.vec().front();
  const auto& b = base.vec();
  std::vector<Real> out(b.size(), Real(0));
  for (size_t i = 0; i < b.size(); ++i) {
    if (b[i] > Real(0)) out[i] = std::pow(b[i], ex);
  }
  auto ctx = std::make_shared<std::pair<std::vector<Real>, std::vector<Real>>>(b, out);
  return make_result<Real>("positive_power", base.shape(), std::move(out), {&base, &e},
                           [ctx, ex](std::span<const Real> g, std::span<Real* const> gin) {
                             const auto& [bv, ov] = *ctx;
                             for (size_t i = 0; i < bv.size(); ++i) {
                               if (!(bv[i] > Real(0))) continue;
                               if (gin[0]) gin[0][i] += g[i] * ex * ov[i] / bv[i];
                               if (gin[1]) gin[1][0] += g[i] * ov[i] * std::log(bv[i]);
                             }
                           });
}

// Perspective divide and viewport transform of clip positions [P,4] -> [P,2].
template <class Real>
Tensor<Real> clip_to_screen(const Tensor<Real>& clip, int64_t height, int64_t width) {
  const int64_t p = clip.dim(0);
  const auto& c = clip.vec();
  std::vector<Real> out(static_cast<size_t>(p * 2));
  const Real hw = Real(0.5) * static_cast<Real>(width), hh = Real(0.5) * static_cast<Real>(height);
  for (int64_t i = 0; i < p; ++i) {
    const auto k = static_cast<size_t>(i * 4);
    out[static_cast<size_t>(i * 2)] = (c[k] / c[k + 3] + Real(1)) * hw;
    out[static_cast<size_t>(i * 2 + 1)] = (Real(1) - c[k + 1] / c[k + 3]) * hh;
  }
  auto cv = std::make_shared<std::vector<Real>>(c);
  return make_result<Real>("clip_to_screen", {p, 2}, std::move(out), {&clip},
                           [cv, p, hw, hh](std::span<const Real> g, std::span<Real* const> gin) {
                             const auto& cc = *cv;
                             for (int64_t i = 0; i < p; ++i) {
                               const auto k = static_cast<size_t>(i * 4);
                               const Real iw = Real(1) / cc[k + 3];
                               const Real gx = g[static_cast<size_t>(i * 2)] * hw;
                               const Real gy = -g[static_cast<size_t>(i * 2 + 1)] * hh;
                               gin[0][k] += gx * iw;
                               gin[0][k + 1] += gy * iw;
                               gin[0][k + 3] -= (gx * cc[k] + gy * cc[k + 1]) * iw * iw;
                             }
                           });
}

}  // namespace detail

// Full-frame attribute map [H,W,C]; background pixels are zero.
template <class Real>
Tensor<Real> interpolate_attributes(const Tensor<Real>& attributes, const std::vector<Face>& faces,
                                    const RasterBuffers<Real>& raster) {
  const std::vector<int64_t> pixels = raster.covered();
  const Tensor<Real> rows = detail::interpolate_at(attributes, faces, raster, pixels);
  const int64_t ch = attributes.dim(1);
  return reshape(scatter_rows(rows, pixels, raster.height * raster.width), {raster.height, raster.width, ch});
}

// Bilinear lookup with wrap-around. uv (0,0) is the bottom-left image corner,
// texel (i, j) is centered at ((j + 0.5) / W, 1 - (i + 0.5) / H).
template <class Real>
Tensor<Real> sample_texture(const Tensor<Real>& texture, const Tensor<Real>& uv) {
  if (texture.rank() != 3 || texture.dim(2) != 3) {
    throw ShapeError("sample_texture: texture must be [H,W,3], got " + to_string(texture.shape()));
  }
  if (uv.rank() < 1 || uv.dim(-1) != 2) throw ShapeError("sample_texture: uv must be [...,2]");
  const int64_t th = texture.dim(0), tw = texture.dim(1);
  if (th < 1 || tw < 1) throw ShapeError("sample_texture: empty texture");
  const int64_t p = uv.size() / 2;
  Shape shape = uv.shape();
  shape.back() = 3;
  struct Tap {
    int64_t idx[4];
    Real fx, fy;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(p));
  const auto& u = uv.vec();
  const auto& t = texture.vec();
  std::vector<Real> out(static_cast<size_t>(p * 3));
  auto wrap = [](int64_t i, int64_t n) { return ((i % n) + n) % n; };
  for (int64_t i = 0; i < p; ++i) {
    const double x = static_cast<double>(u[static_cast<size_t>(i * 2)]) * static_cast<double>(tw) - 0.5;
    const double y = (1.0 - static_cast<double>(u[static_cast<size_t>(i * 2 + 1)])) * static_cast<double>(th) - 0.5;
    const double x0 = std::floor(x), y0 = std::floor(y);
    Tap& tap = (*taps)[static_cast<size_t>(i)];
    tap.fx = static_cast<Real>(x - x0);
    tap.fy = static_cast<Real>(y - y0);
    const int64_t c0 = wrap(static_cast<int64_t>(x0), tw), c1 = wrap(static_cast<int64_t>(x0) + 1, tw);
    const int64_t r0 = wrap(static_cast<int64_t>(y0), th), r1 = wrap(static_cast<int64_t>(y0) + 1, th);
    tap.idx[0] = (r0 * tw + c0) * 3;
    tap.idx[1] = (r0 * tw + c1) * 3;
    tap.idx[2] = (r1 * tw + c0) * 3;
    tap.idx[3] = (r1 * tw + c1) * 3;
    const Real w[4] = {(1 - tap.fx) * (1 - tap.fy), tap.fx * (1 - tap.fy), (1 - tap.fx) * tap.fy, tap.fx * tap.fy};
    for (int c = 0; c < 3; ++c) {
      Real acc = 0;
      for (int k = 0; k < 4; ++k) acc += w[k] * t[static_cast<size_t>(tap.idx[k] + c)];
      out[static_cast<size_t>(i * 3 + c)] = acc;
    }
  }
  auto tex = std::make_shared<std::vector<Real>>(t);
  return detail::make_result<Real>(
      "sample_texture", std::move(shape), std::move(out), {&texture, &uv},
      [taps, tex, p, th, tw](std::span<const Real> g, std::span<Real* const> gin) {
        for (int64_t i = 0; i < p; ++i) {
          const Tap& tap = (*taps)[static_cast<size_t>(i)];
          const Real fx = tap.fx, fy = tap.fy;
          const Real* go = g.data() + i * 3;
          if (gin[0]) {
            const Real w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            for (int k = 0; k < 4; ++k) {
              for (int c = 0; c < 3; ++c) gin[0][tap.idx[k] + c] += w[k] * go[c];
            }
          }
          if (gin[1]) {
            Real dx = 0, dy = 0;
            for (int c = 0; c < 3; ++c) {
              const Real t00 = (*tex)[static_cast<size_t>(tap.idx[0] + c)], t01 = (*tex)[static_cast<size_t>(tap.idx[1] + c)];
              const Real t10 = (*tex)[static_cast<size_t>(tap.idx[2] + c)], t11 = (*tex)[static_cast<size_t>(tap.idx[3] + c)];
              dx += go[c] * ((1 - fy) * (t01 - t00) + fy * (t11 - t10));
              dy += go[c] * ((1 - fx) * (t10 - t00) + fx * (t11 - t01));
            }
            gin[1][i * 2] += dx * static_cast<Real>(tw);
            gin[1][i * 2 + 1] -= dy * static_cast<Real>(th);
          }
        }
      });
}

// Phong shading of surface points. positions [...,3] in world space,
// attributes [...,5]; returns [...,3] clamped to [0, 1]. An undefined texture
// shades as white.
template <class Real>
Tensor<Real> shade_phong(const Tensor<Real>& positions, const Tensor<Real>& attributes, const Tensor<Real>& texture,
                         const Tensor<Real>& material, const std::vector<PointLight<Real>>& lights,
                         const Camera& camera, const ShadingConstants& k = {}) {
  if (positions.dim(-1) != 3 || attributes.dim(-1) != kAttributeChannels) {
    throw ShapeError("shade_phong: expected [...,3] positions and [...,5] attributes");
  }
  if (material.size() != kMaterialSize) throw ShapeError("shade_phong: material must have 10 entries");
  Shape out_shape = positions.shape();
  const int64_t p = positions.size() / 3;
  const Tensor<Real> pos = reshape(positions, {p, 3});
  const Tensor<Real> attrs = reshape(attributes, {p, kAttributeChannels});
  const Tensor<Real> n = detail::safe_normalize(slice(attrs, 1, kNormalBegin, kNormalBegin + 3));
  const Tensor<Real> tex = texture.defined() ? sample_texture(texture, slice(attrs, 1, kTexcoordBegin, kTexcoordBegin + 2))
                                             : Tensor<Real>::full({p, 3}, Real(1));
  const Tensor<Real> ambient = slice(material, 0, 0, 3);
  const Tensor<Real> diffuse = slice(material, 0, 3, 6);
  const Tensor<Real> k_a = Tensor<Real>::scalar(static_cast<Real>(k.k_a));
  const Tensor<Real> k_d = Tensor<Real>::scalar(static_cast<Real>(k.k_d));
  Tensor<Real> view;
  if (k.k_r != 0) {
    const Tensor<Real> eye({3}, {static_cast<Real>(camera.position[0]), static_cast<Real>(camera.position[1]),
                                 static_cast<Real>(camera.position[2])});
    view = detail::safe_normalize(sub(eye, pos));
  }
  Tensor<Real> color = Tensor<Real>::zeros({p, 3});
  for (const auto& light : lights) {
    light.validate();
    const Tensor<Real> lp({3}, {static_cast<Real>(light.position[0]), static_cast<Real>(light.position[1]),
                                static_cast<Real>(light.position[2])});
    const Tensor<Real> to_light = sub(lp, pos);
    const Tensor<Real> d2 = sum_axis(square(to_light), 1, true);
    const Tensor<Real> d = sqrt(d2);
    const auto& kc = light.attenuation;
    const Tensor<Real> att =
        Real(1) / ((d * static_cast<Real>(kc[1]) + d2 * static_cast<Real>(kc[2])) + static_cast<Real>(kc[0]));
    const Tensor<Real> l = detail::safe_normalize(to_light);
    const Tensor<Real> ndl = sum_axis(mul(n, l), 1, true);
    const Tensor<Real> lit = add(mul(k_a, ambient), mul(mul(k_d, diffuse), relu(ndl)));
    Tensor<Real> term = mul(mul(mul(att, light.color), tex), lit);
    if (k.k_r != 0) {
      const Tensor<Real> r = sub(mul(mul(Tensor<Real>::scalar(Real(2)), ndl), n), l);
      const Tensor<Real> rv = relu(sum_axis(mul(r, view), 1, true));
      const Tensor<Real> spec = detail::positive_power(rv, slice(material, 0, 9, 10));
      term = add(term, mul(mul(mul(att, light.color), slice(material, 0, 6, 9)),
                           mul(spec, Tensor<Real>::scalar(static_cast<Real>(k.k_r)))));
    }
    color = add(color, term);
  }
  return reshape(clamp(color, Real(0), Real(1)), std::move(out_shape));
}

// Deposits colors [P,3] from splat centers [P,2] (continuous pixel
// coordinates) onto an H x W image. Splat i owns pixel `pixels[i]` and covers
// its (2r+1)^2 neighbourhood with a normalized truncated Gaussian. Each output
// pixel divides by max(1, accumulated weight).
template <class Real>
Tensor<Real> splat(const Tensor<Real>& colors, const Tensor<Real>& centers, const std::vector<int64_t>& pixels,
                   int64_t height, int64_t width, const SplatOptions& opt = {}) {
  const auto p = static_cast<int64_t>(pixels.size());
  if (colors.rank() != 2 || colors.dim(0) != p || colors.dim(1) != 3) {
    throw ShapeError("splat: colors must be [P,3], got " + to_string(colors.shape()));
  }
  if (centers.rank() != 2 || centers.dim(0) != p || centers.dim(1) != 2) {
    throw ShapeError("splat: centers must be [P,2], got " + to_string(centers.shape()));
  }
  if (opt.radius < 0 || !(opt.sigma > 0)) throw ShapeError("splat: radius must be >= 0 and sigma > 0");
  const int r = opt.radius;
  const int side = 2 * r + 1;
  const auto taps = static_cast<size_t>(side * side);
  const double inv2s2 = 1.0 / (2.0 * opt.sigma * opt.sigma);
  const double inv_s2 = 1.0 / (opt.sigma * opt.sigma);
  const auto& cv = colors.vec();
  const auto& sv = centers.vec();

  // Per splat, the normalized weight of each tap; taps off-image keep their
  // share of the normalizer so edge pixels lose energy instead of gaining it.
  auto weight = std::make_shared<std::vector<Real>>(static_cast<size_t>(p) * taps, Real(0));
  auto dwx = std::make_shared<std::vector<Real>>(static_cast<size_t>(p) * taps, Real(0));
  auto dwy = std::make_shared<std::vector<Real>>(static_cast<size_t>(p) * taps, Real(0));
  std::vector<double> acc(static_cast<size_t>(height * width), 0.0);
  std::vector<double> sum(static_cast<size_t>(height * width * 3), 0.0);
  std::vector<double> g(taps), ax(taps), ay(taps);
  for (int64_t i = 0; i < p; ++i) {
    const int64_t py = pixels[static_cast<size_t>(i)] / width, px = pixels[static_cast<size_t>(i)] % width;
    const double cx = sv[static_cast<size_t>(i * 2)], cy = sv[static_cast<size_t>(i * 2 + 1)];
    double total = 0;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const auto t = static_cast<size_t>((dy + r) * side + dx + r);
        ax[t] = static_cast<double>(px + dx) + 0.5 - cx;
        ay[t] = static_cast<double>(py + dy) + 0.5 - cy;
        g[t] = std::exp(-(ax[t] * ax[t] + ay[t] * ay[t]) * inv2s2);
        total += g[t];
      }
    }
    double mx = 0, my = 0;
    for (size_t t = 0; t < taps; ++t) {
      g[t] /= total;
      mx += g[t] * ax[t];
      my += g[t] * ay[t];
    }
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const auto t = static_cast<size_t>((dy + r) * side + dx + r);
        const size_t slot = static_cast<size_t>(i) * taps + t;
        (*weight)[slot] = static_cast<Real>(g[t]);
        (*dwx)[slot] = static_cast<Real>(g[t] * (ax[t] - mx) * inv_s2);
        (*dwy)[slot] = static_cast<Real>(g[t] * (ay[t] - my) * inv_s2);
        const int64_t qy = py + dy, qx = px + dx;
        if (qy < 0 || qy >= height || qx < 0 || qx >= width) continue;
        const auto q = static_cast<size_t>(qy * width + qx);
        acc[q] += g[t];
        for (size_t c = 0; c < 3; ++c) sum[q * 3 + c] += g[t] * cv[static_cast<size_t>(i * 3) + c];
      }
    }
  }
  std::vector<Real> out(sum.size());
  auto denom = std::make_shared<std::vector<Real>>(acc.size());
  auto heavy = std::make_shared<std::vector<uint8_t>>(acc.size());
  for (size_t q = 0; q < acc.size(); ++q) {
    const double d = std::max(1.0, acc[q]);
    (*denom)[q] = static_cast<Real>(d);
    (*heavy)[q] = acc[q] > 1.0;
    for (size_t c = 0; c < 3; ++c) out[q * 3 + c] = static_cast<Real>(sum[q * 3 + c] / d);
  }
  auto image = std::make_shared<std::vector<Real>>(out);
  auto pix = std::make_shared<std::vector<int64_t>>(pixels);
  auto col = std::make_shared<std::vector<Real>>(cv);
  return detail::make_result<Real>(
      "splat", {height, width, 3}, std::move(out), {&colors, &centers},
      [=](std::span<const Real> go, std::span<Real* const> gin) {
        for (int64_t i = 0; i < p; ++i) {
          const int64_t py = (*pix)[static_cast<size_t>(i)] / width, px = (*pix)[static_cast<size_t>(i)] % width;
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              const int64_t qy = py + dy, qx = px + dx;
              if (qy < 0 || qy >= height || qx < 0 || qx >= width) continue;
              const auto q = static_cast<size_t>(qy * width + qx);
              const size_t slot = static_cast<size_t>(i) * taps + static_cast<size_t>((dy + r) * side + dx + r);
              const Real inv = Real(1) / (*denom)[q];
              if (gin[0]) {
                for (size_t c = 0; c < 3; ++c) gin[0][static_cast<size_t>(i * 3) + c] += (*weight)[slot] * go[q * 3 + c] * inv;
              }
              if (gin[1]) {
                // d out_q / d w = (color_i - [W_q > 1] out_q) / max(1, W_q)
                Real dw = 0;
                for (size_t c = 0; c < 3; ++c) {
                  const Real rel = (*col)[static_cast<size_t>(i * 3) + c] - ((*heavy)[q] ? (*image)[q * 3 + c] : Real(0));
                  dw += go[q * 3 + c] * rel * inv;
                }
                gin[1][i * 2] += dw * (*dwx)[slot];
                gin[1][i * 2 + 1] += dw * (*dwy)[slot];
              }
            }
          }
        }
      });
}

// Every pixel of an [H,W,3] color map splats from the matching [H,W,2] center.
template <class Real>
Tensor<Real> splat(const Tensor<Real>& colors, const Tensor<Real>& centers, const SplatOptions& opt = {}) {
  if (colors.rank() != 3 || centers.rank() != 3) throw ShapeError("splat: expected [H,W,3] colors and [H,W,2] centers");
  const int64_t h = colors.dim(0), w = colors.dim(1);
  std::vector<int64_t> pixels(static_cast<size_t>(h * w));
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<int64_t>(i);
  return splat(reshape(colors, {h * w, 3}), reshape(centers, {h * w, 2}), pixels, h, w, opt);
}

// project -> rasterize -> interpolate -> texture -> shade -> splat.
template <class Real>
Tensor<Real> render(const Mesh<Real>& mesh, const Camera& camera, const std::vector<PointLight<Real>>& lights,
                    const RenderOptions& opt = {}) {
  Camera cam = camera;
  cam.aspect = static_cast<double>(opt.width) / static_cast<double>(opt.height);
  if (mesh.num_vertices() == 0 || mesh.faces.empty()) {
    cam.validate();
    return Tensor<Real>::zeros({opt.height, opt.width, 3});
  }
  mesh.validate();
  const Tensor<Real> clip = project_vertices(mesh.positions, cam);
  const RasterBuffers<Real> raster = rasterize(clip, mesh.faces, opt.height, opt.width, mesh.vertex_mask);
  const std::vector<int64_t> pixels = raster.covered();
  if (pixels.empty()) return Tensor<Real>::zeros({opt.height, opt.width, 3});
  const Tensor<Real> pos = detail::interpolate_at(mesh.positions, mesh.faces, raster, pixels);
  const Tensor<Real> attrs = detail::interpolate_at(mesh.attributes, mesh.faces, raster, pixels);
  const Tensor<Real> clip_px = detail::interpolate_at(clip, mesh.faces, raster, pixels);
  const Tensor<Real> colors = shade_phong(pos, attrs, mesh.texture, mesh.material, lights, cam, opt.shading);
  const Tensor<Real> centers = detail::clip_to_screen(clip_px, opt.height, opt.width);
  return splat(colors, centers, pixels, opt.height, opt.width, opt.splat);
}

template <class Real>
Tensor<Real> render(const Mesh<Real>& mesh, const Camera& camera, const PointLight<Real>& light,
                    const RenderOptions& opt = {}) {
  return render(mesh, camera, std::vector<PointLight<Real>>{light}, opt);
}

}  // namespace meshmark
