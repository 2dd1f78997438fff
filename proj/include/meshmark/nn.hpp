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

// Layer primitives: 2-D convolution, batch normalization and pooling.
// Images are channels-last: [H, W, C] or batched [N, H, W, C].

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "meshmark/ops.hpp"

namespace meshmark {

enum class Padding { kValid, kSame };
enum class BatchNormMode { kTrain, kEval };
enum class PoolKind { kMaxWindow, kGlobalMean, kGlobalMax };

namespace detail {

struct ConvGeometry {
  int64_t n, h, w, ci;
  int64_t kh, kw, co;
  int64_t oh, ow;
  int64_t stride;
  int64_t pad_top, pad_left;
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& k, Padding padding,
                                  int stride) {
  if (x.size() != 3 && x.size() != 4) {
    throw ShapeError("conv2d input must be [H,W,C] or [N,H,W,C], got " + to_string(x));
  }
  if (k.size() != 4) throw ShapeError("conv2d kernel must be [KH,KW,Cin,Cout]");
  if (stride < 1) throw ShapeError("conv2d stride must be positive");
  ConvGeometry g{};
  const size_t off = x.size() == 4 ? 1 : 0;
  g.n = x.size() == 4 ? x[0] : 1;
  g.h = x[off];
  g.w = x[off + 1];
  g.ci = x[off + 2];
  g.kh = k[0];
  g.kw = k[1];
  g.co = k[3];
  g.stride = stride;
  if (k[2] != g.ci) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(k[2]) +
                     " input channels, input has " + std::to_string(g.ci));
  }
  if (padding == Padding::kValid) {
    if (g.h < g.kh || g.w < g.kw) {
      throw ShapeError("conv2d: input " + to_string(x) +
                       " is smaller than the kernel under valid padding");
    }
    g.oh = (g.h - g.kh) / stride + 1;
    g.ow = (g.w - g.kw) / stride + 1;
    g.pad_top = g.pad_left = 0;
  } else {
    g.oh = (g.h + stride - 1) / stride;
    g.ow = (g.w + stride - 1) / stride;
    const int64_t ph = std::max<int64_t>((g.oh - 1) * stride + g.kh - g.h, 0);
    const int64_t pw = std::max<int64_t>((g.ow - 1) * stride + g.kw - g.w, 0);
    g.pad_top = ph / 2;
    g.pad_left = pw / 2;
  }
  return g;
}

// Unfolds receptive fields into rows: [N*OH*OW, KH*KW*Cin].
template <class Real>
void im2col(const Real* x, const ConvGeometry& g, Real* col) {
  const int64_t patch = g.kh * g.kw * g.ci;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t oy = 0; oy < g.oh; ++oy) {
      for (int64_t ox = 0; ox < g.ow; ++ox) {
        Real* row = col + ((n * g.oh + oy) * g.ow + ox) * patch;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t iy = oy * g.stride + ky - g.pad_top;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride + kx - g.pad_left;
            Real* dst = row + (ky * g.kw + kx) * g.ci;
            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
              std::fill_n(dst, g.ci, Real(0));
            } else {
              std::copy_n(x + ((n * g.h + iy) * g.w + ix) * g.ci, g.ci, dst);
            }
          }
        }
      }
    }
  }
}

template <class Real>
void col2im_add(const Real* col, const ConvGeometry& g, Real* x) {
  const int64_t patch = g.kh * g.kw * g.ci;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t oy = 0; oy < g.oh; ++oy) {
      for (int64_t ox = 0; ox < g.ow; ++ox) {
        const Real* row = col + ((n * g.oh + oy) * g.ow + ox) * patch;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const Real* src = row + (ky * g.kw + kx) * g.ci;
            Real* dst = x + ((n * g.h + iy) * g.w + ix) * g.ci;
            for (int64_t c = 0; c < g.ci; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation of `x` with `kernel` [KH, KW, Cin, Cout]. Same padding
// follows the usual split (extra row/column at the bottom/right), so the
// output extent is ceil(H / stride).
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                    Padding padding = Padding::kSame, int stride = 1) {
  const auto g = detail::conv_geometry(x.shape(), kernel.shape(), padding, stride);
  const int64_t rows = g.n * g.oh * g.ow;
  const int64_t patch = g.kh * g.kw * g.ci;
  std::vector<Real> col(static_cast<size_t>(rows * patch));
  detail::im2col(x.data().data(), g, col.data());
  std::vector<Real> out(static_cast<size_t>(rows * g.co));
  detail::MapRowMat<Real>(out.data(), rows, g.co).noalias() =
      detail::ConstMapRowMat<Real>(col.data(), rows, patch) *
      detail::ConstMapRowMat<Real>(kernel.data().data(), patch, g.co);
  Shape shape = x.rank() == 4 ? Shape{g.n, g.oh, g.ow, g.co} : Shape{g.oh, g.ow, g.co};
  auto sx = x.storage();
  auto sk = kernel.storage();
  return detail::make_result<Real>(
      "conv2d", std::move(shape), std::move(out), {&x, &kernel},
      [sx, sk, g, rows, patch](std::span<const Real> grad, std::span<Real* const> gin) {
        detail::ConstMapRowMat<Real> dout(grad.data(), rows, g.co);
        if (gin[1]) {
          std::vector<Real> col(static_cast<size_t>(rows * patch));
          detail::im2col(sx->data(), g, col.data());
          detail::MapRowMat<Real>(gin[1], patch, g.co).noalias() +=
              detail::ConstMapRowMat<Real>(col.data(), rows, patch).transpose() * dout;
        }
        if (gin[0]) {
          std::vector<Real> dcol(static_cast<size_t>(rows * patch));
          detail::MapRowMat<Real>(dcol.data(), rows, patch).noalias() =
              dout * detail::ConstMapRowMat<Real>(sk->data(), patch, g.co).transpose();
          detail::col2im_add(dcol.data(), g, gin[0]);
        }
      });
}

// Per-channel normalization over every leading axis of `x` [..., C].
// Train mode uses the batch statistics (biased variance) and folds them into
// the running estimates with `momentum`; eval mode uses the running
// estimates only.
template <class Real>
Tensor<Real> batchnorm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                       const Tensor<Real>& beta, Tensor<Real>& running_mean,
                       Tensor<Real>& running_var, BatchNormMode mode,
                       Real momentum = Real(0.9), Real eps = Real(1e-5)) {
  if (x.rank() < 1) throw ShapeError("batchnorm of a scalar");
  const int64_t c = x.dim(-1);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("batchnorm: channel count " + std::to_string(c) +
                     " does not match its parameters");
  }
  const int64_t m = x.size() / std::max<int64_t>(c, 1);
  if (m == 0 || c == 0) throw ShapeError("batchnorm: zero-size batch");
  const auto& xv = x.vec();

  std::vector<Real> mu(static_cast<size_t>(c), Real(0));
  std::vector<Real> var(static_cast<size_t>(c), Real(0));
  if (mode == BatchNormMode::kTrain) {
    for (int64_t r = 0; r < m; ++r) {
      for (int64_t j = 0; j < c; ++j) mu[static_cast<size_t>(j)] += xv[static_cast<size_t>(r * c + j)];
    }
    for (auto& v : mu) v /= static_cast<Real>(m);
    for (int64_t r = 0; r < m; ++r) {
      for (int64_t j = 0; j < c; ++j) {
        const Real d = xv[static_cast<size_t>(r * c + j)] - mu[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<Real>(m);

    std::vector<Real> rm(running_mean.data().begin(), running_mean.data().end());
    std::vector<Real> rv(running_var.data().begin(), running_var.data().end());
    const Real unbias = m > 1 ? static_cast<Real>(m) / static_cast<Real>(m - 1) : Real(1);
    for (int64_t j = 0; j < c; ++j) {
      const auto u = static_cast<size_t>(j);
      rm[u] = momentum * rm[u] + (Real(1) - momentum) * mu[u];
      rv[u] = momentum * rv[u] + (Real(1) - momentum) * var[u] * unbias;
    }
    running_mean = Tensor<Real>(running_mean.shape(), std::move(rm));
    running_var = Tensor<Real>(running_var.shape(), std::move(rv));
  } else {
    mu.assign(running_mean.data().begin(), running_mean.data().end());
    var.assign(running_var.data().begin(), running_var.data().end());
  }

  auto inv_std = std::make_shared<std::vector<Real>>(static_cast<size_t>(c));
  for (int64_t j = 0; j < c; ++j) {
    (*inv_std)[static_cast<size_t>(j)] = Real(1) / std::sqrt(var[static_cast<size_t>(j)] + eps);
  }
  auto xhat = std::make_shared<std::vector<Real>>(xv.size());
  std::vector<Real> out(xv.size());
  const auto& gv = gamma.vec();
  const auto& bv = beta.vec();
  for (int64_t r = 0; r < m; ++r) {
    for (int64_t j = 0; j < c; ++j) {
      const auto k = static_cast<size_t>(r * c + j);
      const auto u = static_cast<size_t>(j);
      (*xhat)[k] = (xv[k] - mu[u]) * (*inv_std)[u];
      out[k] = gv[u] * (*xhat)[k] + bv[u];
    }
  }
  auto sg = gamma.storage();
  const bool train = mode == BatchNormMode::kTrain;
  return detail::make_result<Real>(
      "batchnorm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [xhat, inv_std, sg, m, c, train](std::span<const Real> g, std::span<Real* const> gin) {
        std::vector<Real> sum_g(static_cast<size_t>(c), Real(0));
        std::vector<Real> sum_gx(static_cast<size_t>(c), Real(0));
        for (int64_t r = 0; r < m; ++r) {
          for (int64_t j = 0; j < c; ++j) {
            const auto k = static_cast<size_t>(r * c + j);
            sum_g[static_cast<size_t>(j)] += g[k];
            sum_gx[static_cast<size_t>(j)] += g[k] * (*xhat)[k];
          }
        }
        if (gin[1]) {
          for (int64_t j = 0; j < c; ++j) gin[1][j] += sum_gx[static_cast<size_t>(j)];
        }
        if (gin[2]) {
          for (int64_t j = 0; j < c; ++j) gin[2][j] += sum_g[static_cast<size_t>(j)];
        }
        if (!gin[0]) return;
        const Real inv_m = Real(1) / static_cast<Real>(m);
        for (int64_t r = 0; r < m; ++r) {
          for (int64_t j = 0; j < c; ++j) {
            const auto k = static_cast<size_t>(r * c + j);
            const auto u = static_cast<size_t>(j);
            const Real scale = (*sg)[u] * (*inv_std)[u];
            if (train) {
              gin[0][k] += scale * (g[k] - inv_m * sum_g[u] - (*xhat)[k] * inv_m * sum_gx[u]);
            } else {
              gin[0][k] += scale * g[k];
            }
          }
        }
      });
}

// Pooling. kMaxWindow slides a `window` x `window` max filter with `stride`
// over the spatial axes of [H,W,C] / [N,H,W,C] input (valid extent).
// The global kinds collapse every position to one: [P] -> [1],
// [P,C] -> [1,C], [H,W,C] -> [1,C], [N,H,W,C] -> [N,C]. Max adjoints route to
// the first maximal element.
template <class Real>
Tensor<Real> pool(const Tensor<Real>& x, PoolKind kind, int window = 2, int stride = 2) {
  if (kind == PoolKind::kMaxWindow) {
    if (x.rank() != 3 && x.rank() != 4) {
      throw ShapeError("max_window pool needs [H,W,C] or [N,H,W,C] input");
    }
    const int off = x.rank() == 4 ? 1 : 0;
    const int64_t n = x.rank() == 4 ? x.dim(0) : 1;
    const int64_t h = x.dim(off), w = x.dim(off + 1), c = x.dim(off + 2);
    if (h < window || w < window || window < 1 || stride < 1) {
      throw ShapeError("max_window pool: window larger than input " + to_string(x.shape()));
    }
    const int64_t oh = (h - window) / stride + 1;
    const int64_t ow = (w - window) / stride + 1;
    const auto& xv = x.vec();
    std::vector<Real> out(static_cast<size_t>(n * oh * ow * c));
    auto arg = std::make_shared<std::vector<int64_t>>(out.size());
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
          for (int64_t ch = 0; ch < c; ++ch) {
            int64_t best = -1;
            Real best_v = -std::numeric_limits<Real>::infinity();
            for (int64_t ky = 0; ky < window; ++ky) {
              for (int64_t kx = 0; kx < window; ++kx) {
                const int64_t idx = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                if (best < 0 || xv[static_cast<size_t>(idx)] > best_v) {
                  best = idx;
                  best_v = xv[static_cast<size_t>(idx)];
                }
              }
            }
            const auto o = static_cast<size_t>(((b * oh + oy) * ow + ox) * c + ch);
            out[o] = best_v;
            (*arg)[o] = best;
          }
        }
      }
    }
    Shape shape = x.rank() == 4 ? Shape{n, oh, ow, c} : Shape{oh, ow, c};
    return detail::make_result<Real>("pool", std::move(shape), std::move(out), {&x},
                                     [arg](std::span<const Real> g, std::span<Real* const> gin) {
                                       for (size_t k = 0; k < g.size(); ++k) {
                                         gin[0][(*arg)[k]] += g[k];
                                       }
                                     });
  }

  if (x.rank() < 1) throw ShapeError("global pool of a scalar");
  int64_t batch = 1, positions = 0, channels = 1;
  Shape shape;
  switch (x.rank()) {
    case 1:
      positions = x.dim(0);
      shape = {1};
      break;
    case 2:
      positions = x.dim(0);
      channels = x.dim(1);
      shape = {1, channels};
      break;
    case 3:
      positions = x.dim(0) * x.dim(1);
      channels = x.dim(2);
      shape = {1, channels};
      break;
    case 4:
      batch = x.dim(0);
      positions = x.dim(1) * x.dim(2);
      channels = x.dim(3);
      shape = {batch, channels};
      break;
    default:
      throw ShapeError("global pool supports rank 1-4, got " + to_string(x.shape()));
  }
  if (positions == 0) throw ShapeError("global pool over zero positions");
  const auto& xv = x.vec();
  std::vector<Real> out(static_cast<size_t>(batch * channels));
  auto arg = std::make_shared<std::vector<int64_t>>();
  if (kind == PoolKind::kGlobalMax) arg->resize(out.size());
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t ch = 0; ch < channels; ++ch) {
      const auto o = static_cast<size_t>(b * channels + ch);
      if (kind == PoolKind::kGlobalMean) {
        Real s = 0;
        for (int64_t p = 0; p < positions; ++p) {
          s += xv[static_cast<size_t>((b * positions + p) * channels + ch)];
        }
        out[o] = s / static_cast<Real>(positions);
      } else {
        int64_t best = (b * positions) * channels + ch;
        for (int64_t p = 1; p < positions; ++p) {
          const int64_t idx = (b * positions + p) * channels + ch;
          if (xv[static_cast<size_t>(idx)] > xv[static_cast<size_t>(best)]) best = idx;
        }
        out[o] = xv[static_cast<size_t>(best)];
        (*arg)[o] = best;
      }
    }
  }
  const bool is_mean = kind == PoolKind::kGlobalMean;
  return detail::make_result<Real>(
      "pool", std::move(shape), std::move(out), {&x},
      [arg, is_mean, batch, positions, channels](std::span<const Real> g,
                                                 std::span<Real* const> gin) {
        if (!is_mean) {
          for (size_t k = 0; k < g.size(); ++k) gin[0][(*arg)[k]] += g[k];
          return;
        }
        const Real inv = Real(1) / static_cast<Real>(positions);
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t p = 0; p < positions; ++p) {
            for (int64_t ch = 0; ch < channels; ++ch) {
              gin[0][(b * positions + p) * channels + ch] +=
                  g[static_cast<size_t>(b * channels + ch)] * inv;
            }
          }
        }
      });
}

}  // namespace meshmark
