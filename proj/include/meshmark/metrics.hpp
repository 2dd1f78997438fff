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

// Image quality metrics on [H,W,C] tensors with values in [0, 1].

#pragma once

#include <cmath>
#include <vector>

#include "meshmark/tensor.hpp"

namespace meshmark {

inline constexpr double kPsnrCap = 99.0;

namespace detail {

template <class Real>
void require_image_pair(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.rank() != 3) throw ShapeError(std::string(what) + ": expected [H,W,C] images");
}

}  // namespace detail

template <class Real>
double mean_abs_error(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mean_abs_error: shape mismatch");
  if (a.size() == 0) return 0;
  double s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return s / static_cast<double>(a.size());
}

// 10 log10(1 / MSE), capped for near-identical inputs.
template <class Real>
double psnr(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_image_pair(a, b, "psnr");
  double mse = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over
// channels. Images smaller than the window use a window cropped to fit.
template <class Real>
double ssim(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_image_pair(a, b, "ssim");
  const int64_t h = a.dim(0), w = a.dim(1), ch = a.dim(2);
  const int64_t kh = std::min<int64_t>(11, h), kw = std::min<int64_t>(11, w);
  auto kernel1d = [](int64_t n) {
    std::vector<double> k(static_cast<size_t>(n));
    double s = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) - static_cast<double>(n - 1) / 2.0;
      k[static_cast<size_t>(i)] = std::exp(-x * x / (2 * 1.5 * 1.5));
      s += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= s;
    return k;
  };
  const auto gy = kernel1d(kh), gx = kernel1d(kw);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int64_t oh = h - kh + 1, ow = w - kw + 1;
  double total = 0;
  for (int64_t c = 0; c < ch; ++c) {
    double acc = 0;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int64_t i = 0; i < kh; ++i) {
          for (int64_t j = 0; j < kw; ++j) {
            const double g = gy[static_cast<size_t>(i)] * gx[static_cast<size_t>(j)];
            const int64_t k = ((y + i) * w + (x + j)) * ch + c;
            const double va = a[k], vb = b[k];
            ma += g * va;
            mb += g * vb;
            saa += g * va * va;
            sbb += g * vb * vb;
            sab += g * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    }
    total += acc / static_cast<double>(oh * ow);
  }
  return total / static_cast<double>(ch);
}

}  // namespace meshmark
