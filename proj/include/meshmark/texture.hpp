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

// Texture sources: smoothed white noise and random crops from image folders.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "meshmark/image_io.hpp"

namespace meshmark {

// Separable Gaussian blur of a [H, W, C] image; the kernel is truncated at
// ceil(3 sigma) and borders are edge-clamped. sigma <= 0 returns the input.
template <class Real>
Tensor<Real> gaussian_blur(const Tensor<Real>& img, double sigma) {
  if (sigma <= 0) return img.detach();
  const int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const auto radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double total = 0;
  for (int64_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : kernel) v /= total;

  const auto& src = img.vec();
  std::vector<double> tmp(src.size(), 0.0);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t i = -radius; i <= radius; ++i) {
        const int64_t sx = std::clamp<int64_t>(x + i, 0, w - 1);
        const double k = kernel[static_cast<size_t>(i + radius)];
        for (int64_t ch = 0; ch < c; ++ch) {
          tmp[static_cast<size_t>((y * w + x) * c + ch)] += k * src[static_cast<size_t>((y * w + sx) * c + ch)];
        }
      }
    }
  }
  std::vector<Real> out(src.size(), Real(0));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int64_t i = -radius; i <= radius; ++i) {
          const int64_t sy = std::clamp<int64_t>(y + i, 0, h - 1);
          s += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>((sy * w + x) * c + ch)];
        }
        out[static_cast<size_t>((y * w + x) * c + ch)] = static_cast<Real>(s);
      }
    }
  }
  return Tensor<Real>(img.shape(), std::move(out));
}

// Uniform white noise in [0, 1] smoothed by gaussian_blur and rescaled so the
// whole texture spans exactly [0, 1]. Deterministic in `seed`.
template <class Real>
Tensor<Real> synth_noise_texture(uint64_t seed, int64_t height, int64_t width, double blur_sigma) {
  if (height < 8 || width < 8) throw DataError("noise texture must be at least 8x8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Real> noise(static_cast<size_t>(height * width * 3));
  for (auto& v : noise) v = static_cast<Real>(uni(rng));
  const Tensor<Real> blurred = gaussian_blur(Tensor<Real>({height, width, 3}, std::move(noise)), blur_sigma);
  const auto& b = blurred.vec();
  const auto [lo_it, hi_it] = std::minmax_element(b.begin(), b.end());
  const double lo = *lo_it, span = static_cast<double>(*hi_it) - lo;
  std::vector<Real> out(b.size());
  for (size_t i = 0; i < b.size(); ++i) {
    out[i] = span > 0 ? static_cast<Real>((b[i] - lo) / span) : Real(0.5);
  }
  // Guard the exact endpoints against rounding.
  if (span > 0) {
    out[static_cast<size_t>(lo_it - b.begin())] = Real(0);
    out[static_cast<size_t>(hi_it - b.begin())] = Real(1);
  }
  return Tensor<Real>({height, width, 3}, std::move(out));
}

template <class Real>
Tensor<Real> crop(const Tensor<Real>& img, int64_t top, int64_t left, int64_t height, int64_t width) {
  const int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  if (top < 0 || left < 0 || top + height > h || left + width > w) {
    throw ShapeError("crop window outside the image");
  }
  std::vector<Real> out(static_cast<size_t>(height * width * c));
  const auto& src = img.vec();
  for (int64_t y = 0; y < height; ++y) {
    std::copy_n(src.data() + ((top + y) * w + left) * c, width * c, out.data() + y * width * c);
  }
  return Tensor<Real>({height, width, c}, std::move(out));
}

// Bilinear resample of an [H,W,C] image with half-pixel centers.
template <class Real>
Tensor<Real> resize_bilinear(const Tensor<Real>& img, int64_t height, int64_t width) {
  if (img.rank() != 3) throw ShapeError("resize_bilinear: image must be [H,W,C], got " + to_string(img.shape()));
  if (height < 1 || width < 1) throw ShapeError("resize_bilinear: target size must be positive");
  const int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  if (h == height && w == width) return img.detach();
  const auto& src = img.vec();
  std::vector<Real> out(static_cast<size_t>(height * width * c));
  for (int64_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * h / height - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int64_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * w / width - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (int64_t k = 0; k < c; ++k) {
        auto at = [&](int64_t yy, int64_t xx) { return static_cast<double>(src[(yy * w + xx) * c + k]); };
        const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                         ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
        out[(y * width + x) * c + k] = static_cast<Real>(v);
      }
    }
  }
  return Tensor<Real>({height, width, c}, std::move(out));
}

// A folder of RGB PNG textures sampled as random fixed-size crops.
template <class Real>
class TextureLibrary {
 public:
  static TextureLibrary load(const std::string& dir, int64_t crop_size = 128) {
    if (!std::filesystem::is_directory(dir)) throw DataError("texture directory '" + dir + "' not found");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("texture directory '" + dir + "' has no PNG files");
    TextureLibrary lib;
    lib.crop_size_ = crop_size;
    for (const auto& f : files) {
      Tensor<Real> img = read_png<Real>(f.string());
      if (img.dim(0) < crop_size || img.dim(1) < crop_size) {
        throw DataError("texture '" + f.string() + "' is smaller than the " +
                        std::to_string(crop_size) + "x" + std::to_string(crop_size) + " crop");
      }
      lib.images_.push_back(std::move(img));
    }
    return lib;
  }

  static TextureLibrary from_images(std::vector<Tensor<Real>> images, int64_t crop_size) {
    TextureLibrary lib;
    lib.crop_size_ = crop_size;
    for (const auto& img : images) {
      if (img.dim(0) < crop_size || img.dim(1) < crop_size) {
        throw DataError("texture smaller than the crop size");
      }
    }
    lib.images_ = std::move(images);
    return lib;
  }

  size_t size() const { return images_.size(); }
  int64_t crop_size() const { return crop_size_; }
  const std::vector<Tensor<Real>>& images() const { return images_; }

  // A random image, randomly cropped.
  template <class Rng>
  Tensor<Real> sample(Rng& rng) const {
    const auto& img = images_[std::uniform_int_distribution<size_t>(0, images_.size() - 1)(rng)];
    const int64_t top = std::uniform_int_distribution<int64_t>(0, img.dim(0) - crop_size_)(rng);
    const int64_t left = std::uniform_int_distribution<int64_t>(0, img.dim(1) - crop_size_)(rng);
    return crop(img, top, left, crop_size_, crop_size_);
  }

 private:
  int64_t crop_size_ = 128;
  std::vector<Tensor<Real>> images_;
};

}  // namespace meshmark
