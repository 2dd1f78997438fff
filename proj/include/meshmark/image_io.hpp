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

// PNG read/write. Pixel values map linearly between 8-bit codes and [0, 1];
// writing rounds half up.

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "meshmark/tensor.hpp"

namespace meshmark {

enum class AlphaPolicy {
  kReject,          // anything but a color image without alpha is an error
  kCompositeBlack,  // alpha premultiplied onto a black background
};

// Decodes a PNG into a [H, W, 3] tensor in [0, 1]. Grayscale images are
// rejected; RGBA follows `alpha`.
template <class Real>
Tensor<Real> read_png(const std::string& path, AlphaPolicy alpha = AlphaPolicy::kReject) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read PNG '" + path + "': " + image.message);
  }
  if (!(image.format & PNG_FORMAT_FLAG_COLOR)) {
    png_image_free(&image);
    throw DataError("PNG '" + path + "' is not an RGB image");
  }
  const bool has_alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  if (has_alpha && alpha == AlphaPolicy::kReject) {
    png_image_free(&image);
    throw DataError("PNG '" + path + "' has an alpha channel; expected RGB");
  }
  image.format = has_alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  const int channels = has_alpha ? 4 : 3;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG '" + path + "': " + msg);
  }
  const int64_t h = image.height, w = image.width;
  std::vector<Real> out(static_cast<size_t>(h * w * 3));
  for (int64_t p = 0; p < h * w; ++p) {
    const png_byte* px = buffer.data() + p * channels;
    const Real a = has_alpha ? static_cast<Real>(px[3]) / Real(255) : Real(1);
    for (int c = 0; c < 3; ++c) {
      out[static_cast<size_t>(p * 3 + c)] = static_cast<Real>(px[c]) / Real(255) * a;
    }
  }
  return Tensor<Real>({h, w, 3}, std::move(out));
}

inline uint8_t to_byte(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

// Writes a [H, W, 3] tensor as 8-bit RGB.
template <class Real>
void write_png(const std::string& path, const Tensor<Real>& img) {
  if (img.rank() != 3 || img.dim(2) != 3) {
    throw ShapeError("write_png expects [H,W,3], got " + to_string(img.shape()));
  }
  std::vector<png_byte> buffer(static_cast<size_t>(img.size()));
  for (int64_t i = 0; i < img.size(); ++i) {
    buffer[static_cast<size_t>(i)] = to_byte(static_cast<double>(img[i]));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(1));
  image.height = static_cast<png_uint_32>(img.dim(0));
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("cannot write PNG '" + path + "': " + image.message);
  }
}

}  // namespace meshmark
