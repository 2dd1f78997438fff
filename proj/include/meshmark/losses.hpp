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

// Training objectives and their weighted sum.

#pragma once

#include <string>

#include "meshmark/networks.hpp"

namespace meshmark {

struct LossWeights {
  double lambda = 2.0;  // vertex
  double gamma = 1.0;   // texture
  double delta = 1.0;   // image
  double theta = 1.0;   // message
  double eta = 0.01;    // weight regularization
  double w_normal = 1.0;
  double w_texcoord = 1.0;

  void validate() const {
    for (double v : {lambda, gamma, delta, theta, eta, w_normal, w_texcoord}) {
      if (!(v >= 0) || !std::isfinite(v)) throw DataError("loss weights must be finite and >= 0");
    }
  }
};

namespace detail {

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <class Real>
Tensor<Real> mean_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
  require_same_shape(a, b, what);
  if (a.size() == 0) throw ShapeError(std::string(what) + ": empty input");
  return mean(abs(sub(a, b)));
}

}  // namespace detail

// sum_i w^i * sum |V^i - V_e^i| / (N_v * 5), i over the normal and texcoord
// groups of [N_v,5] attributes.
template <class Real>
Tensor<Real> vertex_loss(const Tensor<Real>& v, const Tensor<Real>& ve, double w_normal = 1.0, double w_texcoord = 1.0) {
  detail::require_same_shape(v, ve, "vertex_loss");
  if (v.rank() != 2 || v.dim(1) != kAttributeChannels) throw ShapeError("vertex_loss: attributes must be [N_v,5]");
  if (v.dim(0) == 0) throw ShapeError("vertex_loss: empty input");
  const Tensor<Real> d = abs(sub(v, ve));
  const auto denom = static_cast<Real>(v.dim(0) * kAttributeChannels);
  const Tensor<Real> normal = sum(slice(d, 1, kNormalBegin, kNormalBegin + 3));
  const Tensor<Real> uv = sum(slice(d, 1, kTexcoordBegin, kAttributeChannels));
  return add(mul(normal, Tensor<Real>::scalar(static_cast<Real>(w_normal) / denom)),
             mul(uv, Tensor<Real>::scalar(static_cast<Real>(w_texcoord) / denom)));
}

template <class Real>
Tensor<Real> texture_loss(const Tensor<Real>& t, const Tensor<Real>& te) {
  return detail::mean_abs_diff(t, te, "texture_loss");
}

template <class Real>
Tensor<Real> image_loss(const Tensor<Real>& io, const Tensor<Real>& iw) {
  return detail::mean_abs_diff(io, iw, "image_loss");
}

// Computed on the real-valued estimate, not its binarization.
template <class Real>
Tensor<Real> message_loss(const Tensor<Real>& m, const Tensor<Real>& mr) {
  return detail::mean_abs_diff(m, mr, "message_loss");
}

// Sum of squares over weight tensors only.
template <class Real>
Tensor<Real> reg_loss(const NetworkParams<Real>& params) {
  Tensor<Real> total = Tensor<Real>::scalar(Real(0));
  for (const auto& p : params.entries()) {
    if (p.regularized()) total = add(total, sum(square(p.value)));
  }
  return total;
}

template <class Real>
struct LossParts {
  Tensor<Real> vertex;
  Tensor<Real> texture;
  Tensor<Real> image;
  Tensor<Real> message;
  Tensor<Real> reg;
};

// Undefined parts count as zero.
template <class Real>
Tensor<Real> total_loss(const LossParts<Real>& parts, const LossWeights& w) {
  w.validate();
  Tensor<Real> total = Tensor<Real>::scalar(Real(0));
  auto term = [&](const Tensor<Real>& part, double weight) {
    if (!part.defined()) return;
    if (part.size() != 1) throw ShapeError("total_loss: parts must be scalars");
    total = add(total, mul(reshape(part, {}), Tensor<Real>::scalar(static_cast<Real>(weight))));
  };
  term(parts.vertex, w.lambda);
  term(parts.texture, w.gamma);
  term(parts.image, w.delta);
  term(parts.message, w.theta);
  term(parts.reg, w.eta);
  return total;
}

}  // namespace meshmark
