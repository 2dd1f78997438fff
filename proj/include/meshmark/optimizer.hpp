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

// First-order optimizers over NetworkParams.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "meshmark/networks.hpp"

namespace meshmark {

enum class OptimizerKind { kAdam, kSgd };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw DataError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Real>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  // Applies grads[i] to params.entries()[index[i]].
  void step(NetworkParams<Real>& params, const std::vector<size_t>& index, const std::vector<Tensor<Real>>& grads) {
    if (index.size() != grads.size()) throw ShapeError("optimizer: gradient count mismatch");
    auto& entries = params.entries();
    if (m_.empty()) {
      m_.resize(entries.size());
      v_.resize(entries.size());
    }
    if (m_.size() != entries.size()) throw ShapeError("optimizer: parameter layout changed");
    ++t_;
    const double lr = cfg_.learning_rate;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < index.size(); ++k) {
      Param<Real>& p = entries[index[k]];
      const auto& g = grads[k].vec();
      std::vector<Real> value = p.value.vec();
      if (g.size() != value.size()) throw ShapeError("optimizer: gradient shape mismatch for " + p.name);
      if (cfg_.kind == OptimizerKind::kSgd) {
        for (size_t i = 0; i < value.size(); ++i) value[i] -= static_cast<Real>(lr * g[i]);
      } else {
        auto& m = m_[index[k]];
        auto& v = v_[index[k]];
        if (m.empty()) {
          m.assign(value.size(), 0.0);
          v.assign(value.size(), 0.0);
        }
        for (size_t i = 0; i < value.size(); ++i) {
          m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
          v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * static_cast<double>(g[i]);
          value[i] -= static_cast<Real>(lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon));
        }
      }
      p.value = Tensor<Real>(p.value.shape(), std::move(value));
    }
  }

  int64_t steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace meshmark
