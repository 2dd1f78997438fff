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

// Central-difference verification of tape gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "meshmark/tensor.hpp"

namespace meshmark {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t coords_checked = 0;
  int64_t kinks_skipped = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  int64_t max_coords = 0;
  uint64_t seed = 0;
  // Skip coordinates whose left and right one-sided differences disagree by
  // more than kink_tol (relative): a kink lies within eps of the point. The
  // test never looks at the analytic gradient.
  bool skip_kinks = false;
  double kink_tol = 1e-3;
};

// `f` maps a Tensor<double> shaped like `x` to a one-element tensor. It is
// called once with `x` on a fresh tape for the analytic gradient and then
// twice per checked coordinate with constant inputs.
template <class F>
GradCheckResult grad_check_report(F&& f, const Tensor<double>& x,
                                  const GradCheckOptions& opts = {}) {
  Tape<double> tape;
  const Tensor<double> leaf = tape.leaf(x);
  const Tensor<double> loss = f(leaf);
  const Tensor<double> analytic = tape.backward(loss, leaf);

  std::vector<int64_t> coords(static_cast<size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), int64_t{0});
  if (opts.max_coords > 0 && opts.max_coords < x.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<size_t>(opts.max_coords));
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  const double center = opts.skip_kinks ? f(x).item() : 0.0;
  std::vector<double> probe(x.data().begin(), x.data().end());
  for (int64_t i : coords) {
    const auto u = static_cast<size_t>(i);
    const double saved = probe[u];
    probe[u] = saved + opts.eps;
    const double up = f(Tensor<double>(x.shape(), probe)).item();
    probe[u] = saved - opts.eps;
    const double down = f(Tensor<double>(x.shape(), probe)).item();
    probe[u] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: function is not finite near coordinate " +
                         std::to_string(i));
    }
    if (opts.skip_kinks) {
      const double right = (up - center) / opts.eps;
      const double left = (center - down) / opts.eps;
      if (std::abs(right - left) > opts.kink_tol * std::max({std::abs(right), std::abs(left), 1e-8})) {
        ++result.kinks_skipped;
        continue;
      }
    }
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_rel_err || result.worst_index < 0) {
      result.max_rel_err = std::max(result.max_rel_err, rel);
      if (rel >= result.max_rel_err) {
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
    ++result.coords_checked;
  }
  return result;
}

template <class F>
double grad_check(F&& f, const Tensor<double>& x, double eps = 1e-5) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check_report(std::forward<F>(f), x, opts).max_rel_err;
}

}  // namespace meshmark
