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

// Elementwise arithmetic, reductions, shape manipulation and matmul.
//
// Binary ops broadcast numpy-style: shapes are right-aligned and any extent
// of 1 stretches to match. Subgradient conventions at kinks: sign'(x) = 0,
// relu'(0) = 0, abs'(0) = 0, clamp' = 0 at or beyond either bound.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "meshmark/tensor.hpp"

namespace meshmark {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) +
                       " with " + to_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// For each linear index of `out`, the linear index into a tensor of shape
// `in` broadcast to `out`. Empty when no broadcasting is needed.
inline std::vector<int64_t> broadcast_index(const Shape& in, const Shape& out) {
  if (in == out) return {};
  const size_t r = out.size();
  const size_t lead = r - in.size();
  std::vector<int64_t> stride(r, 0);
  int64_t s = 1;
  for (size_t i = r; i-- > lead;) {
    const int64_t d = in[i - lead];
    stride[i] = d == 1 ? 0 : s;
    s *= d;
  }
  const int64_t n = numel(out);
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::vector<int64_t> counter(r, 0);
  int64_t offset = 0;
  for (int64_t k = 0; k < n; ++k) {
    idx[static_cast<size_t>(k)] = offset;
    for (size_t i = r; i-- > 0;) {
      if (++counter[i] < out[i]) {
        offset += stride[i];
        break;
      }
      offset -= stride[i] * (out[i] - 1);
      counter[i] = 0;
    }
  }
  return idx;
}

template <class Real, class Fwd, class Partials>
Tensor<Real> binary_op(const char* op, const Tensor<Real>& a, const Tensor<Real>& b,
                       Fwd fwd, Partials partials) {
  Shape shape = broadcast_shape(a.shape(), b.shape(), op);
  auto ia = std::make_shared<std::vector<int64_t>>(broadcast_index(a.shape(), shape));
  auto ib = std::make_shared<std::vector<int64_t>>(broadcast_index(b.shape(), shape));
  const int64_t n = numel(shape);
  const auto& av = a.vec();
  const auto& bv = b.vec();
  std::vector<Real> out(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    const Real x = av[static_cast<size_t>(ia->empty() ? k : (*ia)[static_cast<size_t>(k)])];
    const Real y = bv[static_cast<size_t>(ib->empty() ? k : (*ib)[static_cast<size_t>(k)])];
    out[static_cast<size_t>(k)] = fwd(x, y);
  }
  auto sa = a.storage();
  auto sb = b.storage();
  return make_result<Real>(
      op, std::move(shape), std::move(out), {&a, &b},
      [sa, sb, ia, ib, partials](std::span<const Real> g, std::span<Real* const> gin) {
        const auto n = static_cast<int64_t>(g.size());
        for (int64_t k = 0; k < n; ++k) {
          const int64_t ka = ia->empty() ? k : (*ia)[static_cast<size_t>(k)];
          const int64_t kb = ib->empty() ? k : (*ib)[static_cast<size_t>(k)];
          const Real x = (*sa)[static_cast<size_t>(ka)];
          const Real y = (*sb)[static_cast<size_t>(kb)];
          const auto [dx, dy] = partials(x, y);
          if (gin[0]) gin[0][ka] += g[static_cast<size_t>(k)] * dx;
          if (gin[1]) gin[1][kb] += g[static_cast<size_t>(k)] * dy;
        }
      });
}

// `deriv(x, y)` receives the input and the forward output.
template <class Real, class Fwd, class Deriv>
Tensor<Real> unary_op(const char* op, const Tensor<Real>& a, Fwd fwd, Deriv deriv) {
  const auto& av = a.vec();
  std::vector<Real> out(av.size());
  for (size_t k = 0; k < av.size(); ++k) out[k] = fwd(av[k]);
  auto sa = a.storage();
  auto so = std::make_shared<std::vector<Real>>(out);
  return make_result<Real>(op, a.shape(), std::move(out), {&a},
                           [sa, so, deriv](std::span<const Real> g, std::span<Real* const> gin) {
                             for (size_t k = 0; k < g.size(); ++k) {
                               gin[0][k] += g[k] * deriv((*sa)[k], (*so)[k]);
                             }
                           });
}

template <class Real>
Real sign_of(Real x) {
  return x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0));
}

}  // namespace detail

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      "add", a, b, [](Real x, Real y) { return x + y; },
      [](Real, Real) { return std::pair<Real, Real>{1, 1}; });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      "sub", a, b, [](Real x, Real y) { return x - y; },
      [](Real, Real) { return std::pair<Real, Real>{1, -1}; });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      "mul", a, b, [](Real x, Real y) { return x * y; },
      [](Real x, Real y) { return std::pair<Real, Real>{y, x}; });
}

template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      "div", a, b, [](Real x, Real y) { return x / y; },
      [](Real x, Real y) { return std::pair<Real, Real>{Real(1) / y, -x / (y * y)}; });
}

template <class Real>
Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) { return add(a, b); }
template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) { return sub(a, b); }
template <class Real>
Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) { return mul(a, b); }
template <class Real>
Tensor<Real> operator/(const Tensor<Real>& a, const Tensor<Real>& b) { return div(a, b); }

template <class Real>
Tensor<Real> operator+(const Tensor<Real>& a, Real s) { return add(a, Tensor<Real>::scalar(s)); }
template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a, Real s) { return sub(a, Tensor<Real>::scalar(s)); }
template <class Real>
Tensor<Real> operator*(const Tensor<Real>& a, Real s) { return mul(a, Tensor<Real>::scalar(s)); }
template <class Real>
Tensor<Real> operator*(Real s, const Tensor<Real>& a) { return mul(Tensor<Real>::scalar(s), a); }
template <class Real>
Tensor<Real> operator/(const Tensor<Real>& a, Real s) { return div(a, Tensor<Real>::scalar(s)); }
template <class Real>
Tensor<Real> operator/(Real s, const Tensor<Real>& a) { return div(Tensor<Real>::scalar(s), a); }

template <class Real>
Tensor<Real> neg(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "neg", a, [](Real x) { return -x; }, [](Real, Real) { return Real(-1); });
}

template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a) { return neg(a); }

template <class Real>
Tensor<Real> abs(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "abs", a, [](Real x) { return std::abs(x); },
      [](Real x, Real) { return detail::sign_of(x); });
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "relu", a, [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

template <class Real>
Tensor<Real> sign(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "sign", a, [](Real x) { return detail::sign_of(x); }, [](Real, Real) { return Real(0); });
}

template <class Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "exp", a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <class Real>
Tensor<Real> log(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "log", a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

template <class Real>
Tensor<Real> sqrt(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "sqrt", a, [](Real x) { return std::sqrt(x); },
      [](Real, Real y) { return Real(0.5) / y; });
}

template <class Real>
Tensor<Real> square(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "square", a, [](Real x) { return x * x; }, [](Real x, Real) { return Real(2) * x; });
}

template <class Real>
Tensor<Real> power(const Tensor<Real>& a, Real p) {
  return detail::unary_op<Real>(
      "power", a, [p](Real x) { return std::pow(x, p); },
      [p](Real x, Real) { return p * std::pow(x, p - Real(1)); });
}

template <class Real>
Tensor<Real> clamp(const Tensor<Real>& a, Real lo, Real hi) {
  return detail::unary_op<Real>(
      "clamp", a, [lo, hi](Real x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](Real x, Real) { return (x > lo && x < hi) ? Real(1) : Real(0); });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return detail::unary_op<Real>(
      "sigmoid", a,
      [](Real x) {
        return x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x))
                            : std::exp(x) / (Real(1) + std::exp(x));
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

// ---------------------------------------------------------------------------
// Reductions



namespace detail {

struct AxisSplit {
  int64_t outer = 1;
  int64_t extent = 1;
  int64_t inner = 1;
};

inline int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return a;
}

inline AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  s.extent = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real total = 0;
  for (Real v : a.data()) total += v;
  return detail::make_result<Real>("sum", {}, {total}, {&a},
                                   [n = a.size()](std::span<const Real> g,
                                                  std::span<Real* const> gin) {
                                     for (int64_t k = 0; k < n; ++k) gin[0][k] += g[0];
                                   });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return sum(a) * (Real(1) / static_cast<Real>(a.size()));
}

template <class Real>
Tensor<Real> sum_axis(const Tensor<Real>& a, int axis, bool keepdim = false) {
  const int ax = detail::normalize_axis(axis, a.rank(), "sum_axis");
  const auto s = detail::split_at(a.shape(), ax);
  std::vector<Real> out(static_cast<size_t>(s.outer * s.inner), Real(0));
  const auto& av = a.vec();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t e = 0; e < s.extent; ++e) {
      const Real* src = av.data() + (o * s.extent + e) * s.inner;
      Real* dst = out.data() + o * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  Shape shape = a.shape();
  if (keepdim) {
    shape[static_cast<size_t>(ax)] = 1;
  } else {
    shape.erase(shape.begin() + ax);
  }
  return detail::make_result<Real>(
      "sum_axis", std::move(shape), std::move(out), {&a},
      [s](std::span<const Real> g, std::span<Real* const> gin) {
        for (int64_t o = 0; o < s.outer; ++o) {
          for (int64_t e = 0; e < s.extent; ++e) {
            Real* dst = gin[0] + (o * s.extent + e) * s.inner;
            const Real* src = g.data() + o * s.inner;
            for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

template <class Real>
Tensor<Real> mean_axis(const Tensor<Real>& a, int axis, bool keepdim = false) {
  const int64_t n = a.dim(axis);
  if (n == 0) throw ShapeError("mean_axis over empty axis");
  return sum_axis(a, axis, keepdim) * (Real(1) / static_cast<Real>(n));
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
  Tensor<Real> view = a.with_shape(std::move(shape));
  if (!a.on_tape()) return view;
  const Tensor<Real>* in[] = {&a};
  return a.tape()->record(std::move(view), in,
                          [](std::span<const Real> g, std::span<Real* const> gin) {
                            for (size_t k = 0; k < g.size(); ++k) gin[0][k] += g[k];
                          });
}

template <class Real>
Tensor<Real> broadcast_to(const Tensor<Real>& a, const Shape& shape) {
  const Shape target = detail::broadcast_shape(a.shape(), shape, "broadcast_to");
  if (target != shape) {
    throw ShapeError("broadcast_to: " + to_string(a.shape()) + " does not expand to " +
                     to_string(shape));
  }
  auto idx = std::make_shared<std::vector<int64_t>>(detail::broadcast_index(a.shape(), shape));
  if (idx->empty()) return a;
  std::vector<Real> out(idx->size());
  for (size_t k = 0; k < idx->size(); ++k) out[k] = a[(*idx)[k]];
  return detail::make_result<Real>("broadcast_to", shape, std::move(out), {&a},
                                   [idx](std::span<const Real> g, std::span<Real* const> gin) {
                                     for (size_t k = 0; k < g.size(); ++k) {
                                       gin[0][(*idx)[k]] += g[k];
                                     }
                                   });
}

template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int rank = parts.front().rank();
  const int ax = detail::normalize_axis(axis, rank, "concat");
  Shape shape = parts.front().shape();
  shape[static_cast<size_t>(ax)] = 0;
  std::vector<int64_t> extents;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != ax && ps[static_cast<size_t>(i)] != shape[static_cast<size_t>(i)]) {
        throw ShapeError("concat: " + to_string(ps) + " vs " +
                         to_string(parts.front().shape()));
      }
    }
    extents.push_back(ps[static_cast<size_t>(ax)]);
    shape[static_cast<size_t>(ax)] += ps[static_cast<size_t>(ax)];
  }
  const auto s = detail::split_at(shape, ax);
  std::vector<Real> out(static_cast<size_t>(numel(shape)));
  int64_t offset = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = parts[p].vec();
    const int64_t block = extents[p] * s.inner;
    for (int64_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + o * s.extent * s.inner + offset);
    }
    offset += block;
  }
  std::vector<const Tensor<Real>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return detail::make_result<Real>(
      "concat", std::move(shape), std::move(out), inputs,
      [s, extents](std::span<const Real> g, std::span<Real* const> gin) {
        int64_t offset = 0;
        for (size_t p = 0; p < extents.size(); ++p) {
          const int64_t block = extents[p] * s.inner;
          if (gin[p]) {
            for (int64_t o = 0; o < s.outer; ++o) {
              const Real* src = g.data() + o * s.extent * s.inner + offset;
              Real* dst = gin[p] + o * block;
              for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          offset += block;
        }
      });
}

// Stacks equally shaped tensors along a new leading axis.
template <class Real>
Tensor<Real> stack(const std::vector<Tensor<Real>>& parts) {
  std::vector<Tensor<Real>> views;
  views.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    views.push_back(reshape(p, s));
  }
  return concat(views, 0);
}

// Elements [begin, end) along `axis`.
template <class Real>
Tensor<Real> slice(const Tensor<Real>& a, int axis, int64_t begin, int64_t end) {
  const int ax = detail::normalize_axis(axis, a.rank(), "slice");
  const auto s = detail::split_at(a.shape(), ax);
  if (begin < 0 || end > s.extent || begin > end) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + to_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[static_cast<size_t>(ax)] = end - begin;
  const int64_t block = (end - begin) * s.inner;
  std::vector<Real> out(static_cast<size_t>(s.outer * block));
  const auto& av = a.vec();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(av.data() + (o * s.extent + begin) * s.inner, block, out.data() + o * block);
  }
  return detail::make_result<Real>(
      "slice", std::move(shape), std::move(out), {&a},
      [s, begin, block](std::span<const Real> g, std::span<Real* const> gin) {
        for (int64_t o = 0; o < s.outer; ++o) {
          Real* dst = gin[0] + (o * s.extent + begin) * s.inner;
          const Real* src = g.data() + o * block;
          for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      });
}

// Rows of `a` (viewed as [N, rest]) picked by `rows`.
template <class Real>
Tensor<Real> gather_rows(const Tensor<Real>& a, std::vector<int64_t> rows) {
  if (a.rank() < 1) throw ShapeError("gather_rows on a scalar");
  const int64_t n = a.dim(0);
  const int64_t width = n ? a.size() / n : 0;
  for (int64_t r : rows) {
    if (r < 0 || r >= n) throw ShapeError("gather_rows: row index out of range");
  }
  Shape shape = a.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  std::vector<Real> out(rows.size() * static_cast<size_t>(width));
  const auto& av = a.vec();
  for (size_t k = 0; k < rows.size(); ++k) {
    std::copy_n(av.data() + rows[k] * width, width, out.data() + static_cast<int64_t>(k) * width);
  }
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
  return detail::make_result<Real>(
      "gather_rows", std::move(shape), std::move(out), {&a},
      [idx, width](std::span<const Real> g, std::span<Real* const> gin) {
        for (size_t k = 0; k < idx->size(); ++k) {
          Real* dst = gin[0] + (*idx)[k] * width;
          const Real* src = g.data() + static_cast<int64_t>(k) * width;
          for (int64_t i = 0; i < width; ++i) dst[i] += src[i];
        }
      });
}

// Inverse of gather_rows: row k of `a` is added into row rows[k] of an
// n-row zero tensor.
template <class Real>
Tensor<Real> scatter_rows(const Tensor<Real>& a, std::vector<int64_t> rows, int64_t n) {
  if (a.rank() < 1 || a.dim(0) != static_cast<int64_t>(rows.size())) {
    throw ShapeError("scatter_rows: row count mismatch");
  }
  const int64_t width = rows.empty() ? 0 : a.size() / a.dim(0);
  for (int64_t r : rows) {
    if (r < 0 || r >= n) throw ShapeError("scatter_rows: row index out of range");
  }
  Shape shape = a.shape();
  shape[0] = n;
  std::vector<Real> out(static_cast<size_t>(numel(shape)), Real(0));
  const auto& av = a.vec();
  for (size_t k = 0; k < rows.size(); ++k) {
    for (int64_t i = 0; i < width; ++i) {
      out[static_cast<size_t>(rows[k] * width + i)] += av[static_cast<size_t>(static_cast<int64_t>(k) * width + i)];
    }
  }
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
  return detail::make_result<Real>(
      "scatter_rows", std::move(shape), std::move(out), {&a},
      [idx, width](std::span<const Real> g, std::span<Real* const> gin) {
        for (size_t k = 0; k < idx->size(); ++k) {
          Real* dst = gin[0] + static_cast<int64_t>(k) * width;
          const Real* src = g.data() + (*idx)[k] * width;
          for (int64_t i = 0; i < width; ++i) dst[i] += src[i];
        }
      });
}

// ---------------------------------------------------------------------------
// Matrix product

namespace detail {
template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MapRowMat = Eigen::Map<RowMat<Real>>;
template <class Real>
using ConstMapRowMat = Eigen::Map<const RowMat<Real>>;
}  // namespace detail

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<Real> out(static_cast<size_t>(m * n));
  detail::MapRowMat<Real>(out.data(), m, n).noalias() =
      detail::ConstMapRowMat<Real>(a.data().data(), m, k) *
      detail::ConstMapRowMat<Real>(b.data().data(), k, n);
  auto sa = a.storage();
  auto sb = b.storage();
  return detail::make_result<Real>(
      "matmul", {m, n}, std::move(out), {&a, &b},
      [sa, sb, m, k, n](std::span<const Real> g, std::span<Real* const> gin) {
        detail::ConstMapRowMat<Real> dc(g.data(), m, n);
        if (gin[0]) {
          detail::MapRowMat<Real>(gin[0], m, k).noalias() +=
              dc * detail::ConstMapRowMat<Real>(sb->data(), k, n).transpose();
        }
        if (gin[1]) {
          detail::MapRowMat<Real>(gin[1], k, n).noalias() +=
              detail::ConstMapRowMat<Real>(sa->data(), m, k).transpose() * dc;
        }
      });
}

}  // namespace meshmark
