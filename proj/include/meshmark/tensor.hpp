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

// Dense tensors and the reverse-mode gradient tape.
//
// A Tensor is an immutable, shape-annotated block of reals. Tensors created
// by Tape::leaf, and every tensor computed from one, carry a node handle on
// that tape; everything else is a constant and costs nothing to track.
// Ops are free functions (see ops.hpp, nn.hpp) that record an adjoint rule
// when any input is on a tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "meshmark/errors.hpp"

namespace meshmark {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class Real>
class Tape;

template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)) {
    for (int64_t d : shape_) {
      if (d < 0) throw ShapeError("negative extent in shape " + to_string(shape_));
    }
    if (numel(shape_) != static_cast<int64_t>(data.size())) {
      throw ShapeError("shape " + to_string(shape_) + " needs " +
                       std::to_string(numel(shape_)) + " values, got " +
                       std::to_string(data.size()));
    }
    data_ = std::make_shared<const std::vector<Real>>(std::move(data));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), Real(0)); }

  static Tensor full(Shape shape, Real value) {
    const auto n = static_cast<size_t>(numel(shape));
    return Tensor(std::move(shape), std::vector<Real>(n, value));
  }

  static Tensor scalar(Real value) { return Tensor({}, {value}); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  // Extent of axis `axis`; negative values count from the back.
  int64_t dim(int axis) const {
    const int r = rank();
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                       to_string(shape_));
    }
    return shape_[static_cast<size_t>(a)];
  }

  std::span<const Real> data() const {
    return data_ ? std::span<const Real>(*data_) : std::span<const Real>();
  }
  const std::vector<Real>& vec() const { return *data_; }
  Real operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  Real item() const {
    if (size() != 1) {
      throw ShapeError("item() on tensor of shape " + to_string(shape_));
    }
    return (*data_)[0];
  }

  Tape<Real>* tape() const { return tape_; }
  int node() const { return node_; }
  bool on_tape() const { return tape_ != nullptr; }

  // Same values, no tape membership.
  Tensor detach() const {
    Tensor out;
    out.shape_ = shape_;
    out.data_ = data_;
    return out;
  }

  // Shares storage; the tape link is dropped (use ops::reshape to keep it).
  Tensor with_shape(Shape shape) const {
    if (numel(shape) != size()) {
      throw ShapeError("cannot view " + to_string(shape_) + " as " + to_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <class Other>
  Tensor<Other> cast() const {
    std::vector<Other> v(data().begin(), data().end());
    return Tensor<Other>(shape_, std::move(v));
  }

  std::shared_ptr<const std::vector<Real>> storage() const { return data_; }

 private:
  friend class Tape<Real>;

  Shape shape_;
  std::shared_ptr<const std::vector<Real>> data_;
  Tape<Real>* tape_ = nullptr;
  int node_ = -1;
};

// Adjoint rule of a recorded op. `grad_out` is dL/d(output); for each input i
// that lives on the tape, `grad_in[i]` points to a zero-initialised (or
// partially accumulated) buffer of the input's size; constant inputs get
// nullptr. Rules must accumulate (+=), never assign.
template <class Real>
using AdjointFn =
    std::function<void(std::span<const Real> grad_out, std::span<Real* const> grad_in)>;

// Append-only record of ops for one forward pass. Confined to one thread.
template <class Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable input.
  Tensor<Real> leaf(const Tensor<Real>& value) {
    if (!value.defined()) throw ShapeError("leaf() of undefined tensor");
    Node node;
    node.size = value.size();
    nodes_.push_back(std::move(node));
    Tensor<Real> out = value.detach();
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size()) - 1;
    return out;
  }

  // Records the output of an op whose inputs are `inputs`. Inputs not on this
  // tape are treated as constants.
  Tensor<Real> record(Tensor<Real> result, std::span<const Tensor<Real>* const> inputs,
                      AdjointFn<Real> adjoint) {
    Node node;
    node.size = result.size();
    node.adjoint = std::move(adjoint);
    node.parents.reserve(inputs.size());
    for (const Tensor<Real>* in : inputs) {
      node.parents.push_back(in && in->tape_ == this ? in->node_ : -1);
    }
    nodes_.push_back(std::move(node));
    result.tape_ = this;
    result.node_ = static_cast<int>(nodes_.size()) - 1;
    return result;
  }

  // Gradients of the scalar `loss` with respect to each of `leaves`.
  // Unreached leaves get zero gradients. The recorded graph stays intact, so
  // backward may be called more than once.
  std::vector<Tensor<Real>> backward(const Tensor<Real>& loss,
                                     std::span<const Tensor<Real>> leaves) {
    if (loss.size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " +
                       to_string(loss.shape()));
    }
    if (loss.tape_ != this) throw ShapeError("backward(): loss is not on this tape");
    for (const auto& leaf : leaves) {
      if (leaf.tape_ != this) throw ShapeError("backward(): leaf is not on this tape");
    }

    std::vector<char> keep(nodes_.size(), 0);
    for (const auto& leaf : leaves) keep[static_cast<size_t>(leaf.node_)] = 1;

    std::vector<std::vector<Real>> grads(nodes_.size());
    grads[static_cast<size_t>(loss.node_)].assign(1, Real(1));
    std::vector<Real*> ptrs;
    for (int i = loss.node_; i >= 0; --i) {
      auto& g = grads[static_cast<size_t>(i)];
      const Node& node = nodes_[static_cast<size_t>(i)];
      if (g.empty() || !node.adjoint) continue;
      ptrs.assign(node.parents.size(), nullptr);
      for (size_t p = 0; p < node.parents.size(); ++p) {
        const int parent = node.parents[p];
        if (parent < 0) continue;
        auto& pg = grads[static_cast<size_t>(parent)];
        if (pg.empty()) pg.assign(static_cast<size_t>(nodes_[static_cast<size_t>(parent)].size), Real(0));
        ptrs[p] = pg.data();
      }
      node.adjoint(std::span<const Real>(g), std::span<Real* const>(ptrs));
      if (!keep[static_cast<size_t>(i)]) std::vector<Real>().swap(g);
    }

    std::vector<Tensor<Real>> out;
    out.reserve(leaves.size());
    for (const auto& leaf : leaves) {
      auto& g = grads[static_cast<size_t>(leaf.node_)];
      if (g.empty()) {
        out.push_back(Tensor<Real>::zeros(leaf.shape()));
      } else {
        out.push_back(Tensor<Real>(leaf.shape(), g));
      }
    }
    return out;
  }

  Tensor<Real> backward(const Tensor<Real>& loss, const Tensor<Real>& leaf) {
    return backward(loss, std::span<const Tensor<Real>>(&leaf, 1)).front();
  }

  size_t size() const { return nodes_.size(); }

  // Drops every recorded node. Tensors still pointing here become dangling
  // handles and must not be used in further ops.
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    int64_t size = 0;
    std::vector<int> parents;
    AdjointFn<Real> adjoint;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <class Real>
void check_finite(std::span<const Real> values, const char* op) {
  for (Real v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in result");
    }
  }
}

template <class Real>
Tape<Real>* common_tape(std::span<const Tensor<Real>* const> inputs, const char* op) {
  Tape<Real>* tape = nullptr;
  for (const Tensor<Real>* t : inputs) {
    if (!t || !t->tape()) continue;
    if (tape && tape != t->tape()) {
      throw ShapeError(std::string(op) + ": inputs live on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

// Builds an op result: validates finiteness and records the adjoint if any
// input is tracked.
template <class Real, class Adjoint>
Tensor<Real> make_result(const char* op, Shape shape, std::vector<Real> values,
                         std::initializer_list<const Tensor<Real>*> inputs,
                         Adjoint&& adjoint) {
  check_finite<Real>(values, op);
  Tensor<Real> result(std::move(shape), std::move(values));
  std::span<const Tensor<Real>* const> in(inputs.begin(), inputs.size());
  Tape<Real>* tape = common_tape<Real>(in, op);
  if (!tape) return result;
  return tape->record(std::move(result), in, AdjointFn<Real>(std::forward<Adjoint>(adjoint)));
}

template <class Real, class Adjoint>
Tensor<Real> make_result(const char* op, Shape shape, std::vector<Real> values,
                         const std::vector<const Tensor<Real>*>& inputs,
                         Adjoint&& adjoint) {
  check_finite<Real>(values, op);
  Tensor<Real> result(std::move(shape), std::move(values));
  std::span<const Tensor<Real>* const> in(inputs.data(), inputs.size());
  Tape<Real>* tape = common_tape<Real>(in, op);
  if (!tape) return result;
  return tape->record(std::move(result), in, AdjointFn<Real>(std::forward<Adjoint>(adjoint)));
}

}  // namespace detail

}  // namespace meshmark
