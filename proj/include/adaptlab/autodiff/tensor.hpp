// Copyright 2026 The adaptlab Authors.
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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace adaptlab::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

// Storage behind a Tensor handle. Values are row-major doubles.
struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  // Set when the tensor is the output of an operation recorded on a tape.
  const Tape* producer = nullptr;
};

// Shape-tagged double array with shared-handle semantics: copying a Tensor
// aliases the same storage. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor identity(std::size_t n);
  // Leaf tensor that participates in differentiation.
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->value.size(); }
  // Leading dimension (1 for scalars).
  std::size_t rows() const;
  // Product of trailing dimensions after the first (size of a row).
  std::size_t cols() const;
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }

  std::span<const double> values() const { return impl_->value; }
  std::span<double> mutable_values() { return impl_->value; }
  const double* data() const { return impl_->value.data(); }
  double* mutable_data() { return impl_->value.data(); }
  double item() const;
  double at(std::size_t i) const { return impl_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return impl_->value.at(r * cols() + c); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  // Independent leaf copy; keeps requires_grad, drops grad.
  Tensor clone() const;
  // Independent copy that never requires grad.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Records primitive operations in execution order and runs reverse-mode
// differentiation over them. A tape and the tensors it produces are confined
// to one thread. Gradients for leaves (tensors not produced on this tape) are
// kept in tape-local buffers so that distinct tapes can share parameters.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `outputs` as produced by `op`. `fn` reads the outputs'
  // gradient buffers and accumulates into the inputs' buffers.
  void record(const char* op, std::initializer_list<Tensor*> outputs, BackwardFn fn);

  // Reverse pass from a scalar root produced on this tape.
  void backward(const Tensor& root);

  // Accumulation buffer for `t`, or nullptr when `t` does not require grad.
  double* grad_buffer(TensorImpl* t);
  // Gradient buffer only if it already exists (nullptr otherwise).
  const double* existing_grad(const TensorImpl* t) const;

  // Gradient of the last backward() w.r.t. `t`; empty if `t` received none.
  std::span<const double> grad(const Tensor& t) const;
  // Adds every leaf gradient into the leaf's own TensorImpl::grad.
  void accumulate_into_leaves();

  std::size_t size() const { return entries_.size(); }
  const char* op_name(std::size_t i) const { return entries_.at(i).op; }

  // Tape that new operations record onto for the current thread, if any.
  static Tape* active();

 private:
  friend class TapeScope;

  struct Entry {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl>> outputs;
    BackwardFn fn;
  };

  std::vector<Entry> entries_;
  std::unordered_map<const TensorImpl*, std::vector<double>> leaf_grads_;
  std::vector<TensorImpl*> leaf_order_;
};

// Makes `tape` the active tape of the calling thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the calling thread for the scope lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Active tape if any of `inputs` requires grad, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);
Tape* recording_tape(std::span<const Tensor> inputs);

}  // namespace adaptlab::ad
