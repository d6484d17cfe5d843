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

#include "adaptlab/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "adaptlab/errors.hpp"

namespace adaptlab::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_string(shape));
  }
  impl_->value.assign(numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " holds " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->value = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

std::size_t Tensor::rows() const { return impl_->shape.empty() ? 1 : impl_->shape[0]; }

std::size_t Tensor::cols() const {
  if (impl_->shape.size() <= 1) return 1;
  return impl_->value.size() / impl_->shape[0];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return impl_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.size() != impl_->value.size()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->value);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->value); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return g_active_tape;
  }
  return nullptr;
}

Tape* recording_tape(std::span<const Tensor> inputs) {
  if (g_active_tape == nullptr) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return g_active_tape;
  }
  return nullptr;
}

void Tape::record(const char* op, std::initializer_list<Tensor*> outputs, BackwardFn fn) {
  Entry e{op, {}, std::move(fn)};
  e.outputs.reserve(outputs.size());
  for (Tensor* out : outputs) {
    out->impl()->requires_grad = true;
    out->impl()->producer = this;
    e.outputs.push_back(out->ptr());
  }
  entries_.push_back(std::move(e));
}

double* Tape::grad_buffer(TensorImpl* t) {
  if (t == nullptr || !t->requires_grad) return nullptr;
  if (t->producer == this) {
    if (t->grad.size() != t->value.size()) t->grad.assign(t->value.size(), 0.0);
    return t->grad.data();
  }
  auto it = leaf_grads_.find(t);
  if (it == leaf_grads_.end()) {
    it = leaf_grads_.emplace(t, std::vector<double>(t->value.size(), 0.0)).first;
    // Recorded closures hold the leaf alive for the tape's lifetime.
    leaf_order_.push_back(t);
  }
  return it->second.data();
}

const double* Tape::existing_grad(const TensorImpl* t) const {
  if (t->producer == this) return t->grad.empty() ? nullptr : t->grad.data();
  auto it = leaf_grads_.find(t);
  return it == leaf_grads_.end() ? nullptr : it->second.data();
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward: root must be a scalar, got " +
                        (root.defined() ? shape_string(root.shape()) : std::string("undefined")));
  }
  if (root.impl()->producer != this) {
    throw ContractError("backward: root was not produced on this tape");
  }
  grad_buffer(root.impl())[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    bool any = false;
    for (const auto& out : it->outputs) any = any || !out->grad.empty();
    if (!any) continue;
    for (const auto& out : it->outputs) grad_buffer(out.get());
    it->fn(*this);
  }
}

std::span<const double> Tape::grad(const Tensor& t) const {
  const double* g = existing_grad(t.impl());
  if (g == nullptr) return {};
  return {g, t.size()};
}

void Tape::accumulate_into_leaves() {
  for (TensorImpl* leaf : leaf_order_) {
    auto& src = leaf_grads_.at(leaf);
    if (leaf->grad.size() != leaf->value.size()) leaf->grad.assign(leaf->value.size(), 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) leaf->grad[i] += src[i];
  }
}

}  // namespace adaptlab::ad
