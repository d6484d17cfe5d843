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
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "adaptlab/autodiff/tensor.hpp"

// Differentiable primitives. Every function computes its output eagerly and,
// when an active tape exists and an input requires grad, records a backward
// closure. Shape mismatches raise DimensionError naming the op and shapes.
//
// "Row" operations view a tensor as [outer x last] where `last` is the final
// dimension; matrix operations require rank 2.
namespace adaptlab::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Adds a vector of length last-dim to every row. The only broadcast supported.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// Multiplies row r by the constant factors[r].
Tensor scale_rows(const Tensor& a, std::span<const double> factors);
// Row r taken from `a` where keep[r] != 0, else from `b`.
Tensor select_rows(std::span<const char> keep, const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
// axis 0 stacks rows, axis 1 (or -1) joins along the last dimension.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// log(sigmoid(a)), stable for large |a|.
Tensor log_sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Scalar sum_i w[i] * a[i] with constant weights.
Tensor weighted_sum(const Tensor& a, std::span<const double> w);

// Multiplies by an externally supplied constant mask (already scaled by
// 1/(1-p) for inverted dropout).
Tensor dropout(const Tensor& a, const Tensor& mask);
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
// out[r] = a[r, cols[r]].
Tensor pick(const Tensor& a, std::span<const int> cols);

// Sequence helpers for the [batch*time x dim] layout (row b*T + t).
// steps[t] is [B x D]; result row b*T + t equals steps[t] row b.
Tensor interleave_time(std::span<const Tensor> steps);
// Rows of `a` for time step t: the inverse view of interleave_time.
Tensor time_step(const Tensor& a, std::size_t batch, std::size_t t);
// [B x A] -> [B*reps x A], row b*reps + j = a row b.
Tensor broadcast_rows(const Tensor& a, std::size_t reps);
// weights [B x T], values [B*T x D] -> [B x D], out[b] = sum_t w[b,t] v[b*T+t].
Tensor attend(const Tensor& weights, const Tensor& values);
// [B*T x d] -> [B*T x width*d]; each row holds the `width` frames centred on
// it, zero-padded at sequence boundaries. `width` must be odd.
Tensor unfold_time(const Tensor& x, std::size_t batch, std::size_t width);

// Fused LSTM cell. gates [B x 4H] in order (input, forget, cell, output),
// c_prev [B x H]. Returns (h, c).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& gates, const Tensor& c_prev);

// Scalar sum_r w[r] * (-sum_v t[r,v] log softmax(logits)[r,v]). Targets are
// constant rows that are probability distributions; the logits gradient is
// w[r] * (softmax(logits)[r] - t[r]).
Tensor soft_cross_entropy(const Tensor& logits, const Tensor& targets,
                          std::span<const double> row_weights);

// Plain numeric row softmax, shared by the differentiable ops so that
// teacher and student distributions agree bitwise.
void softmax_row(const double* in, double* out, std::size_t n);

}  // namespace adaptlab::ad
