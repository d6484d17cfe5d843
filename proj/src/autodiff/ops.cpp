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

#include "adaptlab/autodiff/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "adaptlab/errors.hpp"

namespace adaptlab::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw DimensionError(std::string(op) + ": " + what);
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) fail(op, "expected rank-2 tensor, got " + shape_string(a.shape()));
}

std::size_t last_dim(const Tensor& a) { return a.shape().back(); }

// Elementwise unary op: forward f(x), derivative expressed through (x, y).
template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
  Tensor out(a.shape());
  const double* x = a.data();
  double* y = out.mutable_data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
  if (Tape* tape = recording_tape({&a})) {
    tape->record(op, {&out}, [ai = a.ptr(), oi = out.ptr(), dfdx](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      const double* x = ai->value.data();
      const double* y = oi->value.data();
      for (std::size_t i = 0; i < ai->value.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace

void softmax_row(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a.data()[i] + b.data()[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("add", {&out}, [ai = a.ptr(), bi = b.ptr(), oi = out.ptr()](Tape& t) {
      const double* g = t.existing_grad(oi.get());
      const std::size_t n = oi->value.size();
      if (double* ga = t.grad_buffer(ai.get())) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      if (double* gb = t.grad_buffer(bi.get())) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a.data()[i] - b.data()[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("sub", {&out}, [ai = a.ptr(), bi = b.ptr(), oi = out.ptr()](Tape& t) {
      const double* g = t.existing_grad(oi.get());
      const std::size_t n = oi->value.size();
      if (double* ga = t.grad_buffer(ai.get())) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      if (double* gb = t.grad_buffer(bi.get())) for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a.data()[i] * b.data()[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("mul", {&out}, [ai = a.ptr(), bi = b.ptr(), oi = out.ptr()](Tape& t) {
      const double* g = t.existing_grad(oi.get());
      const std::size_t n = oi->value.size();
      if (double* ga = t.grad_buffer(ai.get()))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bi->value[i];
      if (double* gb = t.grad_buffer(bi.get()))
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * ai->value[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t n = last_dim(a);
  if (bias.size() != n) {
    fail("add_bias", "bias " + shape_string(bias.shape()) + " does not match last dim of " +
                         shape_string(a.shape()));
  }
  Tensor out(a.shape());
  const std::size_t rows = a.size() / n;
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = a.data()[r * n + c] + bias.data()[c];
  if (Tape* tape = recording_tape({&a, &bias})) {
    tape->record("add_bias", {&out}, [ai = a.ptr(), bi = bias.ptr(), oi = out.ptr(), rows, n](Tape& t) {
      const double* g = t.existing_grad(oi.get());
      if (double* ga = t.grad_buffer(ai.get())) for (std::size_t i = 0; i < rows * n; ++i) ga[i] += g[i];
      if (double* gb = t.grad_buffer(bi.get()))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& a, std::span<const double> factors) {
  const std::size_t rows = a.rows();
  if (factors.size() != rows) {
    fail("scale_rows", std::to_string(factors.size()) + " factors for " + shape_string(a.shape()));
  }
  const std::size_t n = a.cols();
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = factors[r] * a.data()[r * n + c];
  if (Tape* tape = recording_tape({&a})) {
    std::vector<double> f(factors.begin(), factors.end());
    tape->record("scale_rows", {&out}, [ai = a.ptr(), oi = out.ptr(), f = std::move(f), n](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t r = 0; r < f.size(); ++r)
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += f[r] * g[r * n + c];
    });
  }
  return out;
}

Tensor select_rows(std::span<const char> keep, const Tensor& a, const Tensor& b) {
  require_same("select_rows", a, b);
  const std::size_t rows = a.rows();
  if (keep.size() != rows) {
    fail("select_rows", std::to_string(keep.size()) + " flags for " + shape_string(a.shape()));
  }
  const std::size_t n = a.cols();
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = keep[r] ? a.data() : b.data();
    std::copy_n(src + r * n, n, o + r * n);
  }
  if (Tape* tape = recording_tape({&a, &b})) {
    std::vector<char> k(keep.begin(), keep.end());
    tape->record("select_rows", {&out},
                 [ai = a.ptr(), bi = b.ptr(), oi = out.ptr(), k = std::move(k), n](Tape& t) {
                   const double* g = t.existing_grad(oi.get());
                   double* ga = t.grad_buffer(ai.get());
                   double* gb = t.grad_buffer(bi.get());
                   for (std::size_t r = 0; r < k.size(); ++r) {
                     double* dst = k[r] ? ga : gb;
                     if (!dst) continue;
                     for (std::size_t c = 0; c < n; ++c) dst[r * n + c] += g[r * n + c];
                   }
                 });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail("matmul", "inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  Map(out.mutable_data(), m, n).noalias() = MapC(a.data(), m, k) * MapC(b.data(), k, n);
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("matmul", {&out}, [ai = a.ptr(), bi = b.ptr(), oi = out.ptr(), m, k, n](Tape& t) {
      MapC g(t.existing_grad(oi.get()), m, n);
      if (double* ga = t.grad_buffer(ai.get()))
        Map(ga, m, k).noalias() += g * MapC(bi->value.data(), k, n).transpose();
      if (double* gb = t.grad_buffer(bi.get()))
        Map(gb, k, n).noalias() += MapC(ai->value.data(), m, k).transpose() * g;
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) fail("concat", "no inputs");
  const Tensor& first = parts.front();
  if (axis == 0) {
    Shape shape = first.shape();
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
      Shape tail_p(p.shape().begin() + 1, p.shape().end());
      Shape tail_f(shape.begin() + 1, shape.end());
      if (p.rank() != first.rank() || tail_p != tail_f) {
        fail("concat", "axis-0 parts " + shape_string(first.shape()) + " and " + shape_string(p.shape()));
      }
      rows += p.dim(0);
    }
    shape[0] = rows;
    Tensor out(shape);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      std::copy_n(p.data(), p.size(), out.mutable_data() + off);
      off += p.size();
    }
    if (Tape* tape = recording_tape(parts)) {
      std::vector<std::shared_ptr<TensorImpl>> ins;
      for (const Tensor& p : parts) ins.push_back(p.ptr());
      tape->record("concat", {&out}, [ins = std::move(ins), oi = out.ptr()](Tape& t) {
        const double* g = t.existing_grad(oi.get());
        std::size_t off = 0;
        for (const auto& in : ins) {
          const std::size_t n = in->value.size();
          if (double* gi = t.grad_buffer(in.get())) for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
          off += n;
        }
      });
    }
    return out;
  }
  if (axis != 1 && axis != -1) fail("concat", "unsupported axis " + std::to_string(axis));
  const std::size_t outer = first.size() / last_dim(first);
  std::size_t width = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    Shape head_p(p.shape().begin(), p.shape().end() - 1);
    Shape head_f(first.shape().begin(), first.shape().end() - 1);
    if (head_p != head_f) {
      fail("concat", "last-axis parts " + shape_string(first.shape()) + " and " + shape_string(p.shape()));
    }
    widths.push_back(last_dim(p));
    width += last_dim(p);
  }
  Shape shape = first.shape();
  shape.back() = width;
  Tensor out(shape);
  double* o = out.mutable_data();
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data();
    for (std::size_t r = 0; r < outer; ++r) std::copy_n(src + r * widths[k], widths[k], o + r * width + col);
    col += widths[k];
  }
  if (Tape* tape = recording_tape(parts)) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& p : parts) ins.push_back(p.ptr());
    tape->record("concat", {&out},
                 [ins = std::move(ins), widths = std::move(widths), oi = out.ptr(), outer, width](Tape& t) {
                   const double* g = t.existing_grad(oi.get());
                   std::size_t col = 0;
                   for (std::size_t k = 0; k < ins.size(); ++k) {
                     if (double* gi = t.grad_buffer(ins[k].get())) {
                       for (std::size_t r = 0; r < outer; ++r)
                         for (std::size_t c = 0; c < widths[k]; ++c) gi[r * widths[k] + c] += g[r * width + col + c];
                     }
                     col += widths[k];
                   }
                 });
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = axis < 0 ? a.rank() - 1 : static_cast<std::size_t>(axis);
  if (ax >= a.rank() || begin >= end || end > a.dim(ax)) {
    fail("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                      std::to_string(axis) + " of " + shape_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= a.dim(i);
  for (std::size_t i = ax + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t len = a.dim(ax);
  Shape shape = a.shape();
  shape[ax] = end - begin;
  Tensor out(shape);
  const std::size_t chunk = (end - begin) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.data() + (o * len + begin) * inner, chunk, out.mutable_data() + o * chunk);
  if (Tape* tape = recording_tape({&a})) {
    tape->record("slice", {&out}, [ai = a.ptr(), oi = out.ptr(), outer, len, begin, inner, chunk](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < chunk; ++i) ga[(o * len + begin) * inner + i] += g[o * chunk + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    fail("reshape", shape_string(a.shape()) + " cannot become " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  if (Tape* tape = recording_tape({&a})) {
    tape->record("reshape", {&out}, [ai = a.ptr(), oi = out.ptr()](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t i = 0; i < ai->value.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      "log_sigmoid", a,
      [](double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [](double x, double) { return x >= 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x)); });
}

Tensor softmax(const Tensor& a) {
  const std::size_t n = last_dim(a), rows = a.size() / n;
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) softmax_row(a.data() + r * n, out.mutable_data() + r * n, n);
  if (Tape* tape = recording_tape({&a})) {
    tape->record("softmax", {&out}, [ai = a.ptr(), oi = out.ptr(), rows, n](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      const double* y = oi->value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t n = last_dim(a), rows = a.size() / n;
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data() + r * n;
    double* y = out.mutable_data() + r * n;
    double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) y[c] = x[c] - lse;
  }
  if (Tape* tape = recording_tape({&a})) {
    tape->record("log_softmax", {&out}, [ai = a.ptr(), oi = out.ptr(), rows, n](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      const double* y = oi->value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r * n + c] - std::exp(y[r * n + c]) * gs;
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (Tape* tape = recording_tape({&a})) {
    tape->record("sum", {&out}, [ai = a.ptr(), oi = out.ptr()](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double g = t.existing_grad(oi.get())[0];
      for (std::size_t i = 0; i < ai->value.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor weighted_sum(const Tensor& a, std::span<const double> w) {
  if (w.size() != a.size()) {
    fail("weighted_sum", std::to_string(w.size()) + " weights for " + shape_string(a.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * a.data()[i];
  Tensor out = Tensor::scalar(s);
  if (Tape* tape = recording_tape({&a})) {
    std::vector<double> wc(w.begin(), w.end());
    tape->record("weighted_sum", {&out}, [ai = a.ptr(), oi = out.ptr(), wc = std::move(wc)](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double g = t.existing_grad(oi.get())[0];
      for (std::size_t i = 0; i < wc.size(); ++i) ga[i] += g * wc[i];
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, const Tensor& mask) {
  if (mask.requires_grad()) fail("dropout", "mask must be a constant");
  require_same("dropout", a, mask);
  return mul(a, mask);
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank2("embedding", table);
  const std::size_t vocab = table.dim(0), e = table.dim(1);
  if (ids.empty()) fail("embedding", "no ids");
  Tensor out(Shape{ids.size(), e});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      fail("embedding", "id " + std::to_string(ids[i]) + " outside table " + shape_string(table.shape()));
    }
    std::copy_n(table.data() + ids[i] * e, e, out.mutable_data() + i * e);
  }
  if (Tape* tape = recording_tape({&table})) {
    std::vector<int> idc(ids.begin(), ids.end());
    tape->record("embedding", {&out}, [ti = table.ptr(), oi = out.ptr(), idc = std::move(idc), e](Tape& t) {
      double* gt = t.grad_buffer(ti.get());
      if (!gt) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t i = 0; i < idc.size(); ++i)
        for (std::size_t c = 0; c < e; ++c) gt[idc[i] * e + c] += g[i * e + c];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t n = a.cols();
  if (rows.empty()) fail("gather_rows", "no rows");
  Shape shape = a.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) fail("gather_rows", "row " + std::to_string(rows[i]) + " of " + shape_string(a.shape()));
    std::copy_n(a.data() + rows[i] * n, n, out.mutable_data() + i * n);
  }
  if (Tape* tape = recording_tape({&a})) {
    std::vector<std::size_t> rc(rows.begin(), rows.end());
    tape->record("gather_rows", {&out}, [ai = a.ptr(), oi = out.ptr(), rc = std::move(rc), n](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t i = 0; i < rc.size(); ++i)
        for (std::size_t c = 0; c < n; ++c) ga[rc[i] * n + c] += g[i * n + c];
    });
  }
  return out;
}

Tensor pick(const Tensor& a, std::span<const int> cols) {
  require_rank2("pick", a);
  const std::size_t rows = a.dim(0), n = a.dim(1);
  if (cols.size() != rows) fail("pick", std::to_string(cols.size()) + " indices for " + shape_string(a.shape()));
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols[r] < 0 || static_cast<std::size_t>(cols[r]) >= n) {
      fail("pick", "column " + std::to_string(cols[r]) + " outside " + shape_string(a.shape()));
    }
    out.mutable_data()[r] = a.data()[r * n + cols[r]];
  }
  if (Tape* tape = recording_tape({&a})) {
    std::vector<int> cc(cols.begin(), cols.end());
    tape->record("pick", {&out}, [ai = a.ptr(), oi = out.ptr(), cc = std::move(cc), n](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t r = 0; r < cc.size(); ++r) ga[r * n + cc[r]] += g[r];
    });
  }
  return out;
}

Tensor interleave_time(std::span<const Tensor> steps) {
  if (steps.empty()) fail("interleave_time", "no steps");
  const std::size_t batch = steps[0].rows(), d = steps[0].cols(), frames = steps.size();
  for (const Tensor& s : steps) {
    if (s.rank() != 2 || s.dim(0) != batch || s.dim(1) != d) {
      fail("interleave_time", "step " + shape_string(s.shape()) + " vs " + shape_string(steps[0].shape()));
    }
  }
  Tensor out(Shape{batch * frames, d});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(steps[t].data() + b * d, d, out.mutable_data() + (b * frames + t) * d);
  if (Tape* tape = recording_tape(steps)) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& s : steps) ins.push_back(s.ptr());
    tape->record("interleave_time", {&out}, [ins = std::move(ins), oi = out.ptr(), batch, frames, d](Tape& t) {
      const double* g = t.existing_grad(oi.get());
      for (std::size_t s = 0; s < frames; ++s) {
        double* gs = t.grad_buffer(ins[s].get());
        if (!gs) continue;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < d; ++c) gs[b * d + c] += g[(b * frames + s) * d + c];
      }
    });
  }
  return out;
}

Tensor time_step(const Tensor& a, std::size_t batch, std::size_t t) {
  require_rank2("time_step", a);
  if (batch == 0 || a.dim(0) % batch != 0 || t >= a.dim(0) / batch) {
    fail("time_step", "step " + std::to_string(t) + " of " + shape_string(a.shape()) + " with batch " +
                          std::to_string(batch));
  }
  const std::size_t frames = a.dim(0) / batch;
  std::vector<std::size_t> rows(batch);
  for (std::size_t b = 0; b < batch; ++b) rows[b] = b * frames + t;
  return gather_rows(a, rows);
}

Tensor broadcast_rows(const Tensor& a, std::size_t reps) {
  require_rank2("broadcast_rows", a);
  const std::size_t batch = a.dim(0), d = a.dim(1);
  Tensor out(Shape{batch * reps, d});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < reps; ++j) std::copy_n(a.data() + b * d, d, out.mutable_data() + (b * reps + j) * d);
  if (Tape* tape = recording_tape({&a})) {
    tape->record("broadcast_rows", {&out}, [ai = a.ptr(), oi = out.ptr(), batch, reps, d](Tape& t) {
      double* ga = t.grad_buffer(ai.get());
      if (!ga) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < reps; ++j)
          for (std::size_t c = 0; c < d; ++c) ga[b * d + c] += g[(b * reps + j) * d + c];
    });
  }
  return out;
}

Tensor attend(const Tensor& weights, const Tensor& values) {
  require_rank2("attend", weights);
  require_rank2("attend", values);
  const std::size_t batch = weights.dim(0), frames = weights.dim(1), d = values.dim(1);
  if (values.dim(0) != batch * frames) {
    fail("attend", "weights " + shape_string(weights.shape()) + " vs values " + shape_string(values.shape()));
  }
  Tensor out(Shape{batch, d});
  double* o = out.mutable_data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < frames; ++t) {
      const double w = weights.data()[b * frames + t];
      const double* v = values.data() + (b * frames + t) * d;
      for (std::size_t c = 0; c < d; ++c) o[b * d + c] += w * v[c];
    }
  if (Tape* tape = recording_tape({&weights, &values})) {
    tape->record("attend", {&out}, [wi = weights.ptr(), vi = values.ptr(), oi = out.ptr(), batch, frames, d](Tape& t) {
      const double* g = t.existing_grad(oi.get());
      double* gw = t.grad_buffer(wi.get());
      double* gv = t.grad_buffer(vi.get());
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < frames; ++s) {
          const std::size_t row = b * frames + s;
          if (gw) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += g[b * d + c] * vi->value[row * d + c];
            gw[row] += acc;
          }
          if (gv) {
            const double w = wi->value[row];
            for (std::size_t c = 0; c < d; ++c) gv[row * d + c] += w * g[b * d + c];
          }
        }
    });
  }
  return out;
}

Tensor unfold_time(const Tensor& x, std::size_t batch, std::size_t width) {
  require_rank2("unfold_time", x);
  if (width % 2 == 0) fail("unfold_time", "width must be odd");
  if (batch == 0 || x.dim(0) % batch != 0) fail("unfold_time", "batch does not divide " + shape_string(x.shape()));
  const std::size_t frames = x.dim(0) / batch, d = x.dim(1), half = width / 2;
  Tensor out(Shape{x.dim(0), width * d});
  double* o = out.mutable_data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < width; ++k) {
        const long src = static_cast<long>(t) + static_cast<long>(k) - static_cast<long>(half);
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        std::copy_n(x.data() + (b * frames + src) * d, d, o + ((b * frames + t) * width + k) * d);
      }
  if (Tape* tape = recording_tape({&x})) {
    tape->record("unfold_time", {&out}, [xi = x.ptr(), oi = out.ptr(), batch, frames, d, width, half](Tape& t) {
      double* gx = t.grad_buffer(xi.get());
      if (!gx) return;
      const double* g = t.existing_grad(oi.get());
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < frames; ++s)
          for (std::size_t k = 0; k < width; ++k) {
            const long src = static_cast<long>(s) + static_cast<long>(k) - static_cast<long>(half);
            if (src < 0 || src >= static_cast<long>(frames)) continue;
            for (std::size_t c = 0; c < d; ++c)
              gx[(b * frames + src) * d + c] += g[((b * frames + s) * width + k) * d + c];
          }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& gates, const Tensor& c_prev) {
  require_rank2("lstm_cell", gates);
  require_rank2("lstm_cell", c_prev);
  const std::size_t batch = c_prev.dim(0), units = c_prev.dim(1);
  if (gates.dim(0) != batch || gates.dim(1) != 4 * units) {
    fail("lstm_cell", "gates " + shape_string(gates.shape()) + " vs state " + shape_string(c_prev.shape()));
  }
  Tensor h(Shape{batch, units}), c(Shape{batch, units});
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = gates.data() + b * 4 * units;
    for (std::size_t u = 0; u < units; ++u) {
      const double i = sig(z[u]), f = sig(z[units + u]), g = std::tanh(z[2 * units + u]), o = sig(z[3 * units + u]);
      const double cv = f * c_prev.data()[b * units + u] + i * g;
      c.mutable_data()[b * units + u] = cv;
      h.mutable_data()[b * units + u] = o * std::tanh(cv);
    }
  }
  if (Tape* tape = recording_tape({&gates, &c_prev})) {
    tape->record("lstm_cell", {&h, &c},
                 [gi = gates.ptr(), pi = c_prev.ptr(), hi = h.ptr(), ci = c.ptr(), batch, units, sig](Tape& t) {
                   const double* gh = t.existing_grad(hi.get());
                   const double* gc = t.existing_grad(ci.get());
                   double* gz = t.grad_buffer(gi.get());
                   double* gp = t.grad_buffer(pi.get());
                   for (std::size_t b = 0; b < batch; ++b) {
                     const double* z = gi->value.data() + b * 4 * units;
                     for (std::size_t u = 0; u < units; ++u) {
                       const std::size_t k = b * units + u;
                       const double i = sig(z[u]), f = sig(z[units + u]), g = std::tanh(z[2 * units + u]),
                                    o = sig(z[3 * units + u]);
                       const double tc = std::tanh(ci->value[k]);
                       const double dh = gh ? gh[k] : 0.0;
                       const double dc = (gc ? gc[k] : 0.0) + dh * o * (1.0 - tc * tc);
                       if (gz) {
                         double* dz = gz + b * 4 * units;
                         dz[u] += dc * g * i * (1.0 - i);
                         dz[units + u] += dc * pi->value[k] * f * (1.0 - f);
                         dz[2 * units + u] += dc * i * (1.0 - g * g);
                         dz[3 * units + u] += dh * tc * o * (1.0 - o);
                       }
                       if (gp) gp[k] += dc * f;
                     }
                   }
                 });
  }
  return {h, c};
}

Tensor soft_cross_entropy(const Tensor& logits, const Tensor& targets, std::span<const double> row_weights) {
  require_same("soft_cross_entropy", logits, targets);
  if (targets.requires_grad()) fail("soft_cross_entropy", "targets must be constant");
  const std::size_t n = last_dim(logits), rows = logits.size() / n;
  if (row_weights.size() != rows) {
    fail("soft_cross_entropy", std::to_string(row_weights.size()) + " weights for " + std::to_string(rows) + " rows");
  }
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data() + r * n;
    softmax_row(x, probs.data() + r * n, n);
    if (row_weights[r] == 0.0) continue;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    double ce = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double tv = targets.data()[r * n + c];
      if (tv != 0.0) ce -= tv * (x[c] - lse);
    }
    total += row_weights[r] * ce;
  }
  Tensor out = Tensor::scalar(total);
  if (Tape* tape = recording_tape({&logits})) {
    std::vector<double> w(row_weights.begin(), row_weights.end());
    tape->record("soft_cross_entropy", {&out},
                 [li = logits.ptr(), ti = targets.ptr(), oi = out.ptr(), probs = std::move(probs), w = std::move(w),
                  rows, n](Tape& t) {
                   double* gl = t.grad_buffer(li.get());
                   if (!gl) return;
                   const double g = t.existing_grad(oi.get())[0];
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double scale = g * w[r];
                     for (std::size_t c = 0; c < n; ++c)
                       gl[r * n + c] += scale * (probs[r * n + c] - ti->value[r * n + c]);
                   }
                 });
  }
  return out;
}

}  // namespace adaptlab::ad
