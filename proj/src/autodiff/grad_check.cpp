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

#include "adaptlab/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace adaptlab::ad {
namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double epsilon) {
  Tensor x = point.detach();
  x.set_requires_grad(true);
  std::vector<double> analytic(x.size(), 0.0);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = fn(x);
    if (y.impl()->producer == &tape) {
      tape.backward(y);
      auto g = tape.grad(x);
      if (!g.empty()) std::copy(g.begin(), g.end(), analytic.begin());
    }
  }
  double worst = 0.0;
  Tensor probe = point.detach();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe.at(i);
    probe.mutable_data()[i] = orig + epsilon;
    const double up = fn(probe).item();
    probe.mutable_data()[i] = orig - epsilon;
    const double down = fn(probe).item();
    probe.mutable_data()[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * epsilon)));
  }
  return worst;
}

double grad_check(const std::function<Tensor()>& fn, std::span<Tensor> params, const GradCheckOptions& opts) {
  std::vector<std::vector<double>> analytic(params.size());
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = fn();
    if (y.impl()->producer == &tape) tape.backward(y);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto g = tape.grad(params[p]);
      analytic[p].assign(params[p].size(), 0.0);
      if (!g.empty()) std::copy(g.begin(), g.end(), analytic[p].begin());
    }
  }
  std::mt19937_64 rng(opts.seed);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p];
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_tensor > 0 && coords.size() > opts.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double orig = t.at(i);
      auto at = [&](double delta) {
        t.mutable_data()[i] = orig + delta;
        return fn().item();
      };
      const double h = opts.epsilon;
      double numeric = 0.0;
      if (opts.fourth_order) {
        numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      } else {
        numeric = (at(h) - at(-h)) / (2.0 * h);
      }
      t.mutable_data()[i] = orig;
      if (opts.observer) opts.observer(p, i, analytic[p][i], numeric);
      worst = std::max(worst, relative_error(analytic[p][i], numeric));
    }
  }
  return worst;
}

}  // namespace adaptlab::ad
