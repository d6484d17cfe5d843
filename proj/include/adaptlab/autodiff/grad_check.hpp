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

#include <cstdint>
#include <functional>
#include <span>

#include "adaptlab/autodiff/tensor.hpp"

namespace adaptlab::ad {

// Compares reverse-mode gradients against central finite differences.
// Returns max over coordinates of |analytic - numeric| /
// max(|analytic|, |numeric|, 1e-12). `fn` must be deterministic.
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double epsilon = 1e-5);

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates probed per tensor; 0 probes all of them.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // Five-point stencil (error O(eps^4)); allows a larger epsilon, which keeps
  // roundoff small on coordinates with tiny gradients.
  bool fourth_order = false;
  // Called for each probed coordinate with (tensor index, coordinate,
  // analytic, numeric); handy when a check fails.
  std::function<void(std::size_t, std::size_t, double, double)> observer;
};

// Variant over a set of parameter tensors that `fn` reads directly. The
// parameters are perturbed in place and restored.
double grad_check(const std::function<Tensor()>& fn, std::span<Tensor> params, const GradCheckOptions& opts = {});

}  // namespace adaptlab::ad
