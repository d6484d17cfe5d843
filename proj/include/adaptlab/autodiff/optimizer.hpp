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

#include <vector>

#include "adaptlab/autodiff/tensor.hpp"

namespace adaptlab::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // L2 penalty added to the gradient.
  double weight_decay = 0.0;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

// Adam over a fixed list of tensors. step() consumes each tensor's
// accumulated TensorImpl::grad and clears it.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  // L2 norm of the gradients currently accumulated on the parameters.
  double grad_norm() const;
  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  long steps_ = 0;
};

}  // namespace adaptlab::ad
