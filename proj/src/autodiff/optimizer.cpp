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

#include "adaptlab/autodiff/optimizer.hpp"

#include <cmath>

namespace adaptlab::ad {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

double Adam::grad_norm() const {
  double sq = 0.0;
  for (const Tensor& p : params_)
    for (double g : p.grad()) sq += g * g;
  return std::sqrt(sq);
}

void Adam::step() {
  ++steps_;
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grad_norm();
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad() && config_.weight_decay == 0.0) continue;
    double* w = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g.empty() ? 0.0 : clip * g[i];
      gi += config_.weight_decay * w[i];
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * gi;
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m_[k][i] / bc1, vhat = v_[k][i] / bc2;
      w[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace adaptlab::ad
