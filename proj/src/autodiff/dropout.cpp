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

#include "adaptlab/autodiff/dropout.hpp"

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::ad {

DropoutSource::DropoutSource(double rate, std::uint64_t seed, bool recording)
    : rate_(rate), rng_(seed), recording_(recording) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
}

Tensor DropoutSource::mask(const Shape& shape) {
  if (frozen_) {
    if (cursor_ >= recorded_.size() || recorded_[cursor_].shape() != shape) {
      throw ContractError("dropout: frozen mask sequence does not match this forward pass");
    }
    return recorded_[cursor_++];
  }
  Tensor m(shape);
  std::bernoulli_distribution keep(1.0 - rate_);
  const double scale = 1.0 / (1.0 - rate_);
  for (double& v : m.mutable_values()) v = keep(rng_) ? scale : 0.0;
  if (recording_) recorded_.push_back(m);
  return m;
}

void DropoutSource::freeze() {
  if (!recording_) throw ContractError("dropout: freeze() needs a recording source");
  frozen_ = true;
  cursor_ = 0;
}

Tensor apply_dropout(const Tensor& x, DropoutSource* src) {
  if (src == nullptr || !src->enabled()) return x;
  return dropout(x, src->mask(x.shape()));
}

}  // namespace adaptlab::ad
