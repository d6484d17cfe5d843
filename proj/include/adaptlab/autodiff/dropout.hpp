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
#include <random>
#include <vector>

#include "adaptlab/autodiff/tensor.hpp"

namespace adaptlab::ad {

// Supplies inverted-dropout masks drawn from a seeded generator. With
// `recording` on, masks are kept and freeze() switches to replaying the
// recorded sequence from the start on every pass, which makes a stochastic
// forward deterministic (needed for finite-difference checks).
class DropoutSource {
 public:
  DropoutSource() = default;
  DropoutSource(double rate, std::uint64_t seed, bool recording = false);

  bool enabled() const { return rate_ > 0.0; }
  double rate() const { return rate_; }

  Tensor mask(const Shape& shape);
  void freeze();
  void rewind() { cursor_ = 0; }

 private:
  double rate_ = 0.0;
  std::mt19937_64 rng_;
  bool recording_ = false;
  bool frozen_ = false;
  std::vector<Tensor> recorded_;
  std::size_t cursor_ = 0;
};

// x unchanged when `src` is null or disabled, else dropout(x, src->mask(...)).
Tensor apply_dropout(const Tensor& x, DropoutSource* src);

}  // namespace adaptlab::ad
