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
#include <span>
#include <vector>

#include "adaptlab/autodiff/tensor.hpp"

namespace adaptlab::losses {

using ad::Tensor;

struct AdaptationConfig {
  double beta = 0.6;  // KLD relevance
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double label_smoothing = 0.0;
  double dropout = 0.25;
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t nbest = 4;  // beam width for mWER hypotheses
  double clip_norm = 5.0;

  void validate() const;
};

// Rows of one-hot targets with `smoothing` mass spread uniformly over the
// other V-1 classes.
Tensor smoothed_targets(std::span<const int> targets, std::size_t vocab, double smoothing);

// Per-step row weights: all ones when `weights` is empty.
struct StepWeights {
  std::vector<double> w;
  double total = 0.0;
};
StepWeights step_weights(std::size_t steps, std::span<const double> weights);

// Mean over (weighted) steps of CE(smoothed one-hot, softmax(logits)).
// logits [U x V]. Throws ContractError on length mismatch.
Tensor ce_loss(const Tensor& logits, std::span<const int> targets, double smoothing,
               std::span<const double> weights = {});

// Mean over steps of (1-beta) CE(y*_i, p_i) + beta CE(p_si_i, p_i), computed
// as a single CE against the mixed target. p_si [U x V] must be constant.
Tensor kld_adapt_loss(const Tensor& logits, std::span<const int> targets, const Tensor& p_si, double beta,
                      double smoothing = 0.0, std::span<const double> weights = {});

// The two CE terms of kld_adapt_loss, evaluated separately (no grad).
struct KldParts {
  double ce = 0.0;
  double kld = 0.0;
};
KldParts kld_parts(const Tensor& logits, std::span<const int> targets, const Tensor& p_si, double smoothing = 0.0,
                   std::span<const double> weights = {});

struct NBestEntry {
  std::vector<int> tokens;
  double log_prob = 0.0;
  double errors = 0.0;  // word errors against the reference
};

struct NBestList {
  std::vector<NBestEntry> hypotheses;
  std::vector<int> reference;
  void validate() const;
};

// sum_h p(h) (W_h - mean_h W_h) where p renormalizes exp(log_probs) over the
// list. The baseline is the plain mean of W over the list and is constant, so
// d/d lp_h = p_h (W_h - sum_k p_k W_k). log_probs [N].
Tensor mwer_loss(const Tensor& log_probs, std::span<const double> errors);
double mwer_loss(const NBestList& nbest);

// Expected word errors sum_h p(h) W_h under the renormalized distribution.
double expected_errors(const NBestList& nbest);

// gamma1 * kld + gamma2 * mwer over already-evaluated parts.
Tensor combined_adapt_loss(const Tensor& kld, const Tensor& mwer, const AdaptationConfig& cfg);
// Convenience form that evaluates both parts.
Tensor combined_adapt_loss(const Tensor& logits, std::span<const int> targets, const Tensor& p_si,
                           const Tensor& nbest_log_probs, std::span<const double> nbest_errors,
                           const AdaptationConfig& cfg);

}  // namespace adaptlab::losses
