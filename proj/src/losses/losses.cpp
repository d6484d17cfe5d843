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

#include "adaptlab/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::losses {

using ad::Shape;

void AdaptationConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("adaptation: beta must lie in [0,1]");
  if (gamma1 < 0.0 || gamma2 < 0.0) throw ConfigError("adaptation: gamma weights must be nonnegative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ConfigError("adaptation: label_smoothing must lie in [0,1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("adaptation: dropout must lie in [0,1)");
  if (!(learning_rate > 0.0)) throw ConfigError("adaptation: learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("adaptation: batch_size must be positive");
  if (nbest == 0) throw ConfigError("adaptation: nbest must be positive");
}

Tensor smoothed_targets(std::span<const int> targets, std::size_t vocab, double smoothing) {
  if (vocab < 2 && smoothing > 0.0) throw ContractError("smoothed_targets: smoothing needs at least 2 classes");
  const double off = vocab > 1 ? smoothing / static_cast<double>(vocab - 1) : 0.0;
  Tensor t(Shape{targets.size(), vocab}, off);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab)
      throw TokenError("smoothed_targets: token " + std::to_string(targets[i]) + " outside vocabulary");
    t.mutable_data()[i * vocab + targets[i]] = 1.0 - smoothing;
  }
  return t;
}

StepWeights step_weights(std::size_t steps, std::span<const double> weights) {
  StepWeights s;
  if (weights.empty()) {
    s.w.assign(steps, 1.0);
  } else {
    if (weights.size() != steps)
      throw ContractError("loss: " + std::to_string(weights.size()) + " weights for " + std::to_string(steps) +
                          " steps");
    s.w.assign(weights.begin(), weights.end());
  }
  s.total = std::accumulate(s.w.begin(), s.w.end(), 0.0);
  if (!(s.total > 0.0)) throw ContractError("loss: step weights sum to zero");
  for (double& v : s.w) v /= s.total;
  return s;
}

namespace {

void check_steps(const char* op, const Tensor& logits, std::size_t targets) {
  if (logits.rank() != 2) throw DimensionError(std::string(op) + ": logits must be [U x V], got " +
                                               ad::shape_string(logits.shape()));
  if (logits.rows() != targets) {
    throw ContractError(std::string(op) + ": " + std::to_string(logits.rows()) + " steps vs " +
                        std::to_string(targets) + " targets");
  }
}

}  // namespace

Tensor ce_loss(const Tensor& logits, std::span<const int> targets, double smoothing, std::span<const double> weights) {
  check_steps("ce_loss", logits, targets.size());
  StepWeights sw = step_weights(targets.size(), weights);
  return ad::soft_cross_entropy(logits, smoothed_targets(targets, logits.cols(), smoothing), sw.w);
}

Tensor kld_adapt_loss(const Tensor& logits, std::span<const int> targets, const Tensor& p_si, double beta,
                      double smoothing, std::span<const double> weights) {
  check_steps("kld_adapt_loss", logits, targets.size());
  if (p_si.shape() != logits.shape()) {
    throw ContractError("kld_adapt_loss: teacher " + ad::shape_string(p_si.shape()) + " vs student " +
                        ad::shape_string(logits.shape()));
  }
  if (p_si.requires_grad()) throw ContractError("kld_adapt_loss: teacher distributions must be detached");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("kld_adapt_loss: beta must lie in [0,1]");
  StepWeights sw = step_weights(targets.size(), weights);
  Tensor target = smoothed_targets(targets, logits.cols(), smoothing);
  if (beta > 0.0) {
    double* t = target.mutable_data();
    const double* q = p_si.data();
    if (beta == 1.0) {
      std::copy(q, q + target.size(), t);
    } else {
      for (std::size_t i = 0; i < target.size(); ++i) t[i] = (1.0 - beta) * t[i] + beta * q[i];
    }
  }
  return ad::soft_cross_entropy(logits, target, sw.w);
}

KldParts kld_parts(const Tensor& logits, std::span<const int> targets, const Tensor& p_si, double smoothing,
                   std::span<const double> weights) {
  ad::NoGradScope no_grad;
  KldParts parts;
  parts.ce = ce_loss(logits, targets, smoothing, weights).item();
  parts.kld = kld_adapt_loss(logits, targets, p_si, 1.0, smoothing, weights).item();
  return parts;
}

void NBestList::validate() const {
  if (hypotheses.empty()) throw ContractError("nbest: empty hypothesis list");
  std::set<std::vector<int>> seen;
  for (const auto& h : hypotheses) {
    if (!std::isfinite(h.log_prob)) throw ContractError("nbest: non-finite log-probability");
    if (!seen.insert(h.tokens).second) throw ContractError("nbest: duplicate hypothesis");
  }
}

Tensor mwer_loss(const Tensor& log_probs, std::span<const double> errors) {
  if (log_probs.size() == 0 || errors.empty()) throw ContractError("mwer_loss: empty n-best");
  if (log_probs.size() != errors.size()) {
    throw ContractError("mwer_loss: " + std::to_string(log_probs.size()) + " log-probs vs " +
                        std::to_string(errors.size()) + " error counts");
  }
  const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
  std::vector<double> centred(errors.begin(), errors.end());
  for (double& e : centred) e -= mean;
  return ad::weighted_sum(ad::softmax(ad::reshape(log_probs, {log_probs.size()})), centred);
}

double mwer_loss(const NBestList& nbest) {
  nbest.validate();
  std::vector<double> lp, err;
  for (const auto& h : nbest.hypotheses) {
    lp.push_back(h.log_prob);
    err.push_back(h.errors);
  }
  ad::NoGradScope no_grad;
  return mwer_loss(Tensor(Shape{lp.size()}, lp), err).item();
}

double expected_errors(const NBestList& nbest) {
  nbest.validate();
  std::vector<double> lp;
  for (const auto& h : nbest.hypotheses) lp.push_back(h.log_prob);
  std::vector<double> p(lp.size());
  ad::softmax_row(lp.data(), p.data(), lp.size());
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) e += p[i] * nbest.hypotheses[i].errors;
  return e;
}

Tensor combined_adapt_loss(const Tensor& kld, const Tensor& mwer, const AdaptationConfig& cfg) {
  return ad::add(ad::scale(kld, cfg.gamma1), ad::scale(mwer, cfg.gamma2));
}

Tensor combined_adapt_loss(const Tensor& logits, std::span<const int> targets, const Tensor& p_si,
                           const Tensor& nbest_log_probs, std::span<const double> nbest_errors,
                           const AdaptationConfig& cfg) {
  return combined_adapt_loss(kld_adapt_loss(logits, targets, p_si, cfg.beta, cfg.label_smoothing),
                             mwer_loss(nbest_log_probs, nbest_errors), cfg);
}

}  // namespace adaptlab::losses
