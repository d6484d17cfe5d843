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
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "adaptlab/autodiff/dropout.hpp"
#include "adaptlab/model/params.hpp"

namespace adaptlab::lm {

using ad::Tensor;

struct LmConfig {
  std::size_t vocab_size = 32;
  std::size_t embedding_dim = 16;
  std::size_t units = 32;
  std::size_t layers = 1;
  void validate() const;
};

// Word-piece RNN LM. Outputs are treated as unnormalized log-probabilities.
struct LmParams {
  LmConfig config;
  Tensor embedding;  // [V x E]
  std::vector<model::LstmWeights> lstm;
  Tensor out_weight;  // [H x V]
  Tensor out_bias;    // [V]

  using Visitor = std::function<void(const std::string& name, Tensor& tensor)>;
  using ConstVisitor = std::function<void(const std::string& name, const Tensor& tensor)>;
  void for_each(const Visitor& fn);
  void for_each(const ConstVisitor& fn) const;
  std::vector<Tensor> tensors();
  LmParams clone() const;
  std::size_t parameter_count() const;
};

// Small random weights and output bias -ln V, so that the initial model is
// close to uniform and already self-normalized.
LmParams init_lm(const LmConfig& config, std::uint64_t seed);

enum class LmScoring { kSelfNormalized, kExact };

struct LmScores {
  std::vector<double> per_token;
  double total = 0.0;
};

// Scores y_1..y_n given BOS (y usually ends with EOS). Self-normalized mode
// returns raw output logits of each target, exact mode log-softmax values.
LmScores lm_logprob(const LmParams& params, std::span<const int> y, LmScoring mode);

// Recurrent state for step-wise scoring of a batch of prefixes.
struct LmState {
  std::vector<Tensor> h, c;  // per layer [B x H]
  std::size_t batch() const { return h.empty() ? 0 : h.front().rows(); }
};
LmState lm_initial_state(const LmParams& params, std::size_t batch);
// Consumes `prev` (one token per row), updates `state`, returns [B x V]
// logits for the next token.
Tensor lm_step(const LmParams& params, LmState& state, std::span<const int> prev,
               ad::DropoutSource* dropout = nullptr);
// Scores for the next token in the requested mode, from step logits.
Tensor lm_scores(const Tensor& logits, LmScoring mode);
LmState gather_lm_state(const LmState& state, std::span<const std::size_t> rows);

// Teacher-forced logits for a batch of sequences: rows are step-major
// (i*B + b); padded steps carry target EOS and weight 0.
struct LmBatch {
  Tensor logits;
  std::vector<int> targets;
  std::vector<double> weights;
};
LmBatch lm_forward(const LmParams& params, std::span<const std::vector<int>> sequences,
                   ad::DropoutSource* dropout = nullptr);

// log sum_v exp(logit_v) for every context of every sequence.
std::vector<double> log_partitions(const LmParams& params, std::span<const std::vector<int>> sequences);
double mean_abs_log_partition(const LmParams& params, std::span<const std::vector<int>> sequences);
// exp(-mean log p) per token (EOS included).
double perplexity(const LmParams& params, std::span<const std::vector<int>> sequences,
                  LmScoring mode = LmScoring::kExact);

// Add-one smoothed unigram over the vocabulary (specials other than EOS get
// the smoothing mass only).
std::vector<double> unigram_noise(std::span<const std::vector<int>> corpus, std::size_t vocab);

struct NceConfig {
  std::size_t k = 8;
  std::vector<double> noise;  // filled from the corpus when empty
  double weight_decay = 1e-6;
  double dropout = 0.1;
  double learning_rate = 3e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  void validate(std::size_t vocab) const;
};

// Binary NCE objective, mean over weighted rows:
//   -[log s(u_t) + sum_j log s(-u_j)],  u = logit - log(k q)
// where t is the data token and j ranges over the row's noise samples
// ([rows x k] ids).
Tensor nce_loss(const Tensor& logits, std::span<const int> targets, std::span<const int> noise_samples,
                std::size_t k, std::span<const double> noise_probs, std::span<const double> weights);

// Draws k noise ids per row from `noise`.
std::vector<int> draw_noise(std::size_t rows, std::size_t k, std::span<const double> noise, std::uint64_t seed);

struct LmEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
};

LmParams train_nce(const LmParams& init, std::span<const std::vector<int>> corpus, const NceConfig& cfg,
                   std::vector<LmEpochLog>* log = nullptr);

struct FinetuneConfig {
  NceConfig nce;
  bool use_kld = false;
  double beta_lm = 0.5;
  // Optimizer steps; 0 returns the base unchanged.
  std::size_t steps = 100;
};

// Continues NCE training on speaker text. With use_kld the objective is
// (1 - beta_lm) NCE + beta_lm CE(p_base, p) where p_base is the base LM's
// exact softmax and p the exact softmax of the model being tuned.
LmParams finetune_lm(const LmParams& base, std::span<const std::vector<int>> speaker_text,
                     const FinetuneConfig& cfg);

// Loss of one finetuning batch (exposed for gradient tests).
Tensor finetune_loss(const LmParams& params, const LmParams& base, std::span<const std::vector<int>> batch,
                     const FinetuneConfig& cfg, std::span<const int> noise_samples,
                     ad::DropoutSource* dropout = nullptr);

double parameter_distance(const LmParams& a, const LmParams& b);

}  // namespace adaptlab::lm
