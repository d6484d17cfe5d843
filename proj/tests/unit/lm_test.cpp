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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adaptlab/autodiff/grad_check.hpp"
#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/lm/lm.hpp"

namespace adaptlab::lm {
namespace {

using ad::Shape;
using model::kBos;
using model::kEos;

constexpr std::size_t kVocab = 10;

// Sentences from a sparse first-order chain over ids 3..9; `shift` rotates
// the preferred successors to model a different text domain.
std::vector<std::vector<int>> chain_corpus(std::size_t n, std::uint64_t seed, int shift = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<int> y;
    int prev = 3 + static_cast<int>(rng() % 7);
    y.push_back(prev);
    while (y.size() < 8) {
      if (y.size() >= 3 && u(rng) < 0.3) break;
      const int next = u(rng) < 0.85 ? 3 + (prev - 3 + 1 + shift) % 7 : 3 + static_cast<int>(rng() % 7);
      y.push_back(next);
      prev = next;
    }
    y.push_back(kEos);
    out.push_back(std::move(y));
  }
  return out;
}

LmParams small_lm(std::uint64_t seed) { return init_lm({kVocab, 8, 16, 1}, seed); }

TEST(LmScoring, ZeroOutputWeightsGiveUniform) {
  LmParams p = small_lm(1);
  for (double& v : p.out_weight.mutable_values()) v = 0.0;
  const std::vector<int> y = {3, 4, 5, kEos};
  LmScores exact = lm_logprob(p, y, LmScoring::kExact);
  LmScores raw = lm_logprob(p, y, LmScoring::kSelfNormalized);
  ASSERT_EQ(exact.per_token.size(), y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(exact.per_token[i], -std::log(static_cast<double>(kVocab)), 1e-12);
    EXPECT_NEAR(raw.per_token[i], -std::log(static_cast<double>(kVocab)), 1e-12);
    sum += raw.per_token[i];
  }
  EXPECT_NEAR(raw.total, sum, 1e-12);
}

TEST(LmScoring, ModesAgreeWithStepLogits) {
  LmParams p = small_lm(2);
  const std::vector<int> y = {4, 4, 7, 3, kEos};
  LmScores exact = lm_logprob(p, y, LmScoring::kExact);
  LmScores raw = lm_logprob(p, y, LmScoring::kSelfNormalized);
  LmState st = lm_initial_state(p, 1);
  int prev = kBos;
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ad::Tensor logits = lm_step(p, st, std::span<const int>(&prev, 1));
    double z = 0.0;
    for (std::size_t v = 0; v < kVocab; ++v) z += std::exp(logits.at(v));
    const double target = logits.at(static_cast<std::size_t>(y[i]));
    EXPECT_NEAR(raw.per_token[i], target, 1e-12);
    EXPECT_NEAR(exact.per_token[i], target - std::log(z), 1e-12);
    total += exact.per_token[i];
    prev = y[i];
  }
  EXPECT_NEAR(exact.total, total, 1e-12);
}

TEST(LmScoring, BatchForwardMatchesSingle) {
  LmParams p = small_lm(3);
  const std::vector<std::vector<int>> seqs = {{3, 4, kEos}, {5, 6, 7, 8, 9, kEos}, {kEos}};
  LmBatch b = lm_forward(p, seqs);
  const std::size_t batch = seqs.size();
  for (std::size_t s = 0; s < batch; ++s) {
    LmScores raw = lm_logprob(p, seqs[s], LmScoring::kSelfNormalized);
    for (std::size_t i = 0; i < seqs[s].size(); ++i) {
      const std::size_t row = i * batch + s;
      EXPECT_EQ(b.targets[row], seqs[s][i]);
      EXPECT_EQ(b.weights[row], 1.0);
      EXPECT_NEAR(b.logits.at(row, static_cast<std::size_t>(seqs[s][i])), raw.per_token[i], 1e-12);
    }
    for (std::size_t i = seqs[s].size(); i < 6; ++i) EXPECT_EQ(b.weights[i * batch + s], 0.0);
  }
}

TEST(Nce, MatchesHandComputedRow) {
  ad::Tensor logits(Shape{1, 4}, {0.5, -1.0, 2.0, 0.0});
  const std::vector<int> target = {2};
  const std::vector<int> noise = {0, 3, 3};
  const std::vector<double> q = {0.1, 0.2, 0.3, 0.4};
  const std::vector<double> w = {1.0};
  auto log_sig = [](double u) { return -std::log1p(std::exp(-u)); };
  const double k = 3.0;
  const double expect = -(log_sig(2.0 - std::log(k * 0.3)) + log_sig(-(0.5 - std::log(k * 0.1))) +
                          2.0 * log_sig(-(0.0 - std::log(k * 0.4))));
  EXPECT_NEAR(nce_loss(logits, target, noise, 3, q, w).item(), expect, 1e-12);
}

TEST(Nce, GradientPassesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t rows = 6, k = 4;
  std::vector<double> vals(rows * kVocab);
  for (double& v : vals) v = n(rng);
  ad::Tensor logits(Shape{rows, kVocab}, vals);
  std::vector<int> targets(rows);
  for (int& t : targets) t = 2 + static_cast<int>(rng() % 8);
  const std::vector<double> q = unigram_noise(chain_corpus(50, 1), kVocab);
  const std::vector<int> noise = draw_noise(rows, k, q, 9);
  const std::vector<double> w = {1, 1, 0.5, 1, 0, 1};
  EXPECT_LT(ad::grad_check([&](const ad::Tensor& x) { return nce_loss(x, targets, noise, k, q, w); }, logits), 1e-6);
}

TEST(Nce, NoiseDistributionAndSamples) {
  const auto corpus = chain_corpus(100, 2);
  const std::vector<double> q = unigram_noise(corpus, kVocab);
  double sum = 0.0;
  for (double v : q) {
    EXPECT_GT(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_GT(q[kEos], q[kBos]);
  const auto draws = draw_noise(1000, 3, q, 4);
  EXPECT_EQ(draws.size(), 3000u);
  for (int d : draws) EXPECT_TRUE(d >= 0 && d < static_cast<int>(kVocab));
  EXPECT_EQ(draws, draw_noise(1000, 3, q, 4));
}

TEST(Nce, ConfigErrors) {
  const auto corpus = chain_corpus(10, 2);
  NceConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(train_nce(small_lm(1), corpus, cfg), ConfigError);
  cfg.k = 4;
  cfg.noise = {0.5, 0.5};
  EXPECT_THROW(train_nce(small_lm(1), corpus, cfg), ConfigError);
  EXPECT_THROW(train_nce(small_lm(1), {}, NceConfig{}), DataError);
  FinetuneConfig ft;
  ft.use_kld = true;
  ft.beta_lm = 1.5;
  EXPECT_THROW(finetune_lm(small_lm(1), corpus, ft), ConfigError);
}

class TrainedLm : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    train_ = new std::vector<std::vector<int>>(chain_corpus(1500, 11));
    heldout_ = new std::vector<std::vector<int>>(chain_corpus(200, 12));
    NceConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 3;
    trained_ = new LmParams(train_nce(small_lm(4), *train_, cfg, &log_));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete heldout_;
    delete trained_;
  }
  static std::vector<std::vector<int>>* train_;
  static std::vector<std::vector<int>>* heldout_;
  static LmParams* trained_;
  static std::vector<LmEpochLog> log_;
};
std::vector<std::vector<int>>* TrainedLm::train_ = nullptr;
std::vector<std::vector<int>>* TrainedLm::heldout_ = nullptr;
LmParams* TrainedLm::trained_ = nullptr;
std::vector<LmEpochLog> TrainedLm::log_;

TEST_F(TrainedLm, LearnsAndStaysSelfNormalized) {
  ASSERT_EQ(log_.size(), 8u);
  EXPECT_LT(log_.back().loss, log_.front().loss);
  const double ppl = perplexity(*trained_, *heldout_);
  EXPECT_LT(ppl, 0.5 * static_cast<double>(kVocab));
  EXPECT_LT(mean_abs_log_partition(*trained_, *heldout_), 0.5);
  // Self-normalized scores stay close to the exact ones.
  const double raw_ppl = perplexity(*trained_, *heldout_, LmScoring::kSelfNormalized);
  EXPECT_NEAR(std::log(raw_ppl), std::log(ppl), 0.5);
}

TEST_F(TrainedLm, FinetuneZeroStepsIsBase) {
  FinetuneConfig ft;
  ft.steps = 0;
  LmParams same = finetune_lm(*trained_, chain_corpus(20, 13, 2), ft);
  EXPECT_EQ(parameter_distance(same, *trained_), 0.0);
}

TEST_F(TrainedLm, FullDistillationAtBaseHasZeroGradient) {
  LmParams p = trained_->clone();
  for (ad::Tensor& t : p.tensors()) t.set_requires_grad(true);
  FinetuneConfig ft;
  ft.use_kld = true;
  ft.beta_lm = 1.0;
  ft.nce.noise = unigram_noise(*train_, kVocab);
  const auto batch = chain_corpus(8, 14, 2);
  const auto noise = draw_noise(8 * 9, ft.nce.k, ft.nce.noise, 1);
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    ad::Tensor loss = finetune_loss(p, *trained_, batch, ft, noise);
    tape.backward(loss);
  }
  tape.accumulate_into_leaves();
  double max_abs = 0.0;
  for (const ad::Tensor& t : p.tensors())
    for (double g : t.grad()) max_abs = std::max(max_abs, std::abs(g));
  EXPECT_LT(max_abs, 1e-12);
}

TEST_F(TrainedLm, FinetuneLossGradient) {
  // Weights far from the near-zero init keep every gradient well above
  // finite-difference roundoff.
  LmParams p = small_lm(21);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 0.5);
  for (ad::Tensor& t : p.tensors()) {
    for (double& v : t.mutable_values()) v = n(rng);
    t.set_requires_grad(true);
  }
  FinetuneConfig ft;
  ft.use_kld = true;
  ft.beta_lm = 0.4;
  ft.nce.noise = unigram_noise(*train_, kVocab);
  const auto batch = chain_corpus(3, 15, 2);
  const auto noise = draw_noise(3 * 9, ft.nce.k, ft.nce.noise, 2);
  std::vector<ad::Tensor> ts = p.tensors();
  ad::GradCheckOptions opts;
  opts.max_coords_per_tensor = 12;
  opts.fourth_order = true;
  opts.epsilon = 1e-4;
  EXPECT_LT(ad::grad_check([&] { return finetune_loss(p, *trained_, batch, ft, noise); }, ts, opts), 1e-5);
}

TEST_F(TrainedLm, FinetuneAdaptsAndKldStaysCloser) {
  // Speaker text follows a shifted chain the base has never seen.
  const auto speaker = chain_corpus(150, 16, 3);
  const auto speaker_heldout = chain_corpus(100, 17, 3);
  FinetuneConfig plain;
  plain.steps = 60;
  plain.nce.batch_size = 16;
  plain.nce.seed = 5;
  FinetuneConfig kld = plain;
  kld.use_kld = true;
  kld.beta_lm = 0.5;
  LmParams a = finetune_lm(*trained_, speaker, plain);
  LmParams b = finetune_lm(*trained_, speaker, kld);
  const double base_ppl = perplexity(*trained_, speaker_heldout);
  EXPECT_LT(perplexity(a, speaker_heldout), base_ppl);
  EXPECT_LT(perplexity(b, speaker_heldout), base_ppl);
  EXPECT_LT(parameter_distance(b, *trained_), parameter_distance(a, *trained_));
  // Original-domain text suffers less under distillation.
  EXPECT_LT(perplexity(b, *heldout_), perplexity(a, *heldout_));
}

}  // namespace
}  // namespace adaptlab::lm
