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

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/decode/beam.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::decode {
namespace {

using ad::Shape;
using ad::Tensor;
using model::kBos;
using model::kEos;

model::ModelConfig small_config(std::size_t vocab) {
  model::ModelConfig c;
  c.feat_dim = 3;
  c.conv_channels = 4;
  c.pyramid_stages = 1;
  c.encoder_units = 4;
  c.decoder_units = 6;
  c.embedding_dim = 3;
  c.attention_dim = 4;
  c.dense_dim = 5;
  c.vocab_size = vocab;
  return c;
}

model::Seq2SeqParams sharp_model(std::size_t vocab, std::uint64_t seed) {
  model::Seq2SeqParams p = model::init_params(small_config(vocab), seed);
  // Larger output weights give peaked, non-trivial distributions.
  for (double& v : p.out_weight.mutable_values()) v *= 6.0;
  for (double& v : p.att_score.mutable_values()) v *= 4.0;
  return p;
}

lm::LmParams random_lm(std::size_t vocab, std::uint64_t seed) {
  lm::LmParams p = lm::init_lm({vocab, 3, 4, 1}, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : p.out_weight.mutable_values()) v = n(rng);
  for (double& v : p.out_bias.mutable_values()) v += 0.5 * n(rng);
  return p;
}

model::FeatureSequence features(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(Shape{frames, 3});
  for (double& v : t.mutable_values()) v = n(rng);
  return {t};
}

// Independent rescoring of one complete sequence.
double oracle_score(const model::Seq2SeqParams& p, const lm::LmParams* lm, const model::FeatureSequence& x,
                    const std::vector<int>& y, const FusionConfig& cfg) {
  model::TeacherForced tf = model::forward_teacher_forced(p, x, y);
  double score = tf.log_prob;
  if (lm && cfg.lambda_lm != 0.0) score += cfg.lambda_lm * lm::lm_logprob(*lm, y, cfg.lm_scoring).total;
  if (cfg.lambda_cov != 0.0) {
    double count = 0.0;
    for (std::size_t j = 0; j < tf.attention.cols(); ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < tf.attention.rows(); ++i) col += tf.attention.at(i, j);
      if (col > cfg.coverage_tau) count += 1.0;
    }
    score += cfg.lambda_cov * count;
  }
  return score;
}

// All sequences of 0..max_len-1 non-special tokens followed by </s>.
void enumerate(std::size_t vocab, std::size_t max_len, std::vector<int>& prefix,
               std::vector<std::vector<int>>& out) {
  std::vector<int> done = prefix;
  done.push_back(kEos);
  out.push_back(done);
  if (prefix.size() + 1 >= max_len) return;
  for (int v = 0; v < static_cast<int>(vocab); ++v) {
    if (v == kBos || v == kEos) continue;
    prefix.push_back(v);
    enumerate(vocab, max_len, prefix, out);
    prefix.pop_back();
  }
}

TEST(Coverage, Examples) {
  EXPECT_EQ(coverage_score({{1.0, 0.0}, {0.0, 1.0}}, 0.5), 2.0);
  EXPECT_EQ(coverage_score({{0.4, 0.6}}, 0.5), 1.0);
  EXPECT_EQ(coverage_score({{0.4, 0.6}, {0.3, 0.7}}, 0.5, CoverageMode::kPerRow), 2.0);
  EXPECT_EQ(coverage_score({{0.5, 0.5}}, 0.5, CoverageMode::kPerRow), 0.0);
}

TEST(Coverage, RandomMatchesRecount) {
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> g(0.5, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> a(5, std::vector<double>(8));
    for (auto& row : a) {
      double s = 0.0;
      for (double& v : row) s += (v = g(rng));
      for (double& v : row) v /= s;
    }
    double count = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < 5; ++i) col += a[i][j];
      count += col > 0.5 ? 1.0 : 0.0;
    }
    EXPECT_EQ(coverage_score(a, 0.5), count);
  }
}

TEST(FusedScore, Parts) {
  Hypothesis h;
  h.s2s_logprob = -2.0;
  h.lm_logprob = -3.0;
  h.attn_rows = {{0.9, 0.1, 0.0}, {0.1, 0.2, 0.7}};
  FusionConfig cfg;
  EXPECT_EQ(fused_score(h, cfg), -2.0);
  cfg.lambda_lm = 1.0;
  EXPECT_EQ(fused_score(h, cfg), -5.0);
  cfg.lambda_lm = 0.3;
  cfg.lambda_cov = 0.5;
  EXPECT_NEAR(fused_score(h, cfg), -2.0 - 0.9 + 0.5 * 2.0, 1e-15);
}

TEST(BeamSearch, WidthOneIsGreedy) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    model::Seq2SeqParams p = sharp_model(7, seed);
    model::FeatureSequence x = features(6 + seed % 5, seed);
    // Greedy argmax loop written out here.
    model::AttentionMemory mem = model::prepare_attention(p, model::encode(p, x));
    model::DecoderStepState st = model::initial_decoder_state(p, 1);
    std::vector<int> greedy;
    int prev = kBos;
    const std::size_t max_len = 2 * mem.frames + 5;
    while (greedy.size() < max_len) {
      st = model::decode_step(p, st, std::span<const int>(&prev, 1), mem, model::Mode::kEval);
      int best = -1;
      for (int v = 0; v < 7; ++v) {
        if (v == kBos) continue;
        if (best < 0 || st.logits.at(static_cast<std::size_t>(v)) > st.logits.at(static_cast<std::size_t>(best)))
          best = v;
      }
      greedy.push_back(best);
      prev = best;
      if (best == kEos) break;
    }
    FusionConfig cfg;
    cfg.beam_width = 1;
    BeamResult r = beam_search(p, nullptr, x, cfg);
    EXPECT_EQ(r.nbest.front().hyp.tokens, greedy);
    EXPECT_EQ(greedy_decode(p, x), greedy);
  }
}

TEST(BeamSearch, FullWidthMatchesExhaustiveSearch) {
  const std::size_t vocab = 5, max_len = 4;
  std::vector<std::vector<int>> all;
  std::vector<int> prefix;
  enumerate(vocab, max_len, prefix, all);
  ASSERT_EQ(all.size(), 1u + 3u + 9u + 27u);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    model::Seq2SeqParams p = sharp_model(vocab, seed);
    lm::LmParams lm = random_lm(vocab, seed + 100);
    model::FeatureSequence x = features(4 + seed % 6, seed + 7);
    FusionConfig cfg;
    cfg.beam_width = 256;
    cfg.max_len = max_len;
    cfg.lambda_lm = 0.2 + 0.05 * static_cast<double>(seed % 5);
    cfg.lambda_cov = 0.5 + 0.1 * static_cast<double>(seed % 3);
    cfg.lm_scoring = seed % 2 ? lm::LmScoring::kSelfNormalized : lm::LmScoring::kExact;
    double best = -1e300;
    std::vector<int> argmax;
    for (const auto& y : all) {
      const double s = oracle_score(p, &lm, x, y, cfg);
      if (s > best) {
        best = s;
        argmax = y;
      }
    }
    BeamResult r = beam_search(p, &lm, x, cfg);
    ASSERT_FALSE(r.unfinished);
    // A self-normalized LM term disables early stopping, so every sequence
    // survives; with exact scoring the search may stop once top-1 is settled.
    if (cfg.lm_scoring == lm::LmScoring::kSelfNormalized) EXPECT_EQ(r.nbest.size(), all.size());
    EXPECT_EQ(r.nbest.front().hyp.tokens, argmax) << "seed " << seed;
    EXPECT_NEAR(r.nbest.front().fused, best, 1e-9);
  }
}

TEST(BeamSearch, InvariantsOfReturnedList) {
  model::Seq2SeqParams p = sharp_model(8, 4);
  lm::LmParams lm = random_lm(8, 5);
  model::FeatureSequence x = features(10, 6);
  FusionConfig cfg;
  cfg.beam_width = 6;
  cfg.lambda_lm = 0.3;
  cfg.lambda_cov = 0.4;
  BeamResult r = beam_search(p, &lm, x, cfg);
  ASSERT_FALSE(r.nbest.empty());
  for (std::size_t i = 0; i < r.nbest.size(); ++i) {
    const auto& h = r.nbest[i];
    EXPECT_TRUE(h.hyp.finished);
    EXPECT_EQ(h.hyp.tokens.back(), kEos);
    EXPECT_EQ(h.hyp.attn_rows.size(), h.hyp.tokens.size());
    EXPECT_NEAR(model::forward_teacher_forced(p, x, h.hyp.tokens).log_prob, h.hyp.s2s_logprob, 1e-9);
    EXPECT_NEAR(fused_score(h.hyp, cfg), h.fused, 1e-9);
    if (i > 0) EXPECT_TRUE(ranks_before(r.nbest[i - 1].fused, r.nbest[i - 1].hyp.tokens, h.fused, h.hyp.tokens));
    for (int t : h.hyp.tokens) EXPECT_NE(t, kBos);
  }
}

TEST(BeamSearch, TopScoreNonDecreasingInWidth) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model::Seq2SeqParams p = sharp_model(6, seed);
    model::FeatureSequence x = features(8, seed);
    FusionConfig cfg;
    cfg.max_len = 5;
    double prev = -1e300;
    for (std::size_t w = 1; w <= 8; ++w) {
      cfg.beam_width = w;
      const double top = beam_search(p, nullptr, x, cfg).nbest.front().fused;
      EXPECT_GE(top, prev - 1e-12) << "seed " << seed << " width " << w;
      prev = std::max(prev, top);
    }
  }
}

TEST(BeamSearch, LambdaIrrelevantWithoutLm) {
  model::Seq2SeqParams p = sharp_model(7, 9);
  model::FeatureSequence x = features(9, 9);
  FusionConfig a, b;
  b.lambda_lm = 3.0;
  BeamResult ra = beam_search(p, nullptr, x, a), rb = beam_search(p, nullptr, x, b);
  ASSERT_EQ(ra.nbest.size(), rb.nbest.size());
  for (std::size_t i = 0; i < ra.nbest.size(); ++i) {
    EXPECT_EQ(ra.nbest[i].hyp.tokens, rb.nbest[i].hyp.tokens);
    EXPECT_EQ(ra.nbest[i].fused, rb.nbest[i].fused);
  }
}

TEST(BeamSearch, ZeroWeightsEqualNoLm) {
  model::Seq2SeqParams p = sharp_model(7, 11);
  lm::LmParams lm = random_lm(7, 12);
  model::FeatureSequence x = features(9, 13);
  FusionConfig cfg;
  BeamResult with = beam_search(p, &lm, x, cfg), without = beam_search(p, nullptr, x, cfg);
  ASSERT_EQ(with.nbest.size(), without.nbest.size());
  for (std::size_t i = 0; i < with.nbest.size(); ++i) EXPECT_EQ(with.nbest[i].hyp.tokens, without.nbest[i].hyp.tokens);
}

TEST(BeamSearch, UnfinishedIsFlagged) {
  model::Seq2SeqParams p = sharp_model(6, 2);
  // Forbid </s> by a huge negative output bias.
  p.out_bias.mutable_data()[kEos] = -1e6;
  FusionConfig cfg;
  cfg.max_len = 3;
  cfg.beam_width = 3;
  BeamResult r = beam_search(p, nullptr, features(6, 1), cfg);
  EXPECT_TRUE(r.unfinished);
  ASSERT_EQ(r.nbest.size(), 1u);
  EXPECT_FALSE(r.nbest.front().hyp.finished);
  EXPECT_EQ(r.nbest.front().hyp.tokens.size(), 3u);
}

TEST(BeamSearch, ConfigErrors) {
  model::Seq2SeqParams p = sharp_model(6, 2);
  FusionConfig cfg;
  cfg.beam_width = 0;
  EXPECT_THROW(beam_search(p, nullptr, features(6, 1), cfg), ConfigError);
  cfg.beam_width = 2;
  lm::LmParams lm = random_lm(7, 1);
  cfg.lambda_lm = 1.0;
  EXPECT_THROW(beam_search(p, &lm, features(6, 1), cfg), ConfigError);
}

}  // namespace
}  // namespace adaptlab::decode
