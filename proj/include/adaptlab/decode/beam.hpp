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
#include <vector>

#include "adaptlab/lm/lm.hpp"
#include "adaptlab/model/seq2seq.hpp"

namespace adaptlab::decode {

enum class CoverageMode {
  kCumulative,  // encoder positions whose summed attention exceeds tau
  kPerRow,      // decoded tokens whose peak attention exceeds tau
};

struct FusionConfig {
  double lambda_lm = 0.0;
  double lambda_cov = 0.0;
  std::size_t beam_width = 8;
  std::size_t max_len = 0;  // tokens including </s>; 0 means 2 T' + 5
  double coverage_tau = 0.5;
  CoverageMode coverage = CoverageMode::kCumulative;
  lm::LmScoring lm_scoring = lm::LmScoring::kSelfNormalized;
  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;
  double s2s_logprob = 0.0;
  double lm_logprob = 0.0;
  std::vector<std::vector<double>> attn_rows;  // one row of length T' per token
  bool finished = false;
};

// Attention matrix rows are distributions over encoder positions.
double coverage_score(const std::vector<std::vector<double>>& attention, double tau,
                      CoverageMode mode = CoverageMode::kCumulative);

// s2s + lambda_lm * lm + lambda_cov * coverage.
double fused_score(const Hypothesis& h, const FusionConfig& cfg);

struct ScoredHypothesis {
  Hypothesis hyp;
  double coverage = 0.0;
  double fused = 0.0;
};

struct BeamResult {
  std::vector<ScoredHypothesis> nbest;  // sorted by fused score, ties by tokens
  bool unfinished = false;              // no hypothesis reached </s>
};

// Breadth-synchronous beam search over fused scores (seq2seq log-prob plus
// weighted LM log-prob and coverage bonus). Every live
// hypothesis is expanded over all tokens except <s>; the best `beam_width`
// candidates survive and those ending in </s> move to the finished pool.
// The search stops at max_len, or once no live hypothesis can still overtake
// the best finished one (only checked when scores cannot grow, i.e. without a
// self-normalized LM term). `lm` may be null.
BeamResult beam_search(const model::Seq2SeqParams& params, const lm::LmParams* lm,
                       const model::FeatureSequence& x, const FusionConfig& cfg);

// Greedy argmax decoding (no LM, no coverage).
std::vector<int> greedy_decode(const model::Seq2SeqParams& params, const model::FeatureSequence& x,
                               std::size_t max_len = 0);

// Total order used for n-best lists: higher fused first, then lexicographically
// smaller token sequence.
bool ranks_before(double fused_a, const std::vector<int>& a, double fused_b, const std::vector<int>& b);

}  // namespace adaptlab::decode
