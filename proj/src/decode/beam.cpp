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

#include "adaptlab/decode/beam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::decode {

using model::kBos;
using model::kEos;
using ad::Tensor;

void FusionConfig::validate() const {
  if (beam_width == 0) throw ConfigError("fusion: beam_width must be at least 1");
  if (lambda_lm < 0.0 || lambda_cov < 0.0) throw ConfigError("fusion: lambda weights must be nonnegative");
  if (!(coverage_tau >= 0.0)) throw ConfigError("fusion: coverage_tau must be nonnegative");
}

double coverage_score(const std::vector<std::vector<double>>& attention, double tau, CoverageMode mode) {
  if (attention.empty()) return 0.0;
  if (mode == CoverageMode::kPerRow) {
    double count = 0.0;
    for (const auto& row : attention)
      if (!row.empty() && *std::max_element(row.begin(), row.end()) > tau) count += 1.0;
    return count;
  }
  std::vector<double> total(attention.front().size(), 0.0);
  for (const auto& row : attention) {
    if (row.size() != total.size()) throw DimensionError("coverage_score: ragged attention matrix");
    for (std::size_t j = 0; j < row.size(); ++j) total[j] += row[j];
  }
  double count = 0.0;
  for (double t : total)
    if (t > tau) count += 1.0;
  return count;
}

double fused_score(const Hypothesis& h, const FusionConfig& cfg) {
  double s = h.s2s_logprob;
  if (cfg.lambda_lm != 0.0) s += cfg.lambda_lm * h.lm_logprob;
  if (cfg.lambda_cov != 0.0) s += cfg.lambda_cov * coverage_score(h.attn_rows, cfg.coverage_tau, cfg.coverage);
  return s;
}

bool ranks_before(double fused_a, const std::vector<int>& a, double fused_b, const std::vector<int>& b) {
  if (fused_a != fused_b) return fused_a > fused_b;
  return a < b;
}

namespace {

struct Live {
  Hypothesis hyp;
  double coverage = 0.0;
};

struct Candidate {
  std::size_t parent;
  int token;
  double fused;
  double s2s;
  double lm;
  double coverage;
  const std::vector<int>* prefix;
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  // Lexicographic on the full token sequence.
  if (*a.prefix != *b.prefix) return *a.prefix < *b.prefix;
  return a.token < b.token;
}

}  // namespace

BeamResult beam_search(const model::Seq2SeqParams& params, const lm::LmParams* lm, const model::FeatureSequence& x,
                       const FusionConfig& cfg) {
  cfg.validate();
  ad::NoGradScope no_grad;
  if (lm && lm->config.vocab_size != params.config.vocab_size) {
    throw ConfigError("beam_search: LM vocabulary (" + std::to_string(lm->config.vocab_size) +
                      ") differs from the seq2seq vocabulary (" + std::to_string(params.config.vocab_size) + ")");
  }
  const bool use_lm = lm != nullptr && cfg.lambda_lm != 0.0;
  const bool use_cov = cfg.lambda_cov != 0.0;
  model::EncoderStates enc = model::encode(params, x, model::Mode::kEval);
  model::AttentionMemory memory = model::prepare_attention(params, enc);
  const std::size_t frames = enc.frames;
  const std::size_t max_len = cfg.max_len > 0 ? cfg.max_len : 2 * frames + 5;
  const std::size_t vocab = params.config.vocab_size;
  // Live scores can only grow through a self-normalized LM term (positive
  // logits) or through coverage; the latter is bounded by T'.
  const bool can_stop_early = !(use_lm && cfg.lm_scoring == lm::LmScoring::kSelfNormalized);
  const double max_coverage = cfg.coverage == CoverageMode::kCumulative ? static_cast<double>(frames)
                                                                         : static_cast<double>(max_len);

  std::vector<Live> live(1);
  model::DecoderStepState state = model::initial_decoder_state(params, 1);
  lm::LmState lm_state;
  if (use_lm) lm_state = lm::lm_initial_state(*lm, 1);
  std::vector<int> prev = {kBos};
  std::vector<ScoredHypothesis> finished;
  std::map<std::size_t, model::AttentionMemory> tiled;
  std::vector<ScoredHypothesis> best_unfinished;

  for (std::size_t step = 1; step <= max_len && !live.empty(); ++step) {
    const std::size_t n = live.size();
    auto it = tiled.find(n);
    if (it == tiled.end()) it = tiled.emplace(n, n == 1 ? memory : model::repeat_memory(memory, n)).first;
    state = model::decode_step(params, state, prev, it->second, model::Mode::kEval);
    Tensor logp = ad::log_softmax(state.logits);
    Tensor lm_lp;
    if (use_lm) lm_lp = lm::lm_scores(lm::lm_step(*lm, lm_state, prev), cfg.lm_scoring);

    std::vector<Candidate> cands;
    cands.reserve(n * vocab);
    std::vector<double> cov(n, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      std::vector<double> row(state.alpha.data() + b * frames, state.alpha.data() + (b + 1) * frames);
      live[b].hyp.attn_rows.push_back(std::move(row));
      if (use_cov) cov[b] = coverage_score(live[b].hyp.attn_rows, cfg.coverage_tau, cfg.coverage);
      for (std::size_t v = 0; v < vocab; ++v) {
        if (static_cast<int>(v) == kBos) continue;
        Candidate c{b, static_cast<int>(v), 0.0, live[b].hyp.s2s_logprob + logp.at(b, v), live[b].hyp.lm_logprob,
                    cov[b], &live[b].hyp.tokens};
        if (use_lm) c.lm += lm_lp.at(b, v);
        c.fused = c.s2s + (use_lm ? cfg.lambda_lm * c.lm : 0.0) + (use_cov ? cfg.lambda_cov * c.coverage : 0.0);
        cands.push_back(c);
      }
    }
    const std::size_t keep = std::min(cfg.beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(), candidate_before);
    cands.resize(keep);

    std::vector<Live> next;
    std::vector<std::size_t> parents;
    std::vector<int> next_prev;
    for (const Candidate& c : cands) {
      Hypothesis h;
      h.tokens = *c.prefix;
      h.tokens.push_back(c.token);
      h.s2s_logprob = c.s2s;
      h.lm_logprob = c.lm;
      h.attn_rows = live[c.parent].hyp.attn_rows;
      if (c.token == kEos) {
        h.finished = true;
        finished.push_back({std::move(h), c.coverage, c.fused});
      } else if (step == max_len) {
        best_unfinished.push_back({std::move(h), c.coverage, c.fused});
      } else {
        next.push_back({std::move(h), c.coverage});
        parents.push_back(c.parent);
        next_prev.push_back(c.token);
      }
    }
    live = std::move(next);
    if (live.empty()) break;
    state = model::gather_state(state, parents);
    if (use_lm) lm_state = lm::gather_lm_state(lm_state, parents);
    prev = std::move(next_prev);

    if (can_stop_early && !finished.empty()) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best = std::max(best, f.fused);
      // Seq2seq and exact LM log-probs never increase; coverage may still
      // rise to its maximum.
      bool beatable = false;
      for (const auto& l : live) {
        double bound = l.hyp.s2s_logprob + (use_lm ? cfg.lambda_lm * l.hyp.lm_logprob : 0.0);
        if (use_cov) bound += cfg.lambda_cov * max_coverage;
        if (bound >= best) {
          beatable = true;
          break;
        }
      }
      if (!beatable) break;
    }
  }

  BeamResult result;
  if (finished.empty()) {
    result.unfinished = true;
    for (auto& l : live) best_unfinished.push_back({l.hyp, l.coverage, fused_score(l.hyp, cfg)});
    finished = std::move(best_unfinished);
  }
  std::sort(finished.begin(), finished.end(), [](const ScoredHypothesis& a, const ScoredHypothesis& b) {
    return ranks_before(a.fused, a.hyp.tokens, b.fused, b.hyp.tokens);
  });
  if (result.unfinished && !finished.empty()) finished.resize(1);
  result.nbest = std::move(finished);
  return result;
}

std::vector<int> greedy_decode(const model::Seq2SeqParams& params, const model::FeatureSequence& x,
                               std::size_t max_len) {
  FusionConfig cfg;
  cfg.beam_width = 1;
  cfg.max_len = max_len;
  BeamResult r = beam_search(params, nullptr, x, cfg);
  return r.nbest.front().hyp.tokens;
}

}  // namespace adaptlab::decode
