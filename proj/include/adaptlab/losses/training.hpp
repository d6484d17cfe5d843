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

#include "adaptlab/corpus/world.hpp"
#include "adaptlab/losses/losses.hpp"
#include "adaptlab/model/seq2seq.hpp"

namespace adaptlab::losses {

using corpus::Utterance;
using model::Seq2SeqParams;

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  std::size_t patience = 3;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  void validate() const;
};

struct TrainEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Seq2SeqParams params;  // best validation epoch
  std::vector<TrainEpochLog> log;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

using TrainCallback = std::function<void(const TrainEpochLog&)>;

// CE training (label smoothing, dropout) with early stopping on the mean
// validation CE (no smoothing, eval mode). A non-finite loss raises
// DivergenceError.
TrainResult train_si(const model::ModelConfig& config, std::span<const Utterance> train,
                     std::span<const Utterance> valid, const TrainConfig& cfg, const TrainCallback& on_epoch = {});

// Mean per-step CE (no smoothing, eval mode) over utterances.
double mean_ce(const Seq2SeqParams& params, std::span<const Utterance* const> data);

enum class AdaptMethod { kKld, kLhn, kMwerKld };
std::string to_string(AdaptMethod m);
AdaptMethod parse_adapt_method(const std::string& name);

struct AdaptSpec {
  AdaptMethod method = AdaptMethod::kKld;
  model::Subset subset = model::Subset::kAll;
  model::LhnSite site = model::LhnSite::kDecoderOutput;
};

struct AdaptEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double ce_part = 0.0;
  double kld_part = 0.0;
  double mwer_part = 0.0;
  double wall_ms = 0.0;
  // Mean n-best expected word errors over the adaptation set, on the list
  // generated at the start of the epoch (mwer_kld only).
  double expected_errors = 0.0;
};

struct AdaptResult {
  Seq2SeqParams params;
  std::vector<AdaptEpochLog> log;
  // Expected errors on a fresh n-best after the last epoch (mwer_kld only).
  double final_expected_errors = 0.0;
};

struct AdaptOptions {
  std::uint64_t seed = 1;
  // Starting point; defaults to the SI model (mwer_kld starts from a KLD SA
  // model in the usual recipe).
  const Seq2SeqParams* init = nullptr;
  // Required for mwer_kld: turns token sequences into words.
  const corpus::WordPieceVocab* vocab = nullptr;
  std::function<void(const AdaptEpochLog&)> on_epoch;
};

// Speaker adaptation from SI parameters. The SI copy stays frozen and
// supplies teacher distributions. kld and mwer_kld update `spec.subset`;
// lhn attaches an identity layer at `spec.site` and updates only (U, b).
AdaptResult adapt(const Seq2SeqParams& si, std::span<const Utterance* const> data, const AdaptationConfig& cfg,
                  const AdaptSpec& spec, const AdaptOptions& opts = {});

// n-best (beam search, no LM) with word errors against `reference` text.
NBestList make_nbest(const Seq2SeqParams& params, const model::FeatureSequence& x, const std::vector<int>& reference,
                     const std::string& reference_text, const corpus::WordPieceVocab& vocab, std::size_t beam);

// Differentiable log p(h|x) for every hypothesis in the list, [N].
Tensor nbest_log_probs(const Seq2SeqParams& params, const model::FeatureSequence& x, const NBestList& nbest,
                       model::Mode mode, ad::DropoutSource* dropout = nullptr);

// Word-level edit distance between two texts.
double word_errors(const std::string& reference, const std::string& hypothesis);

}  // namespace adaptlab::losses
