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
#include <string>
#include <vector>

#include "adaptlab/corpus/vocab.hpp"
#include "adaptlab/model/seq2seq.hpp"

namespace adaptlab::corpus {

using model::FeatureSequence;
using model::Tensor;

// Speaker channel and language habits. The channel maps a clean frame x to
// x G^T + bias + noise * N(0, I).
struct SpeakerProfile {
  std::string speaker_id;
  Tensor gain;  // [d x d]
  Tensor bias;  // [d]
  double noise = 0.0;
  // Word bigram over the lexicon: row 0 follows the sentence start, row w+1
  // follows word w. Sentence length is drawn separately.
  std::vector<std::vector<double>> bigram;
};

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  FeatureSequence features;
  std::string transcript;   // training label (may be pseudo truth)
  std::vector<int> tokens;  // training label ids, ending in </s>
  std::string gold;         // what was actually spoken
};

// One target speaker: adaptation pool (ladder subsets are prefixes), a
// disjoint eval set and text without audio.
struct SpeakerCorpus {
  SpeakerProfile profile;
  std::vector<Utterance> adapt;
  std::vector<Utterance> eval;
  std::vector<std::string> text_pool;     // LM fine-tuning text
  std::vector<std::string> text_heldout;  // perplexity evaluation

  // First `n` adaptation utterances; throws DataError past the pool size.
  std::vector<const Utterance*> adaptation_subset(std::size_t n) const;
};

struct WorldConfig {
  std::uint64_t seed = 1;
  std::size_t feat_dim = 8;
  std::size_t vocab_size = 32;
  std::string alphabet = "abcdefgh";
  std::size_t lexicon_size = 40;
  std::size_t word_min_chars = 2;
  std::size_t word_max_chars = 5;
  std::size_t sentence_min_words = 3;
  std::size_t sentence_max_words = 6;
  std::size_t min_frames_per_token = 2;
  std::size_t max_frames_per_token = 4;
  // Training population.
  std::size_t si_speakers = 40;
  std::size_t si_utterances = 2400;  // toy stand-in for hours of audio
  std::size_t si_valid_utterances = 200;
  double si_channel_delta = 0.3;
  // Target speakers.
  std::size_t eval_speakers = 6;
  std::vector<std::size_t> adapt_sizes = {8, 16, 32, 64};
  std::size_t eval_utterances = 30;
  double eval_channel_delta = 0.6;
  double noise = 0.3;
  double eval_noise = 0.3;
  // Speaker word prior = (1 - domain_weight) * population + domain_weight *
  // uniform over `domain_words` speaker-specific words.
  std::size_t domain_words = 10;
  double domain_weight = 0.6;
  double corruption_rate = 0.05;
  // Text-only pools.
  std::size_t lm_sentences = 4000;
  std::size_t speaker_text_sentences = 200;
  std::size_t speaker_heldout_sentences = 100;

  void validate() const;
};

struct World {
  WorldConfig config;
  WordPieceVocab vocab;
  std::vector<std::string> lexicon;
  Tensor prototypes;  // [V x d], row per word piece
  std::vector<SpeakerProfile> si_profiles;
  std::vector<Utterance> si_train;
  std::vector<Utterance> si_valid;
  std::vector<SpeakerCorpus> speakers;
  std::vector<std::string> lm_text;
};

// Each token emits a uniformly drawn 2..4 (configurable) frames of its
// prototype, passed through the speaker channel plus Gaussian noise.
FeatureSequence synthesize_utterance(const SpeakerProfile& profile, const Tensor& prototypes,
                                     const std::vector<int>& tokens, std::uint64_t seed,
                                     std::size_t min_frames = 2, std::size_t max_frames = 4);

// Channel with G = I + delta * A (A Gaussian, entries N(0, 1/d)), redrawn
// until cond(G) < 10; bias N(0, delta^2 / 4).
SpeakerProfile make_profile(const std::string& id, std::size_t dim, double delta, double noise, std::uint64_t seed);

double condition_number(const Tensor& square);

// Draws a sentence from a word bigram.
std::string sample_sentence(const std::vector<std::vector<double>>& bigram, const std::vector<std::string>& lexicon,
                            std::size_t min_words, std::size_t max_words, std::uint64_t seed);

World generate_world(const WorldConfig& config);

// Tokens of `text` with each non-EOS token replaced, with probability `rate`,
// by a different uniformly drawn non-special token.
std::vector<int> corrupt_tokens(const std::vector<int>& tokens, std::size_t vocab_size, double rate,
                                std::uint64_t seed);

// On-disk layout: world.json (config, lexicon, vocabulary, profiles),
// prototypes.adlt, feats/<utt_id>.adlt, manifests (JSON lines) si_train,
// si_valid, <speaker>.adapt, <speaker>.eval, and UTF-8 text pools.
void save_world(const World& world, const std::string& dir);
World load_world(const std::string& dir);

}  // namespace adaptlab::corpus
