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

#include <filesystem>
#include <random>
#include <set>

#include "adaptlab/errors.hpp"
#include "adaptlab/corpus/vocab.hpp"
#include "adaptlab/corpus/world.hpp"

namespace adaptlab::corpus {
namespace {

using ad::Shape;

WorldConfig small_world() {
  WorldConfig c;
  c.si_speakers = 4;
  c.si_utterances = 40;
  c.si_valid_utterances = 8;
  c.eval_speakers = 2;
  c.adapt_sizes = {2, 4, 8};
  c.eval_utterances = 5;
  c.lm_sentences = 100;
  c.speaker_text_sentences = 10;
  c.speaker_heldout_sentences = 5;
  return c;
}

bool same_tensor(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

TEST(Vocab, MinimumSizeIsCharacters) {
  WordPieceVocab v = build_vocab({" ab ba", " cab"}, 4 + 3);
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.alphabet_size(), 4u);
  for (std::size_t i = 3; i < v.size(); ++i) EXPECT_EQ(v.unit(static_cast<int>(i)).size(), 1u);
}

TEST(Vocab, TooSmallIsConfigError) { EXPECT_THROW(build_vocab({"abc"}, 5), ConfigError); }

TEST(Vocab, RepeatedCharacterMerges) {
  WordPieceVocab v = build_vocab({"aaaaaaaa", "aaaa"}, 5);
  EXPECT_GE(v.id("aa"), 0);
  EXPECT_EQ(v.encode("aaaa"), (std::vector<int>{v.id("aa"), v.id("aa")}));
}

TEST(Vocab, PiecesNeverCrossWordBoundaries) {
  WordPieceVocab v = build_vocab({" the cat", " the hat", " a cat"}, 20);
  for (const auto& u : v.units()) {
    const auto pos = u.find(' ');
    EXPECT_TRUE(pos == std::string::npos || pos == 0) << "'" << u << "'";
  }
}

TEST(Vocab, RoundTripsRandomStrings) {
  WordPieceVocab v = build_vocab({" abc abd ca", " dd ab cab"}, 18);
  std::mt19937_64 rng(1);
  const std::string chars = "abcd ";
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    const std::size_t len = rng() % 20;
    for (std::size_t i = 0; i < len; ++i) s.push_back(chars[rng() % chars.size()]);
    EXPECT_EQ(v.decode(v.encode(s)), s);
  }
}

TEST(Vocab, UnknownCharacterMapsToUnk) {
  WordPieceVocab v = build_vocab({"ab"}, 5);
  EXPECT_EQ(v.encode("azb"), (std::vector<int>{v.id("a"), model::kUnk, v.id("b")}));
}

TEST(Vocab, RejectsMalformedInventories) {
  EXPECT_THROW(WordPieceVocab({"a", "b", "c"}), ConfigError);
  EXPECT_THROW(WordPieceVocab({"<unk>", "<s>", "</s>", "a", "a"}), ConfigError);
}

TEST(Synthesis, IdentityChannelRepeatsPrototype) {
  SpeakerProfile p;
  p.gain = Tensor::identity(3);
  p.bias = Tensor(Shape{3});
  Tensor protos(Shape{5, 3}, std::vector<double>{0, 0, 0, 0, 0, 0, 0, 0, 0, 1.5, -2.0, 0.25, 0, 0, 0});
  FeatureSequence f = synthesize_utterance(p, protos, {3}, 9, 2, 2);
  ASSERT_EQ(f.frames.shape(), (Shape{2, 3}));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(f.frames.at(t, i), protos.at(3, i));
}

TEST(Synthesis, FrameCountBounds) {
  SpeakerProfile p = make_profile("x", 4, 0.3, 0.1, 5);
  Tensor protos(Shape{10, 4}, 1.0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<int> toks(1 + seed % 7, 4);
    FeatureSequence f = synthesize_utterance(p, protos, toks, seed);
    EXPECT_GE(f.length(), 2 * toks.size());
    EXPECT_LE(f.length(), 4 * toks.size());
  }
  EXPECT_THROW(synthesize_utterance(p, protos, {}, 1), ContractError);
}

TEST(Synthesis, SpeakersDiffer) {
  SpeakerProfile a = make_profile("a", 4, 0.5, 0.0, 1), b = make_profile("b", 4, 0.5, 0.0, 2);
  Tensor protos(Shape{6, 4}, std::vector<double>(24, 0.7));
  EXPECT_FALSE(same_tensor(synthesize_utterance(a, protos, {3, 4}, 3).frames,
                           synthesize_utterance(b, protos, {3, 4}, 3).frames));
}

TEST(Profiles, WellConditioned) {
  for (std::uint64_t s = 0; s < 30; ++s) EXPECT_LT(condition_number(make_profile("p", 8, 0.9, 0.1, s).gain), 10.0);
}

TEST(Corruption, RateZeroKeepsGoldAndEosSurvives) {
  std::vector<int> t = {5, 6, 7, 8, model::kEos};
  EXPECT_EQ(corrupt_tokens(t, 20, 0.0, 1), t);
  auto all = corrupt_tokens(t, 20, 1.0, 1);
  EXPECT_EQ(all.back(), model::kEos);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    EXPECT_NE(all[i], t[i]);
    EXPECT_GE(all[i], 3);
  }
}

TEST(World, DeterministicAndWellFormed) {
  WorldConfig c = small_world();
  World a = generate_world(c), b = generate_world(c);
  ASSERT_EQ(a.si_train.size(), 40u);
  for (std::size_t i = 0; i < a.si_train.size(); ++i) {
    EXPECT_TRUE(same_tensor(a.si_train[i].features.frames, b.si_train[i].features.frames));
    EXPECT_EQ(a.si_train[i].tokens, b.si_train[i].tokens);
    EXPECT_EQ(a.si_train[i].tokens.back(), model::kEos);
    EXPECT_EQ(a.vocab.decode(a.si_train[i].tokens), a.si_train[i].transcript);
  }
  EXPECT_EQ(a.vocab, b.vocab);
  EXPECT_EQ(a.vocab.size(), c.vocab_size);
  for (const auto& p : a.si_profiles) {
    for (const auto& row : p.bigram) {
      double s = 0.0;
      for (double v : row) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  WorldConfig other = c;
  other.seed = 2;
  EXPECT_NE(generate_world(other).si_train[0].transcript + generate_world(other).si_train[1].transcript,
            a.si_train[0].transcript + a.si_train[1].transcript);
}

TEST(World, LadderNestedAndEvalDisjoint) {
  World w = generate_world(small_world());
  for (const auto& s : w.speakers) {
    ASSERT_EQ(s.adapt.size(), 8u);
    auto small = s.adaptation_subset(2), large = s.adaptation_subset(8);
    for (const auto* u : small) EXPECT_NE(std::find(large.begin(), large.end(), u), large.end());
    std::set<std::string> adapt_ids;
    for (const auto& u : s.adapt) adapt_ids.insert(u.utt_id);
    for (const auto& u : s.eval) EXPECT_EQ(adapt_ids.count(u.utt_id), 0u);
    EXPECT_THROW(s.adaptation_subset(9), DataError);
  }
}

TEST(World, CorruptionOnlyTouchesAdaptationLabels) {
  WorldConfig c = small_world();
  c.corruption_rate = 0.0;
  World clean = generate_world(c);
  for (const auto& s : clean.speakers)
    for (const auto& u : s.adapt) EXPECT_EQ(u.transcript, u.gold);
  c.corruption_rate = 0.5;
  World noisy = generate_world(c);
  std::size_t differ = 0;
  for (const auto& s : noisy.speakers) {
    for (const auto& u : s.adapt) differ += u.transcript != u.gold;
    for (const auto& u : s.eval) EXPECT_EQ(u.transcript, u.gold);
  }
  EXPECT_GT(differ, 0u);
  // Audio is the same either way.
  EXPECT_TRUE(same_tensor(clean.speakers[0].adapt[0].features.frames, noisy.speakers[0].adapt[0].features.frames));
}

TEST(World, SaveLoadRoundTrip) {
  World w = generate_world(small_world());
  const auto dir = std::filesystem::temp_directory_path() / "adaptlab_world_test";
  std::filesystem::remove_all(dir);
  save_world(w, dir.string());
  World r = load_world(dir.string());
  EXPECT_EQ(r.vocab, w.vocab);
  EXPECT_EQ(r.lexicon, w.lexicon);
  EXPECT_EQ(r.lm_text, w.lm_text);
  ASSERT_EQ(r.speakers.size(), w.speakers.size());
  EXPECT_EQ(r.speakers[1].adapt[3].tokens, w.speakers[1].adapt[3].tokens);
  EXPECT_EQ(r.speakers[1].adapt[3].gold, w.speakers[1].adapt[3].gold);
  EXPECT_TRUE(same_tensor(r.speakers[1].eval[2].features.frames, w.speakers[1].eval[2].features.frames));
  EXPECT_TRUE(same_tensor(r.speakers[0].profile.gain, w.speakers[0].profile.gain));
  EXPECT_EQ(r.config.adapt_sizes, w.config.adapt_sizes);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_world(dir.string()), DataError);
}

TEST(World, ConfigValidation) {
  WorldConfig c = small_world();
  c.adapt_sizes = {4, 2};
  EXPECT_THROW(generate_world(c), ConfigError);
  c = small_world();
  c.alphabet = "a b";
  EXPECT_THROW(generate_world(c), ConfigError);
}

}  // namespace
}  // namespace adaptlab::corpus
