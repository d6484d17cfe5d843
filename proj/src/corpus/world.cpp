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

#include "adaptlab/corpus/world.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "adaptlab/autodiff/serialize.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/util/seed.hpp"

namespace adaptlab::corpus {
namespace fs = std::filesystem;
using ad::Shape;
using json = nlohmann::json;

namespace {

enum SeedTag : std::uint64_t {
  kLexicon = 1,
  kPopulation,
  kPrototypes,
  kSiProfile,
  kSiUtt,
  kValidUtt,
  kEvalProfile,
  kAdaptUtt,
  kEvalUtt,
  kCorrupt,
  kLmText,
  kSpeakerText,
  kHeldoutText,
};

std::size_t draw_index(const std::vector<double>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return d(rng);
}

std::vector<std::string> make_lexicon(const WorldConfig& cfg) {
  std::mt19937_64 rng(derive_seed(cfg.seed, {kLexicon}));
  std::uniform_int_distribution<std::size_t> len(cfg.word_min_chars, cfg.word_max_chars);
  std::uniform_int_distribution<std::size_t> ch(0, cfg.alphabet.size() - 1);
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::size_t attempts = 0;
  while (words.size() < cfg.lexicon_size) {
    if (++attempts > 100000) throw ConfigError("world: cannot draw a lexicon of the requested size");
    std::string w;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) w.push_back(cfg.alphabet[ch(rng)]);
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

// Sparse population bigram: each context prefers a handful of successors.
std::vector<std::vector<double>> population_bigram(std::size_t words, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> g(0.3, 1.0);
  std::vector<std::vector<double>> rows(words + 1, std::vector<double>(words));
  for (auto& row : rows) {
    double total = 0.0;
    for (double& v : row) total += (v = g(rng) + 1e-3);
    for (double& v : row) v /= total;
  }
  return rows;
}

std::vector<std::vector<double>> speaker_bigram(const std::vector<std::vector<double>>& population,
                                                std::size_t domain_words, double weight, std::mt19937_64& rng) {
  const std::size_t words = population.front().size();
  std::vector<std::size_t> order(words);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(domain_words, words));
  std::vector<std::vector<double>> rows = population;
  for (auto& row : rows) {
    for (double& v : row) v *= 1.0 - weight;
    for (std::size_t w : order) row[w] += weight / static_cast<double>(order.size());
  }
  return rows;
}

json tensor_json(const Tensor& t) { return json(std::vector<double>(t.values().begin(), t.values().end())); }

Tensor json_tensor(const json& j, Shape shape) { return Tensor(std::move(shape), j.get<std::vector<double>>()); }

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& l : lines) os << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(is, l)) lines.push_back(l);
  return lines;
}

void write_manifest(const fs::path& dir, const std::string& name, const std::vector<Utterance>& utts) {
  fs::create_directories(dir / "feats");
  std::ofstream os(dir / (name + ".jsonl"));
  if (!os) throw DataError("cannot write manifest " + name);
  for (const Utterance& u : utts) {
    const std::string rel = "feats/" + u.utt_id + ".adlt";
    ad::save_tensor((dir / rel).string(), u.features.frames);
    json j = {{"utt_id", u.utt_id}, {"speaker_id", u.speaker_id}, {"path", rel},
              {"transcript", u.transcript}, {"tokens", u.tokens}, {"gold", u.gold}};
    os << j.dump() << '\n';
  }
}

std::vector<Utterance> read_manifest(const fs::path& dir, const std::string& name) {
  std::vector<Utterance> utts;
  for (const std::string& line : read_lines(dir / (name + ".jsonl"))) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Utterance u;
    u.utt_id = j.at("utt_id");
    u.speaker_id = j.at("speaker_id");
    u.transcript = j.at("transcript");
    u.tokens = j.at("tokens").get<std::vector<int>>();
    u.gold = j.value("gold", u.transcript);
    u.features.frames = ad::load_tensor((dir / j.at("path").get<std::string>()).string());
    utts.push_back(std::move(u));
  }
  return utts;
}

json profile_json(const SpeakerProfile& p) {
  return {{"speaker_id", p.speaker_id}, {"gain", tensor_json(p.gain)}, {"bias", tensor_json(p.bias)},
          {"noise", p.noise}, {"bigram", p.bigram}};
}

SpeakerProfile json_profile(const json& j, std::size_t dim) {
  SpeakerProfile p;
  p.speaker_id = j.at("speaker_id");
  p.gain = json_tensor(j.at("gain"), {dim, dim});
  p.bias = json_tensor(j.at("bias"), {dim});
  p.noise = j.at("noise");
  p.bigram = j.at("bigram").get<std::vector<std::vector<double>>>();
  return p;
}

json config_json(const WorldConfig& c) {
  return {{"seed", c.seed},
          {"feat_dim", c.feat_dim},
          {"vocab_size", c.vocab_size},
          {"alphabet", c.alphabet},
          {"lexicon_size", c.lexicon_size},
          {"word_min_chars", c.word_min_chars},
          {"word_max_chars", c.word_max_chars},
          {"sentence_min_words", c.sentence_min_words},
          {"sentence_max_words", c.sentence_max_words},
          {"min_frames_per_token", c.min_frames_per_token},
          {"max_frames_per_token", c.max_frames_per_token},
          {"si_speakers", c.si_speakers},
          {"si_utterances", c.si_utterances},
          {"si_valid_utterances", c.si_valid_utterances},
          {"si_channel_delta", c.si_channel_delta},
          {"eval_speakers", c.eval_speakers},
          {"adapt_sizes", c.adapt_sizes},
          {"eval_utterances", c.eval_utterances},
          {"eval_channel_delta", c.eval_channel_delta},
          {"noise", c.noise},
          {"eval_noise", c.eval_noise},
          {"domain_words", c.domain_words},
          {"domain_weight", c.domain_weight},
          {"corruption_rate", c.corruption_rate},
          {"lm_sentences", c.lm_sentences},
          {"speaker_text_sentences", c.speaker_text_sentences},
          {"speaker_heldout_sentences", c.speaker_heldout_sentences}};
}

WorldConfig json_config(const json& j) {
  WorldConfig c;
  c.seed = j.at("seed");
  c.feat_dim = j.at("feat_dim");
  c.vocab_size = j.at("vocab_size");
  c.alphabet = j.at("alphabet");
  c.lexicon_size = j.at("lexicon_size");
  c.word_min_chars = j.at("word_min_chars");
  c.word_max_chars = j.at("word_max_chars");
  c.sentence_min_words = j.at("sentence_min_words");
  c.sentence_max_words = j.at("sentence_max_words");
  c.min_frames_per_token = j.at("min_frames_per_token");
  c.max_frames_per_token = j.at("max_frames_per_token");
  c.si_speakers = j.at("si_speakers");
  c.si_utterances = j.at("si_utterances");
  c.si_valid_utterances = j.at("si_valid_utterances");
  c.si_channel_delta = j.at("si_channel_delta");
  c.eval_speakers = j.at("eval_speakers");
  c.adapt_sizes = j.at("adapt_sizes").get<std::vector<std::size_t>>();
  c.eval_utterances = j.at("eval_utterances");
  c.eval_channel_delta = j.at("eval_channel_delta");
  c.noise = j.at("noise");
  c.eval_noise = j.at("eval_noise");
  c.domain_words = j.at("domain_words");
  c.domain_weight = j.at("domain_weight");
  c.corruption_rate = j.at("corruption_rate");
  c.lm_sentences = j.at("lm_sentences");
  c.speaker_text_sentences = j.at("speaker_text_sentences");
  c.speaker_heldout_sentences = j.at("speaker_heldout_sentences");
  return c;
}

std::string index_id(const char* prefix, std::size_t i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

}  // namespace

void WorldConfig::validate() const {
  if (feat_dim == 0) throw ConfigError("world: feat_dim must be positive");
  if (alphabet.empty() || alphabet.find(' ') != std::string::npos)
    throw ConfigError("world: alphabet must be nonempty and exclude space");
  if (word_min_chars == 0 || word_min_chars > word_max_chars) throw ConfigError("world: bad word length range");
  if (sentence_min_words == 0 || sentence_min_words > sentence_max_words)
    throw ConfigError("world: bad sentence length range");
  if (min_frames_per_token == 0 || min_frames_per_token > max_frames_per_token)
    throw ConfigError("world: bad frames-per-token range");
  if (si_speakers == 0 || si_utterances == 0) throw ConfigError("world: empty SI population");
  if (adapt_sizes.empty()) throw ConfigError("world: adapt_sizes must be nonempty");
  for (std::size_t i = 0; i < adapt_sizes.size(); ++i) {
    if (adapt_sizes[i] == 0 || (i > 0 && adapt_sizes[i] <= adapt_sizes[i - 1]))
      throw ConfigError("world: adapt_sizes must be positive and ascending");
  }
  if (corruption_rate < 0.0 || corruption_rate > 1.0) throw ConfigError("world: corruption_rate outside [0,1]");
  if (domain_weight < 0.0 || domain_weight > 1.0) throw ConfigError("world: domain_weight outside [0,1]");
}

std::vector<const Utterance*> SpeakerCorpus::adaptation_subset(std::size_t n) const {
  if (n > adapt.size()) {
    throw DataError("speaker " + profile.speaker_id + ": adaptation subset of " + std::to_string(n) +
                    " exceeds pool of " + std::to_string(adapt.size()));
  }
  std::vector<const Utterance*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&adapt[i]);
  return out;
}

double condition_number(const Tensor& square) {
  const auto n = static_cast<Eigen::Index>(square.rows());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(square.data(), n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s(0) / s(n - 1);
}

SpeakerProfile make_profile(const std::string& id, std::size_t dim, double delta, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SpeakerProfile p;
  p.speaker_id = id;
  p.noise = noise;
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  do {
    p.gain = Tensor::identity(dim);
    for (double& v : p.gain.mutable_values()) v += delta * sd * n(rng);
  } while (!(condition_number(p.gain) < 10.0));
  p.bias = Tensor(Shape{dim});
  for (double& v : p.bias.mutable_values()) v = 0.5 * delta * n(rng);
  return p;
}

FeatureSequence synthesize_utterance(const SpeakerProfile& profile, const Tensor& prototypes,
                                     const std::vector<int>& tokens, std::uint64_t seed, std::size_t min_frames,
                                     std::size_t max_frames) {
  if (tokens.empty()) throw ContractError("synthesize_utterance: empty token sequence");
  const std::size_t d = prototypes.cols();
  if (profile.gain.rows() != d) {
    throw DimensionError("synthesize_utterance: channel " + ad::shape_string(profile.gain.shape()) +
                         " vs prototypes " + ad::shape_string(prototypes.shape()));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dur(min_frames, max_frames);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> frames;
  std::size_t count = 0;
  for (int tok : tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= prototypes.rows())
      throw TokenError("synthesize_utterance: token " + std::to_string(tok) + " has no prototype");
    const double* proto = prototypes.data() + static_cast<std::size_t>(tok) * d;
    const std::size_t k = dur(rng);
    for (std::size_t f = 0; f < k; ++f, ++count) {
      for (std::size_t i = 0; i < d; ++i) {
        double v = profile.bias.at(i);
        for (std::size_t j = 0; j < d; ++j) v += profile.gain.at(i, j) * proto[j];
        if (profile.noise > 0.0) v += profile.noise * n(rng);
        frames.push_back(v);
      }
    }
  }
  return {Tensor(Shape{count, d}, std::move(frames))};
}

std::string sample_sentence(const std::vector<std::vector<double>>& bigram, const std::vector<std::string>& lexicon,
                            std::size_t min_words, std::size_t max_words, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(min_words, max_words);
  const std::size_t n = len(rng);
  std::string out;
  std::size_t ctx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t w = draw_index(bigram.at(ctx), rng);
    out += ' ';
    out += lexicon.at(w);
    ctx = w + 1;
  }
  return out;
}

std::vector<int> corrupt_tokens(const std::vector<int>& tokens, std::size_t vocab_size, double rate,
                                std::uint64_t seed) {
  std::vector<int> out = tokens;
  if (rate <= 0.0 || vocab_size <= kNumSpecials + 1) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(static_cast<int>(kNumSpecials), static_cast<int>(vocab_size) - 2);
  for (int& t : out) {
    if (t == model::kEos || u(rng) >= rate) continue;
    const int r = pick(rng);
    t = r >= t ? r + 1 : r;  // never the original token
  }
  return out;
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w;
  w.config = cfg;
  w.lexicon = make_lexicon(cfg);
  const std::size_t d = cfg.feat_dim;
  const auto population = population_bigram(w.lexicon.size(), derive_seed(cfg.seed, {kPopulation}));

  for (std::size_t s = 0; s < cfg.si_speakers; ++s) {
    SpeakerProfile p = make_profile(index_id("si", s, 3), d, cfg.si_channel_delta, cfg.noise,
                                    derive_seed(cfg.seed, {kSiProfile, s}));
    std::mt19937_64 rng(derive_seed(cfg.seed, {kSiProfile, s, 1}));
    p.bigram = speaker_bigram(population, cfg.domain_words, cfg.domain_weight, rng);
    w.si_profiles.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < cfg.lm_sentences; ++i) {
    const auto& p = w.si_profiles[i % cfg.si_speakers];
    w.lm_text.push_back(sample_sentence(p.bigram, w.lexicon, cfg.sentence_min_words, cfg.sentence_max_words,
                                        derive_seed(cfg.seed, {kLmText, i})));
  }

  // SI transcripts are drawn before the vocabulary so it can be built from them.
  auto si_sentences = [&](std::size_t count, std::uint64_t tag) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& p = w.si_profiles[i % cfg.si_speakers];
      out.push_back(sample_sentence(p.bigram, w.lexicon, cfg.sentence_min_words, cfg.sentence_max_words,
                                    derive_seed(cfg.seed, {tag, i, 0})));
    }
    return out;
  };
  const auto train_text = si_sentences(cfg.si_utterances, kSiUtt);
  const auto valid_text = si_sentences(cfg.si_valid_utterances, kValidUtt);
  std::vector<std::string> vocab_text = w.lm_text;
  vocab_text.insert(vocab_text.end(), train_text.begin(), train_text.end());
  w.vocab = build_vocab(vocab_text, cfg.vocab_size);

  {
    std::mt19937_64 rng(derive_seed(cfg.seed, {kPrototypes}));
    std::normal_distribution<double> n(0.0, 1.0);
    w.prototypes = Tensor(Shape{w.vocab.size(), d});
    for (double& v : w.prototypes.mutable_values()) v = n(rng);
  }

  auto make_utt = [&](const SpeakerProfile& p, std::string id, const std::string& text, std::uint64_t seed) {
    Utterance u;
    u.utt_id = std::move(id);
    u.speaker_id = p.speaker_id;
    u.gold = u.transcript = text;
    u.tokens = w.vocab.encode_transcript(text);
    u.features = synthesize_utterance(p, w.prototypes, u.tokens, seed, cfg.min_frames_per_token,
                                      cfg.max_frames_per_token);
    return u;
  };
  for (std::size_t i = 0; i < train_text.size(); ++i) {
    const auto& p = w.si_profiles[i % cfg.si_speakers];
    w.si_train.push_back(make_utt(p, p.speaker_id + "_t" + index_id("", i, 5), train_text[i],
                                  derive_seed(cfg.seed, {kSiUtt, i, 1})));
  }
  for (std::size_t i = 0; i < valid_text.size(); ++i) {
    const auto& p = w.si_profiles[i % cfg.si_speakers];
    w.si_valid.push_back(make_utt(p, p.speaker_id + "_v" + index_id("", i, 5), valid_text[i],
                                  derive_seed(cfg.seed, {kValidUtt, i, 1})));
  }

  const std::size_t pool = cfg.adapt_sizes.back();
  for (std::size_t s = 0; s < cfg.eval_speakers; ++s) {
    SpeakerCorpus sc;
    sc.profile = make_profile(index_id("spk", s, 2), d, cfg.eval_channel_delta, cfg.eval_noise,
                              derive_seed(cfg.seed, {kEvalProfile, s}));
    std::mt19937_64 rng(derive_seed(cfg.seed, {kEvalProfile, s, 1}));
    sc.profile.bigram = speaker_bigram(population, cfg.domain_words, cfg.domain_weight, rng);
    const auto& p = sc.profile;
    auto sentence = [&](std::uint64_t tag, std::size_t i) {
      return sample_sentence(p.bigram, w.lexicon, cfg.sentence_min_words, cfg.sentence_max_words,
                             derive_seed(cfg.seed, {tag, s, i}));
    };
    for (std::size_t i = 0; i < pool; ++i) {
      Utterance u = make_utt(p, p.speaker_id + "_a" + index_id("", i, 4), sentence(kAdaptUtt, i),
                             derive_seed(cfg.seed, {kAdaptUtt, s, i, 1}));
      if (cfg.corruption_rate > 0.0) {
        u.tokens = corrupt_tokens(u.tokens, w.vocab.size(), cfg.corruption_rate,
                                  derive_seed(cfg.seed, {kCorrupt, s, i}));
        u.transcript = w.vocab.decode(u.tokens);
      }
      sc.adapt.push_back(std::move(u));
    }
    for (std::size_t i = 0; i < cfg.eval_utterances; ++i) {
      sc.eval.push_back(make_utt(p, p.speaker_id + "_e" + index_id("", i, 4), sentence(kEvalUtt, i),
                                 derive_seed(cfg.seed, {kEvalUtt, s, i, 1})));
    }
    for (std::size_t i = 0; i < cfg.speaker_text_sentences; ++i) sc.text_pool.push_back(sentence(kSpeakerText, i));
    for (std::size_t i = 0; i < cfg.speaker_heldout_sentences; ++i)
      sc.text_heldout.push_back(sentence(kHeldoutText, i));
    w.speakers.push_back(std::move(sc));
  }
  return w;
}

void save_world(const World& w, const std::string& dir_str) {
  const fs::path dir(dir_str);
  fs::create_directories(dir);
  json meta = {{"config", config_json(w.config)}, {"lexicon", w.lexicon}, {"vocab", w.vocab.units()}};
  meta["si_profiles"] = json::array();
  for (const auto& p : w.si_profiles) meta["si_profiles"].push_back(profile_json(p));
  meta["speakers"] = json::array();
  for (const auto& s : w.speakers) meta["speakers"].push_back(profile_json(s.profile));
  {
    std::ofstream os(dir / "world.json");
    if (!os) throw DataError("cannot write " + (dir / "world.json").string());
    os << meta.dump(1) << '\n';
  }
  ad::save_tensor((dir / "prototypes.adlt").string(), w.prototypes);
  write_manifest(dir, "si_train", w.si_train);
  write_manifest(dir, "si_valid", w.si_valid);
  write_lines(dir / "lm_text.txt", w.lm_text);
  for (const auto& s : w.speakers) {
    const std::string& id = s.profile.speaker_id;
    write_manifest(dir, id + ".adapt", s.adapt);
    write_manifest(dir, id + ".eval", s.eval);
    write_lines(dir / (id + ".text.txt"), s.text_pool);
    write_lines(dir / (id + ".heldout.txt"), s.text_heldout);
  }
}

World load_world(const std::string& dir_str) {
  const fs::path dir(dir_str);
  std::ifstream is(dir / "world.json");
  if (!is) throw DataError("no world at " + dir_str + " (world.json missing)");
  json meta;
  try {
    meta = json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(std::string("world.json: ") + e.what());
  }
  World w;
  w.config = json_config(meta.at("config"));
  w.lexicon = meta.at("lexicon").get<std::vector<std::string>>();
  w.vocab = WordPieceVocab(meta.at("vocab").get<std::vector<std::string>>());
  const std::size_t d = w.config.feat_dim;
  for (const auto& j : meta.at("si_profiles")) w.si_profiles.push_back(json_profile(j, d));
  w.prototypes = ad::load_tensor((dir / "prototypes.adlt").string());
  w.si_train = read_manifest(dir, "si_train");
  w.si_valid = read_manifest(dir, "si_valid");
  w.lm_text = read_lines(dir / "lm_text.txt");
  for (const auto& j : meta.at("speakers")) {
    SpeakerCorpus s;
    s.profile = json_profile(j, d);
    const std::string& id = s.profile.speaker_id;
    s.adapt = read_manifest(dir, id + ".adapt");
    s.eval = read_manifest(dir, id + ".eval");
    s.text_pool = read_lines(dir / (id + ".text.txt"));
    s.text_heldout = read_lines(dir / (id + ".heldout.txt"));
    w.speakers.push_back(std::move(s));
  }
  return w;
}

}  // namespace adaptlab::corpus
