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

#include "adaptlab/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "adaptlab/errors.hpp"

namespace adaptlab::harness {

namespace {

using model::LhnSite;
using model::Subset;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(const std::string& v) { return v; }

[[noreturn]] void bad(const std::string& key, const std::string& text) {
  throw ConfigError("config: cannot parse " + key + " = '" + text + "'");
}

void parse(const std::string& key, const std::string& t, double& out) {
  std::size_t pos = 0;
  try {
    out = std::stod(t, &pos);
  } catch (const std::exception&) {
    bad(key, t);
  }
  if (pos != t.size()) bad(key, t);
}

template <typename U>
void parse_unsigned(const std::string& key, const std::string& t, U& out) {
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size()) bad(key, t);
}
void parse(const std::string& key, const std::string& t, std::size_t& out) { parse_unsigned(key, t, out); }

void parse(const std::string&, const std::string& t, std::string& out) { out = t; }

std::vector<std::string> split_list(const std::string& t) {
  std::vector<std::string> parts;
  if (boost::algorithm::trim_copy(t).empty()) return parts;
  boost::algorithm::split(parts, t, boost::is_any_of(","));
  for (auto& p : parts) boost::algorithm::trim(p);
  return parts;
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

struct Binding {
  std::string section, key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

// Scalar field bound to section.key.
template <typename T>
Binding field(const std::string& section, const std::string& key, T& ref) {
  const std::string full = section + "." + key;
  return {section, key, [&ref] { return fmt(ref); }, [&ref, full](const std::string& t) { parse(full, t, ref); }};
}

Binding bind_seed(const std::string& section, const std::string& key, std::uint64_t& ref) {
  const std::string full = section + "." + key;
  return {section, key, [&ref] { return std::to_string(ref); },
          [&ref, full](const std::string& t) { parse_unsigned(full, t, ref); }};
}

Binding bind_sizes(const std::string& section, const std::string& key, std::vector<std::size_t>& ref) {
  const std::string full = section + "." + key;
  return {section, key,
          [&ref] { return join<std::size_t>(ref, [](const std::size_t& v) { return std::to_string(v); }); },
          [&ref, full](const std::string& t) {
            ref.clear();
            for (const auto& p : split_list(t)) parse(full, p, ref.emplace_back());
          }};
}

Binding bind_seeds(const std::string& section, const std::string& key, std::vector<std::uint64_t>& ref) {
  const std::string full = section + "." + key;
  return {section, key,
          [&ref] { return join<std::uint64_t>(ref, [](const std::uint64_t& v) { return std::to_string(v); }); },
          [&ref, full](const std::string& t) {
            ref.clear();
            for (const auto& p : split_list(t)) parse_unsigned(full, p, ref.emplace_back());
          }};
}

Binding bind_doubles(const std::string& section, const std::string& key, std::vector<double>& ref) {
  const std::string full = section + "." + key;
  return {section, key, [&ref] { return join<double>(ref, [](const double& v) { return fmt(v); }); },
          [&ref, full](const std::string& t) {
            ref.clear();
            for (const auto& p : split_list(t)) parse(full, p, ref.emplace_back());
          }};
}

std::string coverage_name(decode::CoverageMode m) {
  return m == decode::CoverageMode::kCumulative ? "cumulative" : "per_row";
}
std::string scoring_name(lm::LmScoring s) { return s == lm::LmScoring::kExact ? "exact" : "self_normalized"; }

// Every setting, in canonical order.
std::vector<Binding> bindings(ExperimentConfig& c) {
  std::vector<Binding> b;
  b.push_back(bind_seed("experiment", "seed", c.seed));
  b.push_back(bind_seeds("experiment", "adapt_seeds", c.adapt_seeds));
  b.push_back(field("experiment", "workers", c.workers));
  b.push_back(field("experiment", "max_speakers", c.max_speakers));
  b.push_back(field("experiment", "adapt_size", c.adapt_size));

  auto& w = c.world;
  b.push_back(field("world", "feat_dim", w.feat_dim));
  b.push_back(field("world", "vocab_size", w.vocab_size));
  b.push_back(field("world", "alphabet", w.alphabet));
  b.push_back(field("world", "lexicon_size", w.lexicon_size));
  b.push_back(field("world", "word_min_chars", w.word_min_chars));
  b.push_back(field("world", "word_max_chars", w.word_max_chars));
  b.push_back(field("world", "sentence_min_words", w.sentence_min_words));
  b.push_back(field("world", "sentence_max_words", w.sentence_max_words));
  b.push_back(field("world", "min_frames_per_token", w.min_frames_per_token));
  b.push_back(field("world", "max_frames_per_token", w.max_frames_per_token));
  b.push_back(field("world", "si_speakers", w.si_speakers));
  b.push_back(field("world", "si_utterances", w.si_utterances));
  b.push_back(field("world", "si_valid_utterances", w.si_valid_utterances));
  b.push_back(field("world", "si_channel_delta", w.si_channel_delta));
  b.push_back(field("world", "eval_speakers", w.eval_speakers));
  b.push_back(bind_sizes("world", "adapt_sizes", w.adapt_sizes));
  b.push_back(field("world", "eval_utterances", w.eval_utterances));
  b.push_back(field("world", "eval_channel_delta", w.eval_channel_delta));
  b.push_back(field("world", "noise", w.noise));
  b.push_back(field("world", "eval_noise", w.eval_noise));
  b.push_back(field("world", "domain_words", w.domain_words));
  b.push_back(field("world", "domain_weight", w.domain_weight));
  b.push_back(field("world", "corruption_rate", w.corruption_rate));
  b.push_back(field("world", "lm_sentences", w.lm_sentences));
  b.push_back(field("world", "speaker_text_sentences", w.speaker_text_sentences));
  b.push_back(field("world", "speaker_heldout_sentences", w.speaker_heldout_sentences));

  auto& m = c.model;
  b.push_back(field("model", "conv_layers", m.conv_layers));
  b.push_back(field("model", "conv_channels", m.conv_channels));
  b.push_back(field("model", "conv_width", m.conv_width));
  b.push_back(field("model", "pyramid_stages", m.pyramid_stages));
  b.push_back(field("model", "layers_per_stage", m.layers_per_stage));
  b.push_back(field("model", "encoder_units", m.encoder_units));
  b.push_back(field("model", "decoder_layers", m.decoder_layers));
  b.push_back(field("model", "decoder_units", m.decoder_units));
  b.push_back(field("model", "embedding_dim", m.embedding_dim));
  b.push_back(field("model", "attention_dim", m.attention_dim));
  b.push_back(field("model", "dense_dim", m.dense_dim));

  auto& t = c.train;
  b.push_back(field("train", "epochs", t.epochs));
  b.push_back(field("train", "batch_size", t.batch_size));
  b.push_back(field("train", "learning_rate", t.learning_rate));
  b.push_back(field("train", "dropout", t.dropout));
  b.push_back(field("train", "label_smoothing", t.label_smoothing));
  b.push_back(field("train", "patience", t.patience));
  b.push_back(field("train", "clip_norm", t.clip_norm));

  auto& a = c.adapt;
  b.push_back(field("adapt", "beta", a.beta));
  b.push_back(field("adapt", "gamma1", a.gamma1));
  b.push_back(field("adapt", "gamma2", a.gamma2));
  b.push_back(field("adapt", "label_smoothing", a.label_smoothing));
  b.push_back(field("adapt", "dropout", a.dropout));
  b.push_back(field("adapt", "learning_rate", a.learning_rate));
  b.push_back(field("adapt", "batch_size", a.batch_size));
  b.push_back(field("adapt", "epochs", a.epochs));
  b.push_back(field("adapt", "nbest", a.nbest));
  b.push_back(field("adapt", "clip_norm", a.clip_norm));

  b.push_back(bind_doubles("mwer", "betas", c.mwer_betas));
  b.push_back(field("mwer", "epochs", c.mwer_epochs));
  b.push_back(field("mwer", "learning_rate", c.mwer_learning_rate));

  auto& f = c.fusion;
  b.push_back(field("fusion", "lambda_lm", f.lambda_lm));
  b.push_back(field("fusion", "lambda_cov", f.lambda_cov));
  b.push_back(field("fusion", "beam_width", f.beam_width));
  b.push_back(field("fusion", "max_len", f.max_len));
  b.push_back(field("fusion", "coverage_tau", f.coverage_tau));
  b.push_back({"fusion", "coverage", [&f] { return coverage_name(f.coverage); },
               [&f](const std::string& v) {
                 if (v == "cumulative") {
                   f.coverage = decode::CoverageMode::kCumulative;
                 } else if (v == "per_row") {
                   f.coverage = decode::CoverageMode::kPerRow;
                 } else {
                   bad("fusion.coverage", v);
                 }
               }});
  b.push_back({"fusion", "lm_scoring", [&f] { return scoring_name(f.lm_scoring); },
               [&f](const std::string& v) {
                 if (v == "self_normalized") {
                   f.lm_scoring = lm::LmScoring::kSelfNormalized;
                 } else if (v == "exact") {
                   f.lm_scoring = lm::LmScoring::kExact;
                 } else {
                   bad("fusion.lm_scoring", v);
                 }
               }});

  b.push_back(field("lm", "embedding_dim", c.lm.embedding_dim));
  b.push_back(field("lm", "units", c.lm.units));
  b.push_back(field("lm", "layers", c.lm.layers));
  b.push_back(field("lm", "nce_k", c.nce.k));
  b.push_back(field("lm", "weight_decay", c.nce.weight_decay));
  b.push_back(field("lm", "dropout", c.nce.dropout));
  b.push_back(field("lm", "learning_rate", c.nce.learning_rate));
  b.push_back(field("lm", "epochs", c.nce.epochs));
  b.push_back(field("lm", "batch_size", c.nce.batch_size));

  auto& ft = c.finetune;
  b.push_back(field("lm_finetune", "steps", ft.steps));
  b.push_back(field("lm_finetune", "learning_rate", ft.nce.learning_rate));
  b.push_back(field("lm_finetune", "batch_size", ft.nce.batch_size));
  b.push_back(field("lm_finetune", "dropout", ft.nce.dropout));
  b.push_back(field("lm_finetune", "beta_lm", ft.beta_lm));

  b.push_back({"matrix", "subsets",
               [&c] { return join<Subset>(c.subsets, [](const Subset& s) { return std::string(model::to_string(s)); }); },
               [&c](const std::string& v) {
                 c.subsets.clear();
                 for (const auto& p : split_list(v)) c.subsets.push_back(model::parse_subset(p));
               }});
  b.push_back({"matrix", "lhn_sites",
               [&c] { return join<LhnSite>(c.lhn_sites, [](const LhnSite& s) { return std::string(model::to_string(s)); }); },
               [&c](const std::string& v) {
                 c.lhn_sites.clear();
                 for (const auto& p : split_list(v)) c.lhn_sites.push_back(model::parse_lhn_site(p));
               }});
  b.push_back({"matrix", "sweep_lhn_site", [&c] { return std::string(model::to_string(c.sweep_lhn_site)); },
               [&c](const std::string& v) { c.sweep_lhn_site = model::parse_lhn_site(v); }});
  return b;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  // Toy-scale defaults that differ from the library defaults.
  adapt.learning_rate = 3e-4;
  train.epochs = 15;
  fusion.lambda_lm = 0.3;
  fusion.lambda_cov = 0.0;
  fusion.beam_width = 4;
  lm.vocab_size = world.vocab_size;
  finetune.use_kld = false;
  finetune.steps = 60;
  finetune.nce.learning_rate = 1e-3;
  finetune.nce.batch_size = 16;
  set_seed(seed);
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  world.seed = s;
  train.seed = s;
  nce.seed = s;
  finetune.nce.seed = s;
}

void ExperimentConfig::validate() const {
  world.validate();
  train.validate();
  adapt.validate();
  fusion.validate();
  if (adapt_seeds.empty()) throw ConfigError("experiment: adapt_seeds must be nonempty");
  if (workers == 0) throw ConfigError("experiment: workers must be at least 1");
  if (adapt_size == 0) throw ConfigError("experiment: adapt_size must be positive");
  if (adapt_size > world.adapt_sizes.back())
    throw ConfigError("experiment: adapt_size exceeds the largest world.adapt_sizes entry");
  if (mwer_betas.empty()) throw ConfigError("mwer: betas must be nonempty");
  for (double b : mwer_betas)
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("mwer: betas must lie in [0,1]");
  if (mwer_epochs == 0 || !(mwer_learning_rate > 0.0)) throw ConfigError("mwer: bad epochs or learning rate");
  if (subsets.empty()) throw ConfigError("matrix: subsets must be nonempty");
  if (lhn_sites.empty()) throw ConfigError("matrix: lhn_sites must be nonempty");
  if (!(finetune.beta_lm >= 0.0 && finetune.beta_lm <= 1.0)) throw ConfigError("lm_finetune: beta_lm must lie in [0,1]");
  if (nce.k == 0 || nce.epochs == 0 || nce.batch_size == 0) throw ConfigError("lm: nce_k, epochs and batch_size must be positive");
}

std::string ExperimentConfig::section_ini(const std::vector<std::string>& sections) const {
  auto b = bindings(const_cast<ExperimentConfig&>(*this));
  std::ostringstream os;
  std::string current;
  for (const auto& s : sections) {
    bool any = false;
    for (const auto& x : b) {
      if (x.section != s) continue;
      if (!any) os << (os.tellp() > 0 ? "\n" : "") << "[" << s << "]\n";
      any = true;
      os << x.key << " = " << x.get() << "\n";
    }
  }
  return os.str();
}

std::string ExperimentConfig::to_ini() const {
  return section_ini({"experiment", "world", "model", "train", "adapt", "mwer", "fusion", "lm", "lm_finetune", "matrix"});
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_ini()); }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  auto b = bindings(c);
  std::map<std::string, const Binding*> index;
  for (const auto& x : b) index[x.section + "." + x.key] = &x;
  bool seed_given = false;
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty())
      throw ConfigError("config: key '" + section + "' must live inside a [section]");
    for (const auto& [key, value] : keys) {
      auto it = index.find(section + "." + key);
      if (it == index.end()) throw ConfigError("config: unknown setting " + section + "." + key);
      it->second->set(boost::algorithm::trim_copy(value.data()));
      seed_given = seed_given || (section == "experiment" && key == "seed");
    }
  }
  if (seed_given) c.set_seed(c.seed);
  c.lm.vocab_size = c.world.vocab_size;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace adaptlab::harness
