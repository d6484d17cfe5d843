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

// adaptlab command line: world generation, SI training, adaptation, decoding,
// evaluation, data sweeps and the full report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptlab/errors.hpp"
#include "adaptlab/harness/checkpoint.hpp"
#include "adaptlab/harness/experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace adaptlab;
using namespace adaptlab::harness;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct AdaptArgs {
  std::string method = "kld";
  std::string subset = "all";
  std::string site = "decoder_output";
  std::size_t size = 0;
  std::uint64_t adapt_seed = 0;
  double beta = -1.0;
  std::string speaker;
};

struct DecodeArgs {
  std::vector<std::string> checkpoints;
  std::string lm = "none";
  std::string speaker;
  std::string label;
};

ExperimentConfig make_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig() : load_config(c.config_path);
  if (c.seed) cfg.set_seed(*c.seed);
  cfg.validate();
  return cfg;
}

std::size_t speaker_index(Experiment& ex, const std::string& id) {
  const auto spks = ex.speakers();
  for (std::size_t i = 0; i < spks.size(); ++i)
    if (spks[i]->profile.speaker_id == id) return i;
  throw ConfigError("unknown speaker '" + id + "'");
}

std::vector<std::size_t> selected_speakers(Experiment& ex, const std::string& id) {
  if (!id.empty()) return {speaker_index(ex, id)};
  std::vector<std::size_t> all(ex.speakers().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

CellKey cell_key(Experiment& ex, const AdaptArgs& a) {
  const auto& cfg = ex.config();
  const std::size_t size = a.size ? a.size : cfg.adapt_size;
  const std::uint64_t seed = a.adapt_seed ? a.adapt_seed : cfg.adapt_seeds.front();
  const auto method = losses::parse_adapt_method(a.method);
  switch (method) {
    case losses::AdaptMethod::kKld: return ex.kld_cell(model::parse_subset(a.subset), size, seed);
    case losses::AdaptMethod::kLhn: return ex.lhn_cell(model::parse_lhn_site(a.site), size, seed);
    case losses::AdaptMethod::kMwerKld: {
      CellKey k = ex.mwer_cell(a.beta >= 0.0 ? a.beta : cfg.mwer_betas.front(), size, seed);
      k.subset = model::parse_subset(a.subset);
      return k;
    }
  }
  throw ConfigError("unknown method");
}

// A system directory is a checkpoint, or a directory of per-speaker
// checkpoints named by speaker id.
class SystemModels {
 public:
  explicit SystemModels(std::string dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) throw ConfigError("missing checkpoint " + dir_);
  }
  const model::Seq2SeqParams& get(const std::string& speaker) {
    std::string path = dir_;
    if (!checkpoint_exists(path)) path = (fs::path(dir_) / speaker).string();
    if (!checkpoint_exists(path)) throw ConfigError("missing checkpoint for " + speaker + " under " + dir_);
    auto it = cache_.find(path);
    if (it == cache_.end()) it = cache_.emplace(path, load_checkpoint(path)).first;
    return it->second;
  }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::map<std::string, model::Seq2SeqParams> cache_;
};

std::string label_of(const std::string& dir, const std::string& out) {
  std::string rel = fs::relative(fs::path(dir), fs::path(out)).generic_string();
  if (rel.empty() || rel.rfind("..", 0) == 0) rel = fs::path(dir).generic_string();
  return rel;
}

void write_table(const Table& t, const std::string& out) {
  t.write((fs::path(out) / "reports").string());
  std::cout << t.to_tsv();
}

int cmd_gen_world(Experiment& ex) {
  const auto& w = ex.world();
  std::cout << "world: " << w.si_train.size() << " SI utterances, " << w.speakers.size() << " target speakers, "
            << w.vocab.size() << " word pieces -> " << ex.out_dir() << "/world\n";
  return kExitOk;
}

int cmd_train_si(Experiment& ex) {
  ex.si();
  ex.generic_lm();
  std::cout << "SI checkpoint: " << ex.out_dir() << "/si\ngeneric LM: " << ex.out_dir() << "/lm/generic\n";
  return kExitOk;
}

int cmd_adapt(Experiment& ex, const AdaptArgs& a) {
  const CellKey key = cell_key(ex, a);
  const auto spks = selected_speakers(ex, a.speaker);
  if (a.speaker.empty()) ex.ensure_cells({key});
  for (std::size_t s : spks) {
    ex.adapted(key, s);
    const auto& log = ex.adapt_log(key, s);
    std::cout << ex.out_dir() << "/sa/" << key.path() << "/" << ex.speakers()[s]->profile.speaker_id << "\t"
              << log.at("epochs").size() << " epochs\n";
  }
  return kExitOk;
}

int cmd_decode(Experiment& ex, const DecodeArgs& d) {
  const std::string dir = d.checkpoints.empty() ? ex.out_dir() + "/si" : d.checkpoints.front();
  SystemModels models(dir);
  const LmKind lm = parse_lm_kind(d.lm);
  std::string label = d.label.empty() ? label_of(dir, ex.out_dir()) : d.label;
  for (char& c : label)
    if (c == '/') c = '_';
  const auto& vocab = ex.world().vocab;
  for (std::size_t s : selected_speakers(ex, d.speaker)) {
    const std::string spk = ex.speakers()[s]->profile.speaker_id;
    const fs::path path = fs::path(ex.out_dir()) / "decode" / (label + "+lm-" + d.lm) / (spk + ".nbest.jsonl");
    fs::create_directories(path.parent_path());
    std::ofstream os(path);
    for (const auto& u : ex.decode_speaker(models.get(spk), s, ex.speaker_lm(lm, s))) {
      for (std::size_t r = 0; r < u.result.nbest.size(); ++r) {
        const auto& h = u.result.nbest[r];
        os << json{{"utt_id", u.utt_id}, {"rank", r + 1},          {"tokens", h.hyp.tokens},
                   {"text", vocab.decode(h.hyp.tokens)},           {"s2s_lp", h.hyp.s2s_logprob},
                   {"lm_lp", h.hyp.lm_logprob}, {"cov", h.coverage}, {"fused", h.fused}}
                  .dump()
           << "\n";
      }
    }
    std::cout << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_eval(Experiment& ex, const DecodeArgs& d) {
  const LmKind lm = parse_lm_kind(d.lm);
  EvalReport rep{d.label.empty() ? "eval" : d.label, {ex.evaluate_si()}};
  std::vector<std::unique_ptr<SystemModels>> systems;
  for (const auto& dir : d.checkpoints) systems.push_back(std::make_unique<SystemModels>(dir));
  for (auto& sys : systems) {
    const auto spks = ex.speakers();
    rep.systems.push_back(ex.evaluate(
        label_of(sys->dir(), ex.out_dir()) + (lm == LmKind::kNone ? "" : " +lm:" + d.lm), "-",
        [&](std::size_t s) -> const model::Seq2SeqParams& { return sys->get(spks[s]->profile.speaker_id); },
        [&](std::size_t s) { return ex.speaker_lm(lm, s); }));
  }
  write_table(rep.table(ex.meta()), ex.out_dir());
  return kExitOk;
}

int cmd_sweep(Experiment& ex) {
  auto [curve, slopes] = ex.sweep();
  write_table(curve, ex.out_dir());
  write_table(slopes, ex.out_dir());
  return kExitOk;
}

int cmd_report(Experiment& ex) {
  const auto meta = ex.meta();
  write_table(ex.parameter_table(), ex.out_dir());
  write_table(ex.table_subsets().table(meta), ex.out_dir());
  write_table(ex.table_lhn().table(meta), ex.out_dir());
  cmd_sweep(ex);
  write_table(ex.table_mwer().table(meta), ex.out_dir());
  write_table(ex.lm_table(), ex.out_dir());
  write_table(ex.table_fusion().table(meta), ex.out_dir());
  write_table(ex.table_overview().table(meta), ex.out_dir());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptlab: speaker adaptation experiments for attention seq2seq ASR on synthetic speech"};
  app.require_subcommand(1);
  Common common;
  AdaptArgs adapt_args;
  DecodeArgs decode_args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "INI experiment config (defaults when omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "base seed for world, SI and LM training");
    sub->add_option("--out", common.out, "output directory")->required();
  };
  auto* gen = app.add_subcommand("gen-world", "generate the synthetic world");
  auto* train = app.add_subcommand("train-si", "train the SI seq2seq model and the generic LM");
  auto* adapt = app.add_subcommand("adapt", "adapt the SI model to target speakers");
  auto* decode = app.add_subcommand("decode", "beam-search eval utterances and write n-best JSON lines");
  auto* eval = app.add_subcommand("eval", "decode and score systems against the SI model");
  auto* sweep = app.add_subcommand("sweep", "WER versus adaptation data amount");
  auto* report = app.add_subcommand("report", "run the whole experiment matrix and write every table");
  for (auto* sub : {gen, train, adapt, decode, eval, sweep, report}) add_common(sub);

  adapt->add_option("--method", adapt_args.method, "kld, lhn or mwer_kld");
  adapt->add_option("--subset", adapt_args.subset, "encoder, decoder or all (kld, mwer_kld)");
  adapt->add_option("--site", adapt_args.site, "features, encoder_output or decoder_output (lhn)");
  adapt->add_option("--size", adapt_args.size, "adaptation utterances (default: experiment adapt_size)");
  adapt->add_option("--adapt-seed", adapt_args.adapt_seed, "adaptation seed (default: first adapt_seeds entry)");
  adapt->add_option("--beta", adapt_args.beta, "KLD weight of the mwer_kld stage");
  adapt->add_option("--speaker", adapt_args.speaker, "single speaker id (default: all)");
  for (auto* sub : {decode, eval}) {
    sub->add_option("--checkpoint", decode_args.checkpoints,
                    "checkpoint, or directory of per-speaker checkpoints (repeatable for eval)");
    sub->add_option("--lm", decode_args.lm, "none, generic, finetune or finetune_kld");
    sub->add_option("--label", decode_args.label, "output name");
  }
  decode->add_option("--speaker", decode_args.speaker, "single speaker id (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    Experiment ex(make_config(common), common.out, &std::cerr);
    fs::create_directories(common.out);
    {
      std::ofstream os(fs::path(common.out) / "config.ini");
      os << ex.config().to_ini();
    }
    if (gen->parsed()) return cmd_gen_world(ex);
    if (train->parsed()) return cmd_train_si(ex);
    if (adapt->parsed()) return cmd_adapt(ex, adapt_args);
    if (decode->parsed()) return cmd_decode(ex, decode_args);
    if (eval->parsed()) return cmd_eval(ex, decode_args);
    if (sweep->parsed()) return cmd_sweep(ex);
    if (report->parsed()) return cmd_report(ex);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
