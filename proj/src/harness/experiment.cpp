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

#include "adaptlab/harness/experiment.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "adaptlab/corpus/vocab.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/harness/checkpoint.hpp"
#include "adaptlab/util/seed.hpp"

namespace adaptlab::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;
using losses::AdaptMethod;
using model::LhnSite;
using model::Subset;

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string to_string(LmKind kind) {
  switch (kind) {
    case LmKind::kNone: return "none";
    case LmKind::kGeneric: return "generic";
    case LmKind::kFinetune: return "finetune";
    case LmKind::kFinetuneKld: return "finetune_kld";
  }
  return "?";
}

LmKind parse_lm_kind(const std::string& name) {
  for (LmKind k : {LmKind::kNone, LmKind::kGeneric, LmKind::kFinetune, LmKind::kFinetuneKld})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown LM kind '" + name + "' (none, generic, finetune, finetune_kld)");
}

namespace {

std::string beta_text(double b) {
  std::ostringstream os;
  os << b;
  return os.str();
}

std::string recipe(const CellKey& k) {
  switch (k.method) {
    case AdaptMethod::kKld: return "kld/" + std::string(model::to_string(k.subset));
    case AdaptMethod::kLhn: return "lhn/" + std::string(model::to_string(k.site));
    case AdaptMethod::kMwerKld: return "mwer_kld(" + beta_text(k.mwer_beta) + ")/" + std::string(model::to_string(k.subset));
  }
  return "?";
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) return {};
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<int>> encode_all(const corpus::WordPieceVocab& vocab, const std::vector<std::string>& text) {
  std::vector<std::vector<int>> out;
  out.reserve(text.size());
  for (const auto& line : text) out.push_back(vocab.encode_transcript(line));
  return out;
}

json epoch_json(const losses::AdaptEpochLog& e) {
  return {{"epoch", e.epoch},         {"loss", e.loss},         {"ce", e.ce_part},
          {"kld", e.kld_part},        {"mwer", e.mwer_part},    {"expected_errors", e.expected_errors}};
}

}  // namespace

std::string CellKey::system() const { return recipe(*this) + "@" + std::to_string(size); }

std::string CellKey::path() const {
  std::string r = recipe(*this);
  for (char& c : r)
    if (c == '/' || c == '(' || c == ')') c = '-';
  while (!r.empty() && r.back() == '-') r.pop_back();
  std::string out;
  for (char c : r)
    if (!(c == '-' && !out.empty() && out.back() == '-')) out += c;
  return out + "-" + std::to_string(size) + "/seed" + std::to_string(seed);
}

Experiment::Experiment(ExperimentConfig config, std::string out_dir, std::ostream* log)
    : config_(std::move(config)), out_(std::move(out_dir)), log_(log) {
  config_.validate();
}

void Experiment::say(const std::string& msg) {
  if (!log_) return;
  std::lock_guard<std::mutex> lock(mu_);
  *log_ << msg << std::endl;
}

std::map<std::string, std::string> Experiment::meta() const {
  return {{"config_hash", config_.hash()}, {"revision", kRevision}};
}

namespace {

std::string world_hash(const ExperimentConfig& c) {
  return fnv1a_hex("seed = " + std::to_string(c.seed) + "\n" + c.section_ini({"world"}));
}
std::string si_hash(const ExperimentConfig& c) { return fnv1a_hex(world_hash(c) + c.section_ini({"model", "train"})); }
std::string lm_hash(const ExperimentConfig& c) { return fnv1a_hex(world_hash(c) + c.section_ini({"lm"})); }

}  // namespace

const corpus::World& Experiment::world() {
  if (world_) return *world_;
  const fs::path dir = fs::path(out_) / "world";
  const std::string want = world_hash(config_);
  if (read_text(dir / "config_hash") == want) {
    world_ = corpus::load_world(dir.string());
  } else {
    say("generating world");
    corpus::WorldConfig wc = config_.world;
    wc.seed = config_.seed;
    world_ = corpus::generate_world(wc);
    fs::remove_all(dir);
    corpus::save_world(*world_, dir.string());
    write_text(dir / "config_hash", want);
  }
  return *world_;
}

std::vector<const corpus::SpeakerCorpus*> Experiment::speakers() {
  const auto& w = world();
  std::size_t n = w.speakers.size();
  if (config_.max_speakers > 0) n = std::min(n, config_.max_speakers);
  std::vector<const corpus::SpeakerCorpus*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&w.speakers[i]);
  return out;
}

const model::Seq2SeqParams& Experiment::si() {
  if (si_) return *si_;
  const auto& w = world();
  const fs::path dir = fs::path(out_) / "si";
  const std::string want = si_hash(config_);
  json meta;
  if (checkpoint_exists(dir.string())) {
    model::Seq2SeqParams p = load_checkpoint(dir.string(), &meta);
    if (meta.value("config_hash", "") == want) {
      si_ = std::move(p);
      return *si_;
    }
  }
  model::ModelConfig mc = config_.model;
  mc.feat_dim = w.config.feat_dim;
  mc.vocab_size = w.vocab.size();
  say("training SI model");
  std::string log_text;
  auto result = losses::train_si(mc, w.si_train, w.si_valid, config_.train, [&](const losses::TrainEpochLog& e) {
    log_text += json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss}}.dump() + "\n";
    std::ostringstream os;
    os << "  epoch " << e.epoch << " train " << e.train_loss << " valid " << e.valid_loss;
    say(os.str());
  });
  fs::remove_all(dir);
  save_checkpoint(dir.string(), result.params,
                  {{"config_hash", want}, {"best_epoch", result.best_epoch}, {"early_stopped", result.early_stopped}});
  write_text(dir / "train_log.jsonl", log_text);
  si_ = std::move(result.params);
  return *si_;
}

const lm::LmParams& Experiment::generic_lm() {
  if (generic_lm_) return *generic_lm_;
  const auto& w = world();
  const fs::path dir = fs::path(out_) / "lm" / "generic";
  const std::string want = lm_hash(config_);
  json meta;
  if (checkpoint_exists(dir.string())) {
    lm::LmParams p = load_lm_checkpoint(dir.string(), &meta);
    if (meta.value("config_hash", "") == want) {
      generic_lm_ = std::move(p);
      return *generic_lm_;
    }
  }
  say("training generic LM");
  lm::LmConfig lc = config_.lm;
  lc.vocab_size = w.vocab.size();
  lm::NceConfig nce = config_.nce;
  nce.seed = config_.seed;
  std::vector<lm::LmEpochLog> log;
  generic_lm_ = lm::train_nce(lm::init_lm(lc, derive_seed(config_.seed, {41})), encode_all(w.vocab, w.lm_text), nce, &log);
  json epochs = json::array();
  for (const auto& e : log) epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}});
  fs::remove_all(dir);
  save_lm_checkpoint(dir.string(), *generic_lm_, {{"config_hash", want}, {"epochs", epochs}});
  return *generic_lm_;
}

const lm::LmParams* Experiment::speaker_lm(LmKind kind, std::size_t speaker) {
  if (kind == LmKind::kNone) return nullptr;
  if (kind == LmKind::kGeneric) return &generic_lm();
  const auto spk = speakers().at(speaker);
  const auto& base = generic_lm();
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = lms_.find({kind, speaker});
    if (it != lms_.end()) return it->second.get();
  }
  const fs::path dir = fs::path(out_) / "lm" / to_string(kind) / spk->profile.speaker_id;
  const std::string want = fnv1a_hex(lm_hash(config_) + config_.section_ini({"lm_finetune"}) + to_string(kind));
  std::shared_ptr<lm::LmParams> result;
  json meta;
  if (checkpoint_exists(dir.string())) {
    auto p = load_lm_checkpoint(dir.string(), &meta);
    if (meta.value("config_hash", "") == want) result = std::make_shared<lm::LmParams>(std::move(p));
  }
  if (!result) {
    lm::FinetuneConfig ft = config_.finetune;
    ft.use_kld = kind == LmKind::kFinetuneKld;
    ft.nce.k = config_.nce.k;
    ft.nce.weight_decay = config_.nce.weight_decay;
    ft.nce.seed = derive_seed(config_.seed, {43, speaker});
    result = std::make_shared<lm::LmParams>(lm::finetune_lm(base, encode_all(world().vocab, spk->text_pool), ft));
    fs::remove_all(dir);
    save_lm_checkpoint(dir.string(), *result, {{"config_hash", want}});
  }
  std::lock_guard<std::mutex> lock(mu_);
  return lms_.emplace(std::pair{kind, speaker}, result).first->second.get();
}

std::string Experiment::cell_hash(const CellKey& key) const {
  return fnv1a_hex(si_hash(config_) + config_.section_ini({"adapt", "mwer"}) + key.path());
}

CellKey Experiment::kld_cell(Subset subset, std::size_t size, std::uint64_t seed) const {
  CellKey k;
  k.method = AdaptMethod::kKld;
  k.subset = subset;
  k.size = size;
  k.seed = seed;
  return k;
}

CellKey Experiment::lhn_cell(LhnSite site, std::size_t size, std::uint64_t seed) const {
  CellKey k;
  k.method = AdaptMethod::kLhn;
  k.site = site;
  k.size = size;
  k.seed = seed;
  return k;
}

CellKey Experiment::mwer_cell(double beta, std::size_t size, std::uint64_t seed) const {
  CellKey k;
  k.method = AdaptMethod::kMwerKld;
  k.subset = Subset::kAll;
  k.size = size;
  k.seed = seed;
  k.mwer_beta = beta;
  return k;
}

Experiment::CellResult Experiment::compute_cell(const CellKey& key, std::size_t speaker) {
  const auto* spk = speakers().at(speaker);
  const auto data = spk->adaptation_subset(key.size);
  losses::AdaptationConfig cfg = config_.adapt;
  losses::AdaptOptions opts;
  opts.seed = derive_seed(key.seed, {speaker, static_cast<std::uint64_t>(key.method),
                                     static_cast<std::uint64_t>(key.subset), static_cast<std::uint64_t>(key.site),
                                     key.size});
  opts.vocab = &world().vocab;
  losses::AdaptSpec spec{key.method, key.subset, key.site};
  if (key.method == AdaptMethod::kMwerKld) {
    // Second stage on top of the KLD model of the same subset, size and seed.
    opts.init = &adapted(kld_cell(key.subset, key.size, key.seed), speaker);
    cfg.beta = key.mwer_beta;
    cfg.epochs = config_.mwer_epochs;
    cfg.learning_rate = config_.mwer_learning_rate;
  }
  losses::AdaptResult r = losses::adapt(si(), data, cfg, spec, opts);
  json log = {{"system", key.system()}, {"seed", key.seed}, {"speaker", spk->profile.speaker_id},
              {"utterances", key.size}, {"final_expected_errors", r.final_expected_errors}};
  log["epochs"] = json::array();
  for (const auto& e : r.log) log["epochs"].push_back(epoch_json(e));
  return {std::move(r.params), std::move(log)};
}

void Experiment::ensure_cells(const std::vector<CellKey>& keys) {
  si();
  const std::size_t n_spk = speakers().size();
  // mWER cells depend on their KLD cells; build those first.
  std::vector<CellKey> first, second;
  for (const auto& k : keys) {
    if (k.method == AdaptMethod::kMwerKld) {
      first.push_back(kld_cell(k.subset, k.size, k.seed));
      second.push_back(k);
    } else {
      first.push_back(k);
    }
  }
  for (const auto* batch : {&first, &second}) {
    std::vector<std::pair<CellKey, std::size_t>> todo;
    for (const auto& k : *batch)
      for (std::size_t s = 0; s < n_spk; ++s)
        if (!cells_.count({k, s}) && std::find(todo.begin(), todo.end(), std::pair{k, s}) == todo.end())
          todo.emplace_back(k, s);
    parallel_for(todo.size(), config_.workers, [&](std::size_t i) { adapted(todo[i].first, todo[i].second); });
  }
}

const model::Seq2SeqParams& Experiment::adapted(const CellKey& key, std::size_t speaker) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cells_.find({key, speaker});
    if (it != cells_.end()) return it->second->params;
  }
  const auto* spk = speakers().at(speaker);
  const fs::path dir = fs::path(out_) / "sa" / key.path() / spk->profile.speaker_id;
  const std::string want = cell_hash(key);
  std::shared_ptr<CellResult> result;
  json meta;
  if (checkpoint_exists(dir.string())) {
    auto p = load_checkpoint(dir.string(), &meta);
    if (meta.value("config_hash", "") == want) {
      result = std::make_shared<CellResult>(CellResult{std::move(p), json::parse(read_text(dir / "log.json"))});
    }
  }
  if (!result) {
    say("adapting " + key.system() + " seed " + std::to_string(key.seed) + " " + spk->profile.speaker_id);
    result = std::make_shared<CellResult>(compute_cell(key, speaker));
    fs::remove_all(dir);
    save_checkpoint(dir.string(), result->params, {{"config_hash", want}});
    write_text(dir / "log.json", result->log.dump(2) + "\n");
  }
  std::lock_guard<std::mutex> lock(mu_);
  return cells_.emplace(std::pair{key, speaker}, result).first->second->params;
}

const json& Experiment::adapt_log(const CellKey& key, std::size_t speaker) {
  adapted(key, speaker);
  std::lock_guard<std::mutex> lock(mu_);
  return cells_.at({key, speaker})->log;
}

std::vector<DecodedUtterance> Experiment::decode_speaker(const model::Seq2SeqParams& params, std::size_t speaker,
                                                         const lm::LmParams* lm) {
  const auto* spk = speakers().at(speaker);
  const auto& vocab = world().vocab;
  decode::FusionConfig fusion = config_.fusion;
  if (!lm) fusion.lambda_lm = 0.0;
  std::vector<DecodedUtterance> out;
  for (const auto& u : spk->eval) {
    DecodedUtterance d;
    d.utt_id = u.utt_id;
    d.result = decode::beam_search(params, lm, u.features, fusion);
    d.text = vocab.decode(d.result.nbest.front().hyp.tokens);
    d.counts = metrics::edit_distance(corpus::split_words(u.gold), corpus::split_words(d.text));
    out.push_back(std::move(d));
  }
  return out;
}

SystemResult Experiment::evaluate(const std::string& label, const std::string& seed,
                                  const std::function<const model::Seq2SeqParams&(std::size_t)>& params_for,
                                  const std::function<const lm::LmParams*(std::size_t)>& lm_for) {
  const auto spks = speakers();
  SystemResult r;
  r.system = label;
  r.seed = seed;
  r.speakers.resize(spks.size());
  // Resolve models up front so the parallel part only reads.
  std::vector<const model::Seq2SeqParams*> models;
  std::vector<const lm::LmParams*> lms;
  for (std::size_t s = 0; s < spks.size(); ++s) {
    models.push_back(&params_for(s));
    lms.push_back(lm_for(s));
  }
  parallel_for(spks.size(), config_.workers, [&](std::size_t s) {
    SpeakerCounts sc;
    sc.speaker = spks[s]->profile.speaker_id;
    for (const auto& d : decode_speaker(*models[s], s, lms[s])) sc.counts += d.counts;
    r.speakers[s] = sc;
  });
  return r;
}

SystemResult Experiment::evaluate_si(LmKind lm, const std::string& label) {
  const auto& p = si();
  return evaluate(label, "-", [&](std::size_t) -> const model::Seq2SeqParams& { return p; },
                  [&](std::size_t s) { return speaker_lm(lm, s); });
}

SystemResult Experiment::evaluate_cell(const CellKey& key, LmKind lm, const std::string& label) {
  ensure_cells({key});
  return evaluate(label.empty() ? key.system() : label, std::to_string(key.seed),
                  [&](std::size_t s) -> const model::Seq2SeqParams& { return adapted(key, s); },
                  [&](std::size_t s) { return speaker_lm(lm, s); });
}

EvalReport Experiment::table_subsets() {
  EvalReport rep{"subsets", {evaluate_si()}};
  std::vector<CellKey> keys;
  for (Subset s : config_.subsets)
    for (auto seed : config_.adapt_seeds) keys.push_back(kld_cell(s, config_.adapt_size, seed));
  ensure_cells(keys);
  for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k));
  return rep;
}

EvalReport Experiment::table_lhn() {
  EvalReport rep{"lhn_sites", {evaluate_si()}};
  std::vector<CellKey> keys;
  for (LhnSite site : config_.lhn_sites)
    for (auto seed : config_.adapt_seeds) keys.push_back(lhn_cell(site, config_.adapt_size, seed));
  ensure_cells(keys);
  for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k));
  return rep;
}

EvalReport Experiment::table_mwer() {
  EvalReport rep{"mwer", {evaluate_si()}};
  std::vector<CellKey> keys;
  for (auto seed : config_.adapt_seeds) keys.push_back(kld_cell(Subset::kAll, config_.adapt_size, seed));
  for (double beta : config_.mwer_betas)
    for (auto seed : config_.adapt_seeds) keys.push_back(mwer_cell(beta, config_.adapt_size, seed));
  ensure_cells(keys);
  for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k));
  return rep;
}

EvalReport Experiment::table_fusion() {
  EvalReport rep{"fusion", {evaluate_si()}};
  std::vector<CellKey> keys;
  for (auto seed : config_.adapt_seeds) keys.push_back(lhn_cell(config_.sweep_lhn_site, config_.adapt_size, seed));
  ensure_cells(keys);
  for (LmKind kind : {LmKind::kNone, LmKind::kGeneric, LmKind::kFinetune, LmKind::kFinetuneKld})
    for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k, kind, k.system() + " +lm:" + to_string(kind)));
  return rep;
}

EvalReport Experiment::table_overview() {
  const CellKey base = mwer_cell(config_.mwer_betas.front(), config_.adapt_size, 0);
  EvalReport rep{"overview", {evaluate_si()}};
  std::vector<CellKey> keys;
  for (auto seed : config_.adapt_seeds) {
    CellKey k = base;
    k.seed = seed;
    keys.push_back(k);
  }
  ensure_cells(keys);
  for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k, LmKind::kNone, "SA"));
  rep.systems.push_back(evaluate_si(LmKind::kGeneric, "SI +lm:generic"));
  for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k, LmKind::kGeneric, "SA +lm:generic"));
  rep.systems.push_back(evaluate_si(LmKind::kFinetuneKld, "SI +lm:finetune_kld"));
  for (const auto& k : keys) rep.systems.push_back(evaluate_cell(k, LmKind::kFinetuneKld, "SA +lm:finetune_kld"));
  return rep;
}

std::pair<Table, Table> Experiment::sweep() {
  const auto& sizes = world().config.adapt_sizes;
  std::vector<CellKey> keys;
  for (std::size_t n : sizes)
    for (auto seed : config_.adapt_seeds) {
      keys.push_back(kld_cell(Subset::kAll, n, seed));
      keys.push_back(lhn_cell(config_.sweep_lhn_site, n, seed));
    }
  ensure_cells(keys);
  Table curve;
  curve.name = "sweep";
  curve.meta = meta();
  curve.columns = {"method", "size", "log_size", "seed", "wer"};
  curve.rows.push_back({std::string("SI"), std::size_t{0}, std::monostate{}, std::string("-"), evaluate_si().pooled_wer()});
  Table slopes;
  slopes.name = "sweep_slope";
  slopes.meta = meta();
  slopes.columns = {"method", "points", "slope"};
  for (bool lhn : {false, true}) {
    std::string method;
    std::vector<double> xs, ys;
    for (std::size_t n : sizes) {
      std::vector<double> wers;
      for (auto seed : config_.adapt_seeds) {
        const CellKey k = lhn ? lhn_cell(config_.sweep_lhn_site, n, seed) : kld_cell(Subset::kAll, n, seed);
        method = recipe(k);
        const double w = evaluate_cell(k).pooled_wer();
        wers.push_back(w);
        curve.rows.push_back({method, n, std::log(static_cast<double>(n)), std::to_string(seed), w});
      }
      const double m = median(wers);
      curve.rows.push_back({method, n, std::log(static_cast<double>(n)), std::string("median"), m});
      xs.push_back(std::log(static_cast<double>(n)));
      ys.push_back(m);
    }
    const auto slope = least_squares_slope(xs, ys);
    slopes.rows.push_back({method, xs.size(), slope ? Cell(*slope) : Cell(std::monostate{})});
  }
  return {curve, slopes};
}

Table Experiment::lm_table() {
  const auto& w = world();
  const auto& generic = generic_lm();
  Table t;
  t.name = "lm";
  t.meta = meta();
  t.columns = {"speaker", "ppl_generic", "ppl_finetune", "ppl_finetune_kld", "mean_abs_log_z"};
  const auto spks = speakers();
  std::vector<std::vector<int>> heldout_all;
  for (std::size_t s = 0; s < spks.size(); ++s) {
    const auto heldout = encode_all(w.vocab, spks[s]->text_heldout);
    heldout_all.insert(heldout_all.end(), heldout.begin(), heldout.end());
    t.rows.push_back({spks[s]->profile.speaker_id, lm::perplexity(generic, heldout),
                      lm::perplexity(*speaker_lm(LmKind::kFinetune, s), heldout),
                      lm::perplexity(*speaker_lm(LmKind::kFinetuneKld, s), heldout),
                      lm::mean_abs_log_partition(generic, heldout)});
  }
  t.rows.push_back({std::string("ALL"), lm::perplexity(generic, heldout_all), std::monostate{}, std::monostate{},
                    lm::mean_abs_log_partition(generic, heldout_all)});
  return t;
}

Table Experiment::parameter_table() {
  const auto& p = si();
  Table t;
  t.name = "parameters";
  t.meta = meta();
  t.columns = {"group", "parameters"};
  const auto counts = model::subset_counts(p);
  t.rows.push_back({std::string("encoder"), counts.encoder});
  t.rows.push_back({std::string("decoder"), counts.decoder});
  t.rows.push_back({std::string("all"), counts.all});
  for (LhnSite site : model::kAllLhnSites) {
    const auto with = model::attach_lhn(p, site).first;
    t.rows.push_back({"lhn/" + std::string(model::to_string(site)), with.lhn_at(site)->parameter_count()});
  }
  return t;
}

}  // namespace adaptlab::harness
