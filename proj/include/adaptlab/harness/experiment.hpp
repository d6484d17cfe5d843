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

#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptlab/harness/config.hpp"
#include "adaptlab/harness/report.hpp"

namespace adaptlab::harness {

// Runs fn(0..n-1) on up to `workers` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

enum class LmKind { kNone, kGeneric, kFinetune, kFinetuneKld };
std::string to_string(LmKind kind);
LmKind parse_lm_kind(const std::string& name);

// One adaptation recipe applied to one data amount with one seed.
struct CellKey {
  losses::AdaptMethod method = losses::AdaptMethod::kKld;
  model::Subset subset = model::Subset::kAll;
  model::LhnSite site = model::LhnSite::kDecoderOutput;
  std::size_t size = 64;
  std::uint64_t seed = 1;
  double mwer_beta = 0.6;  // mwer_kld only

  // Report label without the seed, e.g. "kld/all@64".
  std::string system() const;
  // Relative directory, e.g. "kld-all-64/seed1".
  std::string path() const;
  auto operator<=>(const CellKey&) const = default;
};

struct DecodedUtterance {
  std::string utt_id;
  decode::BeamResult result;
  std::string text;
  metrics::ErrorCounts counts;
};

// Orchestrates a run under one output directory:
//   world/            synthetic corpus
//   si/               SI checkpoint + train_log.jsonl
//   lm/generic/       generic NCE LM
//   lm/<kind>/<spk>/  speaker LMs
//   sa/<cell>/<spk>/  adapted checkpoints + log.json
//   reports/          tables
// Artifacts are reused when their recorded config hash matches and rebuilt
// otherwise.
class Experiment {
 public:
  Experiment(ExperimentConfig config, std::string out_dir, std::ostream* log = nullptr);

  const ExperimentConfig& config() const { return config_; }
  const std::string& out_dir() const { return out_; }
  std::map<std::string, std::string> meta() const;

  const corpus::World& world();
  const model::Seq2SeqParams& si();
  const lm::LmParams& generic_lm();
  // Target speakers, limited by max_speakers.
  std::vector<const corpus::SpeakerCorpus*> speakers();

  // Adapts every speaker for every key (in parallel) unless cached.
  void ensure_cells(const std::vector<CellKey>& keys);
  const model::Seq2SeqParams& adapted(const CellKey& key, std::size_t speaker);
  // Epoch log written by the adaptation run.
  const nlohmann::json& adapt_log(const CellKey& key, std::size_t speaker);

  // nullptr for kNone.
  const lm::LmParams* speaker_lm(LmKind kind, std::size_t speaker);

  std::vector<DecodedUtterance> decode_speaker(const model::Seq2SeqParams& params, std::size_t speaker,
                                               const lm::LmParams* lm);
  // Decodes every speaker; `params_for` and `lm_for` pick per-speaker models.
  SystemResult evaluate(const std::string& label, const std::string& seed,
                        const std::function<const model::Seq2SeqParams&(std::size_t)>& params_for,
                        const std::function<const lm::LmParams*(std::size_t)>& lm_for);
  SystemResult evaluate_si(LmKind lm = LmKind::kNone, const std::string& label = "SI");
  SystemResult evaluate_cell(const CellKey& key, LmKind lm = LmKind::kNone, const std::string& label = "");

  // Experiment tables.
  EvalReport table_subsets();
  EvalReport table_lhn();
  EvalReport table_mwer();
  EvalReport table_fusion();
  EvalReport table_overview();
  // WER per (method, size, seed) plus per-size medians and, in a second
  // table, the least-squares slope of median WER on log size per method.
  std::pair<Table, Table> sweep();
  Table lm_table();
  Table parameter_table();

  CellKey kld_cell(model::Subset subset, std::size_t size, std::uint64_t seed) const;
  CellKey lhn_cell(model::LhnSite site, std::size_t size, std::uint64_t seed) const;
  CellKey mwer_cell(double beta, std::size_t size, std::uint64_t seed) const;

 private:
  struct CellResult {
    model::Seq2SeqParams params;
    nlohmann::json log;
  };

  std::string cell_hash(const CellKey& key) const;
  CellResult compute_cell(const CellKey& key, std::size_t speaker);
  void say(const std::string& msg);

  ExperimentConfig config_;
  std::string out_;
  std::ostream* log_;
  std::mutex mu_;
  std::optional<corpus::World> world_;
  std::optional<model::Seq2SeqParams> si_;
  std::optional<lm::LmParams> generic_lm_;
  std::map<std::pair<CellKey, std::size_t>, std::shared_ptr<CellResult>> cells_;
  std::map<std::pair<LmKind, std::size_t>, std::shared_ptr<lm::LmParams>> lms_;
};

}  // namespace adaptlab::harness
