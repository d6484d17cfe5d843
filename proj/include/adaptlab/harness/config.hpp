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

#include <cstdint>
#include <string>
#include <vector>

#include "adaptlab/corpus/world.hpp"
#include "adaptlab/decode/beam.hpp"
#include "adaptlab/lm/lm.hpp"
#include "adaptlab/losses/training.hpp"
#include "adaptlab/model/params.hpp"

namespace adaptlab::harness {

inline constexpr const char* kRevision = "adaptlab-0.1.0";

// Everything a run depends on. A run is reproducible from this plus the seed.
struct ExperimentConfig {
  // [experiment]
  std::uint64_t seed = 1;  // world, SI training and LM training
  std::vector<std::uint64_t> adapt_seeds = {1, 2, 3};
  std::size_t workers = 1;       // parallel (speaker, system) cells
  std::size_t max_speakers = 0;  // 0 means every target speaker
  std::size_t adapt_size = 64;   // adaptation utterances for fixed-size tables

  corpus::WorldConfig world;   // [world]; world.seed follows `seed`
  model::ModelConfig model;    // [model]; vocab_size follows the world
  losses::TrainConfig train;   // [train]
  losses::AdaptationConfig adapt;  // [adapt]

  // [mwer] second stage on top of the KLD {all} model.
  std::vector<double> mwer_betas = {0.6, 0.8};
  std::size_t mwer_epochs = 5;
  double mwer_learning_rate = 1e-4;

  decode::FusionConfig fusion;  // [fusion] eval decoding; lambda_lm applies when an LM is fused

  lm::LmConfig lm;           // [lm]
  lm::NceConfig nce;         // [lm]
  lm::FinetuneConfig finetune;  // [lm_finetune]

  // [matrix]
  std::vector<model::Subset> subsets = {model::Subset::kEncoder, model::Subset::kDecoder, model::Subset::kAll};
  std::vector<model::LhnSite> lhn_sites = {model::LhnSite::kFeatures, model::LhnSite::kEncoderOutput,
                                           model::LhnSite::kDecoderOutput};
  model::LhnSite sweep_lhn_site = model::LhnSite::kDecoderOutput;

  ExperimentConfig();
  void set_seed(std::uint64_t s);
  void validate() const;

  // Canonical INI text of every setting (doubles round-trip exactly).
  std::string to_ini() const;
  // Canonical text restricted to the listed sections.
  std::string section_ini(const std::vector<std::string>& sections) const;
  // 16 hex digits of FNV-1a over to_ini().
  std::string hash() const;
};

// Reads an INI file. Missing sections keep their defaults; unknown sections
// or keys and unparsable values raise ConfigError.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

std::string fnv1a_hex(const std::string& text);

}  // namespace adaptlab::harness
