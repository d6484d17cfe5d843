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

#include <string>

#include <json.hpp>

#include "adaptlab/lm/lm.hpp"
#include "adaptlab/model/params.hpp"

namespace adaptlab::harness {

// A checkpoint is a directory holding manifest.json (kind, config, named
// tensors with group tags, subset membership, LHN sites, free-form meta) and
// one ADLT file per tensor under tensors/.

nlohmann::json model_config_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json lm_config_json(const lm::LmConfig& c);
lm::LmConfig lm_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& dir, const model::Seq2SeqParams& params,
                     const nlohmann::json& meta = nlohmann::json::object());
// Missing directory or manifest raises ConfigError; malformed content
// raises DataError.
model::Seq2SeqParams load_checkpoint(const std::string& dir, nlohmann::json* meta = nullptr);

void save_lm_checkpoint(const std::string& dir, const lm::LmParams& params,
                        const nlohmann::json& meta = nlohmann::json::object());
lm::LmParams load_lm_checkpoint(const std::string& dir, nlohmann::json* meta = nullptr);

bool checkpoint_exists(const std::string& dir);

}  // namespace adaptlab::harness
