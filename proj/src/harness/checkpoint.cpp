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

#include "adaptlab/harness/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include "adaptlab/autodiff/serialize.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ad::Tensor;

namespace {

constexpr const char* kFormat = "adaptlab-checkpoint";
constexpr int kVersion = 1;

std::string_view group_name(model::Group g) {
  switch (g) {
    case model::Group::kEncoder: return "encoder";
    case model::Group::kDecoder: return "decoder";
    case model::Group::kLhn: return "lhn";
  }
  return "?";
}

std::string tensor_file(const std::string& name) { return "tensors/" + name + ".adlt"; }

void write_manifest(const fs::path& dir, const json& manifest) {
  fs::create_directories(dir / "tensors");
  std::ofstream os(dir / "manifest.json");
  if (!os) throw DataError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
}

json read_manifest(const fs::path& dir, const std::string& kind) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw ConfigError("no checkpoint at " + dir.string() + " (manifest.json missing)");
  std::ifstream is(path);
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.value("format", "") != kFormat || m.value("version", 0) != kVersion)
    throw DataError(path.string() + ": not an adaptlab checkpoint of a supported version");
  if (m.value("kind", "") != kind)
    throw DataError(path.string() + ": expected a " + kind + " checkpoint, found " + m.value("kind", "?"));
  return m;
}

// Reads every manifest tensor and checks it against the freshly built
// structure's name and shape.
template <typename Params, typename ForEach>
void fill_tensors(const fs::path& dir, const json& manifest, Params& params, ForEach for_each) {
  std::map<std::string, std::string> files;
  for (const auto& t : manifest.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file");
  std::size_t seen = 0;
  for_each(params, [&](const std::string& name, Tensor& t) {
    auto it = files.find(name);
    if (it == files.end()) throw DataError("checkpoint " + dir.string() + ": tensor '" + name + "' missing");
    Tensor loaded = ad::load_tensor((dir / it->second).string());
    if (loaded.shape() != t.shape())
      throw DataError("checkpoint " + dir.string() + ": tensor '" + name + "' has the wrong shape");
    std::copy(loaded.values().begin(), loaded.values().end(), t.mutable_values().begin());
    t.set_requires_grad(false);
    ++seen;
  });
  if (seen != files.size()) throw DataError("checkpoint " + dir.string() + ": unexpected extra tensors");
}

}  // namespace

json model_config_json(const model::ModelConfig& c) {
  return {{"feat_dim", c.feat_dim},
          {"conv_layers", c.conv_layers},
          {"conv_channels", c.conv_channels},
          {"conv_width", c.conv_width},
          {"pyramid_stages", c.pyramid_stages},
          {"layers_per_stage", c.layers_per_stage},
          {"encoder_units", c.encoder_units},
          {"decoder_layers", c.decoder_layers},
          {"decoder_units", c.decoder_units},
          {"embedding_dim", c.embedding_dim},
          {"attention_dim", c.attention_dim},
          {"dense_dim", c.dense_dim},
          {"vocab_size", c.vocab_size}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  try {
    c.feat_dim = j.at("feat_dim");
    c.conv_layers = j.at("conv_layers");
    c.conv_channels = j.at("conv_channels");
    c.conv_width = j.at("conv_width");
    c.pyramid_stages = j.at("pyramid_stages");
    c.layers_per_stage = j.at("layers_per_stage");
    c.encoder_units = j.at("encoder_units");
    c.decoder_layers = j.at("decoder_layers");
    c.decoder_units = j.at("decoder_units");
    c.embedding_dim = j.at("embedding_dim");
    c.attention_dim = j.at("attention_dim");
    c.dense_dim = j.at("dense_dim");
    c.vocab_size = j.at("vocab_size");
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

json lm_config_json(const lm::LmConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embedding_dim", c.embedding_dim}, {"units", c.units}, {"layers", c.layers}};
}

lm::LmConfig lm_config_from_json(const json& j) {
  lm::LmConfig c;
  try {
    c.vocab_size = j.at("vocab_size");
    c.embedding_dim = j.at("embedding_dim");
    c.units = j.at("units");
    c.layers = j.at("layers");
  } catch (const json::exception& e) {
    throw DataError(std::string("lm config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const std::string& dir_str, const model::Seq2SeqParams& params, const json& meta) {
  const fs::path dir(dir_str);
  json m = {{"format", kFormat}, {"version", kVersion}, {"kind", "seq2seq"},
            {"config", model_config_json(params.config)}, {"meta", meta}};
  m["tensors"] = json::array();
  m["lhn_sites"] = json::array();
  for (model::LhnSite site : model::kAllLhnSites)
    if (params.lhn_at(site)) m["lhn_sites"].push_back(std::string(model::to_string(site)));
  json subsets = json::object();
  for (model::Subset s : {model::Subset::kEncoder, model::Subset::kDecoder, model::Subset::kAll}) {
    const auto mask = model::parameter_subset(params, s);
    json names = json::array();
    params.for_each([&](const std::string& name, const Tensor&, model::Group) {
      if (mask.count(name)) names.push_back(name);
    });
    subsets[std::string(model::to_string(s))] = names;
  }
  m["subsets"] = subsets;
  fs::create_directories(dir / "tensors");
  params.for_each([&](const std::string& name, const Tensor& t, model::Group g) {
    m["tensors"].push_back({{"name", name}, {"group", group_name(g)}, {"shape", t.shape()}, {"file", tensor_file(name)}});
    ad::save_tensor((dir / tensor_file(name)).string(), t);
  });
  write_manifest(dir, m);
}

model::Seq2SeqParams load_checkpoint(const std::string& dir_str, json* meta) {
  const fs::path dir(dir_str);
  json m = read_manifest(dir, "seq2seq");
  model::Seq2SeqParams params = model::init_params(model_config_from_json(m.at("config")), 0);
  for (const auto& site : m.at("lhn_sites")) params = model::attach_lhn(params, model::parse_lhn_site(site.get<std::string>())).first;
  fill_tensors(dir, m, params, [](model::Seq2SeqParams& p, const auto& fn) {
    p.for_each([&](const std::string& name, Tensor& t, model::Group) { fn(name, t); });
  });
  if (meta) *meta = m.value("meta", json::object());
  return params;
}

void save_lm_checkpoint(const std::string& dir_str, const lm::LmParams& params, const json& meta) {
  const fs::path dir(dir_str);
  json m = {{"format", kFormat}, {"version", kVersion}, {"kind", "lm"}, {"config", lm_config_json(params.config)},
            {"meta", meta}, {"lhn_sites", json::array()}};
  m["tensors"] = json::array();
  fs::create_directories(dir / "tensors");
  params.for_each([&](const std::string& name, const Tensor& t) {
    m["tensors"].push_back({{"name", name}, {"group", "lm"}, {"shape", t.shape()}, {"file", tensor_file(name)}});
    ad::save_tensor((dir / tensor_file(name)).string(), t);
  });
  write_manifest(dir, m);
}

lm::LmParams load_lm_checkpoint(const std::string& dir_str, json* meta) {
  const fs::path dir(dir_str);
  json m = read_manifest(dir, "lm");
  lm::LmParams params = lm::init_lm(lm_config_from_json(m.at("config")), 0);
  fill_tensors(dir, m, params, [](lm::LmParams& p, const auto& fn) { p.for_each(fn); });
  if (meta) *meta = m.value("meta", json::object());
  return params;
}

bool checkpoint_exists(const std::string& dir) { return fs::exists(fs::path(dir) / "manifest.json"); }

}  // namespace adaptlab::harness
