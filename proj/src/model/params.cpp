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

#include "adaptlab/model/params.hpp"

#include <cmath>
#include <random>

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::model {
namespace {

Tensor uniform(ad::Shape shape, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = u(rng);
  t.set_requires_grad(true);
  return t;
}

Tensor zeros(ad::Shape shape) {
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

LstmWeights make_lstm(std::size_t in, std::size_t units, std::mt19937_64& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(units));
  LstmWeights w{uniform({in, 4 * units}, limit, rng), uniform({units, 4 * units}, limit, rng), zeros({4 * units})};
  // Forget-gate bias of 1 keeps early gradients flowing through the cell.
  for (std::size_t u = 0; u < units; ++u) w.bias.mutable_data()[units + u] = 1.0;
  return w;
}

std::size_t lstm_count(std::size_t in, std::size_t units) { return 4 * units * (in + units) + 4 * units; }

// Input width of every encoder layer in order.
std::vector<std::size_t> encoder_inputs(const ModelConfig& c) {
  std::vector<std::size_t> dims;
  std::size_t prev = c.conv_layers > 0 ? c.conv_channels : c.feat_dim;
  for (std::size_t s = 0; s < c.pyramid_stages; ++s) {
    for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
      dims.push_back(l == 0 ? 2 * prev : c.encoder_dim());
    }
    prev = c.encoder_dim();
  }
  return dims;
}

const char* site_key(LhnSite site) {
  switch (site) {
    case LhnSite::kFeatures: return "features";
    case LhnSite::kEncoderOutput: return "encoder_output";
    case LhnSite::kDecoderOutput: return "decoder_output";
  }
  return "?";
}

std::size_t site_dim(const ModelConfig& c, LhnSite site) {
  switch (site) {
    case LhnSite::kFeatures: return c.feat_dim;
    case LhnSite::kEncoderOutput: return c.encoder_dim();
    case LhnSite::kDecoderOutput: return c.dense_dim;
  }
  return 0;
}

}  // namespace

void ModelConfig::validate() const {
  if (feat_dim == 0 || encoder_units == 0 || decoder_units == 0 || embedding_dim == 0 || attention_dim == 0 ||
      dense_dim == 0 || decoder_layers == 0 || layers_per_stage == 0 || (conv_layers > 0 && conv_channels == 0)) {
    throw ConfigError("model config: every layer size must be positive");
  }
  if (conv_width % 2 == 0) throw ConfigError("model config: conv_width must be odd");
  if (vocab_size < 3) throw ConfigError("model config: vocabulary must hold the three special tokens");
  if (pyramid_stages > 6) throw ConfigError("model config: at most 6 pyramid stages");
}

std::string_view to_string(LhnSite site) { return site_key(site); }

LhnSite parse_lhn_site(std::string_view name) {
  if (name == "features" || name == "x") return LhnSite::kFeatures;
  if (name == "encoder_output" || name == "encoder" || name == "h") return LhnSite::kEncoderOutput;
  if (name == "decoder_output" || name == "decoder" || name == "s'") return LhnSite::kDecoderOutput;
  throw ConfigError("unknown LHN site '" + std::string(name) + "'");
}

std::string_view to_string(Subset subset) {
  switch (subset) {
    case Subset::kEncoder: return "encoder";
    case Subset::kDecoder: return "decoder";
    case Subset::kAll: return "all";
  }
  return "?";
}

Subset parse_subset(std::string_view name) {
  if (name == "encoder") return Subset::kEncoder;
  if (name == "decoder") return Subset::kDecoder;
  if (name == "all") return Subset::kAll;
  throw ConfigError("unknown parameter subset '" + std::string(name) + "'");
}

LhnLayer LhnLayer::identity(LhnSite site, std::size_t dim) {
  LhnLayer layer{site, Tensor::identity(dim), Tensor(ad::Shape{dim})};
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  return layer;
}

Tensor LhnLayer::apply(const Tensor& x) const { return ad::add_bias(ad::matmul(x, weight), bias); }

void Seq2SeqParams::for_each(const Visitor& fn) {
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::string p = "conv." + std::to_string(i) + ".";
    fn(p + "weight", conv[i].weight, Group::kEncoder);
    fn(p + "bias", conv[i].bias, Group::kEncoder);
  }
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    for (int dir = 0; dir < 2; ++dir) {
      const std::string p = "encoder." + std::to_string(i) + (dir == 0 ? ".fwd." : ".bwd.");
      fn(p + "input", encoder[i][dir].input, Group::kEncoder);
      fn(p + "recurrent", encoder[i][dir].recurrent, Group::kEncoder);
      fn(p + "bias", encoder[i][dir].bias, Group::kEncoder);
    }
  }
  fn("embedding", embedding, Group::kDecoder);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    const std::string p = "decoder." + std::to_string(i) + ".";
    fn(p + "input", decoder[i].input, Group::kDecoder);
    fn(p + "recurrent", decoder[i].recurrent, Group::kDecoder);
    fn(p + "bias", decoder[i].bias, Group::kDecoder);
  }
  fn("attention.query", att_query, Group::kDecoder);
  fn("attention.key", att_key, Group::kDecoder);
  fn("attention.bias", att_bias, Group::kDecoder);
  fn("attention.score", att_score, Group::kDecoder);
  fn("dense.weight", dense_weight, Group::kDecoder);
  fn("dense.bias", dense_bias, Group::kDecoder);
  fn("output.weight", out_weight, Group::kDecoder);
  fn("output.bias", out_bias, Group::kDecoder);
  for (auto& layer : lhn) {
    if (!layer) continue;
    const std::string p = std::string("lhn.") + site_key(layer->site) + ".";
    fn(p + "weight", layer->weight, Group::kLhn);
    fn(p + "bias", layer->bias, Group::kLhn);
  }
}

void Seq2SeqParams::for_each(const ConstVisitor& fn) const {
  const_cast<Seq2SeqParams*>(this)->for_each(
      Visitor([&](const std::string& name, Tensor& t, Group g) { fn(name, t, g); }));
}

Seq2SeqParams Seq2SeqParams::clone() const {
  Seq2SeqParams out = *this;
  out.for_each(Visitor([](const std::string&, Tensor& t, Group) { t = t.clone(); }));
  return out;
}

std::size_t Seq2SeqParams::parameter_count(std::optional<Group> group) const {
  std::size_t n = 0;
  for_each(ConstVisitor([&](const std::string&, const Tensor& t, Group g) {
    if (!group || *group == g) n += t.size();
  }));
  return n;
}

Seq2SeqParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Seq2SeqParams p;
  p.config = config;
  std::size_t in = config.feat_dim;
  for (std::size_t i = 0; i < config.conv_layers; ++i) {
    const std::size_t fan_in = config.conv_width * in;
    p.conv.push_back({uniform({fan_in, config.conv_channels}, std::sqrt(6.0 / static_cast<double>(fan_in)), rng),
                      zeros({config.conv_channels})});
    in = config.conv_channels;
  }
  for (std::size_t dim : encoder_inputs(config)) {
    p.encoder.push_back({make_lstm(dim, config.encoder_units, rng), make_lstm(dim, config.encoder_units, rng)});
  }
  const std::size_t enc = config.encoder_dim();
  p.embedding = uniform({config.vocab_size, config.embedding_dim}, 1.0, rng);
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    const std::size_t dim = i == 0 ? config.embedding_dim + enc : config.decoder_units;
    p.decoder.push_back(make_lstm(dim, config.decoder_units, rng));
  }
  const double lq = 1.0 / std::sqrt(static_cast<double>(config.decoder_units));
  const double lk = 1.0 / std::sqrt(static_cast<double>(enc));
  const double la = 1.0 / std::sqrt(static_cast<double>(config.attention_dim));
  p.att_query = uniform({config.decoder_units, config.attention_dim}, lq, rng);
  p.att_key = uniform({enc, config.attention_dim}, lk, rng);
  p.att_bias = zeros({config.attention_dim});
  p.att_score = uniform({config.attention_dim, 1}, la, rng);
  const std::size_t dense_in = config.decoder_units + enc;
  p.dense_weight = uniform({dense_in, config.dense_dim}, std::sqrt(6.0 / static_cast<double>(dense_in)), rng);
  p.dense_bias = zeros({config.dense_dim});
  p.out_weight = uniform({config.dense_dim, config.vocab_size}, 1.0 / std::sqrt(static_cast<double>(config.dense_dim)),
                         rng);
  p.out_bias = zeros({config.vocab_size});
  return p;
}

TrainableMask parameter_subset(const Seq2SeqParams& params, Subset subset) {
  TrainableMask mask;
  params.for_each(Seq2SeqParams::ConstVisitor([&](const std::string& name, const Tensor&, Group g) {
    const bool take = (g == Group::kEncoder && subset != Subset::kDecoder) ||
                      (g == Group::kDecoder && subset != Subset::kEncoder);
    if (take) mask.insert(name);
  }));
  return mask;
}

SubsetCounts subset_counts(const Seq2SeqParams& params) {
  SubsetCounts c;
  c.encoder = params.parameter_count(Group::kEncoder);
  c.decoder = params.parameter_count(Group::kDecoder);
  c.all = c.encoder + c.decoder;
  return c;
}

SubsetCounts subset_counts(const ModelConfig& config) {
  SubsetCounts c;
  std::size_t in = config.feat_dim;
  for (std::size_t i = 0; i < config.conv_layers; ++i) {
    c.encoder += config.conv_width * in * config.conv_channels + config.conv_channels;
    in = config.conv_channels;
  }
  for (std::size_t dim : encoder_inputs(config)) c.encoder += 2 * lstm_count(dim, config.encoder_units);
  const std::size_t enc = config.encoder_dim();
  c.decoder += config.vocab_size * config.embedding_dim;
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    c.decoder += lstm_count(i == 0 ? config.embedding_dim + enc : config.decoder_units, config.decoder_units);
  }
  c.decoder += config.decoder_units * config.attention_dim + enc * config.attention_dim + 2 * config.attention_dim;
  c.decoder += (config.decoder_units + enc) * config.dense_dim + config.dense_dim;
  c.decoder += config.dense_dim * config.vocab_size + config.vocab_size;
  c.all = c.encoder + c.decoder;
  return c;
}

std::vector<Tensor> select(Seq2SeqParams& params, const TrainableMask& mask) {
  std::vector<Tensor> out;
  params.for_each(Seq2SeqParams::Visitor([&](const std::string& name, Tensor& t, Group) {
    if (mask.contains(name)) out.push_back(t);
  }));
  return out;
}

void set_trainable(Seq2SeqParams& params, const TrainableMask& mask) {
  params.for_each(Seq2SeqParams::Visitor(
      [&](const std::string& name, Tensor& t, Group) { t.set_requires_grad(mask.contains(name)); }));
}

std::pair<Seq2SeqParams, TrainableMask> attach_lhn(const Seq2SeqParams& source, LhnSite site) {
  Seq2SeqParams params = source.clone();
  auto& slot = params.lhn[static_cast<int>(site)];
  if (slot) throw ConfigError(std::string("attach_lhn: an LHN is already attached at ") + site_key(site));
  slot = LhnLayer::identity(site, site_dim(params.config, site));
  const std::string p = std::string("lhn.") + site_key(site) + ".";
  TrainableMask mask{p + "weight", p + "bias"};
  set_trainable(params, mask);
  return {std::move(params), std::move(mask)};
}

}  // namespace adaptlab::model
