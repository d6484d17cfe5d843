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

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "adaptlab/autodiff/tensor.hpp"

namespace adaptlab::model {

using ad::Tensor;

// Token ids shared by the seq2seq model, the LM and the tokenizer.
inline constexpr int kUnk = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;

struct ModelConfig {
  std::size_t feat_dim = 8;
  std::size_t conv_layers = 1;
  std::size_t conv_channels = 32;
  std::size_t conv_width = 3;
  // Each stage halves the frame rate (adjacent frames concatenated) and then
  // runs `layers_per_stage` bidirectional LSTM layers.
  std::size_t pyramid_stages = 2;
  std::size_t layers_per_stage = 1;
  std::size_t encoder_units = 32;  // per direction
  std::size_t decoder_layers = 1;
  std::size_t decoder_units = 64;
  std::size_t embedding_dim = 16;
  std::size_t attention_dim = 32;
  std::size_t dense_dim = 32;
  std::size_t vocab_size = 32;

  std::size_t encoder_dim() const { return 2 * encoder_units; }
  std::size_t decimation() const { return std::size_t{1} << pyramid_stages; }
  void validate() const;
};

enum class LhnSite { kFeatures = 0, kEncoderOutput = 1, kDecoderOutput = 2 };
inline constexpr std::array<LhnSite, 3> kAllLhnSites = {LhnSite::kFeatures, LhnSite::kEncoderOutput,
                                                        LhnSite::kDecoderOutput};
std::string_view to_string(LhnSite site);
LhnSite parse_lhn_site(std::string_view name);

// Speaker-specific square linear layer y = x U + b.
struct LhnLayer {
  LhnSite site = LhnSite::kDecoderOutput;
  Tensor weight;  // [d x d], identity when fresh
  Tensor bias;    // [d], zero when fresh

  static LhnLayer identity(LhnSite site, std::size_t dim);
  std::size_t dim() const { return bias.size(); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
  Tensor apply(const Tensor& x) const;
};

enum class Group { kEncoder, kDecoder, kLhn };
enum class Subset { kEncoder, kDecoder, kAll };
std::string_view to_string(Subset subset);
Subset parse_subset(std::string_view name);

struct LstmWeights {
  Tensor input;      // [in x 4H]
  Tensor recurrent;  // [H x 4H]
  Tensor bias;       // [4H]
  std::size_t units() const { return recurrent.dim(0); }
};

struct ConvWeights {
  Tensor weight;  // [width*in x channels]
  Tensor bias;    // [channels]
};

// Parameters of encoder e (conv front-end + pyramid bLSTM), attention,
// decoder LSTM f, dense combination and output layer g, plus optional LHN
// layers. Tensor members are handles: copying the struct aliases storage,
// clone() copies it.
struct Seq2SeqParams {
  ModelConfig config;
  std::vector<ConvWeights> conv;
  std::vector<std::array<LstmWeights, 2>> encoder;  // per layer: forward, backward
  Tensor embedding;                                 // [V x E]
  std::vector<LstmWeights> decoder;
  Tensor att_query;  // [H_dec x A]
  Tensor att_key;    // [D_enc x A]
  Tensor att_bias;   // [A]
  Tensor att_score;  // [A x 1]
  Tensor dense_weight;  // [(H_dec + D_enc) x S]
  Tensor dense_bias;    // [S]
  Tensor out_weight;    // [S x V]
  Tensor out_bias;      // [V]
  std::array<std::optional<LhnLayer>, 3> lhn;

  using Visitor = std::function<void(const std::string& name, Tensor& tensor, Group group)>;
  using ConstVisitor = std::function<void(const std::string& name, const Tensor& tensor, Group group)>;
  // Visits every tensor in a fixed order with a stable name.
  void for_each(const Visitor& fn);
  void for_each(const ConstVisitor& fn) const;

  Seq2SeqParams clone() const;
  const std::optional<LhnLayer>& lhn_at(LhnSite site) const { return lhn[static_cast<int>(site)]; }
  std::size_t parameter_count(std::optional<Group> group = std::nullopt) const;
};

// Randomly initialised SI parameters.
Seq2SeqParams init_params(const ModelConfig& config, std::uint64_t seed);

// Names of trainable tensors.
using TrainableMask = std::unordered_set<std::string>;

struct SubsetCounts {
  std::size_t encoder = 0;
  std::size_t decoder = 0;
  std::size_t all = 0;
};

// Selects the encoder (e), decoder (attention, f, g, embedding) or all
// non-LHN parameters.
TrainableMask parameter_subset(const Seq2SeqParams& params, Subset subset);
SubsetCounts subset_counts(const Seq2SeqParams& params);
// Parameter counts implied by a config alone (no allocation).
SubsetCounts subset_counts(const ModelConfig& config);
// Tensors selected by `mask`, in for_each order.
std::vector<Tensor> select(Seq2SeqParams& params, const TrainableMask& mask);

// Sets requires_grad on exactly the tensors named in `mask`.
void set_trainable(Seq2SeqParams& params, const TrainableMask& mask);

// Returns a copy of `params` with an identity LHN at `site`, requires_grad
// set only on that layer's (U, b), and the matching mask.
std::pair<Seq2SeqParams, TrainableMask> attach_lhn(const Seq2SeqParams& params, LhnSite site);

}  // namespace adaptlab::model
