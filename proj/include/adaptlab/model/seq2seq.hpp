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

#include <cstddef>
#include <span>
#include <vector>

#include "adaptlab/autodiff/dropout.hpp"
#include "adaptlab/model/params.hpp"

namespace adaptlab::model {

enum class Mode { kTrain, kEval };

// Frames x_1..x_T as a [T x d_feat] tensor.
struct FeatureSequence {
  Tensor frames;
  std::size_t length() const { return frames.rows(); }
};

// h_1..h_T' for a batch, in [B*T' x D] layout (row b*T' + j). Rows past a
// sequence's own length are zero.
struct EncoderStates {
  Tensor states;
  std::size_t batch = 1;
  std::size_t frames = 0;
  std::vector<std::size_t> lengths;
};

// T' = ceil(T / 2^stages).
std::size_t reduced_length(std::size_t frames, std::size_t stages);

// `dropout` is consulted only in kTrain mode.
EncoderStates encode(const Seq2SeqParams& params, std::span<const FeatureSequence* const> batch, Mode mode,
                     ad::DropoutSource* dropout = nullptr);
EncoderStates encode(const Seq2SeqParams& params, const FeatureSequence& x, Mode mode = Mode::kEval,
                     ad::DropoutSource* dropout = nullptr);

// Attention inputs derived once per encoder pass: values (after the
// encoder-output LHN, if any), additive-attention keys, and the score mask
// that hides padded frames.
struct AttentionMemory {
  Tensor values;
  Tensor keys;
  Tensor score_mask;  // [B x T'], undefined when nothing is padded
  std::size_t batch = 1;
  std::size_t frames = 0;
};

AttentionMemory prepare_attention(const Seq2SeqParams& params, const EncoderStates& enc);
// Tiles a single-utterance memory for `copies` parallel queries.
AttentionMemory repeat_memory(const AttentionMemory& memory, std::size_t copies);

struct DecoderStepState {
  std::vector<Tensor> h;  // s_i per decoder layer (top layer is s_i) [B x H]
  std::vector<Tensor> c;  // LSTM cells [B x H]
  Tensor context;         // c_i [B x D_enc]
  Tensor s_prime;         // [B x S]
  Tensor logits;          // pre-softmax g input [B x V]
  Tensor alpha;           // attention weights [B x T']
  std::size_t batch() const { return context.rows(); }
};

// s_0 = 0, c_0 = 0.
DecoderStepState initial_decoder_state(const Seq2SeqParams& params, std::size_t batch);

// One decoder step: s_i = f(s_{i-1}, Embedding(y_{i-1}), c_{i-1}),
// c_i = Attention(s_i, h), s'_i = Dense(s_i, c_i), logits of p_i = g(s'_i).
DecoderStepState decode_step(const Seq2SeqParams& params, const DecoderStepState& prev, std::span<const int> y_prev,
                             const AttentionMemory& memory, Mode mode, ad::DropoutSource* dropout = nullptr);

// Row-wise softmax of the step logits (no grad).
Tensor step_probabilities(const DecoderStepState& state);
// Selects batch rows of a state (beam reordering). Values only.
DecoderStepState gather_state(const DecoderStepState& state, std::span<const std::size_t> rows);

// Single utterance, teacher forced on y_star (which must end with EOS).
struct TeacherForced {
  Tensor logits;     // [U x V], differentiable when params require grad
  Tensor probs;      // [U x V]
  Tensor attention;  // [U x T'], row i = alpha at step i
  double log_prob = 0.0;  // log p(y*|x) = sum_i log p_i[y*_i]
};

TeacherForced forward_teacher_forced(const Seq2SeqParams& params, const FeatureSequence& x,
                                     std::span<const int> y_star, Mode mode = Mode::kEval,
                                     ad::DropoutSource* dropout = nullptr);

struct SequencePair {
  const FeatureSequence* features;
  std::span<const int> tokens;
};

// Batched teacher forcing. Rows are step-major (row i*B + b); padded steps
// carry target EOS and weight 0.
struct TeacherForcedBatch {
  Tensor logits;
  std::vector<int> targets;
  std::vector<double> step_weights;
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t valid_steps() const;
};

TeacherForcedBatch forward_teacher_forced(const Seq2SeqParams& params, std::span<const SequencePair> batch,
                                          Mode mode, ad::DropoutSource* dropout = nullptr);

// Teacher distributions p^SI for a batch: eval mode, no tape, softmax rows
// computed with the same routine the losses use.
Tensor teacher_distributions(const Seq2SeqParams& si, std::span<const SequencePair> batch);

}  // namespace adaptlab::model
