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

#include "adaptlab/model/seq2seq.hpp"

#include <algorithm>
#include <string>

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab::model {
namespace {

constexpr double kMaskedScore = -1e30;

ad::DropoutSource* train_only(Mode mode, ad::DropoutSource* dropout) {
  return mode == Mode::kTrain ? dropout : nullptr;
}

// Zeroes rows past each sequence's length; returns `x` when nothing is padded.
Tensor mask_padding(const Tensor& x, std::size_t frames, const std::vector<std::size_t>& lengths) {
  bool padded = false;
  for (std::size_t len : lengths) padded = padded || len < frames;
  if (!padded) return x;
  std::vector<double> keep(lengths.size() * frames, 0.0);
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t t = 0; t < lengths[b]; ++t) keep[b * frames + t] = 1.0;
  return ad::scale_rows(x, keep);
}

// One bidirectional layer over [B*T x in]; returns [B*T x 2H].
Tensor blstm_layer(const std::array<LstmWeights, 2>& w, const Tensor& x, std::size_t batch, std::size_t frames,
                   const std::vector<std::size_t>& lengths) {
  std::array<Tensor, 2> outs;
  for (int dir = 0; dir < 2; ++dir) {
    const LstmWeights& lw = w[dir];
    const std::size_t units = lw.units();
    Tensor projected = ad::add_bias(ad::matmul(x, lw.input), lw.bias);
    Tensor h(ad::Shape{batch, units}), c(ad::Shape{batch, units});
    std::vector<Tensor> steps(frames);
    for (std::size_t k = 0; k < frames; ++k) {
      const std::size_t t = dir == 0 ? k : frames - 1 - k;
      Tensor gates = ad::add(ad::time_step(projected, batch, t), ad::matmul(h, lw.recurrent));
      auto [h_new, c_new] = ad::lstm_cell(gates, c);
      if (dir == 1) {
        // The backward pass must start from a zero state at each sequence's
        // own last frame, so padded steps leave the state untouched.
        std::vector<char> valid(batch);
        bool all = true;
        for (std::size_t b = 0; b < batch; ++b) {
          valid[b] = t < lengths[b];
          all = all && valid[b];
        }
        if (!all) {
          h_new = ad::select_rows(valid, h_new, h);
          c_new = ad::select_rows(valid, c_new, c);
        }
      }
      h = h_new;
      c = c_new;
      steps[t] = h;
    }
    outs[dir] = ad::interleave_time(steps);
  }
  return mask_padding(ad::concat({outs[0], outs[1]}, 1), frames, lengths);
}

void check_tokens(const Seq2SeqParams& params, std::span<const int> tokens) {
  for (int y : tokens) {
    if (y < 0 || static_cast<std::size_t>(y) >= params.config.vocab_size) {
      throw TokenError("token " + std::to_string(y) + " outside vocabulary of " +
                       std::to_string(params.config.vocab_size));
    }
  }
}

}  // namespace

std::size_t reduced_length(std::size_t frames, std::size_t stages) {
  const std::size_t factor = std::size_t{1} << stages;
  return (frames + factor - 1) / factor;
}

EncoderStates encode(const Seq2SeqParams& params, std::span<const FeatureSequence* const> batch, Mode mode,
                     ad::DropoutSource* dropout) {
  const ModelConfig& cfg = params.config;
  if (batch.empty()) throw ContractError("encode: empty batch");
  dropout = train_only(mode, dropout);
  const std::size_t factor = cfg.decimation();
  std::size_t longest = 0;
  std::vector<std::size_t> lengths;
  for (const FeatureSequence* x : batch) {
    if (x->frames.rank() != 2 || x->frames.dim(1) != cfg.feat_dim) {
      throw DimensionError("encode: features " + ad::shape_string(x->frames.shape()) + " but model expects width " +
                           std::to_string(cfg.feat_dim));
    }
    if (x->length() < factor) {
      throw InputLengthError("encode: " + std::to_string(x->length()) + " frames, need at least " +
                             std::to_string(factor) + " for " + std::to_string(cfg.pyramid_stages) +
                             " decimation stages");
    }
    longest = std::max(longest, x->length());
    lengths.push_back(x->length());
  }
  std::size_t frames = (longest + factor - 1) / factor * factor;
  const std::size_t n = batch.size();

  Tensor x;
  if (n == 1 && frames == batch[0]->length()) {
    x = batch[0]->frames;
  } else {
    x = Tensor(ad::Shape{n * frames, cfg.feat_dim});
    for (std::size_t b = 0; b < n; ++b) {
      const Tensor& f = batch[b]->frames;
      std::copy(f.values().begin(), f.values().end(), x.mutable_data() + b * frames * cfg.feat_dim);
    }
  }

  if (const auto& lhn = params.lhn_at(LhnSite::kFeatures)) x = mask_padding(lhn->apply(x), frames, lengths);

  for (const ConvWeights& conv : params.conv) {
    x = ad::relu(ad::add_bias(ad::matmul(ad::unfold_time(x, n, cfg.conv_width), conv.weight), conv.bias));
    x = ad::apply_dropout(mask_padding(x, frames, lengths), dropout);
  }

  std::size_t layer = 0;
  for (std::size_t s = 0; s < cfg.pyramid_stages; ++s) {
    // Concatenate adjacent frame pairs: [B*T x d] -> [B*T/2 x 2d].
    x = ad::reshape(x, {n * frames / 2, 2 * x.dim(1)});
    frames /= 2;
    for (auto& len : lengths) len = (len + 1) / 2;
    for (std::size_t l = 0; l < cfg.layers_per_stage; ++l, ++layer) {
      x = ad::apply_dropout(blstm_layer(params.encoder[layer], x, n, frames, lengths), dropout);
    }
  }
  return EncoderStates{x, n, frames, lengths};
}

EncoderStates encode(const Seq2SeqParams& params, const FeatureSequence& x, Mode mode, ad::DropoutSource* dropout) {
  const FeatureSequence* one[] = {&x};
  return encode(params, std::span<const FeatureSequence* const>(one), mode, dropout);
}

AttentionMemory prepare_attention(const Seq2SeqParams& params, const EncoderStates& enc) {
  AttentionMemory mem;
  mem.batch = enc.batch;
  mem.frames = enc.frames;
  mem.values = enc.states;
  if (const auto& lhn = params.lhn_at(LhnSite::kEncoderOutput)) {
    mem.values = mask_padding(lhn->apply(mem.values), enc.frames, enc.lengths);
  }
  mem.keys = ad::add_bias(ad::matmul(mem.values, params.att_key), params.att_bias);
  bool padded = false;
  for (std::size_t len : enc.lengths) padded = padded || len < enc.frames;
  if (padded) {
    mem.score_mask = Tensor(ad::Shape{enc.batch, enc.frames});
    for (std::size_t b = 0; b < enc.batch; ++b)
      for (std::size_t t = enc.lengths[b]; t < enc.frames; ++t) mem.score_mask.mutable_data()[b * enc.frames + t] = kMaskedScore;
  }
  return mem;
}

AttentionMemory repeat_memory(const AttentionMemory& memory, std::size_t copies) {
  if (memory.batch != 1) throw ContractError("repeat_memory: expects a single-utterance memory");
  if (copies == 1) return memory;
  std::vector<std::size_t> rows;
  rows.reserve(copies * memory.frames);
  for (std::size_t c = 0; c < copies; ++c)
    for (std::size_t t = 0; t < memory.frames; ++t) rows.push_back(t);
  AttentionMemory out;
  out.batch = copies;
  out.frames = memory.frames;
  out.values = ad::gather_rows(memory.values, rows);
  out.keys = ad::gather_rows(memory.keys, rows);
  return out;
}

DecoderStepState initial_decoder_state(const Seq2SeqParams& params, std::size_t batch) {
  const ModelConfig& cfg = params.config;
  DecoderStepState s;
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    s.h.emplace_back(ad::Shape{batch, cfg.decoder_units});
    s.c.emplace_back(ad::Shape{batch, cfg.decoder_units});
  }
  s.context = Tensor(ad::Shape{batch, cfg.encoder_dim()});
  return s;
}

DecoderStepState decode_step(const Seq2SeqParams& params, const DecoderStepState& prev, std::span<const int> y_prev,
                             const AttentionMemory& memory, Mode mode, ad::DropoutSource* dropout) {
  const std::size_t batch = prev.batch();
  if (y_prev.size() != batch) {
    throw ContractError("decode_step: " + std::to_string(y_prev.size()) + " previous tokens for batch " +
                        std::to_string(batch));
  }
  if (memory.batch != batch) throw ContractError("decode_step: attention memory batch differs from state batch");
  check_tokens(params, y_prev);
  dropout = train_only(mode, dropout);

  DecoderStepState next;
  Tensor input = ad::concat({ad::embedding(params.embedding, y_prev), prev.context}, 1);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    const LstmWeights& w = params.decoder[l];
    Tensor gates = ad::add(ad::add_bias(ad::matmul(input, w.input), w.bias), ad::matmul(prev.h[l], w.recurrent));
    auto [h, c] = ad::lstm_cell(gates, prev.c[l]);
    next.h.push_back(h);
    next.c.push_back(c);
    input = h;
  }
  const Tensor& s = next.h.back();

  Tensor query = ad::matmul(s, params.att_query);
  Tensor energy = ad::tanh(ad::add(memory.keys, ad::broadcast_rows(query, memory.frames)));
  Tensor scores = ad::reshape(ad::matmul(energy, params.att_score), {batch, memory.frames});
  if (memory.score_mask.defined()) scores = ad::add(scores, memory.score_mask);
  next.alpha = ad::softmax(scores);
  next.context = ad::attend(next.alpha, memory.values);

  Tensor s_prime = ad::tanh(ad::add_bias(ad::matmul(ad::concat({s, next.context}, 1), params.dense_weight),
                                         params.dense_bias));
  if (const auto& lhn = params.lhn_at(LhnSite::kDecoderOutput)) s_prime = lhn->apply(s_prime);
  next.s_prime = s_prime;
  next.logits = ad::add_bias(ad::matmul(ad::apply_dropout(s_prime, dropout), params.out_weight), params.out_bias);
  return next;
}

Tensor step_probabilities(const DecoderStepState& state) {
  const std::size_t v = state.logits.dim(1);
  Tensor p(state.logits.shape());
  for (std::size_t r = 0; r < state.logits.rows(); ++r) {
    ad::softmax_row(state.logits.data() + r * v, p.mutable_data() + r * v, v);
  }
  return p;
}

DecoderStepState gather_state(const DecoderStepState& state, std::span<const std::size_t> rows) {
  ad::NoGradScope no_grad;
  DecoderStepState out;
  for (const Tensor& h : state.h) out.h.push_back(ad::gather_rows(h, rows));
  for (const Tensor& c : state.c) out.c.push_back(ad::gather_rows(c, rows));
  out.context = ad::gather_rows(state.context, rows);
  if (state.s_prime.defined()) out.s_prime = ad::gather_rows(state.s_prime, rows);
  if (state.logits.defined()) out.logits = ad::gather_rows(state.logits, rows);
  if (state.alpha.defined()) out.alpha = ad::gather_rows(state.alpha, rows);
  return out;
}

TeacherForced forward_teacher_forced(const Seq2SeqParams& params, const FeatureSequence& x,
                                     std::span<const int> y_star, Mode mode, ad::DropoutSource* dropout) {
  if (y_star.empty()) throw ContractError("forward_teacher_forced: empty target sequence");
  if (y_star.back() != kEos) throw ContractError("forward_teacher_forced: target must end with EOS");
  check_tokens(params, y_star);
  EncoderStates enc = encode(params, x, mode, dropout);
  AttentionMemory mem = prepare_attention(params, enc);
  DecoderStepState state = initial_decoder_state(params, 1);
  std::vector<Tensor> logits, alphas;
  int prev = kBos;
  for (int y : y_star) {
    state = decode_step(params, state, std::span<const int>(&prev, 1), mem, mode, dropout);
    logits.push_back(state.logits);
    alphas.push_back(state.alpha.detach());
    prev = y;
  }
  TeacherForced out;
  out.logits = ad::concat(logits, 0);
  {
    ad::NoGradScope no_grad;
    out.attention = ad::concat(alphas, 0);
  }
  const std::size_t v = params.config.vocab_size;
  out.probs = Tensor(out.logits.shape());
  for (std::size_t i = 0; i < y_star.size(); ++i) {
    ad::softmax_row(out.logits.data() + i * v, out.probs.mutable_data() + i * v, v);
    const double* row = out.logits.data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    out.log_prob += row[y_star[i]] - mx - std::log(z);
  }
  return out;
}

std::size_t TeacherForcedBatch::valid_steps() const {
  std::size_t n = 0;
  for (double w : step_weights) n += w > 0.0;
  return n;
}

TeacherForcedBatch forward_teacher_forced(const Seq2SeqParams& params, std::span<const SequencePair> batch,
                                          Mode mode, ad::DropoutSource* dropout) {
  if (batch.empty()) throw ContractError("forward_teacher_forced: empty batch");
  std::vector<const FeatureSequence*> feats;
  std::size_t steps = 0;
  for (const SequencePair& p : batch) {
    if (p.tokens.empty()) throw ContractError("forward_teacher_forced: empty target sequence");
    check_tokens(params, p.tokens);
    feats.push_back(p.features);
    steps = std::max(steps, p.tokens.size());
  }
  const std::size_t n = batch.size();
  EncoderStates enc = encode(params, feats, mode, dropout);
  AttentionMemory mem = prepare_attention(params, enc);
  DecoderStepState state = initial_decoder_state(params, n);
  TeacherForcedBatch out;
  out.batch = n;
  out.steps = steps;
  std::vector<Tensor> logits;
  std::vector<int> prev(n, kBos);
  for (std::size_t i = 0; i < steps; ++i) {
    state = decode_step(params, state, prev, mem, mode, dropout);
    logits.push_back(state.logits);
    for (std::size_t b = 0; b < n; ++b) {
      const bool valid = i < batch[b].tokens.size();
      const int y = valid ? batch[b].tokens[i] : kEos;
      out.targets.push_back(y);
      out.step_weights.push_back(valid ? 1.0 : 0.0);
      prev[b] = y;
    }
  }
  out.logits = ad::concat(logits, 0);
  return out;
}

Tensor teacher_distributions(const Seq2SeqParams& si, std::span<const SequencePair> batch) {
  ad::NoGradScope no_grad;
  TeacherForcedBatch tf = forward_teacher_forced(si, batch, Mode::kEval);
  const std::size_t v = si.config.vocab_size;
  Tensor p(tf.logits.shape());
  for (std::size_t r = 0; r < tf.logits.rows(); ++r) ad::softmax_row(tf.logits.data() + r * v, p.mutable_data() + r * v, v);
  return p;
}

}  // namespace adaptlab::model
