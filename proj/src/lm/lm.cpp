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

#include "adaptlab/lm/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/autodiff/optimizer.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/util/seed.hpp"

namespace adaptlab::lm {

using ad::Shape;

namespace {

Tensor uniform_param(Shape shape, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = u(rng);
  t.set_requires_grad(true);
  return t;
}

void check_tokens(const LmParams& p, std::span<const int> ids) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.config.vocab_size)
      throw TokenError("lm: token " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(p.config.vocab_size));
  }
}

// Teacher-forced inputs/targets for a padded step-major batch.
struct Layout {
  std::size_t batch = 0, steps = 0;
  std::vector<std::vector<int>> inputs;  // per step [B]
  std::vector<int> targets;
  std::vector<double> weights;
};

Layout layout(std::span<const std::vector<int>> seqs) {
  Layout l;
  l.batch = seqs.size();
  for (const auto& s : seqs) {
    if (s.empty()) throw ContractError("lm: empty sequence");
    l.steps = std::max(l.steps, s.size());
  }
  l.inputs.assign(l.steps, std::vector<int>(l.batch, model::kEos));
  l.targets.assign(l.steps * l.batch, model::kEos);
  l.weights.assign(l.steps * l.batch, 0.0);
  for (std::size_t b = 0; b < l.batch; ++b) {
    const auto& s = seqs[b];
    for (std::size_t i = 0; i < s.size(); ++i) {
      l.inputs[i][b] = i == 0 ? model::kBos : s[i - 1];
      l.targets[i * l.batch + b] = s[i];
      l.weights[i * l.batch + b] = 1.0;
    }
  }
  return l;
}

}  // namespace

void LmConfig::validate() const {
  if (vocab_size < 3 || embedding_dim == 0 || units == 0 || layers == 0)
    throw ConfigError("lm config: sizes must be positive and the vocabulary must hold the specials");
}

void LmParams::for_each(const Visitor& fn) {
  fn("embedding", embedding);
  for (std::size_t l = 0; l < lstm.size(); ++l) {
    const std::string p = "lstm." + std::to_string(l) + ".";
    fn(p + "input", lstm[l].input);
    fn(p + "recurrent", lstm[l].recurrent);
    fn(p + "bias", lstm[l].bias);
  }
  fn("output.weight", out_weight);
  fn("output.bias", out_bias);
}

void LmParams::for_each(const ConstVisitor& fn) const {
  const_cast<LmParams*>(this)->for_each([&](const std::string& n, Tensor& t) { fn(n, t); });
}

std::vector<Tensor> LmParams::tensors() {
  std::vector<Tensor> out;
  for_each([&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

LmParams LmParams::clone() const {
  LmParams c = *this;
  c.for_each([](const std::string&, Tensor& t) { t = t.clone(); });
  return c;
}

std::size_t LmParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

LmParams init_lm(const LmConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  LmParams p;
  p.config = config;
  p.embedding = uniform_param({config.vocab_size, config.embedding_dim}, 0.1, rng);
  std::size_t in = config.embedding_dim;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(config.units));
    model::LstmWeights w{uniform_param({in, 4 * config.units}, limit, rng),
                         uniform_param({config.units, 4 * config.units}, limit, rng),
                         Tensor(Shape{4 * config.units})};
    w.bias.set_requires_grad(true);
    for (std::size_t u = 0; u < config.units; ++u) w.bias.mutable_data()[config.units + u] = 1.0;
    p.lstm.push_back(std::move(w));
    in = config.units;
  }
  p.out_weight = uniform_param({config.units, config.vocab_size}, 0.01, rng);
  p.out_bias = Tensor(Shape{config.vocab_size}, -std::log(static_cast<double>(config.vocab_size)));
  p.out_bias.set_requires_grad(true);
  return p;
}

LmState lm_initial_state(const LmParams& params, std::size_t batch) {
  LmState s;
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    s.h.emplace_back(Shape{batch, params.config.units});
    s.c.emplace_back(Shape{batch, params.config.units});
  }
  return s;
}

Tensor lm_step(const LmParams& params, LmState& state, std::span<const int> prev, ad::DropoutSource* dropout) {
  check_tokens(params, prev);
  if (prev.size() != state.batch())
    throw DimensionError("lm_step: " + std::to_string(prev.size()) + " tokens for batch of " +
                         std::to_string(state.batch()));
  Tensor x = ad::apply_dropout(ad::embedding(params.embedding, prev), dropout);
  for (std::size_t l = 0; l < params.lstm.size(); ++l) {
    const auto& w = params.lstm[l];
    Tensor gates = ad::add_bias(ad::add(ad::matmul(x, w.input), ad::matmul(state.h[l], w.recurrent)), w.bias);
    auto [h, c] = ad::lstm_cell(gates, state.c[l]);
    state.h[l] = h;
    state.c[l] = c;
    x = h;
  }
  x = ad::apply_dropout(x, dropout);
  return ad::add_bias(ad::matmul(x, params.out_weight), params.out_bias);
}

Tensor lm_scores(const Tensor& logits, LmScoring mode) {
  return mode == LmScoring::kExact ? ad::log_softmax(logits) : logits;
}

LmState gather_lm_state(const LmState& state, std::span<const std::size_t> rows) {
  ad::NoGradScope no_grad;
  LmState out;
  for (std::size_t l = 0; l < state.h.size(); ++l) {
    out.h.push_back(ad::gather_rows(state.h[l], rows).detach());
    out.c.push_back(ad::gather_rows(state.c[l], rows).detach());
  }
  return out;
}

LmBatch lm_forward(const LmParams& params, std::span<const std::vector<int>> sequences,
                   ad::DropoutSource* dropout) {
  Layout l = layout(sequences);
  for (const auto& s : sequences) check_tokens(params, s);
  LmState state = lm_initial_state(params, l.batch);
  std::vector<Tensor> steps;
  for (std::size_t i = 0; i < l.steps; ++i) steps.push_back(lm_step(params, state, l.inputs[i], dropout));
  return {ad::concat(steps, 0), std::move(l.targets), std::move(l.weights)};
}

LmScores lm_logprob(const LmParams& params, std::span<const int> y, LmScoring mode) {
  if (y.empty()) throw ContractError("lm_logprob: empty sequence");
  ad::NoGradScope no_grad;
  std::vector<int> seq(y.begin(), y.end());
  LmBatch b = lm_forward(params, std::span<const std::vector<int>>(&seq, 1));
  Tensor s = lm_scores(b.logits, mode);
  LmScores out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.per_token.push_back(s.at(i, static_cast<std::size_t>(y[i])));
    out.total += out.per_token.back();
  }
  return out;
}

std::vector<double> log_partitions(const LmParams& params, std::span<const std::vector<int>> sequences) {
  ad::NoGradScope no_grad;
  std::vector<double> out;
  const std::size_t v = params.config.vocab_size;
  for (std::size_t start = 0; start < sequences.size(); start += 64) {
    auto chunk = sequences.subspan(start, std::min<std::size_t>(64, sequences.size() - start));
    LmBatch b = lm_forward(params, chunk);
    for (std::size_t r = 0; r < b.weights.size(); ++r) {
      if (b.weights[r] == 0.0) continue;
      const double* x = b.logits.data() + r * v;
      const double mx = *std::max_element(x, x + v);
      double z = 0.0;
      for (std::size_t c = 0; c < v; ++c) z += std::exp(x[c] - mx);
      out.push_back(mx + std::log(z));
    }
  }
  return out;
}

double mean_abs_log_partition(const LmParams& params, std::span<const std::vector<int>> sequences) {
  std::vector<double> z = log_partitions(params, sequences);
  if (z.empty()) throw ContractError("mean_abs_log_partition: no contexts");
  double s = 0.0;
  for (double v : z) s += std::abs(v);
  return s / static_cast<double>(z.size());
}

double perplexity(const LmParams& params, std::span<const std::vector<int>> sequences, LmScoring mode) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : sequences) {
    total += lm_logprob(params, s, mode).total;
    count += s.size();
  }
  if (count == 0) throw ContractError("perplexity: empty corpus");
  return std::exp(-total / static_cast<double>(count));
}

std::vector<double> unigram_noise(std::span<const std::vector<int>> corpus, std::size_t vocab) {
  std::vector<double> q(vocab, 1.0);
  double total = static_cast<double>(vocab);
  for (const auto& s : corpus) {
    for (int t : s) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab) throw TokenError("unigram_noise: token outside vocabulary");
      q[static_cast<std::size_t>(t)] += 1.0;
      total += 1.0;
    }
  }
  for (double& v : q) v /= total;
  return q;
}

void NceConfig::validate(std::size_t vocab) const {
  if (k == 0) throw ConfigError("nce: k must be at least 1");
  if (!noise.empty()) {
    if (noise.size() != vocab) throw ConfigError("nce: noise distribution does not match the vocabulary");
    for (double q : noise)
      if (!(q > 0.0)) throw ConfigError("nce: noise probabilities must be strictly positive");
  }
  if (!(learning_rate > 0.0) || batch_size == 0) throw ConfigError("nce: bad learning rate or batch size");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("nce: dropout must lie in [0,1)");
}

std::vector<int> draw_noise(std::size_t rows, std::size_t k, std::span<const double> noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> d(noise.begin(), noise.end());
  std::vector<int> out(rows * k);
  for (int& v : out) v = d(rng);
  return out;
}

Tensor nce_loss(const Tensor& logits, std::span<const int> targets, std::span<const int> noise_samples,
                std::size_t k, std::span<const double> noise_probs, std::span<const double> weights) {
  const std::size_t rows = logits.rows();
  if (targets.size() != rows || weights.size() != rows || noise_samples.size() != rows * k) {
    throw ContractError("nce_loss: targets, weights and noise samples must match " + std::to_string(rows) +
                        " rows");
  }
  if (noise_probs.size() != logits.cols()) throw ContractError("nce_loss: noise distribution size mismatch");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ContractError("nce_loss: weights sum to zero");
  const double log_k = std::log(static_cast<double>(k));

  Tensor data_shift(Shape{rows});
  std::vector<double> wd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    data_shift.mutable_data()[r] = -(log_k + std::log(noise_probs[static_cast<std::size_t>(targets[r])]));
    wd[r] = weights[r] / total;
  }
  Tensor u_data = ad::add(ad::pick(logits, targets), data_shift);

  std::vector<std::size_t> rep(rows * k);
  Tensor noise_shift(Shape{rows * k});
  std::vector<double> wn(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = r * k + j;
      rep[i] = r;
      // Sign flipped so that log_sigmoid gives log s(-u).
      noise_shift.mutable_data()[i] = log_k + std::log(noise_probs[static_cast<std::size_t>(noise_samples[i])]);
      wn[i] = wd[r];
    }
  }
  Tensor neg_u_noise = ad::add(ad::scale(ad::pick(ad::gather_rows(logits, rep), noise_samples), -1.0), noise_shift);
  Tensor ll = ad::add(ad::weighted_sum(ad::log_sigmoid(u_data), wd), ad::weighted_sum(ad::log_sigmoid(neg_u_noise), wn));
  return ad::scale(ll, -1.0);
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch)
    out.emplace_back(order.begin() + static_cast<long>(s), order.begin() + static_cast<long>(std::min(n, s + batch)));
  return out;
}

std::vector<std::vector<int>> take(std::span<const std::vector<int>> corpus, const std::vector<std::size_t>& idx) {
  std::vector<std::vector<int>> out;
  for (std::size_t i : idx) out.push_back(corpus[i]);
  return out;
}

void check_finite(double v, const char* where) {
  if (!std::isfinite(v)) throw DivergenceError(std::string(where) + ": loss is not finite");
}

}  // namespace

LmParams train_nce(const LmParams& init, std::span<const std::vector<int>> corpus, const NceConfig& cfg_in,
                   std::vector<LmEpochLog>* log) {
  if (corpus.empty()) throw DataError("train_nce: empty corpus");
  NceConfig cfg = cfg_in;
  if (cfg.noise.empty()) cfg.noise = unigram_noise(corpus, init.config.vocab_size);
  cfg.validate(init.config.vocab_size);
  LmParams p = init.clone();
  for (Tensor& t : p.tensors()) t.set_requires_grad(true);
  ad::Adam opt(p.tensors(), {.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay, .clip_norm = 5.0});
  std::mt19937_64 rng(derive_seed(cfg.seed, {1}));
  ad::DropoutSource drop(cfg.dropout, derive_seed(cfg.seed, {2}));
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& idx : epoch_batches(corpus.size(), cfg.batch_size, rng)) {
      auto batch = take(corpus, idx);
      ad::Tape tape;
      double value = 0.0;
      {
        ad::TapeScope scope(tape);
        LmBatch b = lm_forward(p, batch, &drop);
        auto noise = draw_noise(b.targets.size(), cfg.k, cfg.noise, derive_seed(cfg.seed, {3, step++}));
        Tensor loss = nce_loss(b.logits, b.targets, noise, cfg.k, cfg.noise, b.weights);
        value = loss.item();
        check_finite(value, "train_nce");
        tape.backward(loss);
      }
      tape.accumulate_into_leaves();
      opt.step();
      sum += value;
      ++n;
    }
    if (log) log->push_back({epoch, sum / static_cast<double>(n)});
  }
  return p;
}

Tensor finetune_loss(const LmParams& params, const LmParams& base, std::span<const std::vector<int>> batch,
                     const FinetuneConfig& cfg, std::span<const int> noise_samples, ad::DropoutSource* dropout) {
  LmBatch b = lm_forward(params, batch, dropout);
  const double nce_w = cfg.use_kld ? 1.0 - cfg.beta_lm : 1.0;
  Tensor loss;
  if (nce_w > 0.0) {
    loss = ad::scale(nce_loss(b.logits, b.targets, noise_samples, cfg.nce.k, cfg.nce.noise, b.weights), nce_w);
  }
  if (cfg.use_kld && cfg.beta_lm > 0.0) {
    Tensor teacher;
    {
      ad::NoGradScope no_grad;
      Tensor base_logits = lm_forward(base, batch).logits;
      teacher = Tensor(base_logits.shape());
      const std::size_t v = base_logits.cols();
      for (std::size_t r = 0; r < base_logits.rows(); ++r)
        ad::softmax_row(base_logits.data() + r * v, teacher.mutable_data() + r * v, v);
    }
    const double total = std::accumulate(b.weights.begin(), b.weights.end(), 0.0);
    std::vector<double> w = b.weights;
    for (double& x : w) x /= total;
    Tensor kld = ad::scale(ad::soft_cross_entropy(b.logits, teacher, w), cfg.beta_lm);
    loss = loss.defined() ? ad::add(loss, kld) : kld;
  }
  return loss;
}

LmParams finetune_lm(const LmParams& base, std::span<const std::vector<int>> speaker_text,
                     const FinetuneConfig& cfg_in) {
  if (speaker_text.empty()) throw DataError("finetune_lm: empty speaker text");
  FinetuneConfig cfg = cfg_in;
  if (cfg.nce.noise.empty()) cfg.nce.noise = unigram_noise(speaker_text, base.config.vocab_size);
  cfg.nce.validate(base.config.vocab_size);
  if (!(cfg.beta_lm >= 0.0 && cfg.beta_lm <= 1.0)) throw ConfigError("finetune_lm: beta_lm must lie in [0,1]");
  LmParams p = base.clone();
  if (cfg.steps == 0) return p;
  for (Tensor& t : p.tensors()) t.set_requires_grad(true);
  ad::Adam opt(p.tensors(),
               {.learning_rate = cfg.nce.learning_rate, .weight_decay = cfg.nce.weight_decay, .clip_norm = 5.0});
  std::mt19937_64 rng(derive_seed(cfg.nce.seed, {11}));
  ad::DropoutSource drop(cfg.nce.dropout, derive_seed(cfg.nce.seed, {12}));
  std::size_t step = 0;
  while (step < cfg.steps) {
    for (const auto& idx : epoch_batches(speaker_text.size(), cfg.nce.batch_size, rng)) {
      if (step >= cfg.steps) break;
      auto batch = take(speaker_text, idx);
      std::size_t rows = 0;
      for (const auto& s : batch) rows = std::max(rows, s.size());
      rows *= batch.size();
      auto noise = draw_noise(rows, cfg.nce.k, cfg.nce.noise, derive_seed(cfg.nce.seed, {13, step}));
      ad::Tape tape;
      {
        ad::TapeScope scope(tape);
        Tensor loss = finetune_loss(p, base, batch, cfg, noise, &drop);
        check_finite(loss.item(), "finetune_lm");
        tape.backward(loss);
      }
      tape.accumulate_into_leaves();
      opt.step();
      ++step;
    }
  }
  return p;
}

double parameter_distance(const LmParams& a, const LmParams& b) {
  std::vector<Tensor> ta, tb;
  a.for_each([&](const std::string&, const Tensor& t) { ta.push_back(t); });
  b.for_each([&](const std::string&, const Tensor& t) { tb.push_back(t); });
  if (ta.size() != tb.size()) throw ContractError("parameter_distance: structure mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].shape() != tb[i].shape()) throw ContractError("parameter_distance: shape mismatch");
    for (std::size_t j = 0; j < ta[i].size(); ++j) s += (ta[i].at(j) - tb[i].at(j)) * (ta[i].at(j) - tb[i].at(j));
  }
  return std::sqrt(s);
}

}  // namespace adaptlab::lm
