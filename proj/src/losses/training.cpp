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

#include "adaptlab/losses/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/autodiff/optimizer.hpp"
#include "adaptlab/decode/beam.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/metrics/wer.hpp"
#include "adaptlab/util/seed.hpp"

namespace adaptlab::losses {

using ad::Shape;
using model::Mode;
using model::SequencePair;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw DivergenceError(where + ": loss became non-finite");
}

// Shuffled batches of similar length: shuffle, sort windows of 8 batches by
// frame count, cut, shuffle the batch order.
std::vector<std::vector<std::size_t>> length_batches(std::span<const Utterance* const> data, std::size_t batch,
                                                     std::mt19937_64& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t window = batch * 8;
  for (std::size_t s = 0; s < order.size(); s += window) {
    auto b = order.begin() + static_cast<long>(s);
    auto e = order.begin() + static_cast<long>(std::min(order.size(), s + window));
    std::stable_sort(b, e, [&](std::size_t x, std::size_t y) {
      return data[x]->features.length() < data[y]->features.length();
    });
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += batch)
    out.emplace_back(order.begin() + static_cast<long>(s),
                     order.begin() + static_cast<long>(std::min(order.size(), s + batch)));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<SequencePair> pairs_of(std::span<const Utterance* const> data, const std::vector<std::size_t>& idx) {
  std::vector<SequencePair> pairs;
  for (std::size_t i : idx) pairs.push_back({&data[i]->features, data[i]->tokens});
  return pairs;
}

std::vector<const Utterance*> pointers(std::span<const Utterance> data) {
  std::vector<const Utterance*> out;
  for (const auto& u : data) out.push_back(&u);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train: dropout must lie in [0,1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ConfigError("train: label_smoothing must lie in [0,1)");
}

double mean_ce(const Seq2SeqParams& params, std::span<const Utterance* const> data) {
  if (data.empty()) throw DataError("mean_ce: no utterances");
  ad::NoGradScope no_grad;
  double total = 0.0, steps = 0.0;
  for (std::size_t s = 0; s < data.size(); s += 32) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(data.size(), s + 32); ++i) idx.push_back(i);
    auto pairs = pairs_of(data, idx);
    auto tb = model::forward_teacher_forced(params, pairs, Mode::kEval);
    const double w = static_cast<double>(tb.valid_steps());
    total += ce_loss(tb.logits, tb.targets, 0.0, tb.step_weights).item() * w;
    steps += w;
  }
  return total / steps;
}

TrainResult train_si(const model::ModelConfig& config, std::span<const Utterance> train,
                     std::span<const Utterance> valid, const TrainConfig& cfg, const TrainCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw DataError("train_si: empty training set");
  if (valid.empty()) throw DataError("train_si: empty validation set");
  auto train_ptrs = pointers(train), valid_ptrs = pointers(valid);
  TrainResult result;
  Seq2SeqParams params = model::init_params(config, derive_seed(cfg.seed, {1}));
  const auto mask = model::parameter_subset(params, model::Subset::kAll);
  ad::Adam opt(model::select(params, mask), {.learning_rate = cfg.learning_rate, .clip_norm = cfg.clip_norm});
  ad::DropoutSource drop(cfg.dropout, derive_seed(cfg.seed, {2}));
  std::mt19937_64 rng(derive_seed(cfg.seed, {3}));
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = Clock::now();
    double sum = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : length_batches(train_ptrs, cfg.batch_size, rng)) {
      auto pairs = pairs_of(train_ptrs, idx);
      ad::Tape tape;
      {
        ad::TapeScope scope(tape);
        auto tb = model::forward_teacher_forced(params, pairs, Mode::kTrain, &drop);
        Tensor loss = ce_loss(tb.logits, tb.targets, cfg.label_smoothing, tb.step_weights);
        check_finite(loss.item(), "train_si epoch " + std::to_string(epoch));
        sum += loss.item();
        tape.backward(loss);
      }
      tape.accumulate_into_leaves();
      opt.step();
      ++batches;
    }
    TrainEpochLog log{epoch, sum / static_cast<double>(batches), mean_ce(params, valid_ptrs), elapsed_ms(start)};
    check_finite(log.valid_loss, "train_si validation");
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.valid_loss < best) {
      best = log.valid_loss;
      result.best_epoch = epoch;
      result.params = params.clone();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = epoch < cfg.epochs;
      break;
    }
  }
  result.params.for_each([](const std::string&, Tensor& t, model::Group) { t.set_requires_grad(false); });
  return result;
}

std::string to_string(AdaptMethod m) {
  switch (m) {
    case AdaptMethod::kKld: return "kld";
    case AdaptMethod::kLhn: return "lhn";
    case AdaptMethod::kMwerKld: return "mwer_kld";
  }
  return "?";
}

AdaptMethod parse_adapt_method(const std::string& name) {
  if (name == "kld") return AdaptMethod::kKld;
  if (name == "lhn") return AdaptMethod::kLhn;
  if (name == "mwer_kld" || name == "mwer+kld") return AdaptMethod::kMwerKld;
  throw ConfigError("unknown adaptation method '" + name + "'");
}

double word_errors(const std::string& reference, const std::string& hypothesis) {
  return static_cast<double>(
      metrics::edit_distance(corpus::split_words(reference), corpus::split_words(hypothesis)).errors());
}

NBestList make_nbest(const Seq2SeqParams& params, const model::FeatureSequence& x, const std::vector<int>& reference,
                     const std::string& reference_text, const corpus::WordPieceVocab& vocab, std::size_t beam) {
  decode::FusionConfig fc;
  fc.beam_width = beam;
  decode::BeamResult r = decode::beam_search(params, nullptr, x, fc);
  NBestList list;
  list.reference = reference;
  if (r.unfinished) return list;
  for (const auto& h : r.nbest) {
    list.hypotheses.push_back({h.hyp.tokens, h.hyp.s2s_logprob, word_errors(reference_text, vocab.decode(h.hyp.tokens))});
  }
  return list;
}

Tensor nbest_log_probs(const Seq2SeqParams& params, const model::FeatureSequence& x, const NBestList& nbest,
                       Mode mode, ad::DropoutSource* dropout) {
  std::vector<SequencePair> pairs;
  for (const auto& h : nbest.hypotheses) pairs.push_back({&x, h.tokens});
  auto tb = model::forward_teacher_forced(params, pairs, mode, dropout);
  Tensor picks = ad::pick(ad::log_softmax(tb.logits), tb.targets);
  const std::size_t n = pairs.size(), rows = picks.size();
  Tensor sel(Shape{n, rows});
  for (std::size_t r = 0; r < rows; ++r) sel.mutable_data()[(r % n) * rows + r] = tb.step_weights[r];
  return ad::reshape(ad::matmul(sel, ad::reshape(picks, {rows, 1})), {n});
}

AdaptResult adapt(const Seq2SeqParams& si, std::span<const Utterance* const> data, const AdaptationConfig& cfg,
                  const AdaptSpec& spec, const AdaptOptions& opts) {
  cfg.validate();
  if (data.empty()) throw DataError("adapt: empty adaptation corpus");
  const bool mwer = spec.method == AdaptMethod::kMwerKld;
  if (mwer && opts.vocab == nullptr) throw ConfigError("adapt: mwer_kld needs the vocabulary");
  const Seq2SeqParams& start = opts.init ? *opts.init : si;

  AdaptResult result;
  model::TrainableMask mask;
  if (spec.method == AdaptMethod::kLhn) {
    std::tie(result.params, mask) = model::attach_lhn(start, spec.site);
  } else {
    result.params = start.clone();
    mask = model::parameter_subset(result.params, spec.subset);
    model::set_trainable(result.params, mask);
  }
  Seq2SeqParams& student = result.params;
  ad::Adam opt(model::select(student, mask), {.learning_rate = cfg.learning_rate, .clip_norm = cfg.clip_norm});
  ad::DropoutSource drop(cfg.dropout, derive_seed(opts.seed, {21}));
  std::mt19937_64 rng(derive_seed(opts.seed, {22}));

  auto build_nbest = [&](std::vector<NBestList>& lists) {
    lists.clear();
    double total = 0.0;
    std::size_t counted = 0;
    for (const Utterance* u : data) {
      lists.push_back(make_nbest(student, u->features, u->tokens, u->transcript, *opts.vocab, cfg.nbest));
      if (!lists.back().hypotheses.empty()) {
        total += expected_errors(lists.back());
        ++counted;
      }
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
  };

  std::vector<NBestList> lists;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    AdaptEpochLog log;
    log.epoch = epoch;
    if (mwer) log.expected_errors = build_nbest(lists);
    std::size_t batches = 0;
    for (const auto& idx : length_batches(data, cfg.batch_size, rng)) {
      auto pairs = pairs_of(data, idx);
      Tensor teacher = model::teacher_distributions(si, pairs);
      ad::Tape tape;
      {
        ad::TapeScope scope(tape);
        auto tb = model::forward_teacher_forced(student, pairs, Mode::kTrain, &drop);
        Tensor loss = kld_adapt_loss(tb.logits, tb.targets, teacher, cfg.beta, cfg.label_smoothing, tb.step_weights);
        KldParts parts = kld_parts(tb.logits, tb.targets, teacher, cfg.label_smoothing, tb.step_weights);
        log.ce_part += parts.ce;
        log.kld_part += parts.kld;
        if (mwer) {
          loss = ad::scale(loss, cfg.gamma1);
          std::vector<Tensor> terms;
          for (std::size_t i : idx) {
            const NBestList& nb = lists[i];
            if (nb.hypotheses.size() < 2) continue;
            std::vector<double> errs;
            for (const auto& h : nb.hypotheses) errs.push_back(h.errors);
            terms.push_back(mwer_loss(nbest_log_probs(student, data[i]->features, nb, Mode::kTrain, &drop), errs));
          }
          if (!terms.empty()) {
            Tensor m = ad::scale(ad::sum(ad::concat(terms, 0)), 1.0 / static_cast<double>(idx.size()));
            log.mwer_part += m.item();
            loss = ad::add(loss, ad::scale(m, cfg.gamma2));
          }
        }
        check_finite(loss.item(), "adapt epoch " + std::to_string(epoch));
        log.loss += loss.item();
        if (loss.impl()->producer == &tape) tape.backward(loss);
      }
      tape.accumulate_into_leaves();
      opt.step();
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    log.loss /= nb;
    log.ce_part /= nb;
    log.kld_part /= nb;
    log.mwer_part /= nb;
    log.wall_ms = elapsed_ms(t0);
    result.log.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);
  }
  if (mwer) result.final_expected_errors = build_nbest(lists);
  // Hand back plain values: no tensor keeps requires_grad.
  student.for_each([](const std::string&, Tensor& t, model::Group) { t.set_requires_grad(false); });
  return result;
}

}  // namespace adaptlab::losses
