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

// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.
//
//   acceptance [--work DIR] [--only 1,4,7]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adaptlab/autodiff/grad_check.hpp"
#include "adaptlab/autodiff/ops.hpp"
#include "adaptlab/autodiff/optimizer.hpp"
#include "adaptlab/decode/beam.hpp"
#include "adaptlab/harness/experiment.hpp"
#include "adaptlab/losses/losses.hpp"
#include "adaptlab/metrics/wer.hpp"

namespace fs = std::filesystem;
using namespace adaptlab;
using ad::Shape;
using ad::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string join(const std::vector<double>& v, const char* f = "%.2f") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(f, v[i]);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---------------------------------------------------------------- criterion 1

Tensor random_logits(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<double> v(r * c);
  for (double& x : v) x = n(rng);
  return Tensor(Shape{r, c}, v);
}

Tensor random_distributions(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (v[i * c + j] = g(rng) + 1e-3);
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] /= s;
  }
  return Tensor(Shape{r, c}, v);
}

std::vector<int> random_targets(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::vector<int> y(r);
  for (int& t : y) t = static_cast<int>(rng() % c);
  return y;
}

Outcome gradient_suite() {
  std::mt19937_64 rng(101);
  const int instances = 25;
  double worst_ce = 0, worst_kld = 0, worst_mwer = 0, worst_comb = 0, worst_nce = 0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t u = 2 + t % 4, v = 3 + t % 5;
    Tensor l = random_logits(u, v, rng);
    const auto y = random_targets(u, v, rng);
    const Tensor q = random_distributions(u, v, rng);
    const double beta = 0.05 + 0.9 * static_cast<double>(t) / instances;
    const double ls = 0.1 * (t % 3);
    worst_ce = std::max(worst_ce, ad::grad_check([&](const Tensor& x) { return losses::ce_loss(x, y, ls); }, l));
    worst_kld = std::max(
        worst_kld, ad::grad_check([&](const Tensor& x) { return losses::kld_adapt_loss(x, y, q, beta, ls); }, l));
    Tensor lp = ad::reshape(random_logits(1, 3 + t % 4, rng), {3 + static_cast<std::size_t>(t % 4)});
    std::vector<double> w;
    for (std::size_t i = 0; i < lp.size(); ++i) w.push_back(static_cast<double>(rng() % 6));
    w[0] = w[1] + 1.0;
    worst_mwer = std::max(worst_mwer, ad::grad_check([&](const Tensor& x) { return losses::mwer_loss(x, w); }, lp));
    losses::AdaptationConfig cfg;
    cfg.beta = beta;
    cfg.gamma1 = 0.5 + 0.1 * (t % 5);
    cfg.gamma2 = 1.5 - 0.1 * (t % 5);
    worst_comb = std::max(worst_comb, ad::grad_check([&](const Tensor& x) {
                            return losses::combined_adapt_loss(x, y, q, lp, w, cfg);
                          }, l));
    worst_comb = std::max(worst_comb, ad::grad_check([&](const Tensor& x) {
                            return losses::combined_adapt_loss(l, y, q, x, w, cfg);
                          }, lp));
    // NCE with frozen noise samples.
    const std::size_t k = 2 + t % 4;
    const Tensor noise_dist = random_distributions(1, v, rng);
    const std::vector<double> qn(noise_dist.values().begin(), noise_dist.values().end());
    const auto samples = lm::draw_noise(u, k, qn, 7 + t);
    std::vector<double> weights(u, 1.0);
    weights[0] = 0.5;
    worst_nce = std::max(worst_nce, ad::grad_check([&](const Tensor& x) {
                           return lm::nce_loss(x, y, samples, k, qn, weights);
                         }, l));
  }
  const double worst = std::max({worst_ce, worst_kld, worst_mwer, worst_comb, worst_nce});
  std::ostringstream os;
  os << instances << " instances each; max rel err ce+ls " << fmt("%.1e", worst_ce) << ", kld "
     << fmt("%.1e", worst_kld) << ", mwer " << fmt("%.1e", worst_mwer) << ", combined " << fmt("%.1e", worst_comb)
     << ", nce " << fmt("%.1e", worst_nce);
  return {worst < 1e-4, os.str()};
}

// ------------------------------------------------------------- criteria 2, 3

std::vector<model::SequencePair> pairs_of(const std::vector<const corpus::Utterance*>& data) {
  std::vector<model::SequencePair> p;
  for (const auto* u : data) p.push_back({&u->features, u->tokens});
  return p;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

std::vector<std::pair<std::string, Tensor>> named(const model::Seq2SeqParams& p, bool lhn) {
  std::vector<std::pair<std::string, Tensor>> out;
  p.for_each([&](const std::string& n, const Tensor& t, model::Group g) {
    if ((g == model::Group::kLhn) == lhn) out.emplace_back(n, t);
  });
  return out;
}

Outcome kld_endpoints(harness::Experiment& ex) {
  // beta = 0 against plain CE, bitwise in value and gradient.
  std::mt19937_64 rng(202);
  bool bitwise = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t u = 2 + t % 5, v = 4 + t % 6;
    const Tensor base = random_logits(u, v, rng);
    const auto y = random_targets(u, v, rng);
    const Tensor q = random_distributions(u, v, rng);
    const double ls = 0.1 * (t % 2);
    std::vector<double> g[2];
    double val[2];
    for (int which = 0; which < 2; ++which) {
      Tensor l = base.clone().set_requires_grad(true);
      ad::Tape tape;
      {
        ad::TapeScope scope(tape);
        Tensor loss = which == 0 ? losses::ce_loss(l, y, ls) : losses::kld_adapt_loss(l, y, q, 0.0, ls);
        val[which] = loss.item();
        tape.backward(loss);
      }
      tape.accumulate_into_leaves();
      g[which].assign(l.grad().begin(), l.grad().end());
    }
    bitwise = bitwise && val[0] == val[1] && g[0] == g[1];
  }
  // beta = 1 with SA = SI on the trained model and real adaptation data.
  const auto& si = ex.si();
  const auto data = ex.speakers().front()->adaptation_subset(8);
  const auto pairs = pairs_of(data);
  model::Seq2SeqParams student = si.clone();
  const auto mask = model::parameter_subset(student, model::Subset::kAll);
  model::set_trainable(student, mask);
  const Tensor teacher = model::teacher_distributions(si, pairs);
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    auto tb = model::forward_teacher_forced(student, pairs, model::Mode::kEval);
    tape.backward(losses::kld_adapt_loss(tb.logits, tb.targets, teacher, 1.0, 0.0, tb.step_weights));
  }
  tape.accumulate_into_leaves();
  double norm2 = 0.0;
  for (const Tensor& t : model::select(student, mask))
    for (double x : t.grad()) norm2 += x * x;
  losses::AdaptationConfig cfg;
  cfg.beta = 1.0;
  cfg.dropout = 0.0;
  cfg.epochs = 10;
  cfg.batch_size = data.size();
  cfg.learning_rate = 1e-2;
  auto r = losses::adapt(si, data, cfg, {});
  double moved = 0.0;
  const auto before = named(si, false), after = named(r.params, false);
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t j = 0; j < before[i].second.size(); ++j)
      moved = std::max(moved, std::abs(before[i].second.at(j) - after[i].second.at(j)));
  std::ostringstream os;
  os << "beta=0 vs CE bitwise on 20 instances: " << (bitwise ? "yes" : "NO") << "; beta=1 grad norm "
     << fmt("%.1e", std::sqrt(norm2)) << "; max movement after " << r.log.size() << " steps " << fmt("%.1e", moved);
  return {bitwise && std::sqrt(norm2) < 1e-10 && moved == 0.0 && r.log.size() == 10, os.str()};
}

Outcome lhn_invariance(harness::Experiment& ex) {
  const auto& si = ex.si();
  const auto data = ex.speakers().front()->adaptation_subset(8);
  const auto pairs = pairs_of(data);
  const auto ref = model::forward_teacher_forced(si, pairs, model::Mode::kEval);
  bool invisible = true, only_lhn = true, lhn_moved = true;
  for (model::LhnSite site : model::kAllLhnSites) {
    auto [with, mask] = model::attach_lhn(si, site);
    const auto out = model::forward_teacher_forced(with, pairs, model::Mode::kEval);
    invisible = invisible && same_values(ref.logits, out.logits);
    for (const auto* u : data) {
      const auto a = model::forward_teacher_forced(si, u->features, u->tokens);
      const auto b = model::forward_teacher_forced(with, u->features, u->tokens);
      invisible = invisible && same_values(a.attention, b.attention) && a.log_prob == b.log_prob;
    }
    // One optimizer step: a single batch holding all data, one epoch.
    losses::AdaptationConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = data.size();
    cfg.learning_rate = 1e-3;
    auto r = losses::adapt(si, data, cfg, {losses::AdaptMethod::kLhn, model::Subset::kAll, site});
    const auto before = named(si, false), after = named(r.params, false);
    for (std::size_t i = 0; i < before.size(); ++i) only_lhn = only_lhn && same_values(before[i].second, after[i].second);
    const auto lhn_after = named(r.params, true), lhn_before = named(with, true);
    for (std::size_t i = 0; i < lhn_after.size(); ++i)
      lhn_moved = lhn_moved && !same_values(lhn_after[i].second, lhn_before[i].second);
  }
  std::ostringstream os;
  os << "identity LHN invisible at all 3 sites: " << (invisible ? "yes" : "NO")
     << "; one step leaves non-LHN bitwise unchanged: " << (only_lhn ? "yes" : "NO")
     << "; U and b both moved: " << (lhn_moved ? "yes" : "NO");
  return {invisible && only_lhn && lhn_moved, os.str()};
}

// ---------------------------------------------------------------- criterion 4

model::Seq2SeqParams toy_model(std::size_t vocab, std::uint64_t seed) {
  model::ModelConfig c;
  c.feat_dim = 3;
  c.conv_channels = 4;
  c.pyramid_stages = 1;
  c.encoder_units = 4;
  c.decoder_units = 6;
  c.embedding_dim = 3;
  c.attention_dim = 4;
  c.dense_dim = 5;
  c.vocab_size = vocab;
  auto p = model::init_params(c, seed);
  for (double& v : p.out_weight.mutable_values()) v *= 6.0;
  for (double& v : p.att_score.mutable_values()) v *= 4.0;
  return p;
}

lm::LmParams toy_lm(std::size_t vocab, std::uint64_t seed) {
  auto p = lm::init_lm({vocab, 3, 4, 1}, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : p.out_weight.mutable_values()) v = n(rng);
  for (double& v : p.out_bias.mutable_values()) v += 0.5 * n(rng);
  return p;
}

void all_outputs(std::size_t vocab, std::size_t max_len, std::vector<int>& prefix, std::vector<std::vector<int>>& out) {
  auto done = prefix;
  done.push_back(model::kEos);
  out.push_back(done);
  if (prefix.size() + 1 >= max_len) return;
  for (int v = 0; v < static_cast<int>(vocab); ++v) {
    if (v == model::kBos || v == model::kEos) continue;
    prefix.push_back(v);
    all_outputs(vocab, max_len, prefix, out);
    prefix.pop_back();
  }
}

// Fused score of a complete output recomputed from scratch.
double rescore(const model::Seq2SeqParams& p, const lm::LmParams& lm, const model::FeatureSequence& x,
               const std::vector<int>& y, const decode::FusionConfig& cfg) {
  const auto tf = model::forward_teacher_forced(p, x, y);
  double covered = 0.0;
  for (std::size_t j = 0; j < tf.attention.cols(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < tf.attention.rows(); ++i) col += tf.attention.at(i, j);
    covered += col > cfg.coverage_tau ? 1.0 : 0.0;
  }
  return tf.log_prob + cfg.lambda_lm * lm::lm_logprob(lm, y, cfg.lm_scoring).total + cfg.lambda_cov * covered;
}

Outcome beam_oracle() {
  const auto start = std::chrono::steady_clock::now();
  int agree = 0, models = 0;
  double worst_gap = 0.0;
  for (std::size_t vocab : {4u, 5u}) {
    for (std::size_t max_len : {3u, 4u}) {
      std::vector<std::vector<int>> outputs;
      std::vector<int> prefix;
      all_outputs(vocab, max_len, prefix, outputs);
      for (std::uint64_t s = 0; s < 13 && models < 50; ++s, ++models) {
        const std::uint64_t seed = 1000 * vocab + 100 * max_len + s;
        const auto p = toy_model(vocab, seed);
        const auto lm = toy_lm(vocab, seed + 7);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        Tensor f(Shape{3 + seed % 7, 3});
        for (double& v : f.mutable_values()) v = n(rng);
        const model::FeatureSequence x{f};
        decode::FusionConfig cfg;
        cfg.beam_width = 1000;
        cfg.max_len = max_len;
        cfg.lambda_lm = 0.1 + 0.1 * static_cast<double>(s % 5);
        cfg.lambda_cov = 0.3 + 0.2 * static_cast<double>(s % 4);
        cfg.lm_scoring = s % 2 ? lm::LmScoring::kExact : lm::LmScoring::kSelfNormalized;
        double best = -1e300;
        std::vector<int> argmax;
        for (const auto& y : outputs) {
          const double v = rescore(p, lm, x, y, cfg);
          if (v > best) {
            best = v;
            argmax = y;
          }
        }
        const auto r = decode::beam_search(p, &lm, x, cfg);
        const auto& top = r.nbest.front();
        worst_gap = std::max(worst_gap, std::abs(top.fused - best));
        if (!r.unfinished && top.hyp.tokens == argmax && std::abs(top.fused - best) < 1e-9) ++agree;
      }
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream os;
  os << agree << "/" << models << " toy models (V 4..5, max_len 3..4, nonzero lambda_lm and lambda_cov) match the "
     << "exhaustive argmax; max score gap " << fmt("%.1e", worst_gap) << "; " << fmt("%.1f", secs) << " s";
  return {agree == models && models == 50 && secs < 60.0, os.str()};
}

// ---------------------------------------------------------------- criterion 5

Outcome fusion_degeneracy(harness::Experiment& ex) {
  const auto& si = ex.si();
  const auto& lm = ex.generic_lm();
  decode::FusionConfig zero = ex.config().fusion;
  zero.lambda_lm = 0.0;
  zero.lambda_cov = 0.0;
  std::size_t utts = 0, same = 0;
  for (const auto* spk : ex.speakers()) {
    for (const auto& u : spk->eval) {
      const auto a = decode::beam_search(si, &lm, u.features, zero);
      const auto b = decode::beam_search(si, nullptr, u.features, zero);
      bool eq = a.nbest.size() == b.nbest.size();
      for (std::size_t i = 0; eq && i < a.nbest.size(); ++i) eq = a.nbest[i].hyp.tokens == b.nbest[i].hyp.tokens;
      same += eq ? 1 : 0;
      ++utts;
    }
  }
  return {same == utts && utts > 0,
          std::to_string(same) + "/" + std::to_string(utts) + " eval utterances give token-identical n-best lists"};
}

// ---------------------------------------------------------------- criterion 6

using Words = std::vector<std::string>;

void align_all(const Words& r, std::size_t i, const Words& h, std::size_t j, std::size_t cost, std::size_t& best) {
  const std::size_t lr = r.size() - i, lh = h.size() - j;
  const std::size_t bound = cost + (lr > lh ? lr - lh : lh - lr);
  if (bound >= best) return;
  if (lr == 0 || lh == 0) {
    best = bound;
    return;
  }
  align_all(r, i + 1, h, j + 1, cost + (r[i] == h[j] ? 0 : 1), best);
  align_all(r, i, h, j + 1, cost + 1, best);
  align_all(r, i + 1, h, j, cost + 1, best);
}

Outcome wer_oracle() {
  std::vector<Words> seqs = {{}}, frontier = {{}};
  for (int len = 1; len <= 6; ++len) {
    std::vector<Words> next;
    for (const auto& s : frontier)
      for (const char* a : {"a", "b", "c"}) {
        Words t = s;
        t.push_back(a);
        next.push_back(t);
      }
    seqs.insert(seqs.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  std::size_t pairs = 0, bad = 0;
  for (const auto& r : seqs)
    for (const auto& h : seqs) {
      std::size_t best = std::max(r.size(), h.size()) + 1;
      align_all(r, 0, h, 0, 0, best);
      bad += metrics::edit_distance(r, h).errors() == best ? 0 : 1;
      ++pairs;
    }
  const double a = std::round(metrics::werr(10.40, 8.91) * 10.0) / 10.0;
  const double b = std::round(metrics::werr(10.40, 7.77) * 10.0) / 10.0;
  std::ostringstream os;
  os << pairs << " sequence pairs, " << bad << " mismatches; WERR 10.40->8.91 = " << fmt("%.1f", a)
     << ", 10.40->7.77 = " << fmt("%.1f", b);
  return {bad == 0 && pairs == 1093u * 1093u && a == 14.3 && b == 25.3, os.str()};
}

// ---------------------------------------------------------------- criterion 7

Outcome adaptation_trend(harness::Experiment& ex, std::chrono::steady_clock::time_point run_start) {
  const auto& cfg = ex.config();
  const double si = ex.evaluate_si().pooled_wer();
  std::vector<double> all, dec;
  for (auto seed : cfg.adapt_seeds) {
    all.push_back(ex.evaluate_cell(ex.kld_cell(model::Subset::kAll, cfg.adapt_size, seed)).pooled_wer());
    dec.push_back(ex.evaluate_cell(ex.kld_cell(model::Subset::kDecoder, cfg.adapt_size, seed)).pooled_wer());
  }
  const double m_all = harness::median(all), m_dec = harness::median(dec);
  const double secs = seconds_since(run_start);
  std::ostringstream os;
  os << "WER SI " << fmt("%.2f", si) << ", decoder " << fmt("%.2f", m_dec) << " [" << join(dec) << "], all "
     << fmt("%.2f", m_all) << " [" << join(all) << "]; " << fmt("%.0f", secs) << " s including world and SI training";
  return {m_all <= m_dec && m_dec < si && si - m_all >= 2.0 && secs < 900.0, os.str()};
}

// ---------------------------------------------------------------- criterion 8

Outcome ladder_trend(harness::Experiment& ex) {
  const auto& cfg = ex.config();
  const auto& sizes = ex.world().config.adapt_sizes;
  std::vector<double> med, xs;
  for (std::size_t n : sizes) {
    std::vector<double> w;
    for (auto seed : cfg.adapt_seeds)
      w.push_back(ex.evaluate_cell(ex.kld_cell(model::Subset::kAll, n, seed)).pooled_wer());
    med.push_back(harness::median(w));
    xs.push_back(std::log(static_cast<double>(n)));
  }
  int inversions = 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < med.size(); ++i)
    if (med[i] > med[i - 1]) {
      ++inversions;
      worst = std::max(worst, med[i] - med[i - 1]);
    }
  const auto slope = harness::least_squares_slope(xs, med);
  std::ostringstream os;
  os << "median KLD WER at sizes";
  for (std::size_t n : sizes) os << " " << n;
  os << ": " << join(med) << "; inversions " << inversions << " (largest " << fmt("%.2f", worst) << "); slope "
     << (slope ? fmt("%.3f", *slope) : "absent");
  return {sizes.size() == 4 && (inversions == 0 || (inversions == 1 && worst <= 0.5)) && slope && *slope < 0.0,
          os.str()};
}

// ---------------------------------------------------------------- criterion 9

Outcome mwer_trend(harness::Experiment& ex) {
  const auto& cfg = ex.config();
  const double beta = cfg.mwer_betas.front();
  const std::size_t n_spk = ex.speakers().size();
  std::vector<std::vector<double>> traces;  // per seed: mean expected errors before epochs 1..E and after E
  std::vector<double> kld_wer, mwer_wer;
  for (auto seed : cfg.adapt_seeds) {
    const auto key = ex.mwer_cell(beta, cfg.adapt_size, seed);
    ex.ensure_cells({key});
    std::vector<double> trace;
    for (std::size_t s = 0; s < n_spk; ++s) {
      const auto& log = ex.adapt_log(key, s);
      std::vector<double> t;
      for (const auto& e : log.at("epochs")) t.push_back(e.at("expected_errors").get<double>());
      t.push_back(log.at("final_expected_errors").get<double>());
      if (trace.empty()) trace.assign(t.size(), 0.0);
      for (std::size_t i = 0; i < t.size(); ++i) trace[i] += t[i] / static_cast<double>(n_spk);
    }
    traces.push_back(trace);
    kld_wer.push_back(ex.evaluate_cell(ex.kld_cell(model::Subset::kAll, cfg.adapt_size, seed)).pooled_wer());
    mwer_wer.push_back(ex.evaluate_cell(key).pooled_wer());
  }
  std::vector<double> med(traces.front().size());
  for (std::size_t i = 0; i < med.size(); ++i) {
    std::vector<double> col;
    for (const auto& t : traces) col.push_back(t[i]);
    med[i] = harness::median(col);
  }
  bool monotone = med.size() >= 6;
  for (std::size_t i = 1; i < std::min<std::size_t>(med.size(), 6); ++i) monotone = monotone && med[i] <= med[i - 1];
  monotone = monotone && med[std::min<std::size_t>(med.size(), 6) - 1] < med.front();
  const double d = harness::median(mwer_wer) - harness::median(kld_wer);
  std::ostringstream os;
  os << "median expected word errors per utterance over epochs: " << join(med, "%.4f") << "; eval WER KLD "
     << fmt("%.2f", harness::median(kld_wer)) << " -> mWER+KLD " << fmt("%.2f", harness::median(mwer_wer));
  return {monotone && d <= 0.5, os.str()};
}

// --------------------------------------------------------------- criterion 10

Outcome lm_criterion(harness::Experiment& ex) {
  const auto& cfg = ex.config();
  const auto& w = ex.world();
  const auto& generic = ex.generic_lm();
  const auto spks = ex.speakers();
  std::vector<std::vector<int>> heldout_all;
  std::size_t better = 0;
  for (std::size_t s = 0; s < spks.size(); ++s) {
    std::vector<std::vector<int>> heldout;
    for (const auto& line : spks[s]->text_heldout) heldout.push_back(w.vocab.encode_transcript(line));
    heldout_all.insert(heldout_all.end(), heldout.begin(), heldout.end());
    const double g = lm::perplexity(generic, heldout);
    const double a = lm::perplexity(*ex.speaker_lm(harness::LmKind::kFinetuneKld, s), heldout);
    better += a < g ? 1 : 0;
  }
  const double log_z = lm::mean_abs_log_partition(generic, heldout_all);
  std::vector<double> gen_wer, ada_wer;
  for (auto seed : cfg.adapt_seeds) {
    const auto key = ex.lhn_cell(cfg.sweep_lhn_site, cfg.adapt_size, seed);
    gen_wer.push_back(ex.evaluate_cell(key, harness::LmKind::kGeneric).pooled_wer());
    ada_wer.push_back(ex.evaluate_cell(key, harness::LmKind::kFinetuneKld).pooled_wer());
  }
  const double mg = harness::median(gen_wer), ma = harness::median(ada_wer);
  std::ostringstream os;
  os << "mean |log Z| " << fmt("%.3f", log_z) << "; adapted LM lowers perplexity for " << better << "/"
     << spks.size() << " speakers; fused WER generic " << fmt("%.2f", mg) << " vs adapted " << fmt("%.2f", ma);
  return {log_z < 0.5 && better * 5 >= spks.size() * 4 && ma <= mg, os.str()};
}

// --------------------------------------------------------------- criterion 11

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome sweep_reproducible(const fs::path& work) {
  const fs::path dir = work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path ini = dir / "sweep.ini";
  std::ofstream(ini) << "[experiment]\nadapt_seeds = 1,2\nadapt_size = 32\nmax_speakers = 2\n\n"
                        "[world]\nsi_speakers = 10\nsi_utterances = 300\nsi_valid_utterances = 30\n"
                        "eval_speakers = 2\nadapt_sizes = 4,8,16,32\neval_utterances = 8\nlm_sentences = 300\n\n"
                        "[train]\nepochs = 3\n\n[adapt]\nepochs = 3\n";
  std::vector<std::string> files = {"sweep.tsv", "sweep.jsonl", "sweep_slope.tsv", "sweep_slope.jsonl"};
  int rc[2];
  for (int run = 0; run < 2; ++run) {
    const std::string cmd = std::string(ADAPTLAB_CLI) + " sweep --config " + ini.string() + " --seed 5 --out " +
                            (dir / ("run" + std::to_string(run))).string() + " > /dev/null 2>&1";
    rc[run] = std::system(cmd.c_str());
  }
  std::size_t identical = 0;
  for (const auto& f : files) {
    const auto a = slurp(dir / "run0" / "reports" / f), b = slurp(dir / "run1" / "reports" / f);
    identical += (!a.empty() && a == b) ? 1 : 0;
  }
  std::ostringstream os;
  os << "two fresh sweep runs (exit " << rc[0] << ", " << rc[1] << "): " << identical << "/" << files.size()
     << " report files byte-identical";
  return {rc[0] == 0 && rc[1] == 0 && identical == files.size(), os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "adaptlab_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string x; std::getline(ss, x, ',');) only.insert(std::stoi(x));
    } else {
      std::fprintf(stderr, "usage: %s [--work DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  const auto run_start = std::chrono::steady_clock::now();
  harness::Experiment ex(harness::ExperimentConfig(), (work / "default").string());

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"KLD endpoints", [&] { return kld_endpoints(ex); }},
      {"identity LHN", [&] { return lhn_invariance(ex); }},
      {"beam-search oracle", beam_oracle},
      {"fusion degeneracy", [&] { return fusion_degeneracy(ex); }},
      {"WER oracle", wer_oracle},
      {"adaptation trend", [&] { return adaptation_trend(ex, run_start); }},
      {"data-ladder trend", [&] { return ladder_trend(ex); }},
      {"mWER+KLD", [&] { return mwer_trend(ex); }},
      {"LM self-normalization and adaptation", [&] { return lm_criterion(ex); }},
      {"sweep reproducibility", [&] { return sweep_reproducible(work); }},
  };
  // Criteria that need no trained model first, so timings stay readable.
  const std::vector<int> order = {1, 4, 6, 7, 2, 3, 5, 8, 9, 10, 11};
  std::vector<std::string> lines(criteria.size());
  int failed = 0;
  for (int n : order) {
    if (!only.empty() && !only.count(n)) continue;
    const auto& [name, check] = criteria[static_cast<std::size_t>(n - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.1f s)", seconds_since(t0));
    lines[static_cast<std::size_t>(n - 1)] =
        "criterion " + std::to_string(n) + " " + (o.pass ? "PASS" : "FAIL") + " " + name + ": " + o.detail + buf;
    std::printf("%s\n", lines[static_cast<std::size_t>(n - 1)].c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines)
    if (!l.empty()) std::printf("%s\n", l.c_str());
  std::printf("%s\n", failed ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED");
  return failed ? 1 : 0;
}
