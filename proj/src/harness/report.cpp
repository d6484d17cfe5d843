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

#include "adaptlab/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adaptlab/errors.hpp"

namespace adaptlab::harness {

namespace {

using json = nlohmann::json;

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string cell_text(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return "NA";
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* n = std::get_if<std::size_t>(&c)) return std::to_string(*n);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", round4(std::get<double>(c)) + 0.0);
  return buf;
}

json cell_json(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return nullptr;
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* n = std::get_if<std::size_t>(&c)) return *n;
  return round4(std::get<double>(c)) + 0.0;
}

}  // namespace

std::string Table::to_tsv() const {
  std::ostringstream os;
  os << "# table\t" << name << "\n";
  for (const auto& [k, v] : meta) os << "# " << k << "\t" << v << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "\t" : "") << columns[i];
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "\t" : "") << cell_text(row[i]);
    os << "\n";
  }
  return os.str();
}

std::string Table::to_jsonl() const {
  std::ostringstream os;
  json m = meta;
  m["table"] = name;
  os << json{{"meta", m}}.dump() << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw ContractError("Table: row width differs from the header");
    json j = json::object();
    for (std::size_t i = 0; i < row.size(); ++i) j[columns[i]] = cell_json(row[i]);
    os << j.dump() << "\n";
  }
  return os.str();
}

void Table::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [ext, text] : {std::pair{".tsv", to_tsv()}, std::pair{".jsonl", to_jsonl()}}) {
    const std::string path = dir + "/" + name + ext;
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << text;
  }
}

double median(std::vector<double> v) {
  if (v.empty()) throw ContractError("median: no values");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::optional<double> least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("least_squares_slope: length mismatch");
  if (std::set<double>(x.begin(), x.end()).size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double SystemResult::pooled_wer() const {
  metrics::ErrorCounts total;
  for (const auto& s : speakers) total += s.counts;
  return metrics::wer(total);
}

const SystemResult& EvalReport::si() const {
  for (const auto& s : systems)
    if (s.system == "SI") return s;
  throw ContractError("EvalReport " + name + ": no SI row");
}

std::vector<double> EvalReport::seed_wers(const std::string& system) const {
  std::vector<double> out;
  for (const auto& s : systems)
    if (s.system == system) out.push_back(s.pooled_wer());
  if (out.empty()) throw ContractError("EvalReport " + name + ": no system " + system);
  return out;
}

double EvalReport::median_wer(const std::string& system) const { return median(seed_wers(system)); }

Table EvalReport::table(const std::map<std::string, std::string>& meta) const {
  Table t;
  t.name = name;
  t.meta = meta;
  t.columns = {"system", "seed", "speaker", "n_words", "wer", "werr"};
  const SystemResult& base = si();
  const double base_all = base.pooled_wer();
  auto werr_cell = [](double b, double w) -> Cell {
    if (!(b > 0.0)) return std::monostate{};
    return metrics::werr(b, w);
  };
  std::vector<std::string> order;
  for (const auto& s : systems) {
    if (std::find(order.begin(), order.end(), s.system) == order.end()) order.push_back(s.system);
    if (s.speakers.size() != base.speakers.size()) throw ContractError("EvalReport: speaker sets differ");
    metrics::ErrorCounts total;
    for (std::size_t i = 0; i < s.speakers.size(); ++i) {
      const auto& sp = s.speakers[i];
      if (sp.speaker != base.speakers[i].speaker) throw ContractError("EvalReport: speaker order differs");
      total += sp.counts;
      const double w = metrics::wer(sp.counts);
      t.rows.push_back({s.system, s.seed, sp.speaker, sp.counts.ref_words, w,
                        werr_cell(metrics::wer(base.speakers[i].counts), w)});
    }
    const double w = metrics::wer(total);
    t.rows.push_back({s.system, s.seed, std::string("ALL"), total.ref_words, w, werr_cell(base_all, w)});
  }
  for (const auto& name : order) {
    std::set<std::string> seeds;
    for (const auto& s : systems)
      if (s.system == name && s.seed != "-") seeds.insert(s.seed);
    if (seeds.size() < 2) continue;
    const auto wers = seed_wers(name);
    const double w = median(wers);
    std::size_t words = 0;
    for (const auto& sp : base.speakers) words += sp.counts.ref_words;
    t.rows.push_back({name, std::string("median"), std::string("ALL"), words, w, werr_cell(base_all, w)});
  }
  return t;
}

}  // namespace adaptlab::harness
