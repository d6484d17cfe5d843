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

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "adaptlab/metrics/wer.hpp"

namespace adaptlab::harness {

// A table cell: missing, text, real (printed with 4 decimals) or count.
using Cell = std::variant<std::monostate, std::string, double, std::size_t>;

// Named table written as TSV (comment lines carry the metadata) and as JSON
// lines (a leading {"meta": ...} object, then one object per row).
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::map<std::string, std::string> meta;

  std::string to_tsv() const;
  std::string to_jsonl() const;
  // Writes <dir>/<name>.tsv and <dir>/<name>.jsonl.
  void write(const std::string& dir) const;
};

double median(std::vector<double> values);

// Ordinary least-squares slope of y on x; nullopt for fewer than two
// distinct x values.
std::optional<double> least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

struct SpeakerCounts {
  std::string speaker;
  metrics::ErrorCounts counts;
};

// One system decoded over every target speaker. `seed` is "-" for systems
// that involve no adaptation randomness.
struct SystemResult {
  std::string system;
  std::string seed = "-";
  std::vector<SpeakerCounts> speakers;
  double pooled_wer() const;
};

// WER table with WERR against the report's own SI row (system "SI").
struct EvalReport {
  std::string name;
  std::vector<SystemResult> systems;

  const SystemResult& si() const;
  // Pooled WER of every seed of `system`, in insertion order.
  std::vector<double> seed_wers(const std::string& system) const;
  double median_wer(const std::string& system) const;
  // Rows {system, seed, speaker, n_words, wer, werr}: per speaker and ALL
  // for every entry, then a seed "median" ALL row for systems run with
  // several seeds.
  Table table(const std::map<std::string, std::string>& meta) const;
};

}  // namespace adaptlab::harness
