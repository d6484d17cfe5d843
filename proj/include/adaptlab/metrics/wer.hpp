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
#include <string>
#include <vector>

namespace adaptlab::metrics {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  ErrorCounts& operator+=(const ErrorCounts& o);
};

// Levenshtein alignment with unit costs. Among minimal alignments the
// backtrace prefers substitution (or match), then insertion, then deletion.
ErrorCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// 100 * sum(S+I+D) / sum(ref words), pooled over the corpus. Lists must be
// aligned; throws ContractError otherwise or when there are no ref words.
double wer(const std::vector<std::vector<std::string>>& refs, const std::vector<std::vector<std::string>>& hyps);
double wer(const ErrorCounts& pooled);

// 100 * (baseline - new) / baseline; throws ContractError for baseline <= 0.
double werr(double baseline_wer, double new_wer);

}  // namespace adaptlab::metrics
