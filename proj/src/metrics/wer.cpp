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

#include "adaptlab/metrics/wer.hpp"

#include <algorithm>

#include "adaptlab/errors.hpp"

namespace adaptlab::metrics {

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_words += o.ref_words;
  return *this;
}

ErrorCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // cost[i][j]: distance between ref[0,i) and hyp[0,j).
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  ErrorCounts c;
  c.ref_words = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

double wer(const ErrorCounts& pooled) {
  if (pooled.ref_words == 0) throw ContractError("wer: no reference words");
  return 100.0 * static_cast<double>(pooled.errors()) / static_cast<double>(pooled.ref_words);
}

double wer(const std::vector<std::vector<std::string>>& refs, const std::vector<std::vector<std::string>>& hyps) {
  if (refs.size() != hyps.size()) {
    throw ContractError("wer: " + std::to_string(refs.size()) + " references vs " + std::to_string(hyps.size()) +
                        " hypotheses");
  }
  ErrorCounts total;
  for (std::size_t k = 0; k < refs.size(); ++k) total += edit_distance(refs[k], hyps[k]);
  return wer(total);
}

double werr(double baseline_wer, double new_wer) {
  if (!(baseline_wer > 0.0)) throw ContractError("werr: baseline WER must be positive");
  return 100.0 * (baseline_wer - new_wer) / baseline_wer;
}

}  // namespace adaptlab::metrics
