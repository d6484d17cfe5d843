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

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "adaptlab/errors.hpp"
#include "adaptlab/metrics/wer.hpp"

namespace adaptlab::metrics {
namespace {

using Words = std::vector<std::string>;

// Enumerates alignments recursively (match/substitute, insert, delete),
// pruning branches that cannot beat the best complete alignment found.
void enumerate(const Words& r, std::size_t i, const Words& h, std::size_t j, std::size_t cost, std::size_t& best) {
  const std::size_t left_r = r.size() - i, left_h = h.size() - j;
  const std::size_t bound = cost + (left_r > left_h ? left_r - left_h : left_h - left_r);
  if (bound >= best) return;
  if (left_r == 0 || left_h == 0) {
    best = bound;
    return;
  }
  enumerate(r, i + 1, h, j + 1, cost + (r[i] == h[j] ? 0 : 1), best);
  enumerate(r, i, h, j + 1, cost + 1, best);
  enumerate(r, i + 1, h, j, cost + 1, best);
}

std::size_t brute_force(const Words& r, const Words& h) {
  std::size_t best = std::max(r.size(), h.size()) + 1;
  enumerate(r, 0, h, 0, 0, best);
  return best;
}

// Every sequence of length 0..max_len over the alphabet.
std::vector<Words> all_sequences(const Words& alphabet, std::size_t max_len) {
  std::vector<Words> out = {{}};
  std::vector<Words> frontier = {{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Words> next;
    for (const auto& s : frontier) {
      for (const auto& a : alphabet) {
        Words t = s;
        t.push_back(a);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

TEST(EditDistance, IdenticalSequences) {
  ErrorCounts c = edit_distance({"a", "b", "c"}, {"a", "b", "c"});
  EXPECT_EQ(c.errors(), 0u);
  EXPECT_EQ(c.ref_words, 3u);
}

TEST(EditDistance, OneSubstitution) {
  ErrorCounts c = edit_distance({"a", "b", "c"}, {"a", "x", "c"});
  EXPECT_EQ(c.substitutions, 1u);
  EXPECT_EQ(c.insertions, 0u);
  EXPECT_EQ(c.deletions, 0u);
}

TEST(EditDistance, TiesPreferSubstitutionThenInsertion) {
  // "a" vs "b c": S+I either way round; substitution is taken first from the end.
  ErrorCounts c = edit_distance({"a"}, {"b", "c"});
  EXPECT_EQ(c.substitutions, 1u);
  EXPECT_EQ(c.insertions, 1u);
  EXPECT_EQ(c.deletions, 0u);
  ErrorCounts d = edit_distance({"a", "b"}, {});
  EXPECT_EQ(d.deletions, 2u);
}

TEST(EditDistance, MatchesBruteForceExhaustively) {
  const auto seqs = all_sequences({"a", "b", "c"}, 6);
  ASSERT_EQ(seqs.size(), 1093u);
  for (const auto& r : seqs) {
    for (const auto& h : seqs) {
      ErrorCounts c = edit_distance(r, h);
      ASSERT_EQ(c.errors(), brute_force(r, h));
      ASSERT_EQ(c.ref_words, r.size());
    }
  }
}

TEST(EditDistance, MetricAxioms) {
  const auto seqs = all_sequences({"a", "b", "c"}, 4);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, seqs.size() - 1);
  for (int trial = 0; trial < 3000; ++trial) {
    const Words& x = seqs[pick(rng)];
    const Words& y = seqs[pick(rng)];
    const Words& z = seqs[pick(rng)];
    const std::size_t xy = edit_distance(x, y).errors();
    EXPECT_EQ(xy, edit_distance(y, x).errors());
    EXPECT_EQ(xy == 0, x == y);
    EXPECT_LE(edit_distance(x, z).errors(), xy + edit_distance(y, z).errors());
  }
}

TEST(Wer, PerfectIsZero) { EXPECT_EQ(wer({{"a", "b"}, {"c"}}, {{"a", "b"}, {"c"}}), 0.0); }

TEST(Wer, OneErrorInTenWords) {
  Words ref = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  Words hyp = ref;
  hyp[4] = "x";
  EXPECT_DOUBLE_EQ(wer({ref}, {hyp}), 10.0);
}

TEST(Wer, InsertionsCanExceedHundred) {
  EXPECT_DOUBLE_EQ(wer({{"a"}}, {{"b", "c", "d"}}), 300.0);
}

TEST(Wer, PooledNotAveraged) {
  // 1/1 and 0/9 pool to 10%, an utterance average would give 50%.
  EXPECT_DOUBLE_EQ(wer({{"a"}, {"b", "b", "b", "b", "b", "b", "b", "b", "b"}},
                       {{"x"}, {"b", "b", "b", "b", "b", "b", "b", "b", "b"}}),
                   10.0);
}

TEST(Wer, OrderInvariantAndConcatenationConsistent) {
  std::vector<Words> refs = {{"a", "b"}, {"c"}, {"a", "a", "c"}};
  std::vector<Words> hyps = {{"a"}, {"c", "c"}, {"b", "a", "c"}};
  const double w = wer(refs, hyps);
  std::vector<Words> rr = {refs[2], refs[0], refs[1]}, hr = {hyps[2], hyps[0], hyps[1]};
  EXPECT_DOUBLE_EQ(w, wer(rr, hr));
  ErrorCounts a = edit_distance(refs[0], hyps[0]), b = edit_distance(refs[1], hyps[1]),
              c = edit_distance(refs[2], hyps[2]);
  a += b;
  a += c;
  EXPECT_DOUBLE_EQ(w, wer(a));
}

TEST(Wer, MismatchedListsAreContractErrors) {
  EXPECT_THROW(wer({{"a"}}, {}), ContractError);
  EXPECT_THROW(wer({{}}, {{"a"}}), ContractError);
}

TEST(Werr, PublishedPairs) {
  EXPECT_NEAR(werr(10.40, 8.91), 14.3, 0.05);
  EXPECT_NEAR(werr(10.40, 7.77), 25.3, 0.05);
  EXPECT_EQ(werr(10.40, 10.40), 0.0);
  EXPECT_THROW(werr(0.0, 1.0), ContractError);
}

}  // namespace
}  // namespace adaptlab::metrics
