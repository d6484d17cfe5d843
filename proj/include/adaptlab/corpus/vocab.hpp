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
#include <string_view>
#include <unordered_map>
#include <vector>

namespace adaptlab::corpus {

// Ordered word-piece inventory. Ids 0..2 are <unk>, <s>, </s>; then the
// single characters of the training alphabet; then merged units in merge
// order. A space is an ordinary character and attaches to the start of the
// following word, so pieces such as " the" never cross a word boundary.
class WordPieceVocab {
 public:
  WordPieceVocab() = default;
  explicit WordPieceVocab(std::vector<std::string> units);

  std::size_t size() const { return units_.size(); }
  const std::string& unit(int id) const { return units_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& units() const { return units_; }
  // -1 when absent.
  int id(std::string_view unit) const;
  std::size_t alphabet_size() const { return alphabet_size_; }

  // Greedy longest-match segmentation within each space-led chunk. Characters
  // outside the alphabet map to <unk>.
  std::vector<int> encode(std::string_view text) const;
  // Concatenates units, skipping special tokens.
  std::string decode(const std::vector<int>& ids) const;

  // Encoded text followed by </s>.
  std::vector<int> encode_transcript(std::string_view text) const;

  bool operator==(const WordPieceVocab& other) const { return units_ == other.units_; }

 private:
  std::vector<std::string> units_;
  std::unordered_map<std::string, int> index_;
  std::size_t alphabet_size_ = 0;
  std::size_t longest_ = 1;
};

inline constexpr std::size_t kNumSpecials = 3;

// Frequency-driven pair merging (BPE style) over space-led chunks until the
// inventory reaches `size` units or no pair remains. Ties go to the
// lexicographically smallest pair. Throws ConfigError when `size` cannot hold
// the alphabet plus the three specials.
WordPieceVocab build_vocab(const std::vector<std::string>& corpus, std::size_t size);

// Splits "a bc d" into {"a", " bc", " d"}.
std::vector<std::string> split_chunks(std::string_view text);
// Whitespace-separated words.
std::vector<std::string> split_words(std::string_view text);

}  // namespace adaptlab::corpus
