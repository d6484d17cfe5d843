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

#include "adaptlab/corpus/vocab.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "adaptlab/errors.hpp"
#include "adaptlab/model/params.hpp"

namespace adaptlab::corpus {
namespace {

const char* const kSpecials[kNumSpecials] = {"<unk>", "<s>", "</s>"};
static_assert(model::kUnk == 0 && model::kBos == 1 && model::kEos == 2);

}  // namespace

std::vector<std::string> split_chunks(std::string_view text) {
  std::vector<std::string> chunks;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' && !cur.empty() && cur.back() != ' ') {
      chunks.push_back(cur);
      cur.clear();
    }
    cur.push_back(ch);
  }
  if (!cur.empty()) chunks.push_back(cur);
  return chunks;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

WordPieceVocab::WordPieceVocab(std::vector<std::string> units) : units_(std::move(units)) {
  if (units_.size() < kNumSpecials) throw ConfigError("vocabulary must contain the special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (units_[i] != kSpecials[i]) throw ConfigError("vocabulary must start with <unk>, <s>, </s>");
  }
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (!index_.emplace(units_[i], static_cast<int>(i)).second) {
      throw ConfigError("vocabulary: duplicate unit '" + units_[i] + "'");
    }
    if (i >= kNumSpecials) {
      if (units_[i].size() == 1) ++alphabet_size_;
      longest_ = std::max(longest_, units_[i].size());
    }
  }
}

int WordPieceVocab::id(std::string_view unit) const {
  auto it = index_.find(std::string(unit));
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> WordPieceVocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& chunk : split_chunks(text)) {
    std::size_t pos = 0;
    while (pos < chunk.size()) {
      std::size_t len = std::min(longest_, chunk.size() - pos);
      int found = -1;
      for (; len > 0; --len) {
        found = id(std::string_view(chunk).substr(pos, len));
        if (found >= static_cast<int>(kNumSpecials)) break;
        found = -1;
      }
      if (found < 0) {
        ids.push_back(model::kUnk);
        pos += 1;
      } else {
        ids.push_back(found);
        pos += len;
      }
    }
  }
  return ids;
}

std::string WordPieceVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (i < static_cast<int>(kNumSpecials) || static_cast<std::size_t>(i) >= units_.size()) continue;
    out += units_[i];
  }
  return out;
}

std::vector<int> WordPieceVocab::encode_transcript(std::string_view text) const {
  std::vector<int> ids = encode(text);
  ids.push_back(model::kEos);
  return ids;
}

WordPieceVocab build_vocab(const std::vector<std::string>& corpus, std::size_t size) {
  std::set<char> alphabet;
  std::map<std::string, std::size_t> chunk_counts;
  for (const std::string& line : corpus) {
    for (char ch : line) alphabet.insert(ch);
    for (const std::string& c : split_chunks(line)) ++chunk_counts[c];
  }
  if (alphabet.empty()) throw ConfigError("build_vocab: empty corpus");
  if (size < alphabet.size() + kNumSpecials) {
    throw ConfigError("build_vocab: size " + std::to_string(size) + " is below alphabet (" +
                      std::to_string(alphabet.size()) + ") + 3 specials");
  }
  std::vector<std::string> units(kSpecials, kSpecials + kNumSpecials);
  for (char ch : alphabet) units.emplace_back(1, ch);

  // Each distinct chunk as a sequence of current units, with its count.
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [chunk, count] : chunk_counts) {
    std::vector<std::string> pieces;
    for (char ch : chunk) pieces.emplace_back(1, ch);
    words.emplace_back(std::move(pieces), count);
  }

  while (units.size() < size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [pieces, count] : words)
      for (std::size_t i = 0; i + 1 < pieces.size(); ++i) pairs[{pieces[i], pieces[i + 1]}] += count;
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const std::string merged = best->first.first + best->first.second;
    units.push_back(merged);
    for (auto& [pieces, count] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (i + 1 < pieces.size() && pieces[i] == best->first.first && pieces[i + 1] == best->first.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(pieces[i]);
        }
      }
      pieces = std::move(next);
    }
  }
  return WordPieceVocab(std::move(units));
}

}  // namespace adaptlab::corpus
