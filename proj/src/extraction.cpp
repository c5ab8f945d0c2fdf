// Copyright 2026 The cfcore Authors
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

#include "cfcore/extraction.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "cfcore/binary_io.hpp"
#include "cfcore/embedded_data.hpp"
#include "cfcore/error.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace {

constexpr std::array<std::string_view, 7> kAbbreviations = {"mr.", "mrs.", "dr.", "vs.", "e.g.", "i.e.", "etc."};

std::set<std::string> embedded_list(std::string_view name) {
  const auto contents = data::embedded_file(name);
  if (!contents) throw IoError("missing built-in data file " + std::string(name));
  return parse_word_list(*contents);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool ends_sentence(std::string_view token) {
  const char last = token.back();
  if (last != '.' && last != '!' && last != '?') return false;
  const auto lower = text::to_lower(token);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) == kAbbreviations.end();
}

}  // namespace

void validate(const StopLists& stops) {
  for (const auto* set : {&stops.determiners, &stops.conjunctions}) {
    for (const auto& w : *set) {
      if (w != text::to_lower(w)) throw ValidationError("stop list entry '" + w + "' is not lowercase");
    }
  }
  for (const auto& w : stops.determiners) {
    if (stops.conjunctions.count(w)) throw ValidationError("'" + w + "' is both a determiner and a conjunction");
  }
}

void validate(const PolarityLexicon& lexicon) {
  if (lexicon.positive_words.empty() || lexicon.negative_words.empty()) {
    throw ValidationError("polarity lexicon needs both positive and negative words");
  }
  for (const auto& w : lexicon.positive_words) {
    if (lexicon.negative_words.count(w)) throw ValidationError("'" + w + "' is both positive and negative");
  }
}

std::set<std::string> parse_word_list(std::string_view contents) {
  std::set<std::string> out;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    auto line = contents.substr(pos, nl - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (!line.empty()) out.insert(text::to_lower(line));
    pos = nl + 1;
  }
  return out;
}

std::set<std::string> load_word_list(const std::filesystem::path& path) {
  return parse_word_list(binary::read_file(path));
}

StopLists default_stop_lists() {
  StopLists s{embedded_list("stoplists/determiners.txt"), embedded_list("stoplists/conjunctions.txt")};
  validate(s);
  return s;
}

PolarityLexicon default_lexicon() {
  PolarityLexicon l{embedded_list("lexicon/positive.txt"), embedded_list("lexicon/negative.txt")};
  validate(l);
  return l;
}

StopLists load_stop_lists(const std::filesystem::path& determiners, const std::filesystem::path& conjunctions) {
  StopLists s{load_word_list(determiners), load_word_list(conjunctions)};
  validate(s);
  return s;
}

PolarityLexicon load_lexicon(const std::filesystem::path& positive, const std::filesystem::path& negative) {
  PolarityLexicon l{load_word_list(positive), load_word_list(negative)};
  validate(l);
  return l;
}

std::vector<std::string> split_sentences(std::string_view input) {
  std::vector<std::string> out;
  std::size_t i = 0;
  std::size_t sentence_start = std::string_view::npos;
  while (i < input.size()) {
    while (i < input.size() && is_space(input[i])) ++i;
    if (i >= input.size()) break;
    const std::size_t tok_start = i;
    while (i < input.size() && !is_space(input[i])) ++i;
    if (sentence_start == std::string_view::npos) sentence_start = tok_start;
    const auto token = input.substr(tok_start, i - tok_start);
    // Only split when whitespace follows; the final token closes the text anyway.
    if (i < input.size() && ends_sentence(token)) {
      out.emplace_back(input.substr(sentence_start, i - sentence_start));
      sentence_start = std::string_view::npos;
    }
  }
  if (sentence_start != std::string_view::npos) {
    out.emplace_back(text::trim(input.substr(sentence_start)));
  }
  return out;
}

std::vector<std::string> select_polarity_sentences(std::string_view review, const PolarityLexicon& lexicon,
                                                   std::size_t min_hits, std::size_t max_sentences) {
  validate(lexicon);
  const auto sentences = split_sentences(review);
  std::vector<std::size_t> hits(sentences.size(), 0);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    for (const auto& tok : text::normalized_tokens(sentences[s])) {
      if (lexicon.positive_words.count(tok) || lexicon.negative_words.count(tok)) ++hits[s];
    }
  }
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hits[a] > hits[b]; });
  std::vector<std::size_t> keep;
  for (auto s : order) {
    if (keep.size() >= max_sentences) break;
    if (hits[s] >= std::max<std::size_t>(min_hits, 1)) keep.push_back(s);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<std::string> out;
  for (auto s : keep) out.push_back(sentences[s]);
  return out;
}

std::vector<std::string> extract_keywords(std::span<const std::string> excerpts, const StopLists& stops,
                                          std::size_t max_keywords) {
  if (excerpts.empty()) throw ValidationError("extract_keywords: no excerpts");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& excerpt : excerpts) {
    for (const auto& raw : text::split_whitespace(excerpt)) {
      if (out.size() >= max_keywords) return out;
      auto tok = text::strip_punctuation(raw);
      if (tok.empty()) continue;
      const auto lower = text::to_lower(tok);
      if (stops.determiners.count(lower) || stops.conjunctions.count(lower)) continue;
      if (!seen.insert(lower).second) continue;
      out.push_back(std::move(tok));
    }
  }
  return out;
}

}  // namespace cfcore
