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

#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cfcore {

struct StopLists {
  std::set<std::string> determiners;
  std::set<std::string> conjunctions;
};

struct PolarityLexicon {
  std::set<std::string> positive_words;
  std::set<std::string> negative_words;
};

void validate(const StopLists& stops);
void validate(const PolarityLexicon& lexicon);

// One word per line, '#' starts a comment, blank lines ignored. Entries are
// lowercased.
std::set<std::string> parse_word_list(std::string_view contents);
std::set<std::string> load_word_list(const std::filesystem::path& path);

// Built-in lists shipped under data/.
StopLists default_stop_lists();
PolarityLexicon default_lexicon();

StopLists load_stop_lists(const std::filesystem::path& determiners, const std::filesystem::path& conjunctions);
PolarityLexicon load_lexicon(const std::filesystem::path& positive, const std::filesystem::path& negative);

// Splits after '.', '!' or '?' when followed by whitespace, except after the
// abbreviations Mr. Mrs. Dr. vs. e.g. i.e. etc. Sentences are returned as
// substrings of the input; a trailing fragment is kept.
std::vector<std::string> split_sentences(std::string_view text);

// Sentences ranked by lexicon hits (lowercased, punctuation-stripped tokens),
// keeping at most max_sentences with at least min_hits, returned in document
// order.
std::vector<std::string> select_polarity_sentences(std::string_view review, const PolarityLexicon& lexicon,
                                                   std::size_t min_hits = 1, std::size_t max_sentences = 4);

constexpr std::size_t kDefaultKeywordCap = 12;

// Whitespace tokens with edge punctuation stripped, minus determiners and
// conjunctions, deduplicated case-insensitively (first surface form wins),
// capped at max_keywords. May be empty.
std::vector<std::string> extract_keywords(std::span<const std::string> excerpts, const StopLists& stops,
                                          std::size_t max_keywords = kDefaultKeywordCap);

}  // namespace cfcore
