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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cfcore::text {

// Whitespace tokenization (ASCII space, tab, newline, CR, VT, FF).
std::vector<std::string> split_whitespace(std::string_view s);

std::string_view trim(std::string_view s);

// Collapses internal whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);

// ASCII lowercase; non-ASCII bytes are left untouched.
std::string to_lower(std::string_view s);

// True for ASCII punctuation and the Unicode punctuation ranges we recognise
// (Latin-1 punctuation, General Punctuation, CJK symbols and punctuation,
// fullwidth ASCII punctuation).
bool is_punctuation(char32_t cp);

// Removes leading and trailing punctuation code points. Invalid UTF-8 bytes
// are treated as non-punctuation.
std::string strip_punctuation(std::string_view token);

// True when every code point in the token is punctuation (or it is empty).
bool is_all_punctuation(std::string_view token);

// Lowercase + punctuation-strip, dropping tokens that become empty.
std::vector<std::string> normalized_tokens(std::string_view s);

bool contains_digit(std::string_view token);

bool ends_with(std::string_view s, std::string_view suffix);

// 64-bit FNV-1a.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

// Lowercase hex rendering of a 64-bit hash (16 chars).
std::string hex64(std::uint64_t v);

}  // namespace cfcore::text
