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

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfcore/dataset.hpp"

namespace cfcore {

// Token-level edit distance over whitespace tokens, case-sensitive.
std::size_t token_levenshtein(std::span<const std::string> a, std::span<const std::string> b);

// token_levenshtein / max(token counts); 0 when both texts are empty.
double norm_levenshtein(std::string_view original, std::string_view edited);

// BLEU of `edited` against `original` as the single reference. Orders
// 1..min(4, |edited|); orders >= 2 use add-one smoothing; brevity penalty when
// the candidate is shorter. An empty candidate scores 0.
double self_bleu(std::string_view original, std::string_view edited);

enum class PerturbationType { kNegation, kInsertion, kDelete, kLexical, kResemantic, kQuantifier, kRestructure,
                              kUnchanged, kUnk };

inline constexpr std::array<PerturbationType, 9> kPerturbationTypes = {
    PerturbationType::kNegation,   PerturbationType::kInsertion,   PerturbationType::kDelete,
    PerturbationType::kLexical,    PerturbationType::kResemantic,  PerturbationType::kQuantifier,
    PerturbationType::kRestructure, PerturbationType::kUnchanged,  PerturbationType::kUnk};

std::string_view to_string(PerturbationType t);
PerturbationType parse_perturbation_type(std::string_view s);

// A maximal run of unmatched tokens between two LCS anchors.
struct EditRegion {
  std::vector<std::string> removed;  // from the original
  std::vector<std::string> added;    // in the edit
};

// LCS alignment of whitespace tokens; regions appear in text order.
std::vector<EditRegion> edit_regions(std::span<const std::string> original, std::span<const std::string> edited);

bool is_negation_word(std::string_view token);
bool is_quantifier_word(std::string_view token);

// Rules, first match wins: no regions -> unchanged; a region changes the
// number of negation words -> negation; a substitution region touches a
// quantifier or numeral -> quantifier; same token multiset in another order
// -> restructure; only insertions -> insertion; only deletions -> delete; one
// 1:1 substitution -> lexical; one longer substitution -> resemantic;
// otherwise unk.
PerturbationType classify_perturbation(std::string_view original, std::string_view edited);

struct LabeledText {
  std::string text;
  std::string label;
};

struct TokenBiasEntry {
  std::string token;
  std::size_t count = 0;        // examples containing the token
  std::size_t class_count = 0;  // of those, examples with the designated label
  double z = 0.0;
  bool flagged = false;

  friend bool operator==(const TokenBiasEntry&, const TokenBiasEntry&) = default;
};

// Two-sided normal critical value for family-wise alpha over `tests` tests.
double bonferroni_threshold(std::size_t tests, double alpha = 0.01);

// Binomial z of each token's co-occurrence with `designated_class`. Tokens are
// lowercased and punctuation-stripped and counted once per example; only
// tokens in at least `min_count` examples are tested, and the Bonferroni
// correction divides alpha by the number of tested tokens. Sorted by |z|
// descending, then token.
std::vector<TokenBiasEntry> z_statistics(std::span<const LabeledText> data, std::string_view designated_class,
                                         std::size_t min_count = 10, double alpha = 0.01);

struct PairedExample {
  std::string id;
  std::string original;
  std::string edited;
  std::string original_label;
  std::string new_label;
};

void validate(std::span<const PairedExample> corpus);

struct PairMetrics {
  double self_bleu = 0.0;
  double levenshtein = 0.0;
  PerturbationType type = PerturbationType::kUnk;
};

PairMetrics pair_metrics(std::string_view original, std::string_view edited);
RecordMetrics to_record_metrics(const PairMetrics& m);

struct TokenBiasInput {
  std::vector<LabeledText> data;
  std::string designated_class;
  std::size_t min_count = 10;
};

struct MetricsReport {
  std::size_t count = 0;
  double mean_self_bleu = 0.0;
  double mean_levenshtein = 0.0;
  std::map<PerturbationType, std::size_t> histogram;  // every type, zero included
  std::vector<TokenBiasEntry> token_bias;
  std::optional<std::string> designated_class;
  std::optional<double> bias_threshold;
};

// Per-pair metrics run on `threads` workers; the reduction is done in corpus
// order, so the result does not depend on the thread count.
MetricsReport aggregate_report(std::span<const PairedExample> corpus, const std::optional<TokenBiasInput>& label_data,
                               int threads = 1);

nlohmann::ordered_json to_json(const MetricsReport& report);
// Aligned plain-text rendering: summary, histogram and the top bias rows.
std::string to_text_table(const MetricsReport& report, std::size_t max_bias_rows = 20);
// token,count,class_count,z,flagged
std::string token_bias_csv(std::span<const TokenBiasEntry> rows);

// Qualitative ordering expected of real edits: raw retrieved text shares
// almost nothing with the original, minimal edits share a lot, the original
// itself scores 1.
struct OrderingCheck {
  double retrieved_only = 0.0;
  double core = 0.0;
  double identity = 1.0;
  bool holds = false;
};

OrderingCheck check_intrinsic_ordering(double retrieved_only_self_bleu, double core_self_bleu);

// Pairs from generated records; failed records are skipped.
std::vector<PairedExample> paired_corpus(std::span<const CounterfactualRecord> records);

}  // namespace cfcore
