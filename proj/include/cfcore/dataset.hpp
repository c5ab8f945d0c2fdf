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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfcore {

enum class Task { kSentiment, kNli };

std::string_view to_string(Task task);
Task parse_task(std::string_view s);

// The two labels a task may carry, in a fixed order. NLI excludes neutral.
std::span<const std::string_view> label_set(Task task);
bool is_valid_label(Task task, std::string_view label);
// The other label of a binary task.
std::string opposite_label(Task task, std::string_view label);

struct LabeledExample {
  std::string id;
  Task task = Task::kSentiment;
  std::string text_a;  // review, or premise
  std::optional<std::string> text_b;  // hypothesis; present iff task == kNli
  std::string label;

  // The field a counterfactual edit rewrites: the hypothesis for NLI, the
  // review for sentiment.
  const std::string& editable_text() const { return task == Task::kNli ? *text_b : text_a; }

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct CorpusDocument {
  std::string doc_id;
  std::string text;
  std::string source;

  friend bool operator==(const CorpusDocument&, const CorpusDocument&) = default;
};

struct TripletRecord {
  std::string query;
  std::string positive;
  std::vector<std::string> hard_negatives;

  friend bool operator==(const TripletRecord&, const TripletRecord&) = default;
};

// One row of the seed set T: a query and its human-authored counterfactual.
struct SeedPair {
  std::string id;
  std::string query;
  std::string positive;
};

enum class Stage { kRetrievedOnly, kGptOnly, kCore };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view s);

struct RecordMetrics {
  double self_bleu = 0.0;
  double levenshtein = 0.0;
  std::string perturbation_type;

  friend bool operator==(const RecordMetrics&, const RecordMetrics&) = default;
};

struct CounterfactualRecord {
  std::string source_id;
  std::string original_text;
  std::string edited_text;
  std::string original_label;
  std::string target_label;
  std::vector<std::string> keywords;
  std::vector<std::string> retrieved_doc_ids;
  Stage stage = Stage::kCore;
  std::optional<RecordMetrics> metrics;
  // Unedited context shown to the editor (the premise for NLI).
  std::optional<std::string> context;
  // Set when the edit failed; the record is kept for auditing.
  std::optional<std::string> failure_reason;

  bool ok() const { return !failure_reason.has_value(); }

  friend bool operator==(const CounterfactualRecord&, const CounterfactualRecord&) = default;
};

// Throws ValidationError naming the id and offending field.
void validate(const LabeledExample& ex);
void validate(const CorpusDocument& doc);
void validate(const TripletRecord& t);
void validate(const CounterfactualRecord& r);

// JSON conversion. Output objects use a fixed key order.
nlohmann::ordered_json to_json(const LabeledExample& ex);
nlohmann::ordered_json to_json(const CorpusDocument& doc);
nlohmann::ordered_json to_json(const TripletRecord& t);
nlohmann::ordered_json to_json(const CounterfactualRecord& r);
LabeledExample example_from_json(const nlohmann::json& j, std::optional<Task> task);
CorpusDocument document_from_json(const nlohmann::json& j);
TripletRecord triplet_from_json(const nlohmann::json& j);
CounterfactualRecord record_from_json(const nlohmann::json& j);

// Calls fn(object, line_number) for every non-blank line. Parse errors are
// reported as ParseError with the line number.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&, std::size_t)>& fn);

// Loads and validates a dataset; duplicate ids are rejected. Lines that carry
// a "task" field must agree with `task`.
std::vector<LabeledExample> load_examples(const std::filesystem::path& path, Task task);
std::vector<CorpusDocument> load_corpus(const std::filesystem::path& path);
std::vector<SeedPair> load_seed_pairs(const std::filesystem::path& path);
// Lines of {"query": ..., "paraphrase": ...}.
std::map<std::string, std::string> load_paraphrases(const std::filesystem::path& path);
std::vector<TripletRecord> load_triplets(const std::filesystem::path& path);
std::vector<CounterfactualRecord> load_records(const std::filesystem::path& path);

void write_examples(std::span<const LabeledExample> examples, const std::filesystem::path& path);
void write_corpus(std::span<const CorpusDocument> docs, const std::filesystem::path& path);
void write_triplets(std::span<const TripletRecord> triplets, const std::filesystem::path& path);
// Validates every record before writing anything.
void write_records(std::span<const CounterfactualRecord> records, const std::filesystem::path& path);

// Text fed to the retriever's query encoder: the review itself, or
// "premise [SEP] hypothesis" for NLI.
std::string build_query_text(const LabeledExample& ex);

struct TripletBuild {
  std::vector<TripletRecord> triplets;
  std::vector<std::string> missing_paraphrase;  // seed ids that fell back to [query]
  std::vector<std::string> rejected;            // seed ids whose positive equals the query
};

// Hard negatives are [paraphrase(query), query]; without a paraphrase the
// query alone is used and the seed id is reported.
TripletBuild build_triplets(std::span<const SeedPair> seed_pairs,
                            const std::map<std::string, std::string>& paraphrases);

}  // namespace cfcore
