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

#include "cfcore/dataset.hpp"

#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace {

constexpr std::array<std::string_view, 2> kSentimentLabels = {"Positive", "Negative"};
constexpr std::array<std::string_view, 2> kNliLabels = {"entailment", "contradiction"};
constexpr std::string_view kSepToken = "[SEP]";

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string required_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_array()) throw ValidationError(std::string("field '") + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

bool blank(std::string_view s) { return text::trim(s).empty(); }

void write_lines(const std::filesystem::path& path, const std::vector<ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out.push_back('\n');
  }
  binary::write_file_atomic(path, out);
}

// Wraps per-line conversion so that validation failures carry the location.
template <typename T, typename Fn>
std::vector<T> load_lines(const std::filesystem::path& path, Fn&& convert) {
  std::vector<T> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    try {
      out.push_back(convert(j));
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return out;
}

}  // namespace

std::string_view to_string(Task task) { return task == Task::kNli ? "nli" : "sentiment"; }

Task parse_task(std::string_view s) {
  if (s == "nli") return Task::kNli;
  if (s == "sentiment") return Task::kSentiment;
  throw ValidationError("unknown task '" + std::string(s) + "' (expected sentiment or nli)");
}

std::span<const std::string_view> label_set(Task task) {
  if (task == Task::kNli) return kNliLabels;
  return kSentimentLabels;
}

bool is_valid_label(Task task, std::string_view label) {
  for (auto l : label_set(task)) {
    if (l == label) return true;
  }
  return false;
}

std::string opposite_label(Task task, std::string_view label) {
  const auto labels = label_set(task);
  if (label == labels[0]) return std::string(labels[1]);
  if (label == labels[1]) return std::string(labels[0]);
  throw ValidationError("label '" + std::string(label) + "' is not in the " +
                        std::string(to_string(task)) + " label set");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kRetrievedOnly:
      return "retrieved_only";
    case Stage::kGptOnly:
      return "gpt_only";
    case Stage::kCore:
      return "core";
  }
  return "core";
}

Stage parse_stage(std::string_view s) {
  if (s == "retrieved_only") return Stage::kRetrievedOnly;
  if (s == "gpt_only") return Stage::kGptOnly;
  if (s == "core") return Stage::kCore;
  throw ValidationError("unknown stage '" + std::string(s) + "'");
}

void validate(const LabeledExample& ex) {
  if (ex.id.empty()) throw ValidationError("example with empty id (field 'id')");
  auto fail = [&](const std::string& field, const std::string& msg) {
    throw ValidationError("example '" + ex.id + "': field '" + field + "' " + msg);
  };
  if (blank(ex.text_a)) fail("text_a", "is empty");
  if (ex.task == Task::kNli) {
    if (!ex.text_b) fail("text_b", "is required for nli");
    if (blank(*ex.text_b)) fail("text_b", "is empty");
  } else if (ex.text_b) {
    fail("text_b", "must be absent for sentiment");
  }
  if (!is_valid_label(ex.task, ex.label)) {
    fail("label", "has value '" + ex.label + "' outside the " + std::string(to_string(ex.task)) +
                      " label set");
  }
}

void validate(const CorpusDocument& doc) {
  if (doc.doc_id.empty()) throw ValidationError("corpus document with empty doc_id");
  if (text::normalize_whitespace(doc.text).empty()) {
    throw ValidationError("corpus document '" + doc.doc_id + "': field 'text' is empty");
  }
}

void validate(const TripletRecord& t) {
  if (t.positive == t.query) throw ValidationError("triplet positive equals its query: '" + t.query + "'");
  if (t.hard_negatives.empty()) throw ValidationError("triplet has no hard negatives: '" + t.query + "'");
  for (const auto& n : t.hard_negatives) {
    if (n == t.positive) throw ValidationError("triplet hard negative equals its positive: '" + n + "'");
  }
}

void validate(const CounterfactualRecord& r) {
  if (r.source_id.empty()) throw ValidationError("counterfactual record with empty source_id");
  if (r.target_label == r.original_label) {
    throw ValidationError("record '" + r.source_id + "': target_label equals original_label ('" +
                          r.target_label + "')");
  }
  if (r.stage == Stage::kCore && (r.keywords.empty() || r.retrieved_doc_ids.empty())) {
    throw ValidationError("record '" + r.source_id +
                          "': stage core requires non-empty keywords and retrieved_doc_ids");
  }
}

ordered_json to_json(const LabeledExample& ex) {
  ordered_json j;
  j["id"] = ex.id;
  j["task"] = std::string(to_string(ex.task));
  j["text_a"] = ex.text_a;
  if (ex.text_b) j["text_b"] = *ex.text_b;
  j["label"] = ex.label;
  return j;
}

ordered_json to_json(const CorpusDocument& doc) {
  ordered_json j;
  j["doc_id"] = doc.doc_id;
  j["text"] = doc.text;
  j["source"] = doc.source;
  return j;
}

ordered_json to_json(const TripletRecord& t) {
  ordered_json j;
  j["query"] = t.query;
  j["positive"] = t.positive;
  j["hard_negatives"] = t.hard_negatives;
  return j;
}

ordered_json to_json(const CounterfactualRecord& r) {
  ordered_json j;
  j["source_id"] = r.source_id;
  j["original_text"] = r.original_text;
  j["edited_text"] = r.edited_text;
  j["original_label"] = r.original_label;
  j["target_label"] = r.target_label;
  j["keywords"] = r.keywords;
  j["retrieved_doc_ids"] = r.retrieved_doc_ids;
  j["stage"] = std::string(to_string(r.stage));
  if (r.metrics) {
    ordered_json m;
    m["self_bleu"] = r.metrics->self_bleu;
    m["levenshtein"] = r.metrics->levenshtein;
    m["perturbation_type"] = r.metrics->perturbation_type;
    j["metrics"] = std::move(m);
  } else {
    j["metrics"] = nullptr;
  }
  j["context"] = r.context ? ordered_json(*r.context) : ordered_json(nullptr);
  j["failure_reason"] = r.failure_reason ? ordered_json(*r.failure_reason) : ordered_json(nullptr);
  return j;
}

LabeledExample example_from_json(const json& j, std::optional<Task> task) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  LabeledExample ex;
  ex.id = required_string(j, "id");
  if (auto t = optional_string(j, "task")) {
    ex.task = parse_task(*t);
    if (task && *task != ex.task) {
      throw ValidationError("example '" + ex.id + "': field 'task' is '" + *t + "' but '" +
                            std::string(to_string(*task)) + "' was requested");
    }
  } else if (task) {
    ex.task = *task;
  } else {
    throw ValidationError("example '" + ex.id + "': missing field 'task'");
  }
  ex.text_a = required_string(j, "text_a");
  ex.text_b = optional_string(j, "text_b");
  ex.label = required_string(j, "label");
  validate(ex);
  return ex;
}

CorpusDocument document_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  CorpusDocument doc{required_string(j, "doc_id"), required_string(j, "text"),
                     optional_string(j, "source").value_or("")};
  validate(doc);
  return doc;
}

TripletRecord triplet_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  TripletRecord t{required_string(j, "query"), required_string(j, "positive"),
                  string_list(j, "hard_negatives")};
  validate(t);
  return t;
}

CounterfactualRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  CounterfactualRecord r;
  r.source_id = required_string(j, "source_id");
  r.original_text = required_string(j, "original_text");
  r.edited_text = required_string(j, "edited_text");
  r.original_label = required_string(j, "original_label");
  r.target_label = required_string(j, "target_label");
  r.keywords = string_list(j, "keywords");
  r.retrieved_doc_ids = string_list(j, "retrieved_doc_ids");
  r.stage = parse_stage(required_string(j, "stage"));
  if (auto it = j.find("metrics"); it != j.end() && !it->is_null()) {
    RecordMetrics m;
    m.self_bleu = it->at("self_bleu").get<double>();
    m.levenshtein = it->at("levenshtein").get<double>();
    m.perturbation_type = it->at("perturbation_type").get<std::string>();
    r.metrics = std::move(m);
  }
  r.context = optional_string(j, "context");
  r.failure_reason = optional_string(j, "failure_reason");
  validate(r);
  return r;
}

void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), lineno, std::string("invalid JSON: ") + e.what());
    }
    fn(j, lineno);
  }
}

std::vector<LabeledExample> load_examples(const std::filesystem::path& path, Task task) {
  auto out = load_lines<LabeledExample>(path, [&](const json& j) { return example_from_json(j, task); });
  std::set<std::string> seen;
  for (const auto& ex : out) {
    if (!seen.insert(ex.id).second) throw ValidationError("duplicate example id '" + ex.id + "' in " + path.string());
    if (ex.task == Task::kNli && (ex.text_a.find(kSepToken) != std::string::npos ||
                                  ex.text_b->find(kSepToken) != std::string::npos)) {
      spdlog::warn("example '{}' contains the literal {} token", ex.id, kSepToken);
    }
  }
  return out;
}

std::vector<CorpusDocument> load_corpus(const std::filesystem::path& path) {
  auto out = load_lines<CorpusDocument>(path, document_from_json);
  std::set<std::string> seen;
  for (const auto& d : out) {
    if (!seen.insert(d.doc_id).second) throw ValidationError("duplicate doc_id '" + d.doc_id + "' in " + path.string());
  }
  return out;
}

std::vector<SeedPair> load_seed_pairs(const std::filesystem::path& path) {
  std::size_t n = 0;
  return load_lines<SeedPair>(path, [&](const json& j) {
    ++n;
    SeedPair p;
    p.id = optional_string(j, "id").value_or("seed-" + std::to_string(n));
    p.query = required_string(j, "query");
    p.positive = required_string(j, "positive");
    return p;
  });
}

std::map<std::string, std::string> load_paraphrases(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    try {
      out[required_string(j, "query")] = required_string(j, "paraphrase");
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return out;
}

std::vector<TripletRecord> load_triplets(const std::filesystem::path& path) {
  return load_lines<TripletRecord>(path, triplet_from_json);
}

std::vector<CounterfactualRecord> load_records(const std::filesystem::path& path) {
  return load_lines<CounterfactualRecord>(path, record_from_json);
}

void write_examples(std::span<const LabeledExample> examples, const std::filesystem::path& path) {
  std::vector<ordered_json> rows;
  for (const auto& ex : examples) {
    validate(ex);
    rows.push_back(to_json(ex));
  }
  write_lines(path, rows);
}

void write_corpus(std::span<const CorpusDocument> docs, const std::filesystem::path& path) {
  std::vector<ordered_json> rows;
  for (const auto& d : docs) {
    validate(d);
    rows.push_back(to_json(d));
  }
  write_lines(path, rows);
}

void write_triplets(std::span<const TripletRecord> triplets, const std::filesystem::path& path) {
  std::vector<ordered_json> rows;
  for (const auto& t : triplets) {
    validate(t);
    rows.push_back(to_json(t));
  }
  write_lines(path, rows);
}

void write_records(std::span<const CounterfactualRecord> records, const std::filesystem::path& path) {
  for (const auto& r : records) validate(r);
  std::vector<ordered_json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_lines(path, rows);
}

std::string build_query_text(const LabeledExample& ex) {
  validate(ex);
  if (ex.task == Task::kSentiment) return ex.text_a;
  return ex.text_a + " " + std::string(kSepToken) + " " + *ex.text_b;
}

TripletBuild build_triplets(std::span<const SeedPair> seed_pairs,
                            const std::map<std::string, std::string>& paraphrases) {
  TripletBuild out;
  for (const auto& p : seed_pairs) {
    if (blank(p.query)) throw ValidationError("seed pair '" + p.id + "': field 'query' is empty");
    if (p.positive == p.query) {
      spdlog::warn("seed pair '{}' rejected: positive equals query", p.id);
      out.rejected.push_back(p.id);
      continue;
    }
    TripletRecord t{p.query, p.positive, {}};
    if (auto it = paraphrases.find(p.query); it != paraphrases.end() && it->second != p.positive) {
      t.hard_negatives = {it->second, p.query};
    } else {
      spdlog::warn("seed pair '{}' has no usable paraphrase; using the query as the only hard negative", p.id);
      out.missing_paraphrase.push_back(p.id);
      t.hard_negatives = {p.query};
    }
    out.triplets.push_back(std::move(t));
  }
  return out;
}

}  // namespace cfcore
