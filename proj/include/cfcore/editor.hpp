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

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfcore/dataset.hpp"
#include "cfcore/error.hpp"
#include "cfcore/http_client.hpp"

namespace cfcore {

enum class SlotKind { kContext, kOriginalLabel, kTargetLabel, kKeywords };

// One rendered line of a demonstration or test instance: "<label> <value>".
struct TemplateSlot {
  SlotKind kind = SlotKind::kContext;
  std::string field;  // context slots: "text_a" or "text_b"
  std::string label;
};

struct Demonstration {
  std::map<std::string, std::string> context_fields;
  std::string original_label;
  std::string target_label;
  std::vector<std::string> keyword_list;
  std::string edited;
};

struct PromptTemplate {
  Task task = Task::kNli;
  std::string instructions;
  std::string instructions_without_keywords;
  std::vector<TemplateSlot> slots;
  std::string edited_label;   // e.g. "modified sentence 2:"
  std::string editable_field; // context field the edit rewrites
  std::vector<Demonstration> demonstrations;

  const std::string& keywords_label() const;
};

void validate(const PromptTemplate& t);

PromptTemplate template_from_json(const nlohmann::json& j);
PromptTemplate load_template(const std::filesystem::path& path);
// The shipped template for a task (four NLI demonstrations, two sentiment).
PromptTemplate builtin_template(Task task);

// nli: entailment -> "definitely True", contradiction -> "definitely False";
// sentiment labels are rendered unchanged.
std::string label_wording(Task task, std::string_view label);

// ['w1', 'w2', ...]
std::string format_keyword_list(std::span<const std::string> keywords);

// Instructions, a blank line, each demonstration followed by a blank line,
// then the test instance ending at the edited-text label. Every slot line is
// "<label> <value>\n".
std::string build_prompt(const PromptTemplate& t, const LabeledExample& instance,
                         std::span<const std::string> keywords, std::string_view target_label);

// Keyword-free variant: keyword lines are dropped from every block and the
// keyword-free instructions are used.
std::string build_prompt_without_keywords(const PromptTemplate& t, const LabeledExample& instance,
                                          std::string_view target_label);

struct EditParams {
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 256;
  std::vector<std::string> stop_sequences = {"\n"};
};

void validate(const EditParams& p);

struct EditRequest {
  std::string prompt;
  EditParams params;
  // Not sent to remote backends; the mock editor uses them.
  std::string original;
  std::vector<std::string> keywords;
  int sample = 0;  // distinguishes repeated completions of one prompt
};

// Stable key derived from the prompt and decoding parameters, sent as the
// Idempotency-Key header so retried requests can be deduplicated.
std::string request_key(const EditRequest& req);

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const EditRequest& req) = 0;
  virtual std::string name() const = 0;
};

// Returns the original text followed by each keyword, space separated.
class MockLlmBackend final : public LlmBackend {
 public:
  std::string complete(const EditRequest& req) override;
  std::string name() const override { return "mock"; }
};

// Client for POST {"prompt", "temperature", "top_p", "max_tokens", "stop"}
// -> {"completion"}.
class RemoteLlmBackend final : public LlmBackend {
 public:
  RemoteLlmBackend(const std::string& endpoint, http::RetryPolicy retry = {},
                   const std::optional<std::string>& auth_env_var = std::nullopt);
  std::string complete(const EditRequest& req) override;
  std::string name() const override { return "remote:" + url_; }
  int last_attempts() const;

 private:
  std::string url_;
  http::Endpoint endpoint_;
  http::RetryPolicy retry_;
  std::map<std::string, std::string> headers_;
  mutable std::mutex mu_;
  int last_attempts_ = 0;
};

class EmptyCompletionError : public Error {
 public:
  using Error::Error;
};

// Backend completion, verbatim. Throws EmptyCompletionError for a blank one.
std::string request_edit(const EditRequest& req, LlmBackend& backend);

struct ParsedEdit {
  std::string text;
  std::optional<std::string> failure;  // "empty" or "identical_to_original"

  bool ok() const { return !failure.has_value(); }
};

// Drops everything up to and including the last edited-text label the
// backend may have echoed, trims, and flags empty or unchanged output.
ParsedEdit parse_edit(std::string_view raw, const PromptTemplate& t, std::string_view original);

// Spaces calls at least 60/per_minute seconds apart; 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double per_minute);
  void acquire();

 private:
  std::chrono::nanoseconds interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_;
};

}  // namespace cfcore
