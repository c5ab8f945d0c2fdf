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

#include "cfcore/editor.hpp"

#include <algorithm>
#include <thread>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/embedded_data.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace {

SlotKind parse_slot_kind(const std::string& s) {
  if (s == "context") return SlotKind::kContext;
  if (s == "original_label") return SlotKind::kOriginalLabel;
  if (s == "target_label") return SlotKind::kTargetLabel;
  if (s == "keywords") return SlotKind::kKeywords;
  throw ValidationError("unknown template slot kind '" + s + "'");
}

struct BlockInput {
  const std::map<std::string, std::string>* context;
  std::string_view original_label;
  std::string_view target_label;
  std::span<const std::string> keywords;
};

void render_block(std::string& out, const PromptTemplate& t, const BlockInput& in, bool with_keywords) {
  for (const auto& slot : t.slots) {
    switch (slot.kind) {
      case SlotKind::kContext: {
        auto it = in.context->find(slot.field);
        if (it == in.context->end()) throw ValidationError("missing required context field '" + slot.field + "'");
        out += slot.label + " " + it->second + "\n";
        break;
      }
      case SlotKind::kOriginalLabel:
        out += slot.label + " " + label_wording(t.task, in.original_label) + "\n";
        break;
      case SlotKind::kTargetLabel:
        out += slot.label + " " + label_wording(t.task, in.target_label) + "\n";
        break;
      case SlotKind::kKeywords:
        if (with_keywords) out += slot.label + " " + format_keyword_list(in.keywords) + "\n";
        break;
    }
  }
}

std::map<std::string, std::string> instance_fields(const LabeledExample& ex) {
  std::map<std::string, std::string> m{{"text_a", ex.text_a}};
  if (ex.text_b) m["text_b"] = *ex.text_b;
  return m;
}

std::string render(const PromptTemplate& t, const LabeledExample& instance, std::span<const std::string> keywords,
                   std::string_view target_label, bool with_keywords) {
  validate(t);
  validate(instance);
  if (instance.task != t.task) throw ValidationError("template task does not match instance task");
  if (!is_valid_label(t.task, target_label)) {
    throw ValidationError("target label '" + std::string(target_label) + "' is not a " +
                          std::string(to_string(t.task)) + " label");
  }
  if (target_label == instance.label) {
    throw ValidationError("instance '" + instance.id + "': target label equals the current label");
  }
  std::string out = (with_keywords ? t.instructions : t.instructions_without_keywords) + "\n\n";
  for (const auto& d : t.demonstrations) {
    render_block(out, t, {&d.context_fields, d.original_label, d.target_label, d.keyword_list}, with_keywords);
    out += t.edited_label + " " + d.edited + "\n\n";
  }
  const auto fields = instance_fields(instance);
  render_block(out, t, {&fields, instance.label, target_label, keywords}, with_keywords);
  out += t.edited_label;
  return out;
}

}  // namespace

const std::string& PromptTemplate::keywords_label() const {
  for (const auto& s : slots) {
    if (s.kind == SlotKind::kKeywords) return s.label;
  }
  throw ValidationError("template has no keyword slot");
}

void validate(const PromptTemplate& t) {
  const std::size_t expected_demos = t.task == Task::kNli ? 4 : 2;
  if (t.demonstrations.size() != expected_demos) {
    throw ValidationError(std::string(to_string(t.task)) + " template must have " + std::to_string(expected_demos) +
                          " demonstrations, found " + std::to_string(t.demonstrations.size()));
  }
  if (t.instructions.empty()) throw ValidationError("template instructions are empty");
  if (t.edited_label.empty()) throw ValidationError("template edited-text label is empty");
  std::map<SlotKind, int> counts;
  bool editable_present = false;
  for (const auto& s : t.slots) {
    if (text::trim(s.label).empty()) throw ValidationError("template slot with empty field label");
    ++counts[s.kind];
    if (s.kind == SlotKind::kContext) {
      if (s.field != "text_a" && s.field != "text_b") throw ValidationError("unknown context field '" + s.field + "'");
      editable_present = editable_present || s.field == t.editable_field;
    }
  }
  if (counts[SlotKind::kKeywords] != 1 || counts[SlotKind::kOriginalLabel] != 1 || counts[SlotKind::kTargetLabel] != 1) {
    throw ValidationError("template needs exactly one keyword, original-label and target-label slot");
  }
  if (!editable_present) throw ValidationError("template editable field '" + t.editable_field + "' has no slot");
  for (const auto& d : t.demonstrations) {
    if (d.keyword_list.empty()) throw ValidationError("demonstration with an empty keyword list");
    if (text::trim(d.edited).empty()) throw ValidationError("demonstration with an empty edit");
    if (!is_valid_label(t.task, d.original_label) || !is_valid_label(t.task, d.target_label) ||
        d.original_label == d.target_label) {
      throw ValidationError("demonstration labels must be two different task labels");
    }
  }
}

PromptTemplate template_from_json(const nlohmann::json& j) {
  try {
    PromptTemplate t;
    t.task = parse_task(j.at("task").get<std::string>());
    t.instructions = j.at("instructions").get<std::string>();
    t.instructions_without_keywords = j.value("instructions_without_keywords", t.instructions);
    for (const auto& s : j.at("slots")) {
      t.slots.push_back({parse_slot_kind(s.at("kind").get<std::string>()), s.value("field", ""),
                         s.at("label").get<std::string>()});
    }
    t.edited_label = j.at("edited_label").get<std::string>();
    t.editable_field = j.at("editable_field").get<std::string>();
    for (const auto& d : j.at("demonstrations")) {
      t.demonstrations.push_back({d.at("context").get<std::map<std::string, std::string>>(),
                                  d.at("original_label").get<std::string>(), d.at("target_label").get<std::string>(),
                                  d.at("keywords").get<std::vector<std::string>>(), d.at("edited").get<std::string>()});
    }
    validate(t);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed prompt template: ") + e.what());
  }
}

PromptTemplate load_template(const std::filesystem::path& path) {
  try {
    return template_from_json(nlohmann::json::parse(binary::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

PromptTemplate builtin_template(Task task) {
  const auto name = task == Task::kNli ? "templates/nli.json" : "templates/sentiment.json";
  const auto contents = data::embedded_file(name);
  if (!contents) throw IoError(std::string("missing built-in template ") + name);
  return template_from_json(nlohmann::json::parse(*contents));
}

std::string label_wording(Task task, std::string_view label) {
  if (!is_valid_label(task, label)) {
    throw ValidationError("unknown " + std::string(to_string(task)) + " label '" + std::string(label) + "'");
  }
  if (task == Task::kNli) return label == "entailment" ? "definitely True" : "definitely False";
  return std::string(label);
}

std::string format_keyword_list(std::span<const std::string> keywords) {
  std::string out = "[";
  for (std::size_t i = 0; i < keywords.size(); ++i) {
    if (i > 0) out += ", ";
    out += "'" + keywords[i] + "'";
  }
  out += "]";
  return out;
}

std::string build_prompt(const PromptTemplate& t, const LabeledExample& instance,
                         std::span<const std::string> keywords, std::string_view target_label) {
  if (keywords.empty()) throw ValidationError("build_prompt: keyword list is empty (use the keyword-free prompt)");
  return render(t, instance, keywords, target_label, true);
}

std::string build_prompt_without_keywords(const PromptTemplate& t, const LabeledExample& instance,
                                          std::string_view target_label) {
  return render(t, instance, {}, target_label, false);
}

void validate(const EditParams& p) {
  if (!(p.temperature >= 0.0 && p.temperature <= 2.0)) throw ValidationError("temperature must lie in [0, 2]");
  if (!(p.top_p > 0.0 && p.top_p <= 1.0)) throw ValidationError("top_p must lie in (0, 1]");
  if (p.max_tokens < 1) throw ValidationError("max_tokens must be positive");
}

std::string request_key(const EditRequest& req) {
  nlohmann::json j;
  j["prompt"] = req.prompt;
  j["temperature"] = req.params.temperature;
  j["top_p"] = req.params.top_p;
  j["max_tokens"] = req.params.max_tokens;
  j["stop"] = req.params.stop_sequences;
  j["sample"] = req.sample;
  return text::hex64(text::fnv1a64(j.dump()));
}

std::string MockLlmBackend::complete(const EditRequest& req) {
  std::string out = req.original;
  for (const auto& k : req.keywords) out += " " + k;
  return out;
}

RemoteLlmBackend::RemoteLlmBackend(const std::string& endpoint, http::RetryPolicy retry,
                                   const std::optional<std::string>& auth_env_var)
    : url_(endpoint), endpoint_(http::parse_url(endpoint)), retry_(retry), headers_(http::bearer_from_env(auth_env_var)) {}

std::string RemoteLlmBackend::complete(const EditRequest& req) {
  nlohmann::json body;
  body["prompt"] = req.prompt;
  body["temperature"] = req.params.temperature;
  body["top_p"] = req.params.top_p;
  body["max_tokens"] = req.params.max_tokens;
  body["stop"] = req.params.stop_sequences;
  auto headers = headers_;
  headers["Idempotency-Key"] = request_key(req);
  const auto res = http::post_json(endpoint_, body, retry_, headers);
  {
    std::lock_guard lock(mu_);
    last_attempts_ = res.attempts;
  }
  if (res.attempts > 1) spdlog::info("editor request {} succeeded after {} attempts", headers["Idempotency-Key"], res.attempts);
  try {
    return res.body.at("completion").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw RemoteError(std::string("malformed completion response: ") + e.what());
  }
}

int RemoteLlmBackend::last_attempts() const {
  std::lock_guard lock(mu_);
  return last_attempts_;
}

std::string request_edit(const EditRequest& req, LlmBackend& backend) {
  if (req.prompt.empty()) throw ValidationError("request_edit: empty prompt");
  validate(req.params);
  auto out = backend.complete(req);
  if (text::trim(out).empty()) throw EmptyCompletionError("editor returned an empty completion");
  return out;
}

ParsedEdit parse_edit(std::string_view raw, const PromptTemplate& t, std::string_view original) {
  std::string_view body = raw;
  if (const auto pos = body.rfind(t.edited_label); pos != std::string_view::npos) {
    body = body.substr(pos + t.edited_label.size());
  }
  ParsedEdit out{std::string(text::trim(body)), std::nullopt};
  if (out.text.empty()) {
    out.failure = "empty";
  } else if (out.text == text::trim(original)) {
    out.failure = "identical_to_original";
  }
  return out;
}

RateLimiter::RateLimiter(double per_minute)
    : interval_(per_minute > 0.0 ? std::chrono::nanoseconds(static_cast<long long>(60e9 / per_minute))
                                 : std::chrono::nanoseconds(0)),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

}  // namespace cfcore
