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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfcore/dataset.hpp"
#include "cfcore/error.hpp"
#include "cfcore/pipeline.hpp"

namespace httplib {
class Server;
}

namespace cfcore {

enum class Condition { kRetrieval, kControl };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);

enum class TaskStatus { kOpen, kDone };

struct AnnotationTask {
  std::string task_id;
  LabeledExample instance;
  std::string target_label;
  Condition condition = Condition::kRetrieval;
  std::vector<RetrievedExcerpt> retrieved;  // empty for control
  TaskStatus status = TaskStatus::kOpen;
};

void validate(const AnnotationTask& t);

struct AnnotationSubmission {
  std::string task_id;
  std::string edited_text;
  std::string annotator_id;
  std::int64_t elapsed_ms = 0;
  RecordMetrics computed;

  friend bool operator==(const AnnotationSubmission&, const AnnotationSubmission&) = default;
};

nlohmann::ordered_json to_json(const AnnotationTask& t);
nlohmann::ordered_json to_json(const AnnotationSubmission& s);
AnnotationSubmission submission_from_json(const nlohmann::json& j);

// Tasks alternate conditions by position: even positions get the retrieval
// condition with the top `top_k` excerpts, odd positions are control. Task ids
// are "task-<example id>".
std::vector<AnnotationTask> build_tasks(std::span<const LabeledExample> pool, Retriever* retriever, std::size_t top_k);

// HTTP-shaped failures raised by the task store.
class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Per-condition and per-annotator aggregates. A pure function of the task list
// and the submissions, so replaying a journal reproduces it exactly.
nlohmann::ordered_json annotation_report(std::span<const AnnotationTask> tasks,
                                         std::span<const AnnotationSubmission> submissions);

std::vector<AnnotationSubmission> load_journal(const std::filesystem::path& path);

// Thread-safe task pool with timed claims and an append-only journal.
class TaskStore {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  TaskStore(std::vector<AnnotationTask> tasks, std::optional<std::filesystem::path> journal,
            std::chrono::seconds claim_timeout = std::chrono::minutes(30), Clock clock = {});

  // Claims the first open task (optionally of one condition) that nobody else
  // holds; a repeated call by the same annotator returns its current claim.
  std::optional<AnnotationTask> next(std::optional<Condition> condition, const std::string& annotator);
  AnnotationTask get(const std::string& task_id) const;
  // 404 unknown task, 409 done or claimed by someone else, 422 invalid edit.
  AnnotationSubmission submit(const std::string& task_id, const std::string& edited_text,
                              const std::string& annotator, std::int64_t elapsed_ms);
  nlohmann::ordered_json report() const;
  std::vector<AnnotationSubmission> submissions() const;
  std::vector<AnnotationTask> tasks() const;

 private:
  struct Claim {
    std::string annotator;
    std::chrono::steady_clock::time_point expires;
  };

  std::size_t find(const std::string& task_id) const;
  void apply(const AnnotationSubmission& s);

  mutable std::mutex mu_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, Claim> claims_;
  std::vector<AnnotationSubmission> submissions_;
  std::optional<std::filesystem::path> journal_;
  std::chrono::seconds claim_timeout_;
  Clock clock_;
};

// Built-in study instructions served at /api/instructions.
std::string default_instructions();

class AnnotationServer {
 public:
  AnnotationServer(TaskStore& store, std::string instructions, std::optional<std::filesystem::path> static_dir);
  ~AnnotationServer();

  // Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void listen();
  void stop();

 private:
  TaskStore& store_;
  std::string instructions_;
  std::unique_ptr<httplib::Server> server_;
};

// Builds the store from the config (pool, retriever when available, journal)
// and serves until interrupted.
void serve_annotate(const PipelineConfig& cfg, std::optional<int> port);

}  // namespace cfcore
