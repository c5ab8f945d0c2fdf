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

#include "cfcore/annotation.hpp"

#include <csignal>
#include <fstream>
#include <set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/editor.hpp"
#include "cfcore/embedded_data.hpp"
#include "cfcore/metrics.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Condition c) { return c == Condition::kRetrieval ? "retrieval" : "control"; }

Condition parse_condition(std::string_view s) {
  if (s == "retrieval") return Condition::kRetrieval;
  if (s == "control") return Condition::kControl;
  throw ValidationError("unknown condition '" + std::string(s) + "' (expected retrieval or control)");
}

void validate(const AnnotationTask& t) {
  validate(t.instance);
  if (t.task_id.empty()) throw ValidationError("annotation task with empty id");
  if (t.condition == Condition::kRetrieval && (t.retrieved.empty() || t.retrieved.size() > 3)) {
    throw ValidationError("task '" + t.task_id + "': retrieval condition needs 1 to 3 excerpts, has " +
                          std::to_string(t.retrieved.size()));
  }
  if (t.condition == Condition::kControl && !t.retrieved.empty()) {
    throw ValidationError("task '" + t.task_id + "': control condition must not carry excerpts");
  }
  if (t.target_label == t.instance.label) throw ValidationError("task '" + t.task_id + "': target equals label");
}

ojson to_json(const AnnotationTask& t) {
  ojson j;
  j["task_id"] = t.task_id;
  j["condition"] = std::string(to_string(t.condition));
  j["status"] = t.status == TaskStatus::kOpen ? "open" : "done";
  j["task"] = std::string(to_string(t.instance.task));
  j["context"] = t.instance.text_a;
  j["editable_text"] = t.instance.editable_text();
  j["label"] = t.instance.label;
  j["label_wording"] = label_wording(t.instance.task, t.instance.label);
  j["target_label"] = t.target_label;
  j["target_label_wording"] = label_wording(t.instance.task, t.target_label);
  j["retrieved"] = ojson::array();
  for (const auto& r : t.retrieved) j["retrieved"].push_back({{"doc_id", r.doc_id}, {"text", r.text}, {"score", r.score}});
  j["instance"] = to_json(t.instance);
  return j;
}

ojson to_json(const AnnotationSubmission& s) {
  ojson j;
  j["task_id"] = s.task_id;
  j["edited_text"] = s.edited_text;
  j["annotator_id"] = s.annotator_id;
  j["elapsed_ms"] = s.elapsed_ms;
  j["computed"] = {{"self_bleu", s.computed.self_bleu},
                   {"levenshtein", s.computed.levenshtein},
                   {"perturbation_type", s.computed.perturbation_type}};
  return j;
}

AnnotationSubmission submission_from_json(const nlohmann::json& j) {
  AnnotationSubmission s;
  s.task_id = j.at("task_id").get<std::string>();
  s.edited_text = j.at("edited_text").get<std::string>();
  s.annotator_id = j.at("annotator_id").get<std::string>();
  s.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  const auto& c = j.at("computed");
  s.computed = {c.at("self_bleu").get<double>(), c.at("levenshtein").get<double>(),
                c.at("perturbation_type").get<std::string>()};
  return s;
}

std::vector<AnnotationTask> build_tasks(std::span<const LabeledExample> pool, Retriever* retriever, std::size_t top_k) {
  std::vector<AnnotationTask> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    AnnotationTask t;
    t.task_id = "task-" + pool[i].id;
    t.instance = pool[i];
    t.target_label = opposite_label(pool[i].task, pool[i].label);
    t.condition = i % 2 == 0 ? Condition::kRetrieval : Condition::kControl;
    if (t.condition == Condition::kRetrieval) {
      if (!retriever) throw ValidationError("retrieval-condition tasks need a trained retriever and index");
      auto r = retriever->retrieve_for(pool[i], top_k);
      if (r.hits.empty()) r.hits = retriever->retrieve(build_query_text(pool[i]), top_k);
      if (r.hits.size() > top_k) r.hits.resize(top_k);
      t.retrieved = std::move(r.hits);
    }
    validate(t);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

struct Group {
  std::size_t n = 0;
  double bleu = 0.0;
  double lev = 0.0;
  double elapsed = 0.0;
  std::map<std::string, std::size_t> types;

  void add(const AnnotationSubmission& s) {
    ++n;
    bleu += s.computed.self_bleu;
    lev += s.computed.levenshtein;
    elapsed += static_cast<double>(s.elapsed_ms);
    ++types[s.computed.perturbation_type];
  }

  ojson to_json() const {
    ojson j;
    j["submissions"] = n;
    const double d = static_cast<double>(n);
    j["mean_self_bleu"] = n ? ojson(bleu / d) : ojson();
    j["mean_levenshtein"] = n ? ojson(lev / d) : ojson();
    j["mean_elapsed_ms"] = n ? ojson(elapsed / d) : ojson();
    ojson hist = ojson::object();
    for (auto t : kPerturbationTypes) {
      const auto it = types.find(std::string(cfcore::to_string(t)));
      hist[std::string(cfcore::to_string(t))] = it == types.end() ? 0 : it->second;
    }
    j["perturbation_types"] = hist;
    return j;
  }
};

}  // namespace

ojson annotation_report(std::span<const AnnotationTask> tasks, std::span<const AnnotationSubmission> submissions) {
  std::map<std::string, Condition> cond;
  for (const auto& t : tasks) cond[t.task_id] = t.condition;
  std::map<std::string, Group> by_condition{{"control", {}}, {"retrieval", {}}};
  std::map<std::string, Group> by_annotator;
  std::set<std::string> done;
  for (const auto& s : submissions) {
    const auto it = cond.find(s.task_id);
    if (it == cond.end()) throw ValidationError("submission for unknown task '" + s.task_id + "'");
    by_condition[std::string(to_string(it->second))].add(s);
    by_annotator[s.annotator_id].add(s);
    done.insert(s.task_id);
  }
  ojson j;
  j["tasks"] = {{"total", tasks.size()}, {"done", done.size()}, {"open", tasks.size() - done.size()}};
  j["conditions"] = ojson::object();
  for (const auto& [k, g] : by_condition) j["conditions"][k] = g.to_json();
  j["annotators"] = ojson::object();
  for (const auto& [k, g] : by_annotator) j["annotators"][k] = g.to_json();
  return j;
}

std::vector<AnnotationSubmission> load_journal(const fs::path& path) {
  std::vector<AnnotationSubmission> out;
  for_each_json_line(path, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back(submission_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return out;
}

TaskStore::TaskStore(std::vector<AnnotationTask> tasks, std::optional<fs::path> journal,
                     std::chrono::seconds claim_timeout, Clock clock)
    : tasks_(std::move(tasks)), journal_(std::move(journal)), claim_timeout_(claim_timeout), clock_(std::move(clock)) {
  if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    validate(tasks_[i]);
    if (!by_id_.emplace(tasks_[i].task_id, i).second) {
      throw ValidationError("duplicate task id '" + tasks_[i].task_id + "'");
    }
  }
  if (journal_ && fs::exists(*journal_)) {
    for (const auto& s : load_journal(*journal_)) {
      if (!by_id_.count(s.task_id)) throw ValidationError("journal refers to unknown task '" + s.task_id + "'");
      apply(s);
    }
    spdlog::info("replayed {} submissions from {}", submissions_.size(), journal_->string());
  }
}

std::size_t TaskStore::find(const std::string& task_id) const {
  const auto it = by_id_.find(task_id);
  if (it == by_id_.end()) throw HttpError(404, "no task '" + task_id + "'");
  return it->second;
}

void TaskStore::apply(const AnnotationSubmission& s) {
  tasks_[by_id_.at(s.task_id)].status = TaskStatus::kDone;
  claims_.erase(s.task_id);
  submissions_.push_back(s);
}

std::optional<AnnotationTask> TaskStore::next(std::optional<Condition> condition, const std::string& annotator) {
  std::lock_guard lock(mu_);
  const auto now = clock_();
  for (auto it = claims_.begin(); it != claims_.end();) {
    it = it->second.expires <= now ? claims_.erase(it) : std::next(it);
  }
  for (const auto& [id, claim] : claims_) {
    const auto& t = tasks_[by_id_.at(id)];
    if (claim.annotator == annotator && (!condition || t.condition == *condition)) return t;
  }
  for (const auto& t : tasks_) {
    if (t.status != TaskStatus::kOpen || claims_.count(t.task_id)) continue;
    if (condition && t.condition != *condition) continue;
    claims_[t.task_id] = {annotator, now + claim_timeout_};
    return t;
  }
  return std::nullopt;
}

AnnotationTask TaskStore::get(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  return tasks_[find(task_id)];
}

AnnotationSubmission TaskStore::submit(const std::string& task_id, const std::string& edited_text,
                                       const std::string& annotator, std::int64_t elapsed_ms) {
  std::lock_guard lock(mu_);
  const auto& task = tasks_[find(task_id)];
  if (task.status == TaskStatus::kDone) throw HttpError(409, "task '" + task_id + "' is already done");
  if (const auto it = claims_.find(task_id);
      it != claims_.end() && it->second.annotator != annotator && it->second.expires > clock_()) {
    throw HttpError(409, "task '" + task_id + "' is claimed by another annotator");
  }
  if (text::trim(edited_text).empty()) throw HttpError(422, "edited_text is empty");
  const auto& original = task.instance.editable_text();
  if (text::trim(edited_text) == text::trim(original)) {
    throw HttpError(422, "edited_text is identical to the original; change it so the label becomes " +
                             label_wording(task.instance.task, task.target_label));
  }
  if (elapsed_ms < 0) throw HttpError(422, "elapsed_ms must be non-negative");
  AnnotationSubmission s{task_id, edited_text, annotator, elapsed_ms,
                         to_record_metrics(pair_metrics(original, edited_text))};
  if (journal_) {
    std::ofstream os(*journal_, std::ios::binary | std::ios::app);
    if (!os) throw IoError("cannot append to journal " + journal_->string());
    os << to_json(s).dump() << '\n';
    os.flush();
    if (!os) throw IoError("failed writing journal " + journal_->string());
  }
  apply(s);
  return s;
}

ojson TaskStore::report() const {
  std::lock_guard lock(mu_);
  return annotation_report(tasks_, submissions_);
}

std::vector<AnnotationSubmission> TaskStore::submissions() const {
  std::lock_guard lock(mu_);
  return submissions_;
}

std::vector<AnnotationTask> TaskStore::tasks() const {
  std::lock_guard lock(mu_);
  return tasks_;
}

std::string default_instructions() {
  const auto text = data::embedded_file("annotation/instructions.txt");
  if (!text) throw IoError("missing built-in annotation instructions");
  return std::string(*text);
}

namespace {

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, ojson{{"error", message}, {"status", status}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const HttpError& e) {
      send_error(res, e.status(), e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
      spdlog::error("annotation server: {}", e.what());
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

AnnotationServer::AnnotationServer(TaskStore& store, std::string instructions,
                                   std::optional<fs::path> static_dir)
    : store_(store), instructions_(std::move(instructions)), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.Get("/api/tasks/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::optional<Condition> cond;
    if (req.has_param("condition") && !req.get_param_value("condition").empty()) {
      cond = parse_condition(req.get_param_value("condition"));
    }
    const auto annotator = req.has_param("annotator_id") ? req.get_param_value("annotator_id") : "anonymous";
    const auto task = store_.next(cond, annotator);
    if (!task) throw HttpError(404, "no open tasks");
    send_json(res, 200, to_json(*task));
  }));
  s.Get(R"(/api/tasks/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(store_.get(req.matches[1].str())));
  }));
  s.Post(R"(/api/tasks/([^/]+)/submission)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw HttpError(400, std::string("body is not JSON: ") + e.what());
    }
    if (!body.contains("edited_text") || !body.at("edited_text").is_string()) {
      throw HttpError(422, "edited_text is required");
    }
    const auto sub = store_.submit(req.matches[1].str(), body.at("edited_text").get<std::string>(),
                                   body.value("annotator_id", std::string("anonymous")),
                                   body.value("elapsed_ms", std::int64_t{0}));
    send_json(res, 200, to_json(sub));
  }));
  s.Get("/api/report", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, store_.report());
  }));
  s.Get("/api/instructions", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, ojson{{"text", instructions_}});
  }));
  if (static_dir) {
    if (!s.set_mount_point("/", static_dir->string())) {
      throw IoError("static directory not found: " + static_dir->string());
    }
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("could not bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("could not bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationServer::listen() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_) server_->stop();
}

namespace {
AnnotationServer* g_server = nullptr;
extern "C" void handle_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

void serve_annotate(const PipelineConfig& cfg, std::optional<int> port) {
  const auto pool_path = cfg.annotation.pool.value_or(cfg.examples);
  const auto pool = load_examples(pool_path, cfg.task);
  Retriever retriever(cfg, artifact_paths(cfg));
  auto tasks = build_tasks(pool, &retriever, cfg.annotation.top_k);
  const auto journal = cfg.annotation.journal.value_or(cfg.work_dir / "submissions.jsonl");
  TaskStore store(std::move(tasks), journal, std::chrono::seconds(cfg.annotation.claim_timeout_s));
  const auto instructions =
      cfg.annotation.instructions ? binary::read_file(*cfg.annotation.instructions) : default_instructions();
  AnnotationServer server(store, instructions, cfg.annotation.static_dir);
  const int bound = server.bind("0.0.0.0", port.value_or(cfg.annotation.port));
  spdlog::info("serving {} tasks on port {} (journal {})", pool.size(), bound, journal.string());
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  server.listen();
  g_server = nullptr;
}

}  // namespace cfcore
