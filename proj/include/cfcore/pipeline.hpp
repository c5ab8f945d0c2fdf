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
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfcore/ann_index.hpp"
#include "cfcore/cfdpr.hpp"
#include "cfcore/dataset.hpp"
#include "cfcore/editor.hpp"
#include "cfcore/embedder.hpp"
#include "cfcore/extraction.hpp"
#include "cfcore/metrics.hpp"
#include "cfcore/reranker.hpp"

namespace cfcore {

inline constexpr int kConfigVersion = 1;

struct CorpusInput {
  std::filesystem::path path;
  std::string source;
  // "text": one document per non-blank line, split into sentences.
  // "jsonl": CorpusDocument lines, copied as-is.
  std::string format = "text";
};

enum class RerankBackend { kLogistic, kRemote };
enum class EditorBackend { kMock, kRemote };

struct RerankSettings {
  std::optional<bool> enabled;  // unset: on for nli, off for sentiment
  RerankBackend backend = RerankBackend::kLogistic;
  std::optional<std::string> endpoint;
  std::optional<std::string> auth_env_var;
  std::size_t depth = 20;  // bi-encoder hits passed to the scorer
  BceConfig bce;
};

struct EditorSettings {
  EditorBackend backend = EditorBackend::kMock;
  std::optional<std::string> endpoint;
  std::optional<std::string> auth_env_var;
  EditParams params;
  int max_in_flight = 2;
  double requests_per_minute = 0.0;  // 0: unlimited
  std::optional<std::filesystem::path> template_path;
};

struct GenerationSettings {
  std::size_t top_k = 5;
  std::size_t keyword_cap = kDefaultKeywordCap;
  std::size_t min_polarity_hits = 1;
  std::size_t max_polarity_sentences = 4;
  std::size_t samples = 1;
  Stage stage = Stage::kCore;
  std::optional<std::vector<std::string>> subset_ids;
};

struct AnnotationSettings {
  std::optional<std::filesystem::path> pool;  // defaults to data.examples
  std::size_t top_k = 3;
  std::optional<std::filesystem::path> journal;
  std::optional<std::filesystem::path> static_dir;
  std::optional<std::filesystem::path> instructions;
  std::size_t claim_timeout_s = 1800;
  int port = 8080;
};

struct PipelineConfig {
  int version = kConfigVersion;
  Task task = Task::kNli;
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path work_dir = "work";
  std::filesystem::path examples;
  std::optional<std::filesystem::path> seed_pairs;
  std::optional<std::filesystem::path> paraphrases;
  std::optional<std::filesystem::path> eval_pools;
  std::vector<CorpusInput> corpus;
  EmbeddingBackendConfig embedding;
  TrainConfig retriever;
  IndexKind index_kind = IndexKind::kExact;
  IvfParams ivf;
  RerankSettings rerank;
  GenerationSettings generation;
  EditorSettings editor;
  AnnotationSettings annotation;
  std::optional<std::filesystem::path> lexicon_positive;
  std::optional<std::filesystem::path> lexicon_negative;
  // Content hash of the config document minus work_dir and threads, stamped
  // into every artifact.
  std::string hash;

  bool rerank_enabled() const { return rerank.enabled.value_or(task == Task::kNli); }
};

// Relative paths are resolved against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
// `overrides` is merged into the file (JSON merge patch) before parsing, so
// the stamped hash covers command-line overrides too.
PipelineConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = nullptr);
void validate(const PipelineConfig& cfg);

// Fixed artifact locations under work_dir.
struct ArtifactPaths {
  std::filesystem::path corpus;
  std::filesystem::path triplets;
  std::filesystem::path embeddings;
  std::filesystem::path query_encoder;
  std::filesystem::path doc_encoder;
  std::filesystem::path train_log;
  std::filesystem::path index;
  std::filesystem::path retrieved;
  std::filesystem::path reranker;
  std::filesystem::path records;
  std::filesystem::path report;
};

ArtifactPaths artifact_paths(const PipelineConfig& cfg);

// <file>.provenance.json next to every output: command, config hash, seed and
// the content hash of each input and output.
std::filesystem::path provenance_path(const std::filesystem::path& output);
std::string file_hash(const std::filesystem::path& path);
void write_provenance(const std::string& command, const PipelineConfig& cfg,
                      const std::vector<std::filesystem::path>& inputs,
                      const std::vector<std::filesystem::path>& outputs);

struct GenerateSummary {
  std::size_t records = 0;
  std::size_t failures = 0;
  std::map<std::string, std::size_t> failure_reasons;
  std::map<std::string, std::size_t> stages;
};

struct EvaluateSummary {
  std::map<std::string, MetricsReport> by_stage;
  MetricsReport overall;
  std::optional<OrderingCheck> ordering;
};

struct RetrievedExcerpt {
  std::string doc_id;
  std::string text;
  double score = 0.0;
};

struct ExampleRetrieval {
  std::vector<std::string> queries;
  std::vector<RetrievedExcerpt> hits;
};

// Loaded retrieval stack: corpus, embedder, encoders, index and optional
// reranker. Built by Pipeline and shared with the annotation service.
class Retriever {
 public:
  Retriever(const PipelineConfig& cfg, const ArtifactPaths& paths);

  // Top-k for one query text, reranked when enabled.
  std::vector<RetrievedExcerpt> retrieve(const std::string& query, std::size_t k);
  // Queries for one example (the pair for nli, the polarity sentences of a
  // review) and their merged hits: rank 1 of every query, then rank 2, and so
  // on, without repeats.
  ExampleRetrieval retrieve_for(const LabeledExample& ex, std::size_t k);
  const VectorIndex& index() const { return index_; }
  const std::string& doc_text(const std::string& doc_id) const;

 private:
  std::vector<double> base_embedding(const std::string& text);

  PipelineConfig cfg_;
  std::unique_ptr<Embedder> backend_;
  EmbeddingCache cache_;
  std::unique_ptr<CachedEmbedder> embedder_;
  EncoderPair encoders_;
  VectorIndex index_;
  std::map<std::string, std::string> doc_text_;
  std::unique_ptr<PairScorer> scorer_;
  PolarityLexicon lexicon_;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  const ArtifactPaths& paths() const { return paths_; }

  // Segments the corpus inputs and builds training triplets.
  void ingest();
  // Fills the embedding cache for every text later stages look up.
  void embed();
  TrainResult train_retriever();
  void build_index();
  // Writes one line per example: {"source_id", "query", "hits": [...]}.
  void retrieve(const std::optional<std::filesystem::path>& out = std::nullopt);
  LogisticScorer train_reranker();
  GenerateSummary generate(const std::optional<std::filesystem::path>& out = std::nullopt);
  // Reports over one or more record files (default: the generate output),
  // overall and per stage.
  EvaluateSummary evaluate(const std::vector<std::filesystem::path>& records = {},
                           const std::optional<std::filesystem::path>& out = std::nullopt);

  // Examples restricted to generation.subset_ids (in file order).
  std::vector<LabeledExample> selected_examples() const;
  std::unique_ptr<LlmBackend> make_editor() const;
  PromptTemplate prompt_template() const;

 private:
  void require(const std::filesystem::path& artifact, const std::string& name, const std::string& command) const;
  EmbeddingTable training_table(const std::vector<TripletRecord>& triplets,
                                const std::vector<EvalPool>& pools) const;

  PipelineConfig cfg_;
  ArtifactPaths paths_;
};

PolarityLexicon configured_lexicon(const PipelineConfig& cfg);

// Sentence-level corpus documents from one input.
std::vector<CorpusDocument> ingest_corpus_input(const CorpusInput& input);

}  // namespace cfcore
