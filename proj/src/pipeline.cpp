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

#include "cfcore/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kToolVersion = "cfcore 0.1.0";

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::optional<fs::path> opt_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return resolve(base, j.at(key).get<std::string>());
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

const json& section(const json& j, const char* key) {
  static const json kEmpty = json::object();
  if (!j.contains(key) || j.at(key).is_null()) return kEmpty;
  if (!j.at(key).is_object()) throw ValidationError(std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

std::vector<std::string> embedding_texts_for(const LabeledExample& ex, const PolarityLexicon& lexicon,
                                             const GenerationSettings& gen) {
  if (ex.task == Task::kNli) return {build_query_text(ex)};
  return select_polarity_sentences(ex.text_a, lexicon, gen.min_polarity_hits, gen.max_polarity_sentences);
}

std::vector<std::string> unique_texts(std::vector<std::string> texts) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto& t : texts) {
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

json hits_json(const std::vector<RetrievedExcerpt>& hits) {
  json arr = json::array();
  for (const auto& h : hits) arr.push_back({{"doc_id", h.doc_id}, {"score", h.score}, {"text", h.text}});
  return arr;
}

struct GenerationJob {
  std::size_t example = 0;
  int sample = 0;
  Stage stage = Stage::kCore;
  std::vector<std::string> keywords;
  std::vector<std::string> doc_ids;
  std::string prompt;
  std::optional<std::string> top_hit;  // retrieved_only
};

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  try {
    PipelineConfig c;
    read(j, "version", c.version);
    if (c.version != kConfigVersion) {
      throw ValidationError("unsupported config version " + std::to_string(c.version) + " (expected " +
                            std::to_string(kConfigVersion) + ")");
    }
    c.task = parse_task(j.at("task").get<std::string>());
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);
    if (auto w = opt_path(j, "work_dir", base_dir)) {
      c.work_dir = *w;
    } else {
      c.work_dir = base_dir / "work";
    }

    const auto& data = section(j, "data");
    c.examples = resolve(base_dir, data.at("examples").get<std::string>());
    c.seed_pairs = opt_path(data, "seed_pairs", base_dir);
    c.paraphrases = opt_path(data, "paraphrases", base_dir);
    c.eval_pools = opt_path(data, "eval_pools", base_dir);
    if (data.contains("corpus")) {
      for (const auto& in : data.at("corpus")) {
        CorpusInput ci;
        ci.path = resolve(base_dir, in.at("path").get<std::string>());
        ci.source = in.value("source", ci.path.stem().string());
        ci.format = in.value("format", "text");
        c.corpus.push_back(std::move(ci));
      }
    }
    const auto& lex = section(data, "lexicon");
    c.lexicon_positive = opt_path(lex, "positive", base_dir);
    c.lexicon_negative = opt_path(lex, "negative", base_dir);

    const auto& emb = section(j, "embedding");
    const auto backend = emb.value("backend", std::string("hashed_test"));
    if (backend == "hashed_test") {
      c.embedding.kind = EmbeddingKind::kHashedTest;
    } else if (backend == "remote") {
      c.embedding.kind = EmbeddingKind::kRemote;
    } else {
      throw ValidationError("unknown embedding backend '" + backend + "'");
    }
    c.embedding.endpoint = opt_string(emb, "endpoint");
    c.embedding.auth_env_var = opt_string(emb, "auth_env");
    read(emb, "dimension", c.embedding.dimension);
    read(emb, "batch_size", c.embedding.batch_size);
    read(emb, "normalize", c.embedding.normalize);
    c.embedding.seed = c.seed;
    read(emb, "seed", c.embedding.seed);
    read(emb, "max_in_flight", c.embedding.max_in_flight);
    read(emb, "max_attempts", c.embedding.retry.max_attempts);

    const auto& ret = section(j, "retriever");
    c.retriever.seed = c.seed;
    read(ret, "learning_rate", c.retriever.learning_rate);
    read(ret, "epochs", c.retriever.epochs);
    read(ret, "batch_size", c.retriever.batch_size);
    read(ret, "in_batch_negatives", c.retriever.in_batch_negatives);
    read(ret, "grad_clip", c.retriever.grad_clip);
    read(ret, "eval_every", c.retriever.eval_every);
    read(ret, "projection_dim", c.retriever.projection_dim);

    const auto& idx = section(j, "index");
    const auto kind = idx.value("kind", std::string("exact"));
    if (kind == "exact") {
      c.index_kind = IndexKind::kExact;
    } else if (kind == "ivf") {
      c.index_kind = IndexKind::kIvf;
    } else {
      throw ValidationError("unknown index kind '" + kind + "'");
    }
    c.ivf.kmeans_seed = c.seed;
    read(idx, "k_centroids", c.ivf.k_centroids);
    read(idx, "n_probe", c.ivf.n_probe);
    read(idx, "kmeans_max_iters", c.ivf.kmeans_max_iters);

    const auto& rr = section(j, "reranker");
    if (rr.contains("enabled") && !rr.at("enabled").is_null()) c.rerank.enabled = rr.at("enabled").get<bool>();
    const auto rb = rr.value("backend", std::string("logistic"));
    if (rb == "logistic") {
      c.rerank.backend = RerankBackend::kLogistic;
    } else if (rb == "remote") {
      c.rerank.backend = RerankBackend::kRemote;
    } else {
      throw ValidationError("unknown reranker backend '" + rb + "'");
    }
    c.rerank.endpoint = opt_string(rr, "endpoint");
    c.rerank.auth_env_var = opt_string(rr, "auth_env");
    read(rr, "depth", c.rerank.depth);
    c.rerank.bce.seed = c.seed;
    read(rr, "learning_rate", c.rerank.bce.learning_rate);
    read(rr, "epochs", c.rerank.bce.epochs);

    const auto& gen = section(j, "generation");
    read(gen, "top_k", c.generation.top_k);
    read(gen, "keyword_cap", c.generation.keyword_cap);
    read(gen, "min_polarity_hits", c.generation.min_polarity_hits);
    read(gen, "max_polarity_sentences", c.generation.max_polarity_sentences);
    read(gen, "samples", c.generation.samples);
    if (auto st = opt_string(gen, "stage")) c.generation.stage = parse_stage(*st);
    if (gen.contains("subset_ids") && !gen.at("subset_ids").is_null()) {
      c.generation.subset_ids = gen.at("subset_ids").get<std::vector<std::string>>();
    }
    if (auto sf = opt_path(gen, "subset_file", base_dir)) {
      std::vector<std::string> ids;
      for (const auto& line : text::split_whitespace(binary::read_file(*sf))) ids.push_back(line);
      c.generation.subset_ids = ids;
    }

    const auto& ed = section(j, "editor");
    const auto eb = ed.value("backend", std::string("mock"));
    if (eb == "mock") {
      c.editor.backend = EditorBackend::kMock;
    } else if (eb == "remote") {
      c.editor.backend = EditorBackend::kRemote;
    } else {
      throw ValidationError("unknown editor backend '" + eb + "'");
    }
    c.editor.endpoint = opt_string(ed, "endpoint");
    c.editor.auth_env_var = opt_string(ed, "auth_env");
    read(ed, "temperature", c.editor.params.temperature);
    read(ed, "top_p", c.editor.params.top_p);
    read(ed, "max_tokens", c.editor.params.max_tokens);
    read(ed, "stop", c.editor.params.stop_sequences);
    read(ed, "max_in_flight", c.editor.max_in_flight);
    read(ed, "requests_per_minute", c.editor.requests_per_minute);
    c.editor.template_path = opt_path(ed, "template", base_dir);

    const auto& an = section(j, "annotation");
    c.annotation.pool = opt_path(an, "pool", base_dir);
    read(an, "top_k", c.annotation.top_k);
    c.annotation.journal = opt_path(an, "journal", base_dir);
    c.annotation.static_dir = opt_path(an, "static_dir", base_dir);
    c.annotation.instructions = opt_path(an, "instructions", base_dir);
    read(an, "claim_timeout_s", c.annotation.claim_timeout_s);
    read(an, "port", c.annotation.port);

    // Execution-only settings are left out so the same experiment hashes the
    // same wherever and however wide it runs.
    auto hashed = j;
    hashed.erase("work_dir");
    hashed.erase("threads");
    c.hash = text::hex64(text::fnv1a64(hashed.dump()));
    validate(c);
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid pipeline config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path, const json& overrides) {
  json j;
  try {
    j = json::parse(binary::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!overrides.is_null()) j.merge_patch(overrides);
  return config_from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void validate(const PipelineConfig& c) {
  if (c.threads < 1) throw ValidationError("threads must be >= 1");
  if (c.generation.top_k < 1) throw ValidationError("generation.top_k must be >= 1");
  if (c.annotation.top_k < 1) throw ValidationError("annotation.top_k must be >= 1");
  if (c.generation.samples < 1) throw ValidationError("generation.samples must be >= 1");
  if (c.generation.keyword_cap < 1) throw ValidationError("generation.keyword_cap must be >= 1");
  if (c.editor.max_in_flight < 1) throw ValidationError("editor.max_in_flight must be >= 1");
  if (c.editor.backend == EditorBackend::kRemote && !c.editor.endpoint) {
    throw ValidationError("editor.endpoint is required for the remote editor");
  }
  if (c.rerank.backend == RerankBackend::kRemote && !c.rerank.endpoint) {
    throw ValidationError("reranker.endpoint is required for the remote reranker");
  }
  if (c.rerank.depth < 1) throw ValidationError("reranker.depth must be >= 1");
  if (c.lexicon_positive.has_value() != c.lexicon_negative.has_value()) {
    throw ValidationError("lexicon needs both positive and negative word lists");
  }
  for (const auto& in : c.corpus) {
    if (in.format != "text" && in.format != "jsonl") throw ValidationError("unknown corpus format '" + in.format + "'");
  }
  validate(c.embedding);
  validate(c.retriever);
  validate(c.editor.params);
}

ArtifactPaths artifact_paths(const PipelineConfig& cfg) {
  const auto& w = cfg.work_dir;
  return {w / "corpus.jsonl",        w / "triplets.jsonl",     w / "embeddings.cfec", w / "query_encoder.cfen",
          w / "doc_encoder.cfen",    w / "train_log.jsonl",    w / "index.cfix",      w / "retrieved.jsonl",
          w / "reranker.json",       w / "records.jsonl",      w / "report.json"};
}

fs::path provenance_path(const fs::path& output) { return fs::path(output.string() + ".provenance.json"); }

std::string file_hash(const fs::path& path) { return text::hex64(text::fnv1a64(binary::read_file(path))); }

void write_provenance(const std::string& command, const PipelineConfig& cfg, const std::vector<fs::path>& inputs,
                      const std::vector<fs::path>& outputs) {
  nlohmann::ordered_json base;
  base["tool"] = kToolVersion;
  base["command"] = command;
  base["config_hash"] = cfg.hash;
  base["seed"] = cfg.seed;
  base["inputs"] = nlohmann::ordered_json::array();
  for (const auto& in : inputs) {
    if (!fs::exists(in)) continue;
    base["inputs"].push_back({{"path", in.filename().string()}, {"hash", file_hash(in)}});
  }
  for (const auto& out : outputs) {
    auto j = base;
    j["output"] = {{"path", out.filename().string()}, {"hash", file_hash(out)}};
    binary::write_file_atomic(provenance_path(out), j.dump(2) + "\n");
  }
}

std::vector<CorpusDocument> ingest_corpus_input(const CorpusInput& input) {
  if (!fs::exists(input.path)) throw IoError("corpus input not found: " + input.path.string());
  if (input.format == "jsonl") return load_corpus(input.path);
  const auto contents = binary::read_file(input.path);
  std::vector<CorpusDocument> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string::npos) nl = contents.size();
    ++line_no;
    const auto line = std::string_view(contents).substr(pos, nl - pos);
    pos = nl + 1;
    if (text::trim(line).empty()) continue;
    std::size_t s_no = 0;
    for (const auto& sentence : split_sentences(line)) {
      auto norm = text::normalize_whitespace(sentence);
      if (norm.empty()) continue;
      out.push_back({input.source + ":" + std::to_string(line_no) + ":" + std::to_string(s_no++), std::move(norm),
                     input.source});
    }
  }
  return out;
}

PolarityLexicon configured_lexicon(const PipelineConfig& cfg) {
  if (cfg.lexicon_positive) return load_lexicon(*cfg.lexicon_positive, *cfg.lexicon_negative);
  return default_lexicon();
}

// Retriever ------------------------------------------------------------------

namespace {

VectorIndex load_required_index(const ArtifactPaths& paths) {
  if (!fs::exists(paths.index)) throw MissingArtifactError(paths.index.string(), "build-index");
  return load_index(paths.index);
}

}  // namespace

Retriever::Retriever(const PipelineConfig& cfg, const ArtifactPaths& paths)
    : cfg_(cfg),
      backend_(make_embedder(cfg.embedding)),
      cache_(backend_->backend_id(), backend_->dimension()),
      embedder_(std::make_unique<CachedEmbedder>(*backend_, cache_)),
      index_(load_required_index(paths)),
      lexicon_(configured_lexicon(cfg)) {
  for (const auto& p : {paths.query_encoder, paths.doc_encoder}) {
    if (!fs::exists(p)) throw MissingArtifactError(p.string(), "train-retriever");
  }
  if (!fs::exists(paths.corpus)) throw MissingArtifactError(paths.corpus.string(), "ingest");
  encoders_ = {load_encoder(paths.query_encoder), load_encoder(paths.doc_encoder)};
  if (encoders_.query.input_dim() != backend_->dimension()) {
    throw DimensionError("query encoder expects " + std::to_string(encoders_.query.input_dim()) +
                         "-dim embeddings but the backend produces " + std::to_string(backend_->dimension()));
  }
  if (index_.dimension() != encoders_.query.output_dim()) {
    throw DimensionError("index dimension does not match the query encoder output");
  }
  if (fs::exists(paths.embeddings)) cache_.load(paths.embeddings);
  for (auto& d : load_corpus(paths.corpus)) doc_text_.emplace(d.doc_id, std::move(d.text));
  for (const auto& id : index_.doc_ids()) {
    if (!doc_text_.count(id)) throw ValidationError("index document '" + id + "' is missing from the corpus");
  }
  if (cfg.rerank_enabled()) {
    if (cfg.rerank.backend == RerankBackend::kRemote) {
      scorer_ = std::make_unique<RemotePairScorer>(*cfg.rerank.endpoint, http::RetryPolicy{}, cfg.rerank.auth_env_var);
    } else {
      if (!fs::exists(paths.reranker)) throw MissingArtifactError(paths.reranker.string(), "train-reranker");
      scorer_ = std::make_unique<LogisticPairScorer>(load_scorer(paths.reranker));
    }
  }
}

std::vector<double> Retriever::base_embedding(const std::string& text) {
  const std::vector<std::string> one{text};
  const auto m = embedder_->embed(one);
  const auto row = m.row(0);
  return {row.begin(), row.end()};
}

const std::string& Retriever::doc_text(const std::string& doc_id) const {
  const auto it = doc_text_.find(doc_id);
  if (it == doc_text_.end()) throw ValidationError("unknown document '" + doc_id + "'");
  return it->second;
}

std::vector<RetrievedExcerpt> Retriever::retrieve(const std::string& query, std::size_t k) {
  if (k == 0) throw ValidationError("retrieve: k must be >= 1");
  const auto base = base_embedding(query);
  const auto q = encoders_.query.project(base);
  std::vector<RetrievedExcerpt> out;
  if (!scorer_) {
    for (auto& h : index_.search(q, k)) out.push_back({h.doc_id, doc_text(h.doc_id), h.score});
    return out;
  }
  std::vector<RerankCandidate> cands;
  for (auto& h : index_.search(q, std::max(k, cfg_.rerank.depth))) {
    const auto& t = doc_text(h.doc_id);
    cands.push_back({h.doc_id, t, base_embedding(t), h.score});
  }
  const auto probs = scorer_->probabilities(query, base, cands);
  const auto order = rerank<RerankCandidate>(cands, probs);
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    std::size_t src = 0;
    while (cands[src].doc_id != order[i].doc_id) ++src;
    out.push_back({order[i].doc_id, order[i].text, probs[src]});
  }
  return out;
}

ExampleRetrieval Retriever::retrieve_for(const LabeledExample& ex, std::size_t k) {
  ExampleRetrieval r;
  r.queries = embedding_texts_for(ex, lexicon_, cfg_.generation);
  std::vector<std::vector<RetrievedExcerpt>> per;
  for (const auto& q : r.queries) per.push_back(retrieve(q, k));
  std::set<std::string> seen;
  for (std::size_t rank = 0; rank < k; ++rank) {
    for (const auto& hits : per) {
      if (rank < hits.size() && seen.insert(hits[rank].doc_id).second) r.hits.push_back(hits[rank]);
    }
  }
  return r;
}

// Pipeline -------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), paths_(artifact_paths(cfg_)) {
  validate(cfg_);
  fs::create_directories(cfg_.work_dir);
}

void Pipeline::require(const fs::path& artifact, const std::string& name, const std::string& command) const {
  if (!fs::exists(artifact)) throw MissingArtifactError(name + " (" + artifact.string() + ")", command);
}

void Pipeline::ingest() {
  if (cfg_.corpus.empty()) throw ValidationError("config lists no corpus inputs");
  std::vector<CorpusDocument> docs;
  std::set<std::string> ids;
  std::vector<fs::path> inputs;
  for (const auto& in : cfg_.corpus) {
    inputs.push_back(in.path);
    for (auto& d : ingest_corpus_input(in)) {
      if (!ids.insert(d.doc_id).second) throw ValidationError("duplicate corpus doc_id '" + d.doc_id + "'");
      docs.push_back(std::move(d));
    }
  }
  write_corpus(docs, paths_.corpus);
  spdlog::info("ingest: {} corpus sentences from {} input(s)", docs.size(), cfg_.corpus.size());
  write_provenance("ingest", cfg_, inputs, {paths_.corpus});

  const auto examples = load_examples(cfg_.examples, cfg_.task);
  spdlog::info("ingest: {} examples validated", examples.size());

  if (cfg_.seed_pairs) {
    const auto seeds = load_seed_pairs(*cfg_.seed_pairs);
    const auto paras = cfg_.paraphrases ? load_paraphrases(*cfg_.paraphrases) : std::map<std::string, std::string>{};
    const auto built = build_triplets(seeds, paras);
    write_triplets(built.triplets, paths_.triplets);
    spdlog::info("ingest: {} triplets ({} without paraphrase, {} rejected)", built.triplets.size(),
                 built.missing_paraphrase.size(), built.rejected.size());
    std::vector<fs::path> tin{*cfg_.seed_pairs};
    if (cfg_.paraphrases) tin.push_back(*cfg_.paraphrases);
    write_provenance("ingest", cfg_, tin, {paths_.triplets});
  }
}

EmbeddingTable Pipeline::training_table(const std::vector<TripletRecord>& triplets,
                                        const std::vector<EvalPool>& pools) const {
  auto backend = make_embedder(cfg_.embedding);
  EmbeddingCache cache(backend->backend_id(), backend->dimension());
  if (!cache.load(paths_.embeddings)) {
    spdlog::warn("embedding cache {} was written by another backend; re-embedding", paths_.embeddings.string());
  }
  CachedEmbedder cached(*backend, cache);
  std::vector<std::string> texts;
  for (const auto& t : triplets) {
    texts.push_back(t.query);
    texts.push_back(t.positive);
    texts.insert(texts.end(), t.hard_negatives.begin(), t.hard_negatives.end());
  }
  for (const auto& p : pools) {
    texts.push_back(p.query);
    texts.push_back(p.positive);
    texts.insert(texts.end(), p.random_negatives.begin(), p.random_negatives.end());
    texts.insert(texts.end(), p.hard_negatives.begin(), p.hard_negatives.end());
  }
  EmbeddingTable table(backend->dimension());
  table.add_all(unique_texts(std::move(texts)), cached);
  return table;
}

void Pipeline::embed() {
  require(paths_.corpus, "corpus", "ingest");
  if (cfg_.seed_pairs) require(paths_.triplets, "triplets", "ingest");
  std::vector<std::string> texts;
  std::vector<fs::path> inputs{paths_.corpus};
  if (fs::exists(paths_.triplets)) {
    inputs.push_back(paths_.triplets);
    for (const auto& t : load_triplets(paths_.triplets)) {
      texts.push_back(t.query);
      texts.push_back(t.positive);
      texts.insert(texts.end(), t.hard_negatives.begin(), t.hard_negatives.end());
    }
  }
  if (cfg_.eval_pools) {
    inputs.push_back(*cfg_.eval_pools);
    for (const auto& p : load_eval_pools(*cfg_.eval_pools)) {
      texts.push_back(p.query);
      texts.push_back(p.positive);
      texts.insert(texts.end(), p.random_negatives.begin(), p.random_negatives.end());
      texts.insert(texts.end(), p.hard_negatives.begin(), p.hard_negatives.end());
    }
  }
  for (auto& d : load_corpus(paths_.corpus)) texts.push_back(std::move(d.text));
  const auto lexicon = configured_lexicon(cfg_);
  inputs.push_back(cfg_.examples);
  for (const auto& ex : load_examples(cfg_.examples, cfg_.task)) {
    for (auto& q : embedding_texts_for(ex, lexicon, cfg_.generation)) texts.push_back(std::move(q));
  }
  texts = unique_texts(std::move(texts));

  auto backend = make_embedder(cfg_.embedding);
  EmbeddingCache cache(backend->backend_id(), backend->dimension());
  if (fs::exists(paths_.embeddings)) cache.load(paths_.embeddings);
  const auto before = cache.size();
  CachedEmbedder cached(*backend, cache);
  const std::size_t chunk = std::max<std::size_t>(cfg_.embedding.batch_size * 16, 1);
  for (std::size_t i = 0; i < texts.size(); i += chunk) {
    const auto n = std::min(chunk, texts.size() - i);
    cached.embed(std::span<const std::string>(texts).subspan(i, n));
  }
  cache.save(paths_.embeddings);
  spdlog::info("embed: {} texts, {} newly embedded, cache holds {}", texts.size(), cache.size() - before, cache.size());
  write_provenance("embed", cfg_, inputs, {paths_.embeddings});
}

TrainResult Pipeline::train_retriever() {
  require(paths_.triplets, "triplets", "ingest");
  require(paths_.embeddings, "embeddings", "embed");
  const auto triplets = load_triplets(paths_.triplets);
  std::vector<EvalPool> pools;
  if (cfg_.eval_pools) pools = load_eval_pools(*cfg_.eval_pools);
  const auto table = training_table(triplets, pools);

  EvalFn eval;
  if (!pools.empty()) {
    eval = [&](const EncoderPair& enc) { return evaluate_top1(enc, pools, table, cfg_.threads); };
  }
  auto result = train(triplets, table, cfg_.retriever, eval);
  save_encoder(result.encoders.query, paths_.query_encoder);
  save_encoder(result.encoders.document, paths_.doc_encoder);
  write_train_log(result.log, paths_.train_log);
  const auto& last = result.log.back();
  spdlog::info("train-retriever: {} epochs, loss {:.4f} -> {:.4f}", cfg_.retriever.epochs, result.log.front().mean_loss,
               last.mean_loss);
  if (!pools.empty()) spdlog::info("train-retriever: top-1 {:.3f}", evaluate_top1(result.encoders, pools, table, cfg_.threads));
  std::vector<fs::path> inputs{paths_.triplets, paths_.embeddings};
  if (cfg_.eval_pools) inputs.push_back(*cfg_.eval_pools);
  write_provenance("train-retriever", cfg_, inputs, {paths_.query_encoder, paths_.doc_encoder, paths_.train_log});
  return result;
}

void Pipeline::build_index() {
  require(paths_.corpus, "corpus", "ingest");
  require(paths_.embeddings, "embeddings", "embed");
  require(paths_.doc_encoder, "document encoder", "train-retriever");
  const auto docs = load_corpus(paths_.corpus);
  if (docs.empty()) throw ValidationError("build-index: corpus is empty");
  const auto encoder = load_encoder(paths_.doc_encoder);

  auto backend = make_embedder(cfg_.embedding);
  EmbeddingCache cache(backend->backend_id(), backend->dimension());
  cache.load(paths_.embeddings);
  CachedEmbedder cached(*backend, cache);
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  const auto base = cached.embed(texts);
  if (base.cols() != encoder.input_dim()) {
    throw DimensionError("document encoder expects " + std::to_string(encoder.input_dim()) + "-dim embeddings, got " +
                         std::to_string(base.cols()));
  }
  const auto projected = encoder.project_rows(base);
  const auto index = cfg_.index_kind == IndexKind::kIvf ? build_ivf(docs, projected, cfg_.ivf, cfg_.threads)
                                                        : build_exact(docs, projected);
  save_index(index, paths_.index);
  spdlog::info("build-index: {} documents, kind {}", index.size(), cfg_.index_kind == IndexKind::kIvf ? "ivf" : "exact");
  write_provenance("build-index", cfg_, {paths_.corpus, paths_.embeddings, paths_.doc_encoder}, {paths_.index});
}

void Pipeline::retrieve(const std::optional<fs::path>& out) {
  Retriever retriever(cfg_, paths_);
  const auto target = out.value_or(paths_.retrieved);
  std::string body;
  for (const auto& ex : selected_examples()) {
    const auto r = retriever.retrieve_for(ex, cfg_.generation.top_k);
    nlohmann::ordered_json j;
    j["source_id"] = ex.id;
    j["queries"] = r.queries;
    j["hits"] = hits_json(r.hits);
    body += j.dump() + "\n";
  }
  binary::write_file_atomic(target, body);
  write_provenance("retrieve", cfg_, {cfg_.examples, paths_.index, paths_.query_encoder}, {target});
}

LogisticScorer Pipeline::train_reranker() {
  if (cfg_.rerank.backend == RerankBackend::kRemote) {
    throw ValidationError("train-reranker: the remote reranker is trained outside this tool");
  }
  require(paths_.triplets, "triplets", "ingest");
  require(paths_.embeddings, "embeddings", "embed");
  const auto triplets = load_triplets(paths_.triplets);
  const auto table = training_table(triplets, {});
  const auto pairs = reranker_pairs(triplets, table);
  const auto scorer = train_bce(pairs, cfg_.rerank.bce);
  save_scorer(scorer, paths_.reranker);
  spdlog::info("train-reranker: {} pairs, final loss {:.4f}", pairs.size(), bce_loss(pairs, scorer));
  write_provenance("train-reranker", cfg_, {paths_.triplets, paths_.embeddings}, {paths_.reranker});
  return scorer;
}

std::vector<LabeledExample> Pipeline::selected_examples() const {
  auto all = load_examples(cfg_.examples, cfg_.task);
  if (!cfg_.generation.subset_ids) return all;
  const std::set<std::string> want(cfg_.generation.subset_ids->begin(), cfg_.generation.subset_ids->end());
  std::set<std::string> found;
  std::vector<LabeledExample> out;
  for (auto& ex : all) {
    if (want.count(ex.id)) {
      found.insert(ex.id);
      out.push_back(std::move(ex));
    }
  }
  for (const auto& id : want) {
    if (!found.count(id)) throw ValidationError("subset id '" + id + "' is not in " + cfg_.examples.string());
  }
  return out;
}

std::unique_ptr<LlmBackend> Pipeline::make_editor() const {
  if (cfg_.editor.backend == EditorBackend::kMock) return std::make_unique<MockLlmBackend>();
  return std::make_unique<RemoteLlmBackend>(*cfg_.editor.endpoint, http::RetryPolicy{}, cfg_.editor.auth_env_var);
}

PromptTemplate Pipeline::prompt_template() const {
  auto t = cfg_.editor.template_path ? load_template(*cfg_.editor.template_path) : builtin_template(cfg_.task);
  if (t.task != cfg_.task) throw ValidationError("prompt template task does not match the config task");
  return t;
}

GenerateSummary Pipeline::generate(const std::optional<fs::path>& out) {
  const auto& gen = cfg_.generation;
  const auto target = out.value_or(paths_.records);
  const auto examples = selected_examples();
  const auto tmpl = prompt_template();
  const auto stops = default_stop_lists();
  std::unique_ptr<Retriever> retriever;
  if (gen.stage != Stage::kGptOnly) retriever = std::make_unique<Retriever>(cfg_, paths_);

  // Retrieval and prompt construction run sequentially; only editor calls fan out.
  std::vector<GenerationJob> jobs;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const auto& ex = examples[e];
    const auto target_label = opposite_label(cfg_.task, ex.label);
    GenerationJob base;
    base.example = e;
    if (retriever) {
      const auto r = retriever->retrieve_for(ex, gen.top_k);
      std::vector<std::string> excerpts;
      for (const auto& h : r.hits) {
        base.doc_ids.push_back(h.doc_id);
        excerpts.push_back(h.text);
      }
      if (!excerpts.empty()) {
        base.keywords = extract_keywords(excerpts, stops, gen.keyword_cap);
        base.top_hit = excerpts.front();
      }
    }
    if (gen.stage == Stage::kRetrievedOnly) {
      base.stage = Stage::kRetrievedOnly;
    } else if (gen.stage == Stage::kGptOnly || base.keywords.empty()) {
      if (gen.stage == Stage::kCore) spdlog::warn("{}: no keywords, falling back to the keyword-free prompt", ex.id);
      base.stage = Stage::kGptOnly;
      base.keywords.clear();
      base.prompt = build_prompt_without_keywords(tmpl, ex, target_label);
    } else {
      base.stage = Stage::kCore;
      base.prompt = build_prompt(tmpl, ex, base.keywords, target_label);
    }
    for (std::size_t s = 0; s < gen.samples; ++s) {
      auto job = base;
      job.sample = static_cast<int>(s);
      jobs.push_back(std::move(job));
    }
  }

  auto editor = make_editor();
  RateLimiter limiter(cfg_.editor.requests_per_minute);
  auto run_job = [&](const GenerationJob& job) {
    const auto& ex = examples[job.example];
    CounterfactualRecord r;
    r.source_id = ex.id;
    r.original_text = ex.editable_text();
    r.original_label = ex.label;
    r.target_label = opposite_label(cfg_.task, ex.label);
    r.keywords = job.keywords;
    r.retrieved_doc_ids = job.doc_ids;
    r.stage = job.stage;
    if (ex.task == Task::kNli) r.context = ex.text_a;
    std::optional<ParsedEdit> parsed;
    if (job.stage == Stage::kRetrievedOnly) {
      if (job.top_hit) {
        parsed = ParsedEdit{*job.top_hit, std::nullopt};
        if (text::trim(*job.top_hit) == text::trim(r.original_text)) parsed->failure = "identical_to_original";
      } else {
        r.failure_reason = "no_retrieval";
      }
    } else {
      EditRequest req{job.prompt, cfg_.editor.params, r.original_text, job.keywords, job.sample};
      try {
        limiter.acquire();
        parsed = parse_edit(request_edit(req, *editor), tmpl, r.original_text);
      } catch (const EmptyCompletionError&) {
        r.failure_reason = "empty";
      } catch (const RemoteError& e) {
        r.failure_reason = std::string("editor_error: ") + e.what();
      }
    }
    if (parsed) {
      r.edited_text = parsed->text;
      r.failure_reason = parsed->failure;
      if (parsed->ok()) r.metrics = to_record_metrics(pair_metrics(r.original_text, r.edited_text));
    }
    if (!r.ok()) spdlog::warn("{}: edit failed ({})", ex.id, *r.failure_reason);
    return r;
  };

  std::ofstream os(target, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + target.string() + " for writing");
  GenerateSummary summary;
  const std::size_t workers =
      static_cast<std::size_t>(std::max(1, std::min(cfg_.threads, cfg_.editor.max_in_flight)));
  std::vector<CounterfactualRecord> batch;
  for (std::size_t start = 0; start < jobs.size(); start += workers) {
    const std::size_t n = std::min(workers, jobs.size() - start);
    batch.assign(n, {});
    if (n == 1) {
      batch[0] = run_job(jobs[start]);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(n);
      for (std::size_t i = 0; i < n; ++i) {
        pool.emplace_back([&, i] {
          try {
            batch[i] = run_job(jobs[start + i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (const auto& r : batch) {
      validate(r);
      os << to_json(r).dump() << '\n';
      ++summary.records;
      ++summary.stages[std::string(to_string(r.stage))];
      if (!r.ok()) {
        ++summary.failures;
        ++summary.failure_reasons[r.failure_reason->substr(0, r.failure_reason->find(':'))];
      }
    }
    os.flush();
  }
  os.close();
  spdlog::info("generate: {} records, {} failed edits", summary.records, summary.failures);

  std::vector<fs::path> inputs{cfg_.examples};
  if (retriever) {
    inputs.insert(inputs.end(), {paths_.index, paths_.query_encoder, paths_.corpus});
    if (cfg_.rerank_enabled() && cfg_.rerank.backend == RerankBackend::kLogistic) inputs.push_back(paths_.reranker);
  }
  if (cfg_.editor.template_path) inputs.push_back(*cfg_.editor.template_path);
  write_provenance("generate", cfg_, inputs, {target});
  return summary;
}

EvaluateSummary Pipeline::evaluate(const std::vector<fs::path>& record_files, const std::optional<fs::path>& out) {
  auto files = record_files;
  if (files.empty()) files.push_back(paths_.records);
  std::vector<CounterfactualRecord> records;
  for (const auto& f : files) {
    require(f, "records", "generate");
    auto rs = load_records(f);
    records.insert(records.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
  }

  EvaluateSummary summary;
  std::map<Stage, std::vector<CounterfactualRecord>> by_stage;
  for (const auto& r : records) by_stage[r.stage].push_back(r);

  const auto designated = std::string(label_set(cfg_.task).front());
  auto bias_input = [&](std::span<const CounterfactualRecord> rs) -> std::optional<TokenBiasInput> {
    TokenBiasInput in;
    in.designated_class = designated;
    std::set<std::string> labels;
    for (const auto& r : rs) {
      if (!r.ok()) continue;
      in.data.push_back({r.original_text, r.original_label});
      in.data.push_back({r.edited_text, r.target_label});
      labels.insert(r.original_label);
      labels.insert(r.target_label);
    }
    if (labels.size() != 2) return std::nullopt;
    return in;
  };

  const auto all_pairs = paired_corpus(records);
  if (all_pairs.empty()) throw ValidationError("evaluate: no successful records to evaluate");
  summary.overall = aggregate_report(all_pairs, bias_input(records), cfg_.threads);
  for (const auto& [stage, rs] : by_stage) {
    const auto pairs = paired_corpus(rs);
    if (pairs.empty()) continue;
    summary.by_stage[std::string(to_string(stage))] = aggregate_report(pairs, std::nullopt, cfg_.threads);
  }
  const auto ro = summary.by_stage.find("retrieved_only");
  const auto core = summary.by_stage.find("core");
  if (ro != summary.by_stage.end() && core != summary.by_stage.end()) {
    summary.ordering = check_intrinsic_ordering(ro->second.mean_self_bleu, core->second.mean_self_bleu);
    if (!summary.ordering->holds) {
      spdlog::warn("evaluate: self-BLEU ordering violated (retrieved_only {:.3f}, core {:.3f}, identity 1.0)",
                   summary.ordering->retrieved_only, summary.ordering->core);
    }
  }

  nlohmann::ordered_json j;
  j["config_hash"] = cfg_.hash;
  j["records"] = records.size();
  j["failed"] = records.size() - all_pairs.size();
  j["overall"] = to_json(summary.overall);
  j["by_stage"] = nlohmann::ordered_json::object();
  for (const auto& [name, rep] : summary.by_stage) j["by_stage"][name] = to_json(rep);
  if (summary.ordering) {
    j["ordering_check"] = {{"retrieved_only", summary.ordering->retrieved_only},
                           {"core", summary.ordering->core},
                           {"identity", summary.ordering->identity},
                           {"holds", summary.ordering->holds}};
  }
  const auto target = out.value_or(paths_.report);
  const fs::path table_path = target.string() + ".txt";
  const fs::path csv_path = target.string() + ".tokens.csv";
  binary::write_file_atomic(target, j.dump(2) + "\n");
  std::string table = "overall\n" + to_text_table(summary.overall);
  for (const auto& [name, rep] : summary.by_stage) table += "\nstage " + name + "\n" + to_text_table(rep, 0);
  binary::write_file_atomic(table_path, table);
  binary::write_file_atomic(csv_path, token_bias_csv(summary.overall.token_bias));
  write_provenance("evaluate", cfg_, files, {target, table_path, csv_path});
  return summary;
}

}  // namespace cfcore
