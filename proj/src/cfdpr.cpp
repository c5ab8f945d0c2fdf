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

#include "cfcore/cfdpr.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/random.hpp"

namespace cfcore {
namespace {

constexpr std::string_view kEncoderMagic = "CFEN";

// x (d_in) outer g (d_out), accumulated into m with a scale.
void add_outer(Matrix& m, std::span<const double> x, std::span<const double> g, double scale) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i] * scale;
    if (xi == 0.0) continue;
    auto row = m.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) row[j] += xi * g[j];
  }
}

// Projected candidates of one triplet: the positive first, then hard
// negatives, then (optionally) other positives in the batch. Indices into
// `pos` (batch positives) or `hard` (this triplet's hard negatives).
struct Candidate {
  bool is_positive_slot;  // refers to a batch positive
  std::size_t index;
};

std::vector<Candidate> candidates_for(std::size_t i, std::size_t batch, std::size_t n_hard, bool in_batch) {
  std::vector<Candidate> c;
  c.push_back({true, i});
  for (std::size_t k = 0; k < n_hard; ++k) c.push_back({false, k});
  if (in_batch) {
    for (std::size_t j = 0; j < batch; ++j) {
      if (j != i) c.push_back({true, j});
    }
  }
  return c;
}

void check_batch(std::span<const EmbeddedTriplet> batch, const EncoderPair& enc) {
  if (batch.empty()) throw ValidationError("empty training batch");
  const std::size_t d = enc.query.input_dim();
  if (enc.document.input_dim() != d || enc.query.output_dim() != enc.document.output_dim()) {
    throw DimensionError("query and document encoders have different shapes");
  }
  for (const auto& t : batch) {
    if (t.hard_negatives.empty()) throw ValidationError("triplet without hard negatives");
    bool ok = t.query.size() == d && t.positive.size() == d;
    for (const auto& h : t.hard_negatives) ok = ok && h.size() == d;
    if (!ok) throw DimensionError("triplet embedding dimension does not match encoder input");
  }
}

struct BatchProjection {
  std::vector<std::vector<double>> queries;
  std::vector<std::vector<double>> positives;
  std::vector<std::vector<std::vector<double>>> hard;
};

BatchProjection project_batch(std::span<const EmbeddedTriplet> batch, const EncoderPair& enc) {
  BatchProjection p;
  for (const auto& t : batch) {
    p.queries.push_back(enc.query.project(t.query));
    p.positives.push_back(enc.document.project(t.positive));
    std::vector<std::vector<double>> hs;
    for (const auto& h : t.hard_negatives) hs.push_back(enc.document.project(h));
    p.hard.push_back(std::move(hs));
  }
  return p;
}

const std::vector<double>& candidate_vec(const BatchProjection& p, std::size_t i, const Candidate& c) {
  return c.is_positive_slot ? p.positives[c.index] : p.hard[i][c.index];
}

}  // namespace

std::vector<double> ProjectionEncoder::project(std::span<const double> x) const {
  if (x.size() != weights.rows()) {
    throw DimensionError("projection input has " + std::to_string(x.size()) + " dims, encoder expects " +
                         std::to_string(weights.rows()));
  }
  std::vector<double> out(weights.cols(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto row = weights.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xi * row[j];
  }
  return out;
}

Matrix ProjectionEncoder::project_rows(const Matrix& xs) const {
  Matrix out(xs.rows(), weights.cols());
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    const auto v = project(xs.row(r));
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

void validate(const ProjectionEncoder& enc) {
  if (enc.weights.cols() < 2) throw ValidationError("projection encoder output dimension must be >= 2");
  if (enc.weights.rows() < 1) throw ValidationError("projection encoder has no inputs");
  if (!enc.weights.all_finite()) throw ValidationError("projection encoder has non-finite weights");
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be positive");
  if (cfg.in_batch_negatives && cfg.batch_size < 2) {
    throw ValidationError("batch_size must be >= 2 when in_batch_negatives is on");
  }
  if (!(cfg.grad_clip > 0.0)) throw ValidationError("grad_clip must be positive");
  if (cfg.projection_dim < 2) throw ValidationError("projection_dim must be >= 2");
}

void validate(const EvalPool& pool) {
  if (pool.random_negatives.size() != EvalPool::kRandomNegatives ||
      pool.hard_negatives.size() != EvalPool::kHardNegatives) {
    throw ValidationError("eval pool for '" + pool.query + "' must have exactly 30 random and 30 hard negatives");
  }
  auto has = [&](const std::vector<std::string>& v) {
    return std::find(v.begin(), v.end(), pool.positive) != v.end();
  };
  if (has(pool.random_negatives) || has(pool.hard_negatives)) {
    throw ValidationError("eval pool for '" + pool.query + "' lists its positive among the negatives");
  }
}

double similarity(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) {
    throw DimensionError("similarity: dimensions differ (" + std::to_string(q.size()) + " vs " +
                         std::to_string(p.size()) + ")");
  }
  return dot(q, p);
}

double contrastive_loss_from_scores(double positive_score, std::span<const double> negative_scores) {
  if (negative_scores.empty()) throw ValidationError("contrastive loss needs at least one negative");
  double m = positive_score;
  for (double s : negative_scores) m = std::max(m, s);
  if (!std::isfinite(m) || !std::isfinite(positive_score)) throw ValidationError("contrastive loss: non-finite score");
  double z = std::exp(positive_score - m);
  for (double s : negative_scores) {
    if (!std::isfinite(s)) throw ValidationError("contrastive loss: non-finite score");
    z += std::exp(s - m);
  }
  return (m + std::log(z)) - positive_score;
}

double contrastive_loss(std::span<const double> q, std::span<const double> p_plus,
                        std::span<const std::vector<double>> p_negs) {
  if (p_negs.empty()) throw ValidationError("contrastive loss needs at least one negative");
  for (double v : q) {
    if (!std::isfinite(v)) throw ValidationError("contrastive loss: non-finite query vector");
  }
  std::vector<double> negs;
  negs.reserve(p_negs.size());
  for (const auto& n : p_negs) negs.push_back(similarity(q, n));
  return contrastive_loss_from_scores(similarity(q, p_plus), negs);
}

double batch_loss(std::span<const EmbeddedTriplet> batch, const EncoderPair& encoders, bool in_batch_negatives) {
  check_batch(batch, encoders);
  const auto p = project_batch(batch, encoders);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto cands = candidates_for(i, batch.size(), batch[i].hard_negatives.size(), in_batch_negatives);
    std::vector<double> negs;
    for (std::size_t k = 1; k < cands.size(); ++k) negs.push_back(dot(p.queries[i], candidate_vec(p, i, cands[k])));
    total += contrastive_loss_from_scores(dot(p.queries[i], candidate_vec(p, i, cands[0])), negs);
  }
  return total / static_cast<double>(batch.size());
}

Gradients loss_gradients(std::span<const EmbeddedTriplet> batch, const EncoderPair& encoders,
                         bool in_batch_negatives) {
  check_batch(batch, encoders);
  const std::size_t d_in = encoders.query.input_dim();
  const std::size_t d_out = encoders.query.output_dim();
  const std::size_t b = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  const auto p = project_batch(batch, encoders);

  Gradients g{Matrix(d_in, d_out), Matrix(d_in, d_out), 0.0};
  // dL/d(projected doc) accumulated per distinct document vector.
  std::vector<std::vector<double>> grad_pos(b, std::vector<double>(d_out, 0.0));
  std::vector<std::vector<std::vector<double>>> grad_hard(b);

  for (std::size_t i = 0; i < b; ++i) {
    const auto cands = candidates_for(i, b, batch[i].hard_negatives.size(), in_batch_negatives);
    std::vector<double> scores(cands.size());
    for (std::size_t k = 0; k < cands.size(); ++k) scores[k] = dot(p.queries[i], candidate_vec(p, i, cands[k]));
    const double m = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - m);
    g.loss += (m + std::log(z) - scores[0]) * inv_b;

    // dL_i/ds_k = softmax_k - [k == 0].
    std::vector<double> grad_q(d_out, 0.0);
    grad_hard[i].assign(batch[i].hard_negatives.size(), std::vector<double>(d_out, 0.0));
    for (std::size_t k = 0; k < cands.size(); ++k) {
      const double ds = std::exp(scores[k] - m) / z - (k == 0 ? 1.0 : 0.0);
      const auto& c = candidate_vec(p, i, cands[k]);
      auto& dc = cands[k].is_positive_slot ? grad_pos[cands[k].index] : grad_hard[i][cands[k].index];
      for (std::size_t j = 0; j < d_out; ++j) {
        grad_q[j] += ds * c[j];
        dc[j] += ds * p.queries[i][j];
      }
    }
    for (double v : grad_q) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient at batch index " + std::to_string(i));
    }
    add_outer(g.query, batch[i].query, grad_q, inv_b);
  }
  for (std::size_t i = 0; i < b; ++i) {
    add_outer(g.document, batch[i].positive, grad_pos[i], inv_b);
    for (std::size_t k = 0; k < grad_hard[i].size(); ++k) {
      add_outer(g.document, batch[i].hard_negatives[k], grad_hard[i][k], inv_b);
    }
  }
  if (!g.query.all_finite() || !g.document.all_finite() || !std::isfinite(g.loss)) {
    for (std::size_t i = 0; i < b; ++i) {
      for (double v : grad_pos[i]) {
        if (!std::isfinite(v)) throw DivergenceError("non-finite gradient at batch index " + std::to_string(i));
      }
    }
    throw DivergenceError("non-finite gradient in batch");
  }
  return g;
}

EncoderPair init_encoders(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  auto fill = [&](EncoderRole role) {
    ProjectionEncoder e{role, Matrix(input_dim, output_dim)};
    for (double& w : e.weights.values()) w = rng.uniform(-bound, bound);
    return e;
  };
  EncoderPair pair;
  pair.query = fill(EncoderRole::kQuery);
  pair.document = fill(EncoderRole::kDocument);
  return pair;
}

TrainResult train(std::span<const EmbeddedTriplet> triplets, const TrainConfig& cfg, const EvalFn& eval) {
  validate(cfg);
  if (triplets.empty()) throw ValidationError("train: no triplets");
  const std::size_t d_in = triplets.front().query.size();
  TrainResult result{init_encoders(d_in, cfg.projection_dim, cfg.seed), {}};
  auto& enc = result.encoders;
  // Shuffle order comes from a stream separate from initialization.
  Rng order_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  auto full_loss = [&] {
    double total = 0.0;
    for (std::size_t lo = 0; lo < triplets.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(triplets.size(), lo + cfg.batch_size);
      total += batch_loss(triplets.subspan(lo, hi - lo), enc, cfg.in_batch_negatives) * static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(triplets.size());
  };

  TrainLogEntry initial{0, full_loss(), std::nullopt};
  if (eval && cfg.eval_every > 0) initial.eval_top1 = eval(enc);
  result.log.push_back(initial);

  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EmbeddedTriplet> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      batch.clear();
      for (std::size_t k = lo; k < hi; ++k) batch.push_back(triplets[order[k]]);
      Gradients g = loss_gradients(batch, enc, cfg.in_batch_negatives);
      if (!std::isfinite(g.loss)) throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
      epoch_loss += g.loss * static_cast<double>(hi - lo);
      const double norm = std::sqrt(dot(g.query.values(), g.query.values()) + dot(g.document.values(), g.document.values()));
      const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      auto wq = enc.query.weights.values();
      auto wd = enc.document.weights.values();
      const auto gq = g.query.values();
      const auto gd = g.document.values();
      for (std::size_t k = 0; k < wq.size(); ++k) wq[k] -= cfg.learning_rate * scale * gq[k];
      for (std::size_t k = 0; k < wd.size(); ++k) wd[k] -= cfg.learning_rate * scale * gd[k];
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    TrainLogEntry entry{epoch, epoch_loss, std::nullopt};
    if (eval && cfg.eval_every > 0 && epoch % cfg.eval_every == 0) entry.eval_top1 = eval(enc);
    spdlog::debug("epoch {} mean loss {:.6f}", epoch, epoch_loss);
    result.log.push_back(entry);
  }
  return result;
}

EmbeddedTriplet embed_triplet(const TripletRecord& t, const EmbeddingTable& table) {
  EmbeddedTriplet e;
  auto copy = [](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); };
  e.query = copy(table.at(t.query));
  e.positive = copy(table.at(t.positive));
  for (const auto& h : t.hard_negatives) e.hard_negatives.push_back(copy(table.at(h)));
  return e;
}

EmbeddedPool embed_pool(const EvalPool& p, const EmbeddingTable& table) {
  validate(p);
  EmbeddedPool e;
  auto copy = [](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); };
  e.query = copy(table.at(p.query));
  e.positive = copy(table.at(p.positive));
  for (const auto& n : p.random_negatives) e.negatives.push_back(copy(table.at(n)));
  for (const auto& n : p.hard_negatives) e.negatives.push_back(copy(table.at(n)));
  return e;
}

TrainResult train(std::span<const TripletRecord> triplets, const EmbeddingTable& table, const TrainConfig& cfg,
                  const EvalFn& eval) {
  std::vector<EmbeddedTriplet> embedded;
  embedded.reserve(triplets.size());
  for (const auto& t : triplets) {
    validate(t);
    embedded.push_back(embed_triplet(t, table));
  }
  return train(embedded, cfg, eval);
}

double evaluate_top1(const EncoderPair& encoders, std::span<const EmbeddedPool> pools, int threads) {
  if (pools.empty()) return 0.0;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> correct{0};
  auto worker = [&] {
    std::size_t local = 0;
    for (std::size_t i = next.fetch_add(1); i < pools.size(); i = next.fetch_add(1)) {
      const auto& pool = pools[i];
      const auto q = encoders.query.project(pool.query);
      const double pos = dot(q, encoders.document.project(pool.positive));
      bool best = true;
      for (const auto& n : pool.negatives) {
        if (dot(q, encoders.document.project(n)) >= pos) {
          best = false;
          break;
        }
      }
      if (best) ++local;
    }
    correct.fetch_add(local);
  };
  const int n = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return static_cast<double>(correct.load()) / static_cast<double>(pools.size());
}

double evaluate_top1(const EncoderPair& encoders, std::span<const EvalPool> pools, const EmbeddingTable& table,
                     int threads) {
  std::vector<EmbeddedPool> embedded;
  embedded.reserve(pools.size());
  for (const auto& p : pools) embedded.push_back(embed_pool(p, table));
  return evaluate_top1(encoders, embedded, threads);
}

void save_encoder(const ProjectionEncoder& enc, const std::filesystem::path& path) {
  validate(enc);
  binary::Writer out;
  out.bytes(kEncoderMagic);
  out.u32(static_cast<std::uint32_t>(enc.role));
  out.u64(enc.weights.rows());
  out.u64(enc.weights.cols());
  out.f64s(enc.weights.values());
  binary::write_file_atomic(path, out.data());
}

ProjectionEncoder load_encoder(const std::filesystem::path& path) {
  const auto data = binary::read_file(path);
  binary::Reader in(data, path.string());
  if (in.bytes(4) != kEncoderMagic) throw FormatError(path.string() + ": not an encoder checkpoint (bad magic)");
  const auto role = in.u32();
  if (role > 1) throw FormatError(path.string() + ": unknown encoder role " + std::to_string(role));
  const auto d_in = in.u64();
  const auto d_out = in.u64();
  if (d_out != 0 && d_in > in.remaining() / 8 / d_out) throw FormatError(path.string() + ": truncated encoder checkpoint");
  std::vector<double> w(d_in * d_out);
  for (auto& v : w) v = in.f64();
  if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes in encoder checkpoint");
  ProjectionEncoder enc{static_cast<EncoderRole>(role), Matrix(d_in, d_out, std::move(w))};
  validate(enc);
  return enc;
}

void write_train_log(std::span<const TrainLogEntry> log, const std::filesystem::path& path) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["mean_loss"] = e.mean_loss;
    j["eval_top1"] = e.eval_top1 ? nlohmann::ordered_json(*e.eval_top1) : nlohmann::ordered_json(nullptr);
    out += j.dump() + "\n";
  }
  binary::write_file_atomic(path, out);
}

std::vector<TrainLogEntry> load_train_log(const std::filesystem::path& path) {
  std::vector<TrainLogEntry> out;
  for_each_json_line(path, [&](const nlohmann::json& j, std::size_t) {
    TrainLogEntry e;
    e.epoch = j.at("epoch").get<std::size_t>();
    e.mean_loss = j.at("mean_loss").get<double>();
    if (!j.at("eval_top1").is_null()) e.eval_top1 = j.at("eval_top1").get<double>();
    out.push_back(e);
  });
  return out;
}

std::vector<EvalPool> load_eval_pools(const std::filesystem::path& path) {
  std::vector<EvalPool> out;
  for_each_json_line(path, [&](const nlohmann::json& j, std::size_t line) {
    try {
      EvalPool p{j.at("query").get<std::string>(), j.at("positive").get<std::string>(),
                 j.at("random_negatives").get<std::vector<std::string>>(),
                 j.at("hard_negatives").get<std::vector<std::string>>()};
      validate(p);
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return out;
}

}  // namespace cfcore
