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

#include "cfcore/reranker.hpp"

#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/matrix.hpp"
#include "cfcore/random.hpp"
#include "cfcore/text.hpp"

namespace cfcore {

PairFeatures features(std::string_view q_text, std::string_view d_text, std::span<const double> q_vec,
                      std::span<const double> d_vec) {
  if (q_vec.size() != d_vec.size()) throw DimensionError("features: vectors have different dimensions");
  const auto q_toks = text::split_whitespace(text::to_lower(q_text));
  const auto d_toks = text::split_whitespace(text::to_lower(d_text));
  if (q_toks.empty() || d_toks.empty()) throw ValidationError("features: empty text");

  PairFeatures f;
  f.dot = dot(q_vec, d_vec);
  const double nq = l2_norm(q_vec);
  const double nd = l2_norm(d_vec);
  f.cosine = (nq > 0.0 && nd > 0.0) ? f.dot / (nq * nd) : 0.0;
  f.l2_distance = std::sqrt(squared_distance(q_vec, d_vec));

  const std::set<std::string> qs(q_toks.begin(), q_toks.end());
  const std::set<std::string> ds(d_toks.begin(), d_toks.end());
  std::size_t inter = 0;
  for (const auto& t : qs) inter += ds.count(t);
  const std::size_t uni = qs.size() + ds.size() - inter;
  f.token_jaccard = static_cast<double>(inter) / static_cast<double>(uni);
  const std::size_t lo = std::min(q_toks.size(), d_toks.size());
  const std::size_t hi = std::max(q_toks.size(), d_toks.size());
  f.length_ratio = static_cast<double>(lo) / static_cast<double>(hi);
  return f;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double score(const LogisticScorer& scorer, const PairFeatures& f) {
  const auto x = f.as_array();
  double z = scorer.bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += scorer.weights[i] * x[i];
  return sigmoid(z);
}

namespace {

double logit(const LogisticScorer& s, const PairFeatures& f) {
  const auto x = f.as_array();
  double z = s.bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += s.weights[i] * x[i];
  return z;
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double bce_loss(std::span<const LabeledPair> pairs, const LogisticScorer& scorer) {
  if (pairs.empty()) throw ValidationError("bce_loss: no pairs");
  double total = 0.0;
  for (const auto& p : pairs) {
    const double z = logit(scorer, p.features);
    // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
    total += softplus(z) - static_cast<double>(p.label) * z;
  }
  return total / static_cast<double>(pairs.size());
}

std::array<double, 6> bce_gradient(std::span<const LabeledPair> pairs, const LogisticScorer& scorer) {
  if (pairs.empty()) throw ValidationError("bce_gradient: no pairs");
  std::array<double, 6> g{};
  for (const auto& p : pairs) {
    const double r = sigmoid(logit(scorer, p.features)) - static_cast<double>(p.label);
    const auto x = p.features.as_array();
    for (std::size_t i = 0; i < 5; ++i) g[i] += r * x[i];
    g[5] += r;
  }
  for (auto& v : g) v /= static_cast<double>(pairs.size());
  return g;
}

LogisticScorer train_bce(std::span<const LabeledPair> pairs, const BceConfig& cfg) {
  bool has0 = false;
  bool has1 = false;
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1) throw ValidationError("train_bce: labels must be 0 or 1");
    has0 = has0 || p.label == 0;
    has1 = has1 || p.label == 1;
    for (double v : p.features.as_array()) {
      if (!std::isfinite(v)) throw ValidationError("train_bce: non-finite feature");
    }
  }
  if (!has0 || !has1) throw ValidationError("train_bce: both labels must be present");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("train_bce: learning_rate must be positive");

  Rng rng(cfg.seed);
  LogisticScorer s;
  for (auto& w : s.weights) w = rng.uniform(-0.01, 0.01);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto g = bce_gradient(pairs, s);
    for (std::size_t i = 0; i < 5; ++i) s.weights[i] -= cfg.learning_rate * g[i];
    s.bias -= cfg.learning_rate * g[5];
    bool finite = std::isfinite(s.bias);
    for (double w : s.weights) finite = finite && std::isfinite(w);
    if (!finite) throw DivergenceError("reranker training diverged at epoch " + std::to_string(epoch));
  }
  return s;
}

std::vector<double> LogisticPairScorer::probabilities(std::string_view query_text, std::span<const double> query_vec,
                                                      std::span<const RerankCandidate> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(score(scorer_, features(query_text, c.text, query_vec, c.vec)));
  return out;
}

RemotePairScorer::RemotePairScorer(const std::string& endpoint, http::RetryPolicy retry,
                                   const std::optional<std::string>& auth_env_var)
    : endpoint_(http::parse_url(endpoint)), retry_(retry), headers_(http::bearer_from_env(auth_env_var)) {}

std::vector<double> RemotePairScorer::probabilities(std::string_view query_text, std::span<const double>,
                                                    std::span<const RerankCandidate> candidates) {
  nlohmann::json body;
  body["query"] = std::string(query_text);
  body["docs"] = nlohmann::json::array();
  for (const auto& c : candidates) body["docs"].push_back(c.text);
  const auto res = http::post_json(endpoint_, body, retry_, headers_);
  std::vector<double> probs;
  try {
    probs = res.body.at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw RemoteError(std::string("malformed scorer response: ") + e.what());
  }
  if (probs.size() != candidates.size()) throw RemoteError("scorer returned " + std::to_string(probs.size()) + " probabilities for " + std::to_string(candidates.size()) + " docs");
  for (double p : probs) {
    if (!std::isfinite(p)) throw RemoteError("non-finite probability from scorer");
  }
  return probs;
}

std::vector<RerankCandidate> rerank(std::string_view query_text, std::span<const double> query_vec,
                                    std::span<const RerankCandidate> candidates, PairScorer& scorer) {
  const auto probs = scorer.probabilities(query_text, query_vec, candidates);
  return rerank<RerankCandidate>(candidates, probs);
}

std::vector<LabeledPair> reranker_pairs(std::span<const TripletRecord> triplets, const EmbeddingTable& table) {
  std::vector<LabeledPair> out;
  for (const auto& t : triplets) {
    validate(t);
    const auto q = table.at(t.query);
    out.push_back({features(t.query, t.positive, q, table.at(t.positive)), 1});
    const auto& neg = t.hard_negatives.front();
    out.push_back({features(t.query, neg, q, table.at(neg)), 0});
  }
  return out;
}

void save_scorer(const LogisticScorer& scorer, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["weights"] = scorer.weights;
  j["bias"] = scorer.bias;
  binary::write_file_atomic(path, j.dump(2) + "\n");
}

LogisticScorer load_scorer(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(binary::read_file(path));
    LogisticScorer s;
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != 5) throw FormatError(path.string() + ": scorer needs exactly 5 weights");
    std::copy(w.begin(), w.end(), s.weights.begin());
    s.bias = j.at("bias").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cfcore
