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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfcore/dataset.hpp"
#include "cfcore/embedder.hpp"
#include "cfcore/http_client.hpp"

namespace cfcore {

struct PairFeatures {
  double dot = 0.0;
  double cosine = 0.0;
  double l2_distance = 0.0;
  double token_jaccard = 0.0;  // [0, 1]
  double length_ratio = 0.0;   // (0, 1]

  std::array<double, 5> as_array() const { return {dot, cosine, l2_distance, token_jaccard, length_ratio}; }
};

// Jaccard is over lowercased whitespace-token sets; length_ratio compares
// whitespace token counts.
PairFeatures features(std::string_view q_text, std::string_view d_text, std::span<const double> q_vec,
                      std::span<const double> d_vec);

struct LogisticScorer {
  std::array<double, 5> weights{};
  double bias = 0.0;

  friend bool operator==(const LogisticScorer&, const LogisticScorer&) = default;
};

double sigmoid(double x);
double score(const LogisticScorer& scorer, const PairFeatures& f);

struct LabeledPair {
  PairFeatures features;
  int label = 0;  // 0 or 1
};

struct BceConfig {
  double learning_rate = 0.5;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
};

// Mean binary cross-entropy of the scorer over the pairs.
double bce_loss(std::span<const LabeledPair> pairs, const LogisticScorer& scorer);
// Gradient of bce_loss: five weight partials followed by the bias partial.
std::array<double, 6> bce_gradient(std::span<const LabeledPair> pairs, const LogisticScorer& scorer);

// Full-batch gradient descent on mean BCE from a small seeded initialization.
// Requires both labels to be present; aborts with the epoch on divergence.
LogisticScorer train_bce(std::span<const LabeledPair> pairs, const BceConfig& cfg = {});

struct RerankCandidate {
  std::string doc_id;
  std::string text;
  std::vector<double> vec;
  double bi_score = 0.0;
};

class PairScorer {
 public:
  virtual ~PairScorer() = default;
  // One probability per candidate, in candidate order.
  virtual std::vector<double> probabilities(std::string_view query_text, std::span<const double> query_vec,
                                            std::span<const RerankCandidate> candidates) = 0;
};

class LogisticPairScorer final : public PairScorer {
 public:
  explicit LogisticPairScorer(LogisticScorer scorer) : scorer_(scorer) {}
  std::vector<double> probabilities(std::string_view query_text, std::span<const double> query_vec,
                                    std::span<const RerankCandidate> candidates) override;

 private:
  LogisticScorer scorer_;
};

// Client for POST {"query": s, "docs": [...]} -> {"probs": [...]}.
class RemotePairScorer final : public PairScorer {
 public:
  RemotePairScorer(const std::string& endpoint, http::RetryPolicy retry = {},
                   const std::optional<std::string>& auth_env_var = std::nullopt);
  std::vector<double> probabilities(std::string_view query_text, std::span<const double> query_vec,
                                    std::span<const RerankCandidate> candidates) override;

 private:
  http::Endpoint endpoint_;
  http::RetryPolicy retry_;
  std::map<std::string, std::string> headers_;
};

// Stable sort of `items` by probability, descending. Ties keep input order.
template <typename T>
std::vector<T> rerank(std::span<const T> items, std::span<const double> probs);

std::vector<RerankCandidate> rerank(std::string_view query_text, std::span<const double> query_vec,
                                    std::span<const RerankCandidate> candidates, PairScorer& scorer);

// Training pairs from retriever triplets: (query, positive) is labelled 1 and
// (query, first hard negative) is labelled 0. Vectors come from `table`.
std::vector<LabeledPair> reranker_pairs(std::span<const TripletRecord> triplets, const EmbeddingTable& table);

// Checkpoint: JSON {"weights": [5 numbers], "bias": number}.
void save_scorer(const LogisticScorer& scorer, const std::filesystem::path& path);
LogisticScorer load_scorer(const std::filesystem::path& path);

}  // namespace cfcore

#include "cfcore/reranker_impl.hpp"
