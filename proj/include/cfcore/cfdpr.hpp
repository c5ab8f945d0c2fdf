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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfcore/dataset.hpp"
#include "cfcore/embedder.hpp"
#include "cfcore/matrix.hpp"

namespace cfcore {

enum class EncoderRole : std::uint32_t { kQuery = 0, kDocument = 1 };

// Linear projection head over frozen base embeddings: out = W^T x with W of
// shape d_in x d_out.
struct ProjectionEncoder {
  EncoderRole role = EncoderRole::kQuery;
  Matrix weights;

  std::size_t input_dim() const { return weights.rows(); }
  std::size_t output_dim() const { return weights.cols(); }
  std::vector<double> project(std::span<const double> x) const;
  Matrix project_rows(const Matrix& xs) const;

  friend bool operator==(const ProjectionEncoder&, const ProjectionEncoder&) = default;
};

struct EncoderPair {
  ProjectionEncoder query;
  ProjectionEncoder document;

  friend bool operator==(const EncoderPair&, const EncoderPair&) = default;
};

void validate(const ProjectionEncoder& enc);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool in_batch_negatives = true;
  double grad_clip = 2.0;
  std::size_t eval_every = 0;  // epochs between evaluations; 0 disables
  std::size_t projection_dim = 64;
};

void validate(const TrainConfig& cfg);

// Appendix-style evaluation pool: one positive against 30 random and 30 hard
// negatives.
struct EvalPool {
  static constexpr std::size_t kRandomNegatives = 30;
  static constexpr std::size_t kHardNegatives = 30;

  std::string query;
  std::string positive;
  std::vector<std::string> random_negatives;
  std::vector<std::string> hard_negatives;
};

void validate(const EvalPool& pool);

// Base embeddings of one triplet.
struct EmbeddedTriplet {
  std::vector<double> query;
  std::vector<double> positive;
  std::vector<std::vector<double>> hard_negatives;
};

// Base embeddings of one evaluation pool; negatives holds all 60 candidates.
struct EmbeddedPool {
  std::vector<double> query;
  std::vector<double> positive;
  std::vector<std::vector<double>> negatives;
};

double similarity(std::span<const double> q, std::span<const double> p);

// -log softmax of the positive score among {positive} + negatives, with the
// max shifted out before exponentiation.
double contrastive_loss_from_scores(double positive_score, std::span<const double> negative_scores);

double contrastive_loss(std::span<const double> q, std::span<const double> p_plus,
                        std::span<const std::vector<double>> p_negs);

struct Gradients {
  Matrix query;     // d_in x d_out
  Matrix document;  // d_in x d_out
  double loss = 0.0;  // mean batch loss
};

// Mean contrastive loss of a batch under the given encoders. With in-batch
// negatives, the candidates for query i are its hard negatives followed by
// the positives of every other triplet in the batch.
double batch_loss(std::span<const EmbeddedTriplet> batch, const EncoderPair& encoders, bool in_batch_negatives);

// Analytic gradient of batch_loss with respect to both weight matrices.
// Throws DivergenceError naming the batch element on a non-finite gradient.
Gradients loss_gradients(std::span<const EmbeddedTriplet> batch, const EncoderPair& encoders,
                         bool in_batch_negatives);

struct TrainLogEntry {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> eval_top1;

  friend bool operator==(const TrainLogEntry&, const TrainLogEntry&) = default;
};

struct TrainResult {
  EncoderPair encoders;
  std::vector<TrainLogEntry> log;
};

// Weights drawn uniformly from [-1/sqrt(d_in), 1/sqrt(d_in)], query encoder
// first, from a generator seeded with `seed`.
EncoderPair init_encoders(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);

using EvalFn = std::function<double(const EncoderPair&)>;

// Mini-batch gradient descent with global-norm clipping. Epoch 0 of the log
// holds the loss of the initial weights; epochs 1..N follow each pass.
TrainResult train(std::span<const EmbeddedTriplet> triplets, const TrainConfig& cfg, const EvalFn& eval = {});

// Looks up every text in `table` and trains on the embedded triplets.
TrainResult train(std::span<const TripletRecord> triplets, const EmbeddingTable& table, const TrainConfig& cfg,
                  const EvalFn& eval = {});

// Fraction of pools whose positive scores strictly above every negative.
double evaluate_top1(const EncoderPair& encoders, std::span<const EmbeddedPool> pools, int threads = 1);
double evaluate_top1(const EncoderPair& encoders, std::span<const EvalPool> pools, const EmbeddingTable& table,
                     int threads = 1);

EmbeddedTriplet embed_triplet(const TripletRecord& t, const EmbeddingTable& table);
EmbeddedPool embed_pool(const EvalPool& p, const EmbeddingTable& table);

// Checkpoint layout, little-endian:
//   "CFEN" | u32 role | u64 d_in | u64 d_out | d_in*d_out x f64 (row-major)
void save_encoder(const ProjectionEncoder& enc, const std::filesystem::path& path);
ProjectionEncoder load_encoder(const std::filesystem::path& path);

// One JSON object per line: {"epoch", "mean_loss", "eval_top1"}.
void write_train_log(std::span<const TrainLogEntry> log, const std::filesystem::path& path);
std::vector<TrainLogEntry> load_train_log(const std::filesystem::path& path);

std::vector<EvalPool> load_eval_pools(const std::filesystem::path& path);

}  // namespace cfcore
