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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfcore/dataset.hpp"
#include "cfcore/matrix.hpp"

namespace cfcore {

enum class IndexKind : std::uint32_t { kExact = 0, kIvf = 1 };

struct IvfParams {
  std::size_t k_centroids = 300;
  std::size_t n_probe = 30;
  std::size_t kmeans_max_iters = 25;
  std::uint64_t kmeans_seed = 0;

  friend bool operator==(const IvfParams&, const IvfParams&) = default;
};

struct KMeansResult {
  Matrix centroids;
  std::vector<std::uint32_t> assignments;
  // Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  std::size_t iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iters is reached. An empty cluster takes over the point that
// lies farthest from its current centroid. Assignment is nearest centroid by
// Euclidean distance, ties to the lower index; the result does not depend on
// `threads`.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed, int threads = 1);

struct SearchHit {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

struct IvfData {
  Matrix centroids;
  std::vector<std::uint32_t> assignments;
  IvfParams params;
};

// Immutable maximum-inner-product index over a document collection.
class VectorIndex {
 public:
  VectorIndex(IndexKind kind, std::vector<std::string> doc_ids, Matrix vectors, std::optional<IvfData> ivf);

  IndexKind kind() const { return kind_; }
  std::size_t dimension() const { return vectors_.cols(); }
  std::size_t size() const { return doc_ids_.size(); }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const Matrix& vectors() const { return vectors_; }
  const std::optional<IvfData>& ivf() const { return ivf_; }
  bool contains(const std::string& doc_id) const;

  // Top-k by dot product, sorted by score descending then doc_id ascending.
  // IVF indexes only scan the params.n_probe lists whose centroids have the
  // largest dot product with the query.
  std::vector<SearchHit> search(std::span<const double> query, std::size_t k) const;
  // Same as search() with an explicit probe count (IVF only; ignored for exact).
  std::vector<SearchHit> search(std::span<const double> query, std::size_t k, std::size_t n_probe) const;

  friend bool operator==(const VectorIndex& a, const VectorIndex& b);

 private:
  std::vector<SearchHit> top_k(std::span<const double> query, std::span<const std::size_t> rows, std::size_t k) const;

  IndexKind kind_;
  std::vector<std::string> doc_ids_;
  Matrix vectors_;
  std::optional<IvfData> ivf_;
  std::vector<std::vector<std::size_t>> lists_;  // rows per centroid, ascending
  std::vector<std::size_t> all_rows_;
};

void validate(const IvfParams& params, std::size_t corpus_size);

VectorIndex build_exact(std::span<const CorpusDocument> docs, const Matrix& embeddings);
VectorIndex build_ivf(std::span<const CorpusDocument> docs, const Matrix& embeddings, const IvfParams& params,
                      int threads = 1);

// File layout, little-endian:
//   "CFIX" | u32 version (1) | u32 kind | u64 dimension | u64 count
//   count x { u64 length | doc_id bytes }
//   count*dimension x f64 vectors (row-major)
//   ivf only: u64 k | u64 n_probe | u64 max_iters | u64 seed
//             k*dimension x f64 centroids | count x u32 assignments
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace cfcore
