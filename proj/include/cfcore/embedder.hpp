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
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfcore/http_client.hpp"
#include "cfcore/matrix.hpp"

namespace cfcore {

enum class EmbeddingKind { kRemote, kHashedTest };

struct EmbeddingBackendConfig {
  EmbeddingKind kind = EmbeddingKind::kHashedTest;
  std::optional<std::string> endpoint;
  std::size_t dimension = 256;
  std::size_t batch_size = 64;
  std::optional<std::string> auth_env_var;
  bool normalize = true;
  std::uint64_t seed = 0;       // hashed_test only
  int max_in_flight = 4;        // remote only
  http::RetryPolicy retry;      // remote only
};

// Throws ValidationError when the config violates its invariants.
void validate(const EmbeddingBackendConfig& cfg);

// Character 3-gram feature hashing. Each 3-gram of Unicode code points is
// hashed with 64-bit FNV-1a over its UTF-8 bytes followed by the 8
// little-endian bytes of `seed`. The bucket is h % dimension and the sign is
// taken from the lowest bit of h / dimension (0 -> +1, 1 -> -1). Texts shorter
// than three code points contribute one gram made of the whole text. The
// signed counts are L2-normalized.
std::vector<double> hashed_test_embed(std::string_view text, std::size_t dimension, std::uint64_t seed);

class Embedder {
 public:
  virtual ~Embedder() = default;
  // One row per input text, in input order.
  virtual Matrix embed(std::span<const std::string> texts) = 0;
  virtual std::size_t dimension() const = 0;
  // Stable identifier of the backend and every setting that affects output.
  virtual std::string backend_id() const = 0;
};

class HashedTestEmbedder final : public Embedder {
 public:
  explicit HashedTestEmbedder(EmbeddingBackendConfig cfg);
  Matrix embed(std::span<const std::string> texts) override;
  std::size_t dimension() const override { return cfg_.dimension; }
  std::string backend_id() const override;

 private:
  EmbeddingBackendConfig cfg_;
};

// Client for POST {"texts": [...]} -> {"embeddings": [[...], ...]}.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbeddingBackendConfig cfg);
  Matrix embed(std::span<const std::string> texts) override;
  std::size_t dimension() const override { return cfg_.dimension; }
  std::string backend_id() const override;
  std::size_t requests_sent() const { return requests_sent_; }

 private:
  EmbeddingBackendConfig cfg_;
  http::Endpoint endpoint_;
  std::map<std::string, std::string> headers_;
  std::size_t requests_sent_ = 0;
};

std::unique_ptr<Embedder> make_embedder(const EmbeddingBackendConfig& cfg);

// Validates inputs, embeds through a fresh backend built from `cfg`.
Matrix embed_batch(std::span<const std::string> texts, const EmbeddingBackendConfig& cfg);

// On-disk embedding cache keyed by (backend id, FNV-1a of the text).
//
// File layout, little-endian:
//   "CFEC" | u32 version (1) | u64 backend-id hash | u64 dimension | u64 count
//   count x { u64 text hash | dimension x f64 }
// Records are written sorted by text hash.
class EmbeddingCache {
 public:
  EmbeddingCache(std::string backend_id, std::size_t dimension);

  // Loads an existing cache. A file written by a different backend or
  // dimension is ignored (returns false) rather than mixed in.
  bool load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<std::vector<double>> get(std::string_view text) const;
  void put(std::string_view text, std::span<const double> vec);
  std::size_t size() const;

 private:
  std::string backend_id_;
  std::size_t dimension_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, std::vector<double>> rows_;
};

// Embedder decorator that consults and fills a cache.
class CachedEmbedder final : public Embedder {
 public:
  CachedEmbedder(Embedder& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}
  Matrix embed(std::span<const std::string> texts) override;
  std::size_t dimension() const override { return inner_.dimension(); }
  std::string backend_id() const override { return inner_.backend_id(); }

 private:
  Embedder& inner_;
  EmbeddingCache& cache_;
};

// Text -> base embedding lookup used by training and evaluation.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  // Embeds every text not already present.
  void add_all(std::span<const std::string> texts, Embedder& embedder);
  void add(const std::string& text, std::span<const double> vec);
  bool contains(const std::string& text) const { return index_.count(text) > 0; }
  // Throws ValidationError naming the text when absent.
  std::span<const double> at(const std::string& text) const;
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return rows_.rows(); }

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix rows_;
};

}  // namespace cfcore
