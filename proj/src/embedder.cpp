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

#include "cfcore/embedder.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace {

constexpr std::string_view kCacheMagic = "CFEC";
constexpr std::uint32_t kCacheVersion = 1;

// Byte offsets of each code point boundary in a UTF-8 string.
std::vector<std::size_t> code_point_starts(std::string_view s) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  return starts;
}

void check_texts(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed_batch: no texts given");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::trim(texts[i]).empty()) {
      throw ValidationError("embed_batch: text " + std::to_string(i) + " is empty");
    }
  }
}

}  // namespace

void validate(const EmbeddingBackendConfig& cfg) {
  if (cfg.dimension < 2) throw ValidationError("embedding dimension must be >= 2");
  if (cfg.batch_size == 0) throw ValidationError("embedding batch_size must be positive");
  if (cfg.kind == EmbeddingKind::kRemote && (!cfg.endpoint || cfg.endpoint->empty())) {
    throw ValidationError("remote embedding backend requires an endpoint");
  }
  if (cfg.max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
}

namespace {

std::vector<double> hashed_counts(std::string_view text, std::size_t dimension, std::uint64_t seed) {
  std::string seed_bytes(8, '\0');
  for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<char>((seed >> (8 * i)) & 0xFF);

  std::vector<double> v(dimension, 0.0);
  auto add_gram = [&](std::string_view gram) {
    const std::uint64_t h = text::fnv1a64(seed_bytes, text::fnv1a64(gram));
    const std::size_t bucket = static_cast<std::size_t>(h % dimension);
    const bool negative = ((h / dimension) & 1U) != 0;
    v[bucket] += negative ? -1.0 : 1.0;
  };

  const auto starts = code_point_starts(text);
  if (starts.size() < 3) {
    if (!text.empty()) add_gram(text);
  } else {
    for (std::size_t i = 0; i + 2 < starts.size(); ++i) {
      const std::size_t end = i + 3 < starts.size() ? starts[i + 3] : text.size();
      add_gram(text.substr(starts[i], end - starts[i]));
    }
  }
  return v;
}

}  // namespace

std::vector<double> hashed_test_embed(std::string_view text, std::size_t dimension, std::uint64_t seed) {
  if (dimension < 2) throw ValidationError("hashed_test_embed: dimension must be >= 2");
  auto v = hashed_counts(text, dimension, seed);
  normalize(v);
  return v;
}

HashedTestEmbedder::HashedTestEmbedder(EmbeddingBackendConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

Matrix HashedTestEmbedder::embed(std::span<const std::string> texts) {
  Matrix out(texts.size(), cfg_.dimension);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto v = cfg_.normalize ? hashed_test_embed(texts[i], cfg_.dimension, cfg_.seed)
                                  : hashed_counts(texts[i], cfg_.dimension, cfg_.seed);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

std::string HashedTestEmbedder::backend_id() const {
  return "hashed_test:dim=" + std::to_string(cfg_.dimension) + ":seed=" + std::to_string(cfg_.seed) +
         ":norm=" + (cfg_.normalize ? "1" : "0");
}

RemoteEmbedder::RemoteEmbedder(EmbeddingBackendConfig cfg)
    : cfg_(std::move(cfg)), endpoint_(), headers_() {
  validate(cfg_);
  endpoint_ = http::parse_url(*cfg_.endpoint);
  headers_ = http::bearer_from_env(cfg_.auth_env_var);
}

std::string RemoteEmbedder::backend_id() const {
  return "remote:" + *cfg_.endpoint + ":dim=" + std::to_string(cfg_.dimension) +
         ":norm=" + (cfg_.normalize ? "1" : "0");
}

Matrix RemoteEmbedder::embed(std::span<const std::string> texts) {
  const std::size_t n = texts.size();
  const std::size_t batches = (n + cfg_.batch_size - 1) / cfg_.batch_size;
  Matrix out(n, cfg_.dimension);

  std::atomic<std::size_t> next_batch{0};
  std::atomic<std::size_t> sent{0};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      const std::size_t b = next_batch.fetch_add(1);
      if (b >= batches) return;
      {
        std::lock_guard lock(err_mu);
        if (first_error) return;
      }
      const std::size_t lo = b * cfg_.batch_size;
      const std::size_t hi = std::min(n, lo + cfg_.batch_size);
      try {
        nlohmann::json body;
        body["texts"] = std::vector<std::string>(texts.begin() + lo, texts.begin() + hi);
        sent.fetch_add(1);
        auto res = http::post_json(endpoint_, body, cfg_.retry, headers_);
        const auto& emb = res.body.at("embeddings");
        if (!emb.is_array() || emb.size() != hi - lo) {
          throw RemoteError("embedding response has " + std::to_string(emb.size()) + " rows for " +
                            std::to_string(hi - lo) + " texts");
        }
        for (std::size_t r = 0; r < hi - lo; ++r) {
          const auto& row = emb[r];
          if (!row.is_array() || row.size() != cfg_.dimension) {
            throw DimensionError("embedding response row has " + std::to_string(row.size()) +
                                 " dimensions, expected " + std::to_string(cfg_.dimension));
          }
          auto dst = out.row(lo + r);
          for (std::size_t c = 0; c < cfg_.dimension; ++c) {
            if (!row[c].is_number()) throw RemoteError("non-numeric value in embedding response");
            const double v = row[c].get<double>();
            if (!std::isfinite(v)) throw RemoteError("non-finite value in embedding response");
            dst[c] = v;
          }
          if (cfg_.normalize) normalize(dst);
        }
      } catch (const nlohmann::json::exception& e) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::make_exception_ptr(RemoteError(std::string("malformed embedding response: ") + e.what()));
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_in_flight), batches);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  requests_sent_ += sent.load();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbeddingBackendConfig& cfg) {
  validate(cfg);
  if (cfg.kind == EmbeddingKind::kRemote) return std::make_unique<RemoteEmbedder>(cfg);
  return std::make_unique<HashedTestEmbedder>(cfg);
}

Matrix embed_batch(std::span<const std::string> texts, const EmbeddingBackendConfig& cfg) {
  check_texts(texts);
  auto embedder = make_embedder(cfg);
  return embedder->embed(texts);
}

EmbeddingCache::EmbeddingCache(std::string backend_id, std::size_t dimension)
    : backend_id_(std::move(backend_id)), dimension_(dimension) {}

bool EmbeddingCache::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return false;
  const auto data = binary::read_file(path);
  binary::Reader in(data, path.string());
  if (in.bytes(4) != kCacheMagic) throw FormatError(path.string() + ": not an embedding cache (bad magic)");
  if (in.u32() != kCacheVersion) throw FormatError(path.string() + ": unsupported embedding cache version");
  const auto backend = in.u64();
  const auto dim = in.u64();
  if (backend != text::fnv1a64(backend_id_) || dim != dimension_) {
    spdlog::info("embedding cache {} belongs to a different backend; ignoring it", path.string());
    return false;
  }
  const auto count = in.count(8 + 8 * dim);
  std::unordered_map<std::uint64_t, std::vector<double>> rows;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto key = in.u64();
    std::vector<double> v(dim);
    for (auto& x : v) x = in.f64();
    rows.emplace(key, std::move(v));
  }
  if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes in embedding cache");
  std::lock_guard lock(mu_);
  for (auto& [k, v] : rows) rows_.insert_or_assign(k, std::move(v));
  return true;
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::vector<std::pair<std::uint64_t, const std::vector<double>*>> sorted;
  {
    std::lock_guard lock(mu_);
    for (const auto& [k, v] : rows_) sorted.emplace_back(k, &v);
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  binary::Writer out;
  out.bytes(kCacheMagic);
  out.u32(kCacheVersion);
  out.u64(text::fnv1a64(backend_id_));
  out.u64(dimension_);
  out.u64(sorted.size());
  for (const auto& [k, v] : sorted) {
    out.u64(k);
    out.f64s(*v);
  }
  binary::write_file_atomic(path, out.data());
}

std::optional<std::vector<double>> EmbeddingCache::get(std::string_view t) const {
  std::lock_guard lock(mu_);
  auto it = rows_.find(text::fnv1a64(t));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(std::string_view t, std::span<const double> vec) {
  if (vec.size() != dimension_) throw DimensionError("cache entry has wrong dimension");
  std::lock_guard lock(mu_);
  rows_.insert_or_assign(text::fnv1a64(t), std::vector<double>(vec.begin(), vec.end()));
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return rows_.size();
}

Matrix CachedEmbedder::embed(std::span<const std::string> texts) {
  Matrix out(texts.size(), inner_.dimension());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_rows;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto v = cache_.get(texts[i])) {
      std::copy(v->begin(), v->end(), out.row(i).begin());
    } else {
      missing.push_back(texts[i]);
      missing_rows.push_back(i);
    }
  }
  if (!missing.empty()) {
    const Matrix fresh = inner_.embed(missing);
    for (std::size_t k = 0; k < missing.size(); ++k) {
      cache_.put(missing[k], fresh.row(k));
      std::copy(fresh.row(k).begin(), fresh.row(k).end(), out.row(missing_rows[k]).begin());
    }
  }
  return out;
}

void EmbeddingTable::add_all(std::span<const std::string> texts, Embedder& embedder) {
  if (dimension_ == 0) dimension_ = embedder.dimension();
  if (embedder.dimension() != dimension_) throw DimensionError("embedder dimension differs from table dimension");
  std::vector<std::string> todo;
  std::unordered_map<std::string, bool> queued;
  for (const auto& t : texts) {
    if (!contains(t) && !queued[t]) {
      queued[t] = true;
      todo.push_back(t);
    }
  }
  if (todo.empty()) return;
  check_texts(todo);
  const Matrix m = embedder.embed(todo);
  for (std::size_t i = 0; i < todo.size(); ++i) add(todo[i], m.row(i));
}

void EmbeddingTable::add(const std::string& t, std::span<const double> vec) {
  if (dimension_ == 0) dimension_ = vec.size();
  if (vec.size() != dimension_) throw DimensionError("embedding table row has wrong dimension");
  if (contains(t)) return;
  index_.emplace(t, rows_.rows());
  if (rows_.empty()) rows_ = Matrix(0, dimension_);
  rows_.append_row(vec);
}

std::span<const double> EmbeddingTable::at(const std::string& t) const {
  auto it = index_.find(t);
  if (it == index_.end()) throw ValidationError("no base embedding for text: '" + t + "'");
  return rows_.row(it->second);
}

}  // namespace cfcore
