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

#include "cfcore/ann_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/random.hpp"

namespace cfcore {
namespace {

constexpr std::string_view kIndexMagic = "CFIX";
constexpr std::uint32_t kIndexVersion = 1;

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t t = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  if (t == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + t - 1) / t;
  for (std::size_t w = 0; w < t; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

std::uint32_t nearest_centroid(std::span<const double> x, const Matrix& centroids, double* dist) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

Matrix kmeans_pp_seed(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(0, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    chosen[pick] = true;
    centroids.append_row(points.row(pick));
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
      if (!chosen[i]) total += d2[i];
    }
    if (total <= 0.0) {
      // Remaining points coincide with chosen centroids; take the first unused.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    pick = n;
    std::size_t last_candidate = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i] || d2[i] <= 0.0) continue;
      last_candidate = i;
      acc += d2[i];
      if (acc > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_candidate;
  }
  return centroids;
}

bool hit_order(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed, int threads) {
  const std::size_t n = points.rows();
  if (k == 0) throw ValidationError("kmeans: k must be positive");
  if (k > n) throw ValidationError("kmeans: k (" + std::to_string(k) + ") exceeds the number of points (" + std::to_string(n) + ")");
  Rng rng(seed);
  KMeansResult res;
  res.centroids = kmeans_pp_seed(points, k, rng);
  res.assignments.assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> dist(n, 0.0);
  const std::size_t d = points.cols();

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
    std::vector<std::uint32_t> next(n);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) next[i] = nearest_centroid(points.row(i), res.centroids, &dist[i]);
    });
    const bool changed = next != res.assignments;
    res.assignments = std::move(next);
    // Summed in index order so the value is independent of thread count.
    res.objective_history.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
    ++res.iterations;
    if (!changed || iter + 1 >= max_iters) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = res.assignments[i];
      ++counts[c];
      auto row = sums.row(c);
      const auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = res.centroids.row(c);
      const auto src = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
    // Repair empty clusters by stealing the worst-fit point of a cluster
    // that can spare one.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t victim = n;
      double worst = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto owner = res.assignments[i];
        if (counts[owner] < 2) continue;
        const double di = squared_distance(points.row(i), res.centroids.row(owner));
        if (di > worst) {
          worst = di;
          victim = i;
        }
      }
      if (victim == n) break;
      --counts[res.assignments[victim]];
      res.assignments[victim] = static_cast<std::uint32_t>(c);
      counts[c] = 1;
      std::copy(points.row(victim).begin(), points.row(victim).end(), res.centroids.row(c).begin());
    }
  }
  return res;
}

VectorIndex::VectorIndex(IndexKind kind, std::vector<std::string> doc_ids, Matrix vectors, std::optional<IvfData> ivf)
    : kind_(kind), doc_ids_(std::move(doc_ids)), vectors_(std::move(vectors)), ivf_(std::move(ivf)) {
  if (doc_ids_.empty()) throw ValidationError("index has no documents");
  if (vectors_.rows() != doc_ids_.size()) throw ValidationError("index vector count does not match doc_id count");
  std::set<std::string_view> seen;
  for (const auto& id : doc_ids_) {
    if (!seen.insert(id).second) throw ValidationError("duplicate doc_id '" + id + "' in index");
  }
  all_rows_.resize(doc_ids_.size());
  std::iota(all_rows_.begin(), all_rows_.end(), 0);
  if (kind_ == IndexKind::kIvf) {
    if (!ivf_) throw ValidationError("ivf index without ivf data");
    const auto k = ivf_->centroids.rows();
    if (ivf_->centroids.cols() != vectors_.cols()) throw DimensionError("centroid dimension does not match vectors");
    if (ivf_->assignments.size() != doc_ids_.size()) throw ValidationError("ivf assignment count does not match documents");
    validate(ivf_->params, doc_ids_.size());
    if (ivf_->params.k_centroids != k) throw ValidationError("ivf params disagree with centroid count");
    lists_.assign(k, {});
    for (std::size_t i = 0; i < ivf_->assignments.size(); ++i) {
      if (ivf_->assignments[i] >= k) throw ValidationError("ivf assignment references a missing centroid");
      lists_[ivf_->assignments[i]].push_back(i);
    }
  } else if (ivf_) {
    throw ValidationError("exact index carries ivf data");
  }
}

bool VectorIndex::contains(const std::string& doc_id) const {
  return std::find(doc_ids_.begin(), doc_ids_.end(), doc_id) != doc_ids_.end();
}

std::vector<SearchHit> VectorIndex::top_k(std::span<const double> query, std::span<const std::size_t> rows,
                                          std::size_t k) const {
  std::vector<SearchHit> hits;
  hits.reserve(rows.size());
  for (auto r : rows) hits.push_back({doc_ids_[r], dot(query, vectors_.row(r))});
  const std::size_t m = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(m), hits.end(), hit_order);
  hits.resize(m);
  return hits;
}

std::vector<SearchHit> VectorIndex::search(std::span<const double> query, std::size_t k) const {
  return search(query, k, ivf_ ? ivf_->params.n_probe : 0);
}

std::vector<SearchHit> VectorIndex::search(std::span<const double> query, std::size_t k, std::size_t n_probe) const {
  if (query.size() != dimension()) {
    throw DimensionError("query has " + std::to_string(query.size()) + " dims, index has " + std::to_string(dimension()));
  }
  if (k == 0) throw ValidationError("search: k must be >= 1");
  if (kind_ == IndexKind::kExact) return top_k(query, all_rows_, k);

  const auto& centroids = ivf_->centroids;
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(centroids.rows());
  for (std::size_t c = 0; c < centroids.rows(); ++c) ranked.emplace_back(dot(query, centroids.row(c)), c);
  const std::size_t probes = std::clamp<std::size_t>(n_probe, 1, centroids.rows());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(probes), ranked.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::size_t> rows;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto& l = lists_[ranked[p].second];
    rows.insert(rows.end(), l.begin(), l.end());
  }
  return top_k(query, rows, k);
}

bool operator==(const VectorIndex& a, const VectorIndex& b) {
  if (a.kind_ != b.kind_ || a.doc_ids_ != b.doc_ids_ || !(a.vectors_ == b.vectors_)) return false;
  if (a.ivf_.has_value() != b.ivf_.has_value()) return false;
  if (!a.ivf_) return true;
  return a.ivf_->centroids == b.ivf_->centroids && a.ivf_->assignments == b.ivf_->assignments &&
         a.ivf_->params == b.ivf_->params;
}

void validate(const IvfParams& params, std::size_t corpus_size) {
  if (params.k_centroids < 1) throw ValidationError("k_centroids must be >= 1");
  if (params.k_centroids > corpus_size) {
    throw ValidationError("k_centroids (" + std::to_string(params.k_centroids) + ") exceeds corpus size (" +
                          std::to_string(corpus_size) + ")");
  }
  if (params.n_probe < 1 || params.n_probe > params.k_centroids) {
    throw ValidationError("n_probe must lie in [1, k_centroids]");
  }
}

namespace {

std::vector<std::string> ids_of(std::span<const CorpusDocument> docs, const Matrix& embeddings) {
  if (docs.empty()) throw ValidationError("cannot build an index over zero documents");
  if (docs.size() != embeddings.rows()) {
    throw ValidationError("document count (" + std::to_string(docs.size()) + ") does not match embedding rows (" +
                          std::to_string(embeddings.rows()) + ")");
  }
  if (!embeddings.all_finite()) throw ValidationError("non-finite value in index embeddings");
  std::vector<std::string> ids;
  ids.reserve(docs.size());
  for (const auto& d : docs) ids.push_back(d.doc_id);
  return ids;
}

}  // namespace

VectorIndex build_exact(std::span<const CorpusDocument> docs, const Matrix& embeddings) {
  return VectorIndex(IndexKind::kExact, ids_of(docs, embeddings), embeddings, std::nullopt);
}

VectorIndex build_ivf(std::span<const CorpusDocument> docs, const Matrix& embeddings, const IvfParams& params,
                      int threads) {
  auto ids = ids_of(docs, embeddings);
  validate(params, docs.size());
  auto km = kmeans(embeddings, params.k_centroids, params.kmeans_max_iters, params.kmeans_seed, threads);
  IvfData ivf{std::move(km.centroids), std::move(km.assignments), params};
  return VectorIndex(IndexKind::kIvf, std::move(ids), embeddings, std::move(ivf));
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  binary::Writer out;
  out.bytes(kIndexMagic);
  out.u32(kIndexVersion);
  out.u32(static_cast<std::uint32_t>(index.kind()));
  out.u64(index.dimension());
  out.u64(index.size());
  for (const auto& id : index.doc_ids()) out.str(id);
  out.f64s(index.vectors().values());
  if (index.kind() == IndexKind::kIvf) {
    const auto& ivf = *index.ivf();
    out.u64(ivf.params.k_centroids);
    out.u64(ivf.params.n_probe);
    out.u64(ivf.params.kmeans_max_iters);
    out.u64(ivf.params.kmeans_seed);
    out.f64s(ivf.centroids.values());
    for (auto a : ivf.assignments) out.u32(a);
  }
  binary::write_file_atomic(path, out.data());
}

VectorIndex load_index(const std::filesystem::path& path) {
  const auto data = binary::read_file(path);
  binary::Reader in(data, path.string());
  if (in.bytes(4) != kIndexMagic) throw FormatError(path.string() + ": not an index file (bad magic)");
  const auto version = in.u32();
  if (version != kIndexVersion) throw FormatError(path.string() + ": unsupported index version " + std::to_string(version));
  const auto kind = in.u32();
  if (kind > 1) throw FormatError(path.string() + ": unknown index kind " + std::to_string(kind));
  const auto dim = in.u64();
  const auto count = in.count(8);
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(in.str());
  if (dim != 0 && count > in.remaining() / 8 / dim) throw FormatError(path.string() + ": truncated vector block");
  std::vector<double> vals(count * dim);
  for (auto& v : vals) v = in.f64();
  std::optional<IvfData> ivf;
  if (static_cast<IndexKind>(kind) == IndexKind::kIvf) {
    IvfParams p;
    p.k_centroids = in.u64();
    p.n_probe = in.u64();
    p.kmeans_max_iters = in.u64();
    p.kmeans_seed = in.u64();
    if (dim != 0 && p.k_centroids > in.remaining() / 8 / dim) throw FormatError(path.string() + ": truncated centroid block");
    std::vector<double> cents(p.k_centroids * dim);
    for (auto& v : cents) v = in.f64();
    std::vector<std::uint32_t> assign(count);
    for (auto& a : assign) a = in.u32();
    ivf = IvfData{Matrix(p.k_centroids, dim, std::move(cents)), std::move(assign), p};
  }
  if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes in index file");
  return VectorIndex(static_cast<IndexKind>(kind), std::move(ids), Matrix(count, dim, std::move(vals)), std::move(ivf));
}

}  // namespace cfcore
