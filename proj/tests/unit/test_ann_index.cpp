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

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <set>

#include "cfcore/ann_index.hpp"
#include "cfcore/random.hpp"
#include "support.hpp"

using namespace cfcore;
using cfcore::testing::TempDir;

namespace {

Matrix random_unit(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : m.row(i)) x = rng.normal();
    normalize(m.row(i));
  }
  return m;
}

std::vector<CorpusDocument> docs_for(std::size_t n) {
  std::vector<CorpusDocument> docs;
  for (std::size_t i = 0; i < n; ++i) docs.push_back({"d" + std::to_string(100000 + i), "text", "src"});
  return docs;
}

// Independent O(n d) scan.
std::vector<SearchHit> brute_force(const std::vector<CorpusDocument>& docs, const Matrix& m,
                                   std::span<const double> q, std::size_t k) {
  std::vector<SearchHit> all;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) s += m(i, c) * q[c];
    all.push_back({docs[i].doc_id, s});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<std::string> ids(const std::vector<SearchHit>& hits) {
  std::vector<std::string> out;
  for (const auto& h : hits) out.push_back(h.doc_id);
  return out;
}

double recall(const VectorIndex& ivf, const VectorIndex& exact, const Matrix& queries, std::size_t k, std::size_t probe) {
  std::size_t found = 0;
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    const auto truth = ids(exact.search(queries.row(i), k));
    const auto got = ids(ivf.search(queries.row(i), k, probe));
    const std::set<std::string> g(got.begin(), got.end());
    for (const auto& t : truth) found += g.count(t);
  }
  return static_cast<double>(found) / static_cast<double>(queries.rows() * k);
}

}  // namespace

TEST_CASE("exact index basics") {
  CHECK_THROWS_AS(build_exact(std::vector<CorpusDocument>{}, Matrix(0, 2)), ValidationError);

  const std::vector<CorpusDocument> one = {{"only", "t", "s"}};
  const auto idx1 = build_exact(one, Matrix(1, 2, std::vector<double>{0.3, -0.2}));
  CHECK(idx1.search(std::vector<double>{-5.0, 1.0}, 3) == std::vector<SearchHit>{{"only", -1.7}});

  const std::vector<CorpusDocument> two = {{"a", "t", "s"}, {"b", "t", "s"}};
  const auto idx2 = build_exact(two, Matrix(2, 2, std::vector<double>{1, 0, 0, 1}));
  const auto hit = idx2.search(std::vector<double>{0.9, 0.1}, 1);
  REQUIRE(hit.size() == 1);
  CHECK(hit[0].doc_id == "a");
  CHECK(hit[0].score == doctest::Approx(0.9));
  CHECK(idx2.search(std::vector<double>{0.9, 0.1}, 10).size() == 2);
  CHECK_THROWS_AS(idx2.search(std::vector<double>{1.0}, 1), DimensionError);

  const std::vector<CorpusDocument> dup = {{"a", "t", "s"}, {"a", "u", "s"}};
  CHECK_THROWS_AS(build_exact(dup, Matrix(2, 2)), ValidationError);
  CHECK_THROWS_AS(build_exact(two, Matrix(3, 2)), Error);
}

TEST_CASE("ties are broken by ascending doc_id") {
  const std::vector<CorpusDocument> docs = {{"c", "t", "s"}, {"a", "t", "s"}, {"b", "t", "s"}};
  const auto idx = build_exact(docs, Matrix(3, 2, std::vector<double>{1, 0, 1, 0, 0, 1}));
  CHECK(ids(idx.search(std::vector<double>{1.0, 0.0}, 3)) == std::vector<std::string>{"a", "c", "b"});
}

TEST_CASE("exact search equals the brute-force oracle (property)") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(150);
    const std::size_t d = 2 + rng.below(12);
    const auto docs = docs_for(n);
    const auto m = random_unit(rng, n, d);
    const auto idx = build_exact(docs, m);
    const auto qs = random_unit(rng, 10, d);
    for (std::size_t i = 0; i < qs.rows(); ++i) {
      const std::size_t k = 1 + rng.below(n + 3);
      CHECK(idx.search(qs.row(i), k) == brute_force(docs, m, qs.row(i), k));
    }
  }
}

TEST_CASE("k-means on two separated clouds matches the exhaustive optimum") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 6 + rng.below(7);  // <= 12 points
    Matrix pts(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double cx = i < n / 2 ? -5.0 : 5.0;
      pts(i, 0) = cx + rng.uniform(-1.0, 1.0);
      pts(i, 1) = rng.uniform(-1.0, 1.0);
    }
    // Best 2-partition by brute force over all 2^(n-1) splits.
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_mask = 0;
    for (std::uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
      double sse = 0.0;
      for (int side = 0; side < 2; ++side) {
        double sx = 0, sy = 0;
        int cnt = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (static_cast<int>((mask >> i) & 1u) == side) {
            sx += pts(i, 0);
            sy += pts(i, 1);
            ++cnt;
          }
        }
        if (cnt == 0) continue;
        for (std::size_t i = 0; i < n; ++i) {
          if (static_cast<int>((mask >> i) & 1u) == side) {
            sse += std::pow(pts(i, 0) - sx / cnt, 2) + std::pow(pts(i, 1) - sy / cnt, 2);
          }
        }
      }
      if (sse < best) {
        best = sse;
        best_mask = mask;
      }
    }
    const auto km = kmeans(pts, 2, 25, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool same_oracle = ((best_mask >> i) & 1u) == ((best_mask >> j) & 1u);
        CHECK((km.assignments[i] == km.assignments[j]) == same_oracle);
      }
    }
    CHECK(km.objective_history.back() == doctest::Approx(best));
  }
}

TEST_CASE("k-means objective never increases and is thread-count independent") {
  Rng rng(13);
  const auto pts = random_unit(rng, 800, 8);
  const auto a = kmeans(pts, 20, 30, 5, 1);
  for (std::size_t i = 1; i < a.objective_history.size(); ++i) {
    CHECK(a.objective_history[i] <= a.objective_history[i - 1] + 1e-9);
  }
  const auto b = kmeans(pts, 20, 30, 5, 4);
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignments == b.assignments);
  const auto c = kmeans(pts, 20, 30, 5, 1);
  CHECK(a.centroids == c.centroids);
  CHECK_THROWS_AS(kmeans(pts, 801, 3, 0), ValidationError);
}

TEST_CASE("duplicate points do not break k-means") {
  // Three distinct locations with repeats: every cluster ends up non-empty.
  Matrix pts(7, 1, std::vector<double>{0, 0, 0, 10, 10, 10, 20});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto km = kmeans(pts, 3, 10, seed);
    std::set<std::uint32_t> used(km.assignments.begin(), km.assignments.end());
    CHECK(used.size() == 3);
    CHECK(km.objective_history.back() == doctest::Approx(0.0));
  }
  // More clusters than distinct locations: assignments stay valid.
  Matrix twin(6, 1, std::vector<double>{0, 0, 0, 10, 10, 10});
  const auto km = kmeans(twin, 3, 10, 1);
  for (auto a : km.assignments) CHECK(a < 3);
  CHECK(km.objective_history.back() == doctest::Approx(0.0));
}

TEST_CASE("IVF degenerate cases equal exact search") {
  Rng rng(3);
  const auto docs = docs_for(60);
  const auto m = random_unit(rng, 60, 6);
  const auto exact = build_exact(docs, m);
  const auto full = build_ivf(docs, m, IvfParams{60, 1, 10, 2});
  const auto probed = build_ivf(docs, m, IvfParams{8, 8, 10, 2});
  const auto qs = random_unit(rng, 25, 6);
  for (std::size_t i = 0; i < qs.rows(); ++i) {
    CHECK(probed.search(qs.row(i), 7) == exact.search(qs.row(i), 7));
    CHECK(full.search(qs.row(i), 5, 60) == exact.search(qs.row(i), 5));
  }
  // K = corpus size: every point is its own centroid.
  std::set<std::uint32_t> own(full.ivf()->assignments.begin(), full.ivf()->assignments.end());
  CHECK(own.size() == 60);
}

TEST_CASE("IVF recall is monotone in n_probe") {
  Rng rng(8);
  const auto docs = docs_for(2000);
  const auto m = random_unit(rng, 2000, 16);
  const auto exact = build_exact(docs, m);
  const auto ivf = build_ivf(docs, m, IvfParams{40, 4, 20, 1});
  const auto qs = random_unit(rng, 50, 16);
  double prev = 0.0;
  for (std::size_t probe : {1u, 2u, 4u, 10u, 40u}) {
    const double r = recall(ivf, exact, qs, 10, probe);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("IVF build is deterministic") {
  Rng rng(4);
  const auto docs = docs_for(300);
  const auto m = random_unit(rng, 300, 8);
  const auto a = build_ivf(docs, m, IvfParams{12, 3, 15, 9}, 1);
  const auto b = build_ivf(docs, m, IvfParams{12, 3, 15, 9}, 3);
  CHECK(a == b);
}

TEST_CASE("IVF parameter validation") {
  CHECK_THROWS_AS(validate(IvfParams{10, 11, 5, 0}, 100), ValidationError);
  CHECK_THROWS_AS(validate(IvfParams{10, 0, 5, 0}, 100), ValidationError);
  CHECK_THROWS_AS(validate(IvfParams{101, 5, 5, 0}, 100), ValidationError);
  CHECK_NOTHROW(validate(IvfParams{100, 5, 5, 0}, 100));
}

TEST_CASE("index persistence") {
  TempDir dir;
  Rng rng(6);
  const auto docs = docs_for(1000);
  const auto m = random_unit(rng, 1000, 12);
  const auto ivf = build_ivf(docs, m, IvfParams{30, 5, 10, 4});
  save_index(ivf, dir / "i.cfix");
  const auto back = load_index(dir / "i.cfix");
  CHECK(back == ivf);
  CHECK(back.kind() == IndexKind::kIvf);
  const auto qs = random_unit(rng, 100, 12);
  for (std::size_t i = 0; i < qs.rows(); ++i) CHECK(back.search(qs.row(i), 10) == ivf.search(qs.row(i), 10));

  const auto exact = build_exact(docs, m);
  save_index(exact, dir / "e.cfix");
  CHECK(load_index(dir / "e.cfix").kind() == IndexKind::kExact);

  const auto bytes = cfcore::testing::slurp(dir / "i.cfix");
  cfcore::testing::spit(dir / "t.cfix", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_index(dir / "t.cfix"), FormatError);
  auto wrong = bytes;
  wrong[4] = 9;  // version
  cfcore::testing::spit(dir / "v.cfix", wrong);
  CHECK_THROWS_AS(load_index(dir / "v.cfix"), FormatError);
}
