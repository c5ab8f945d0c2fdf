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
#include <cmath>

#include "cfcore/random.hpp"
#include "cfcore/reranker.hpp"
#include "support.hpp"
#include "test_server.hpp"

using namespace cfcore;

namespace {

PairFeatures random_features(Rng& rng) {
  return {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(0, 1), rng.uniform(0.1, 1)};
}

}  // namespace

TEST_CASE("pair features") {
  const std::vector<double> v = {0.6, 0.8};
  const auto same = features("The cat", "the CAT", v, v);
  CHECK(same.token_jaccard == 1.0);
  CHECK(same.cosine == doctest::Approx(1.0));
  CHECK(same.l2_distance == 0.0);
  CHECK(same.length_ratio == 1.0);
  CHECK(same.dot == doctest::Approx(1.0));

  const std::vector<double> w = {0.0, 2.0};
  const auto f = features("a b", "a b c d", v, w);
  CHECK(f.length_ratio == 0.5);
  CHECK(f.token_jaccard == 0.5);
  CHECK(f.dot == doctest::Approx(1.6));
  CHECK(f.cosine == doctest::Approx(0.8));
  CHECK(f.l2_distance == doctest::Approx(std::sqrt(0.36 + 1.44)));

  CHECK(features("x y", "z w", v, v).token_jaccard == 0.0);
  CHECK_THROWS_AS(features("", "a", v, v), ValidationError);
  CHECK_THROWS_AS(features("a", "a", v, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("score and sigmoid") {
  LogisticScorer zero;
  CHECK(score(zero, PairFeatures{1, 2, 3, 0.5, 0.5}) == 0.5);
  LogisticScorer s;
  s.bias = std::log(3.0);
  CHECK(score(s, PairFeatures{}) == doctest::Approx(0.75));
  s.bias = -std::log(3.0);
  CHECK(score(s, PairFeatures{}) == doctest::Approx(0.25));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  // Strictly monotone in the logit.
  double prev = -1.0;
  for (double z = -30.0; z <= 30.0; z += 0.5) {
    CHECK(sigmoid(z) > prev);
    prev = sigmoid(z);
  }
}

TEST_CASE("BCE loss and gradient") {
  const std::vector<LabeledPair> one = {{PairFeatures{}, 1}};
  CHECK(bce_loss(one, LogisticScorer{}) == doctest::Approx(std::log(2.0)));

  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LabeledPair> pairs;
    for (int i = 0; i < 12; ++i) pairs.push_back({random_features(rng), static_cast<int>(rng.below(2))});
    LogisticScorer s;
    for (auto& w : s.weights) w = rng.uniform(-1, 1);
    s.bias = rng.uniform(-1, 1);
    const auto g = bce_gradient(pairs, s);
    for (std::size_t i = 0; i < 6; ++i) {
      auto up = s, down = s;
      const double h = 1e-6;
      if (i < 5) {
        up.weights[i] += h;
        down.weights[i] -= h;
      } else {
        up.bias += h;
        down.bias -= h;
      }
      const double fd = (bce_loss(pairs, up) - bce_loss(pairs, down)) / (2 * h);
      CHECK(std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-8}) < 1e-5);
    }
  }
}

TEST_CASE("train_bce separates a linearly separable set") {
  // Label is 1 exactly when jaccard > 0.5; an exhaustive threshold scan over
  // that feature confirms a perfect split exists.
  Rng rng(10);
  std::vector<LabeledPair> pairs;
  for (int i = 0; i < 200; ++i) {
    auto f = random_features(rng);
    if (std::abs(f.token_jaccard - 0.5) < 0.05) f.token_jaccard += 0.1;
    pairs.push_back({f, f.token_jaccard > 0.5 ? 1 : 0});
  }
  std::size_t oracle_best = 0;
  for (const auto& cut : pairs) {
    std::size_t ok = 0;
    for (const auto& p : pairs) ok += ((p.features.token_jaccard >= cut.features.token_jaccard) == (p.label == 1));
    oracle_best = std::max(oracle_best, ok);
  }
  REQUIRE(oracle_best == pairs.size());

  const auto s = train_bce(pairs);
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += ((score(s, p.features) > 0.5) == (p.label == 1));
  CHECK(static_cast<double>(correct) / pairs.size() >= 0.95);
  CHECK(train_bce(pairs) == s);

  const std::vector<LabeledPair> single = {{PairFeatures{}, 1}, {PairFeatures{}, 1}};
  CHECK_THROWS_AS(train_bce(single), ValidationError);
}

TEST_CASE("rerank is a stable sort by probability") {
  const std::vector<std::string> docs = {"d1", "d2", "d3"};
  const std::vector<double> probs = {0.9, 0.2, 0.6};
  CHECK(rerank<std::string>(docs, probs) == std::vector<std::string>{"d1", "d3", "d2"});
  const std::vector<double> flat = {0.5, 0.5, 0.5};
  CHECK(rerank<std::string>(docs, flat) == docs);
  const std::vector<std::string> one = {"only"};
  CHECK(rerank<std::string>(one, std::vector<double>{0.1}) == one);
}

TEST_CASE("rerank returns a permutation (property)") {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 1 + rng.below(20);
    std::vector<int> items(n);
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) {
      items[i] = static_cast<int>(i);
      probs[i] = static_cast<double>(rng.below(5)) / 4.0;
    }
    auto out = rerank<int>(items, probs);
    for (std::size_t i = 1; i < n; ++i) {
      const double a = probs[static_cast<std::size_t>(out[i - 1])];
      const double b = probs[static_cast<std::size_t>(out[i])];
      CHECK(a >= b);
      if (a == b) CHECK(out[i - 1] < out[i]);
    }
    std::sort(out.begin(), out.end());
    CHECK(out == items);
  }
}

TEST_CASE("remote pair scorer") {
  cfcore::testing::TestServer srv;
  srv.server().Post("/score", [](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    std::vector<double> probs;
    for (const auto& d : j.at("docs")) probs.push_back(d.get<std::string>().size() / 10.0);
    res.set_content(nlohmann::json{{"probs", probs}}.dump(), "application/json");
  });
  srv.start();
  http::RetryPolicy retry;
  retry.base_delay = std::chrono::milliseconds(1);
  RemotePairScorer scorer(srv.url("/score"), retry);
  const std::vector<RerankCandidate> cands = {{"a", "x", {}, 0.9}, {"b", "xxxxx", {}, 0.5}, {"c", "xxx", {}, 0.1}};
  const auto out = rerank("query", std::vector<double>{}, cands, scorer);
  REQUIRE(out.size() == 3);
  CHECK(out[0].doc_id == "b");
  CHECK(out[1].doc_id == "c");
  CHECK(out[2].doc_id == "a");
}

TEST_CASE("scorer checkpoint round trip") {
  cfcore::testing::TempDir dir;
  LogisticScorer s{{0.1, -0.2, 0.3, 1.5, -2.0}, 0.25};
  save_scorer(s, dir / "s.json");
  CHECK(load_scorer(dir / "s.json") == s);
  cfcore::testing::spit(dir / "bad.json", R"({"weights":[1,2],"bias":0})");
  CHECK_THROWS_AS(load_scorer(dir / "bad.json"), FormatError);
}

TEST_CASE("reranker training pairs") {
  EmbeddingBackendConfig bc;
  bc.dimension = 16;
  HashedTestEmbedder emb(bc);
  const std::vector<TripletRecord> triplets = {{"the film was good", "the film was bad", {"the movie was fine", "the film was good"}}};
  EmbeddingTable table(16);
  table.add_all(std::vector<std::string>{"the film was good", "the film was bad", "the movie was fine"}, emb);
  const auto pairs = reranker_pairs(triplets, table);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].label == 1);
  CHECK(pairs[1].label == 0);
  CHECK(pairs[1].features.token_jaccard == doctest::Approx(2.0 / 6.0));
}
