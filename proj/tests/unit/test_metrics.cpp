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

#include <cmath>
#include <numeric>

#include "cfcore/error.hpp"
#include "cfcore/metrics.hpp"
#include "cfcore/random.hpp"
#include "cfcore/text.hpp"
#include "perturbation_cases.hpp"

using namespace cfcore;

namespace {

// Full-table Wagner-Fischer, kept separate from the library's two-row version.
std::size_t oracle_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    }
  }
  return d[a.size()][b.size()];
}

std::string random_sentence(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> vocab = {"the", "a", "film", "was", "not", "good", "Good", "bad", "3", "all"};
  std::string s;
  const auto n = rng.below(max_len + 1);
  for (std::uint64_t i = 0; i < n; ++i) s += (i ? " " : "") + vocab[rng.below(vocab.size())];
  return s;
}

std::vector<LabeledText> random_labeled(Rng& rng, std::size_t n) {
  std::vector<LabeledText> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({random_sentence(rng, 8) + " x", rng.below(3) == 0 ? "pos" : "neg"});
  }
  out[0].label = "pos";
  out[1].label = "neg";
  return out;
}

}  // namespace

TEST_CASE("normalized Levenshtein examples") {
  CHECK(norm_levenshtein("a b c", "a b c") == 0.0);
  CHECK(norm_levenshtein("a b c", "a x c") == doctest::Approx(1.0 / 3.0));
  CHECK(norm_levenshtein("", "a b") == 1.0);
  CHECK(norm_levenshtein("", "") == 0.0);
  CHECK(norm_levenshtein("The", "the") == 1.0);
}

TEST_CASE("token Levenshtein equals the DP oracle on random pairs") {
  Rng rng(101);
  for (int i = 0; i < 1000; ++i) {
    const auto a = text::split_whitespace(random_sentence(rng, 12));
    const auto b = text::split_whitespace(random_sentence(rng, 12));
    REQUIRE(token_levenshtein(a, b) == oracle_levenshtein(a, b));
  }
}

TEST_CASE("Levenshtein metric properties") {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto a = text::split_whitespace(random_sentence(rng, 7));
    const auto b = text::split_whitespace(random_sentence(rng, 7));
    const auto c = text::split_whitespace(random_sentence(rng, 7));
    CHECK(token_levenshtein(a, b) == token_levenshtein(b, a));
    CHECK(token_levenshtein(a, c) <= token_levenshtein(a, b) + token_levenshtein(b, c));
    CHECK((token_levenshtein(a, b) == 0) == (a == b));
  }
}

TEST_CASE("self-BLEU worked values") {
  CHECK(self_bleu("one two three four five six", "one two three four five six") == doctest::Approx(1.0));
  CHECK(self_bleu("a b c", "x y z") == 0.0);
  CHECK(self_bleu("the cat sat", "the cat ran") == doctest::Approx(0.6057).epsilon(1e-3));
  CHECK(self_bleu("the cat sat", "") == 0.0);
  // Brevity penalty: "the cat" vs a 4-token reference.
  const double p = std::pow(1.0 * (2.0 / 2.0), 0.5);  // p1 = 1, p2 = (1+1)/(1+1)
  CHECK(self_bleu("the cat sat down", "the cat") == doctest::Approx(p * std::exp(1.0 - 2.0)));
}

TEST_CASE("self-BLEU properties") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_sentence(rng, 10);
    if (text::split_whitespace(s).empty()) continue;
    CHECK(self_bleu(s, s) == doctest::Approx(1.0));
    const auto t = random_sentence(rng, 10);
    CHECK(self_bleu(s, t) == self_bleu("  " + s + "\n", " " + t + "  "));
    const double v = self_bleu(s, t);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("perturbation examples") {
  CHECK(classify_perturbation("It 's not really funny .", "It 's really funny .") == PerturbationType::kNegation);
  CHECK(classify_perturbation("the movie is a mess", "the movie is a triumph") == PerturbationType::kLexical);
  CHECK(classify_perturbation("alice met bob", "bob met alice") == PerturbationType::kRestructure);
}

TEST_CASE("perturbation golden suite") {
  for (const auto& c : cfcore::testing::kPerturbationCases) {
    INFO(c.original, " -> ", c.edited);
    CHECK(to_string(classify_perturbation(c.original, c.edited)) == c.expected);
  }
}

TEST_CASE("perturbation types round trip through strings") {
  for (auto t : kPerturbationTypes) CHECK(parse_perturbation_type(to_string(t)) == t);
  CHECK_THROWS_AS(parse_perturbation_type("typo"), ValidationError);
}

TEST_CASE("unchanged iff the token sequences are equal (property)") {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_sentence(rng, 6);
    const auto b = rng.below(4) == 0 ? a : random_sentence(rng, 6);
    const bool same = text::split_whitespace(a) == text::split_whitespace(b);
    CHECK((classify_perturbation(a, b) == PerturbationType::kUnchanged) == same);
  }
}

TEST_CASE("edit regions reconstruct both sides") {
  Rng rng(14);
  for (int i = 0; i < 300; ++i) {
    const auto a = text::split_whitespace(random_sentence(rng, 8));
    const auto b = text::split_whitespace(random_sentence(rng, 8));
    const auto regions = edit_regions(a, b);
    std::size_t removed = 0, added = 0;
    for (const auto& r : regions) {
      CHECK((!r.removed.empty() || !r.added.empty()));
      removed += r.removed.size();
      added += r.added.size();
    }
    // Unmatched counts agree with a single LCS length.
    CHECK(a.size() - removed == b.size() - added);
  }
}

TEST_CASE("z statistic arithmetic") {
  std::vector<LabeledText> data;
  for (int i = 0; i < 80; ++i) data.push_back({"good", "pos"});
  for (int i = 0; i < 20; ++i) data.push_back({"good", "neg"});
  for (int i = 0; i < 20; ++i) data.push_back({"other", "pos"});
  for (int i = 0; i < 80; ++i) data.push_back({"other", "neg"});
  const auto z = z_statistics(data, "pos");
  REQUIRE(z.size() == 2);
  CHECK(z[0].token == "good");
  CHECK(z[0].z == doctest::Approx(6.0));
  CHECK(z[0].count == 100);
  CHECK(z[0].class_count == 80);
  CHECK(z[1].z == doctest::Approx(-6.0));
  CHECK(z[0].flagged);

  std::vector<LabeledText> balanced;
  for (int i = 0; i < 10; ++i) balanced.push_back({"even", i % 2 ? "pos" : "neg"});
  const auto zb = z_statistics(balanced, "pos");
  REQUIRE(zb.size() == 1);
  CHECK(zb[0].z == 0.0);
  CHECK_FALSE(zb[0].flagged);
}

TEST_CASE("tokens are normalized and counted once per example") {
  std::vector<LabeledText> data = {{"Bad, bad BAD!", "neg"}, {"bad", "pos"}};
  const auto z = z_statistics(data, "pos", 1);
  REQUIRE(z.size() == 1);
  CHECK(z[0].token == "bad");
  CHECK(z[0].count == 2);
  CHECK(z[0].class_count == 1);
}

TEST_CASE("z statistic errors") {
  const std::vector<LabeledText> three = {{"a", "x"}, {"a", "y"}, {"a", "z"}};
  CHECK_THROWS_AS(z_statistics(three, "x"), ValidationError);
  const std::vector<LabeledText> one = {{"a", "x"}, {"b", "x"}};
  CHECK_THROWS_AS(z_statistics(one, "x"), ValidationError);
  CHECK_THROWS_AS(z_statistics(std::vector<LabeledText>{}, "x"), ValidationError);
}

TEST_CASE("z antisymmetry and sqrt(2) scaling (property)") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = random_labeled(rng, 60 + rng.below(100));
    const auto pos = z_statistics(data, "pos", 5);
    const auto neg = z_statistics(data, "neg", 5);
    REQUIRE(pos.size() == neg.size());
    std::map<std::string, double> zn;
    for (const auto& e : neg) zn[e.token] = e.z;
    for (const auto& e : pos) CHECK(e.z == doctest::Approx(-zn.at(e.token)).epsilon(1e-12));

    auto doubled = data;
    doubled.insert(doubled.end(), data.begin(), data.end());
    const auto twice = z_statistics(doubled, "pos", 5);
    std::map<std::string, double> z2;
    for (const auto& e : twice) z2[e.token] = e.z;
    for (const auto& e : pos) CHECK(z2.at(e.token) == doctest::Approx(std::sqrt(2.0) * e.z).epsilon(1e-12));
  }
}

TEST_CASE("Bonferroni threshold") {
  CHECK(bonferroni_threshold(1, 0.01) == doctest::Approx(2.5758).epsilon(1e-4));
  CHECK(bonferroni_threshold(100) > bonferroni_threshold(10));
  CHECK_THROWS_AS(bonferroni_threshold(0), ValidationError);
  CHECK_THROWS_AS(bonferroni_threshold(5, 1.5), ValidationError);
}

TEST_CASE("aggregate report over identical pairs") {
  std::vector<PairedExample> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back({"p" + std::to_string(i), "a fine film", "a fine film", "pos", "neg"});
  const auto r = aggregate_report(corpus, std::nullopt);
  CHECK(r.count == 5);
  CHECK(r.mean_self_bleu == doctest::Approx(1.0));
  CHECK(r.mean_levenshtein == 0.0);
  CHECK(r.histogram.at(PerturbationType::kUnchanged) == 5);
  CHECK(r.histogram.size() == kPerturbationTypes.size());
  CHECK_FALSE(r.designated_class);

  const auto j = to_json(r);
  CHECK(j.at("perturbation_types").at("unchanged") == 5);
  CHECK(j.at("perturbation_types").at("unk") == 0);
  CHECK_FALSE(j.contains("token_bias"));
  CHECK(to_text_table(r).find("unchanged") != std::string::npos);

  corpus.push_back(corpus.front());
  CHECK_THROWS_AS(aggregate_report(corpus, std::nullopt), ValidationError);
  CHECK_THROWS_AS(aggregate_report(std::vector<PairedExample>{}, std::nullopt), ValidationError);
}

TEST_CASE("histogram partitions random corpora and threads do not change the report") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<PairedExample> corpus;
    const auto n = 1 + rng.below(60);
    for (std::uint64_t i = 0; i < n; ++i) {
      corpus.push_back({"e" + std::to_string(i), random_sentence(rng, 8), random_sentence(rng, 8), "pos", "neg"});
    }
    const auto r1 = aggregate_report(corpus, std::nullopt, 1);
    const auto r4 = aggregate_report(corpus, std::nullopt, 4);
    std::size_t total = 0;
    for (const auto& [t, c] : r1.histogram) total += c;
    CHECK(total == n);
    CHECK(to_json(r1) == to_json(r4));
  }
}

TEST_CASE("report with token bias serializes every view") {
  std::vector<PairedExample> corpus = {{"a", "good film", "bad film", "pos", "neg"}};
  TokenBiasInput bias;
  for (int i = 0; i < 12; ++i) bias.data.push_back({"great, \"quoted\"", "pos"});
  for (int i = 0; i < 12; ++i) bias.data.push_back({"dull", "neg"});
  bias.designated_class = "pos";
  const auto r = aggregate_report(corpus, bias);
  REQUIRE(r.designated_class);
  REQUIRE(r.bias_threshold);
  CHECK(*r.bias_threshold == doctest::Approx(bonferroni_threshold(r.token_bias.size())));
  const auto j = to_json(r);
  CHECK(j.at("token_bias").at("designated_class") == "pos");
  CHECK(j.at("token_bias").at("tokens").size() == r.token_bias.size());

  const auto csv = token_bias_csv(r.token_bias);
  CHECK(csv.rfind("token,count,class_count,z,flagged\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.token_bias.size() + 1));
  const std::vector<TokenBiasEntry> odd = {{"a,b", 3, 1, 0.5, false}, {"say \"hi\"", 2, 2, 1.0, true}};
  CHECK(token_bias_csv(odd) ==
        "token,count,class_count,z,flagged\n\"a,b\",3,1,0.500000,false\n\"say \"\"hi\"\"\",2,2,1.000000,true\n");
  CHECK(to_text_table(r).find("great") != std::string::npos);
}

TEST_CASE("intrinsic ordering check") {
  CHECK(check_intrinsic_ordering(0.002, 0.445).holds);
  CHECK_FALSE(check_intrinsic_ordering(0.5, 0.445).holds);
  CHECK_FALSE(check_intrinsic_ordering(0.0, 1.0).holds);
}

TEST_CASE("paired corpus skips failures and disambiguates repeated ids") {
  CounterfactualRecord ok;
  ok.source_id = "s1";
  ok.original_text = "a";
  ok.edited_text = "b";
  ok.original_label = "pos";
  ok.target_label = "neg";
  auto bad = ok;
  bad.failure_reason = "empty";
  const std::vector<CounterfactualRecord> recs = {ok, bad, ok};
  const auto pairs = paired_corpus(recs);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].id == "s1");
  CHECK(pairs[1].id == "s1#1");
  CHECK(pairs[0].new_label == "neg");
}
