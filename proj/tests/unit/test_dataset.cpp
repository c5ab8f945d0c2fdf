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

#include <set>

#include "cfcore/dataset.hpp"
#include "cfcore/random.hpp"
#include "support.hpp"

using namespace cfcore;
using cfcore::testing::TempDir;
using cfcore::testing::spit;

TEST_CASE("load_examples reads a valid three-line file") {
  TempDir dir;
  spit(dir / "ex.jsonl",
       R"({"id":"a","text_a":"P one.","text_b":"H one.","label":"entailment"})"
       "\n"
       R"({"id":"b","text_a":"P two.","text_b":"H two.","label":"contradiction"})"
       "\n\n"
       R"({"id":"c","task":"nli","text_a":"P three.","text_b":"H three.","label":"entailment"})"
       "\n");
  const auto ex = load_examples(dir / "ex.jsonl", Task::kNli);
  REQUIRE(ex.size() == 3);
  CHECK(ex[1].id == "b");
  CHECK(*ex[2].text_b == "H three.");
}

TEST_CASE("load_examples rejects invariant violations") {
  TempDir dir;
  SUBCASE("missing text_b") {
    spit(dir / "x.jsonl", R"({"id":"a","text_a":"P.","label":"entailment"})"
                          "\n");
    try {
      load_examples(dir / "x.jsonl", Task::kNli);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("text_b") != std::string::npos);
    }
  }
  SUBCASE("neutral label") {
    spit(dir / "x.jsonl", R"({"id":"a","text_a":"P.","text_b":"H.","label":"neutral"})"
                          "\n");
    CHECK_THROWS_AS(load_examples(dir / "x.jsonl", Task::kNli), Error);
  }
  SUBCASE("duplicate ids") {
    spit(dir / "x.jsonl", R"({"id":"a","text_a":"Good.","label":"Positive"})"
                          "\n"
                          R"({"id":"a","text_a":"Bad.","label":"Negative"})"
                          "\n");
    CHECK_THROWS_AS(load_examples(dir / "x.jsonl", Task::kSentiment), ValidationError);
  }
  SUBCASE("parse error carries the line number") {
    spit(dir / "x.jsonl", R"({"id":"a","text_a":"Good.","label":"Positive"})"
                          "\n{oops\n");
    try {
      load_examples(dir / "x.jsonl", Task::kSentiment);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("sentiment with a hypothesis") {
    spit(dir / "x.jsonl", R"({"id":"a","text_a":"Good.","text_b":"x","label":"Positive"})"
                          "\n");
    CHECK_THROWS_WITH_AS(load_examples(dir / "x.jsonl", Task::kSentiment),
                         doctest::Contains("must be absent"), ParseError);
  }
}

TEST_CASE("build_query_text") {
  LabeledExample nli{"m1", Task::kNli, "You never call.", "You rarely call on the phone, nor webcam.", "contradiction"};
  CHECK(build_query_text(nli) == "You never call. [SEP] You rarely call on the phone, nor webcam.");

  LabeledExample rev{"r1", Task::kSentiment, "A fine film.", std::nullopt, "Positive"};
  CHECK(build_query_text(rev) == "A fine film.");

  nli.text_a = "";
  CHECK_THROWS_AS(build_query_text(nli), ValidationError);
}

TEST_CASE("build_query_text is injective on [SEP]-free pairs") {
  Rng rng(3);
  const std::vector<std::string> words = {"a", "b", "c", "SEP", "[x]", "."};
  std::set<std::pair<std::string, std::string>> seen_pairs;
  std::set<std::string> seen_queries;
  for (int i = 0; i < 400; ++i) {
    auto phrase = [&] {
      std::string s = words[rng.below(words.size())];
      const auto n = rng.below(4);
      for (std::uint64_t k = 0; k < n; ++k) s += " " + words[rng.below(words.size())];
      return s;
    };
    LabeledExample ex{"id", Task::kNli, phrase(), phrase(), "entailment"};
    if (!seen_pairs.insert({ex.text_a, *ex.text_b}).second) continue;
    CHECK(seen_queries.insert(build_query_text(ex)).second);
  }
}

TEST_CASE("build_triplets") {
  const std::vector<SeedPair> seeds = {{"s1", "q1", "p1"}, {"s2", "q2", "p2"}, {"s3", "same", "same"}};
  const std::map<std::string, std::string> para = {{"q1", "q1 reworded"}};
  const auto b = build_triplets(seeds, para);
  REQUIRE(b.triplets.size() == 2);
  CHECK(b.triplets[0].hard_negatives == std::vector<std::string>{"q1 reworded", "q1"});
  CHECK(b.triplets[1].hard_negatives == std::vector<std::string>{"q2"});
  CHECK(b.missing_paraphrase == std::vector<std::string>{"s2"});
  CHECK(b.rejected == std::vector<std::string>{"s3"});
}

namespace {

std::string random_text(Rng& rng) {
  static const std::vector<std::string> pieces = {"alpha", "beta", "\"quoted\"", "naïve", "tab\there", "ü", "x,y", "end."};
  std::string s = pieces[rng.below(pieces.size())];
  const auto n = rng.below(5);
  for (std::uint64_t i = 0; i < n; ++i) s += " " + pieces[rng.below(pieces.size())];
  return s;
}

CounterfactualRecord random_record(Rng& rng, std::size_t i) {
  CounterfactualRecord r;
  r.source_id = "id-" + std::to_string(i);
  const bool nli = rng.below(2) == 0;
  const Task task = nli ? Task::kNli : Task::kSentiment;
  r.original_label = std::string(label_set(task)[rng.below(2)]);
  r.target_label = opposite_label(task, r.original_label);
  r.original_text = random_text(rng);
  r.edited_text = random_text(rng);
  r.stage = static_cast<Stage>(rng.below(3));
  const auto nk = 1 + rng.below(4);
  for (std::uint64_t k = 0; k < nk; ++k) {
    r.keywords.push_back(random_text(rng));
    r.retrieved_doc_ids.push_back("doc:" + std::to_string(rng.below(100)));
  }
  if (rng.below(2)) r.metrics = RecordMetrics{rng.uniform(), rng.uniform(), "lexical"};
  if (nli) r.context = random_text(rng);
  if (rng.below(4) == 0) r.failure_reason = "identical_to_original";
  return r;
}

}  // namespace

TEST_CASE("records round-trip through JSONL (property)") {
  TempDir dir;
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<CounterfactualRecord> recs;
    const auto n = rng.below(8);
    for (std::uint64_t i = 0; i < n; ++i) recs.push_back(random_record(rng, i));
    write_records(recs, dir / "r.jsonl");
    CHECK(load_records(dir / "r.jsonl") == recs);
  }
}

TEST_CASE("write_records edge cases") {
  TempDir dir;
  write_records(std::vector<CounterfactualRecord>{}, dir / "empty.jsonl");
  CHECK(cfcore::testing::slurp(dir / "empty.jsonl").empty());

  Rng rng(5);
  auto good = random_record(rng, 0);
  auto bad = good;
  bad.source_id = "bad";
  bad.target_label = bad.original_label;
  const std::vector<CounterfactualRecord> recs = {good, bad};
  CHECK_THROWS_AS(write_records(recs, dir / "never.jsonl"), ValidationError);
  CHECK_FALSE(std::filesystem::exists(dir / "never.jsonl"));
}

TEST_CASE("record keys are written in a fixed order") {
  CounterfactualRecord r{"s", "orig", "edit", "Positive", "Negative", {"k"}, {"d"}, Stage::kCore, std::nullopt, {}, {}};
  const auto dumped = to_json(r).dump();
  const std::vector<std::string> keys = {"source_id", "original_text", "edited_text", "original_label", "target_label",
                                         "keywords", "retrieved_doc_ids", "stage", "metrics"};
  std::size_t pos = 0;
  for (const auto& k : keys) {
    const auto at = dumped.find("\"" + k + "\"");
    REQUIRE(at != std::string::npos);
    CHECK(at >= pos);
    pos = at;
  }
}

TEST_CASE("core records need keywords and retrieved ids") {
  CounterfactualRecord r{"s", "orig", "edit", "Positive", "Negative", {}, {"d"}, Stage::kCore, std::nullopt, {}, {}};
  CHECK_THROWS_AS(validate(r), ValidationError);
  r.stage = Stage::kGptOnly;
  CHECK_NOTHROW(validate(r));
}

TEST_CASE("examples and corpus round-trip") {
  TempDir dir;
  const std::vector<LabeledExample> ex = {{"a", Task::kNli, "P.", "H.", "entailment"},
                                          {"b", Task::kNli, "P2.", "H2.", "contradiction"}};
  write_examples(ex, dir / "e.jsonl");
  CHECK(load_examples(dir / "e.jsonl", Task::kNli) == ex);

  const std::vector<CorpusDocument> docs = {{"d1", "one", "src"}, {"d2", "two", "src"}};
  write_corpus(docs, dir / "c.jsonl");
  CHECK(load_corpus(dir / "c.jsonl") == docs);

  const std::vector<CorpusDocument> dup = {{"d1", "one", "src"}, {"d1", "two", "src"}};
  write_corpus(dup, dir / "dup.jsonl");
  CHECK_THROWS_AS(load_corpus(dir / "dup.jsonl"), ValidationError);
}
