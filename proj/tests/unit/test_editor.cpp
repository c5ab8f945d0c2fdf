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

#include <atomic>
#include <mutex>

#include "cfcore/editor.hpp"
#include "support.hpp"
#include "test_server.hpp"

using namespace cfcore;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

const LabeledExample kNliInstance{"m1", Task::kNli, "You never call.", "You rarely call on the phone, nor webcam.",
                                  "contradiction"};

}  // namespace

TEST_CASE("NLI prompt matches the golden bytes") {
  const auto t = builtin_template(Task::kNli);
  const std::vector<std::string> kw = {"call", "often", "phone"};
  const auto prompt = build_prompt(t, kNliInstance, kw, "entailment");
  CHECK(prompt == cfcore::testing::slurp(cfcore::testing::golden_dir() / "nli_prompt.txt"));
  CHECK(prompt == build_prompt(t, kNliInstance, kw, "entailment"));
}

TEST_CASE("label wording") {
  CHECK(label_wording(Task::kNli, "entailment") == "definitely True");
  CHECK(label_wording(Task::kNli, "contradiction") == "definitely False");
  CHECK(label_wording(Task::kSentiment, "Negative") == "Negative");
  CHECK_THROWS_AS(label_wording(Task::kNli, "neutral"), ValidationError);
}

TEST_CASE("keyword list formatting") {
  CHECK(format_keyword_list(std::vector<std::string>{"a", "b"}) == "['a', 'b']");
  CHECK(format_keyword_list(std::vector<std::string>{"one"}) == "['one']");
}

TEST_CASE("prompt structure invariants for both shipped templates") {
  for (Task task : {Task::kNli, Task::kSentiment}) {
    const auto t = builtin_template(task);
    CHECK(t.demonstrations.size() == (task == Task::kNli ? 4u : 2u));
    const LabeledExample ex = task == Task::kNli
                                  ? kNliInstance
                                  : LabeledExample{"r1", Task::kSentiment, "A dull, lifeless film.", std::nullopt, "Negative"};
    const std::vector<std::string> kw = {"vivid", "lively", "O'Neil"};
    const auto target = opposite_label(task, ex.label);
    const auto prompt = build_prompt(t, ex, kw, target);
    const auto label = t.keywords_label();
    CHECK(count_of(prompt, label) == t.demonstrations.size() + 1);
    CHECK(prompt.rfind(label) > prompt.rfind(t.demonstrations.back().edited));
    for (const auto& k : kw) CHECK(prompt.find(k) != std::string::npos);
    CHECK(prompt.substr(prompt.size() - t.edited_label.size()) == t.edited_label);
    CHECK(prompt.find(label_wording(task, target)) != std::string::npos);

    const auto bare = build_prompt_without_keywords(t, ex, target);
    CHECK(count_of(bare, label) == 0);
    CHECK(bare.find(t.instructions_without_keywords) == 0);

    CHECK_THROWS_AS(build_prompt(t, ex, std::vector<std::string>{}, target), ValidationError);
  }
}

TEST_CASE("parse_edit recovers every demonstration edit from an echo") {
  for (Task task : {Task::kNli, Task::kSentiment}) {
    const auto t = builtin_template(task);
    for (const auto& d : t.demonstrations) {
      const auto echo = t.edited_label + " " + d.edited + "\n";
      const auto parsed = parse_edit(echo, t, d.context_fields.at(t.editable_field));
      CHECK(parsed.ok());
      CHECK(parsed.text == d.edited);
    }
  }
}

TEST_CASE("parse_edit cases") {
  const auto t = builtin_template(Task::kNli);
  const auto a = parse_edit("modified sentence 2: My taxes are probably over $135", t, "My taxes are low");
  CHECK(a.text == "My taxes are probably over $135");
  CHECK(a.ok());
  CHECK(parse_edit("  just text \n", t, "other").text == "just text");
  const auto same = parse_edit(" You rarely call. ", t, "You rarely call.");
  CHECK(same.failure == std::optional<std::string>("identical_to_original"));
  CHECK(parse_edit("modified sentence 2:   ", t, "x").failure == std::optional<std::string>("empty"));
}

TEST_CASE("mock backend and request_edit") {
  MockLlmBackend mock;
  EditRequest req{"prompt", {}, "x", {"a", "b"}, 0};
  CHECK(request_edit(req, mock) == "x a b");

  struct Blank : LlmBackend {
    std::string complete(const EditRequest&) override { return "  \n"; }
    std::string name() const override { return "blank"; }
  } blank;
  CHECK_THROWS_AS(request_edit(req, blank), EmptyCompletionError);
  req.prompt.clear();
  CHECK_THROWS_AS(request_edit(req, mock), ValidationError);
}

TEST_CASE("edit params validation") {
  EditParams p;
  CHECK_NOTHROW(validate(p));
  p.temperature = 2.5;
  CHECK_THROWS_AS(validate(p), ValidationError);
  p.temperature = 0.7;
  p.top_p = 0.0;
  CHECK_THROWS_AS(validate(p), ValidationError);
}

TEST_CASE("request keys are stable and distinguish samples") {
  EditRequest a{"p", {}, "o", {"k"}, 0};
  EditRequest b = a;
  b.original = "different";  // not part of the wire request
  CHECK(request_key(a) == request_key(b));
  b.sample = 1;
  CHECK(request_key(a) != request_key(b));
  b = a;
  b.params.temperature = 0.3;
  CHECK(request_key(a) != request_key(b));
}

TEST_CASE("remote editor retries 429 and sends one idempotency key") {
  cfcore::testing::TestServer srv;
  std::atomic<int> calls{0};
  std::mutex mu;
  std::vector<std::string> keys;
  nlohmann::json last_body;
  srv.server().Post("/complete", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(mu);
      keys.push_back(req.get_header_value("Idempotency-Key"));
      last_body = nlohmann::json::parse(req.body);
    }
    if (calls++ == 0) {
      res.status = 429;
      return;
    }
    res.set_content(R"({"completion": " edited text"})", "application/json");
  });
  srv.start();
  http::RetryPolicy retry;
  retry.base_delay = std::chrono::milliseconds(1);
  RemoteLlmBackend llm(srv.url("/complete"), retry);
  EditRequest req{"the prompt", {}, "orig", {"k"}, 0};
  CHECK(request_edit(req, llm) == " edited text");
  CHECK(llm.last_attempts() == 2);
  REQUIRE(keys.size() == 2);
  CHECK(keys[0] == keys[1]);
  CHECK(keys[0] == request_key(req));
  CHECK(last_body.at("prompt") == "the prompt");
  CHECK(last_body.at("temperature") == 0.7);
  CHECK(last_body.at("top_p") == 1.0);
  CHECK(last_body.at("stop") == std::vector<std::string>{"\n"});
  CHECK(last_body.at("max_tokens") == 256);
  CHECK_FALSE(last_body.contains("original"));
}

TEST_CASE("remote editor fails fast on a client error") {
  cfcore::testing::TestServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/complete", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
  });
  srv.start();
  RemoteLlmBackend llm(srv.url("/complete"));
  try {
    llm.complete(EditRequest{"p", {}, "o", {}, 0});
    FAIL("expected RemoteError");
  } catch (const RemoteError& e) {
    CHECK(e.status() == 400);
  }
  CHECK(calls.load() == 1);
}

TEST_CASE("template validation") {
  auto t = builtin_template(Task::kNli);
  CHECK_NOTHROW(validate(t));
  auto fewer = t;
  fewer.demonstrations.pop_back();
  CHECK_THROWS_AS(validate(fewer), ValidationError);
  auto no_kw = t;
  std::erase_if(no_kw.slots, [](const TemplateSlot& s) { return s.kind == SlotKind::kKeywords; });
  CHECK_THROWS_AS(validate(no_kw), ValidationError);
  auto empty_demo_kw = t;
  empty_demo_kw.demonstrations[0].keyword_list.clear();
  CHECK_THROWS_AS(validate(empty_demo_kw), ValidationError);
}

TEST_CASE("template files load from disk") {
  cfcore::testing::TempDir dir;
  const auto t = builtin_template(Task::kSentiment);
  CHECK(t.edited_label == "Edited Review:");
  CHECK(t.keywords_label() == "List of relevant words:");
  cfcore::testing::spit(dir / "bad.json", R"({"task": "nli"})");
  CHECK_THROWS_AS(load_template(dir / "bad.json"), ValidationError);
}

TEST_CASE("rate limiter spaces calls") {
  RateLimiter unlimited(0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 100; ++i) unlimited.acquire();
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(50));

  RateLimiter limited(1200);  // one every 50 ms
  const auto t1 = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) limited.acquire();
  CHECK(std::chrono::steady_clock::now() - t1 >= std::chrono::milliseconds(150));
}
