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

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cfcore/annotation.hpp"
#include "cfcore/binary_io.hpp"
#include "cfcore/error.hpp"
#include "cfcore/pipeline.hpp"
#include "cfcore/text.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string subset;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> port;
  std::optional<std::string> stage;
  std::optional<std::size_t> samples;
  std::vector<std::string> records;
  std::string log_level = "info";
};

// --subset accepts a comma-separated id list or @file with one id per line.
std::vector<std::string> parse_subset(const std::string& arg) {
  std::string body = arg;
  if (!arg.empty() && arg.front() == '@') body = cfcore::binary::read_file(arg.substr(1));
  for (auto& c : body) {
    if (c == ',') c = ' ';
  }
  return cfcore::text::split_whitespace(body);
}

cfcore::PipelineConfig load(const Options& o) {
  nlohmann::json overrides = nlohmann::json::object();
  if (o.seed) overrides["seed"] = *o.seed;
  if (o.threads) overrides["threads"] = *o.threads;
  if (!o.subset.empty()) overrides["generation"]["subset_ids"] = parse_subset(o.subset);
  if (o.stage) overrides["generation"]["stage"] = *o.stage;
  if (o.samples) overrides["generation"]["samples"] = *o.samples;
  return cfcore::load_config(o.config, overrides);
}

std::optional<std::filesystem::path> out_path(const Options& o) {
  if (o.out.empty()) return std::nullopt;
  return std::filesystem::path(o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual retrieval, editing and evaluation pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error")->capture_default_str();

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--threads", o.threads, "worker threads");
  };

  auto* ingest = app.add_subcommand("ingest", "segment corpus inputs and build training triplets");
  auto* embed = app.add_subcommand("embed", "fill the embedding cache");
  auto* train_ret = app.add_subcommand("train-retriever", "train the query and document encoders");
  auto* build_index = app.add_subcommand("build-index", "index the corpus with the document encoder");
  auto* retrieve = app.add_subcommand("retrieve", "retrieve top-k excerpts for each example");
  auto* train_rr = app.add_subcommand("train-reranker", "train the logistic reranker");
  auto* generate = app.add_subcommand("generate", "produce counterfactual records");
  auto* evaluate = app.add_subcommand("evaluate", "intrinsic metrics report over record files");
  auto* serve = app.add_subcommand("serve-annotate", "run the annotation service");
  for (auto* sub : {ingest, embed, train_ret, build_index, retrieve, train_rr, generate, evaluate, serve}) add_common(sub);
  for (auto* sub : {retrieve, generate, evaluate}) sub->add_option("--out", o.out, "output path");
  for (auto* sub : {retrieve, generate, serve}) {
    sub->add_option("--subset", o.subset, "example ids: comma-separated, or @file");
  }
  generate->add_option("--stage", o.stage, "core, gpt_only or retrieved_only");
  generate->add_option("--samples", o.samples, "completions per example");
  evaluate->add_option("--records", o.records, "record files (default: the generate output)");
  serve->add_option("--port", o.port, "listen port (default from config)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    auto cfg = load(o);
    if (*serve) {
      if (cfg.generation.subset_ids) {
        spdlog::warn("--subset is ignored by serve-annotate; set annotation.pool instead");
      }
      cfcore::serve_annotate(cfg, o.port);
      return 0;
    }
    cfcore::Pipeline p(std::move(cfg));
    if (*ingest) p.ingest();
    if (*embed) p.embed();
    if (*train_ret) p.train_retriever();
    if (*build_index) p.build_index();
    if (*retrieve) p.retrieve(out_path(o));
    if (*train_rr) p.train_reranker();
    if (*generate) {
      const auto s = p.generate(out_path(o));
      std::cout << s.records << " records, " << s.failures << " failed edits\n";
    }
    if (*evaluate) {
      std::vector<std::filesystem::path> files(o.records.begin(), o.records.end());
      const auto s = p.evaluate(files, out_path(o));
      std::cout << cfcore::to_text_table(s.overall, 10);
      if (s.ordering) {
        std::cout << "\nself-BLEU ordering retrieved_only < core < identity: " << (s.ordering->holds ? "holds" : "VIOLATED")
                  << "\n";
      }
    }
    return 0;
  } catch (const cfcore::MissingArtifactError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const cfcore::ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const cfcore::ParseError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
