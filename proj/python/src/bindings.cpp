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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <spdlog/spdlog.h>

#include "cfcore/binary_io.hpp"
#include "cfcore/cfdpr.hpp"
#include "cfcore/editor.hpp"
#include "cfcore/embedder.hpp"
#include "cfcore/error.hpp"
#include "cfcore/metrics.hpp"
#include "cfcore/pipeline.hpp"

namespace py = pybind11;
using namespace cfcore;

namespace {

nlohmann::json to_nlohmann(const py::object& obj) {
  if (obj.is_none()) return nullptr;
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

template <typename J>
py::object to_python(const J& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict config_summary(const PipelineConfig& c) {
  py::dict d;
  d["task"] = std::string(to_string(c.task));
  d["seed"] = c.seed;
  d["threads"] = c.threads;
  d["work_dir"] = c.work_dir;
  d["hash"] = c.hash;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cfcore, m) {
  m.doc() = "cfcore: counterfactual retrieval, editing and evaluation";
  m.attr("__version__") = "0.1.0";
  spdlog::set_level(spdlog::level::warn);

  // Translators registered later are tried first, so the base goes first.
  auto base = py::register_exception<Error>(m, "CfcoreError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());

  m.def("norm_levenshtein", &norm_levenshtein, py::arg("original"), py::arg("edited"));
  m.def("self_bleu", &self_bleu, py::arg("original"), py::arg("edited"));
  m.def(
      "classify_perturbation",
      [](std::string_view a, std::string_view b) { return std::string(to_string(classify_perturbation(a, b))); },
      py::arg("original"), py::arg("edited"));
  m.def(
      "z_statistics",
      [](const std::vector<std::pair<std::string, std::string>>& data, const std::string& designated,
         std::size_t min_count) {
        std::vector<LabeledText> rows;
        for (const auto& [t, l] : data) rows.push_back({t, l});
        py::list out;
        for (const auto& e : z_statistics(rows, designated, min_count)) {
          py::dict d;
          d["token"] = e.token;
          d["count"] = e.count;
          d["class_count"] = e.class_count;
          d["z"] = e.z;
          d["flagged"] = e.flagged;
          out.append(d);
        }
        return out;
      },
      py::arg("data"), py::arg("designated_class"), py::arg("min_count") = 10,
      "data: list of (text, label) pairs");

  m.def("hashed_test_embed", &hashed_test_embed, py::arg("text"), py::arg("dimension"), py::arg("seed") = 0);
  m.def(
      "contrastive_loss",
      [](double pos, const std::vector<double>& negs) { return contrastive_loss_from_scores(pos, negs); },
      py::arg("positive_score"), py::arg("negative_scores"));

  m.def(
      "label_wording", [](const std::string& task, const std::string& label) {
        return label_wording(parse_task(task), label);
      },
      py::arg("task"), py::arg("label"));
  m.def("format_keyword_list", [](const std::vector<std::string>& kw) { return format_keyword_list(kw); });
  m.def(
      "build_nli_prompt",
      [](const std::string& premise, const std::string& hypothesis, const std::string& label,
         const std::vector<std::string>& keywords) {
        const LabeledExample ex{"py", Task::kNli, premise, hypothesis, label};
        return build_prompt(builtin_template(Task::kNli), ex, keywords, opposite_label(Task::kNli, label));
      },
      py::arg("premise"), py::arg("hypothesis"), py::arg("label"), py::arg("keywords"));

  m.def(
      "load_config",
      [](const std::filesystem::path& path, const py::object& overrides) {
        return config_summary(load_config(path, to_nlohmann(overrides)));
      },
      py::arg("path"), py::arg("overrides") = py::none());

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::filesystem::path& path, const py::object& overrides) {
             return std::make_unique<Pipeline>(load_config(path, to_nlohmann(overrides)));
           }),
           py::arg("config_path"), py::arg("overrides") = py::none())
      .def_property_readonly("config", [](const Pipeline& p) { return config_summary(p.config()); })
      .def_property_readonly("records_path", [](const Pipeline& p) { return p.paths().records; })
      .def_property_readonly("report_path", [](const Pipeline& p) { return p.paths().report; })
      .def("ingest", &Pipeline::ingest, py::call_guard<py::gil_scoped_release>())
      .def("embed", &Pipeline::embed, py::call_guard<py::gil_scoped_release>())
      .def("train_retriever",
           [](Pipeline& p) {
             TrainResult r;
             {
               py::gil_scoped_release release;
               r = p.train_retriever();
             }
             py::list log;
             for (const auto& e : r.log) log.append(py::make_tuple(e.epoch, e.mean_loss));
             return log;
           })
      .def("build_index", &Pipeline::build_index, py::call_guard<py::gil_scoped_release>())
      .def("train_reranker", [](Pipeline& p) {
        py::gil_scoped_release release;
        p.train_reranker();
      })
      .def("generate",
           [](Pipeline& p) {
             GenerateSummary s;
             {
               py::gil_scoped_release release;
               s = p.generate();
             }
             py::dict d;
             d["records"] = s.records;
             d["failures"] = s.failures;
             d["stages"] = s.stages;
             return d;
           })
      .def("evaluate", [](Pipeline& p) {
        {
          py::gil_scoped_release release;
          p.evaluate();
        }
        return to_python(nlohmann::json::parse(binary::read_file(p.paths().report)));
      });
}
