/*
 * Copyright 2026 The Noisy Label Lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "nlab/dataset_io.hpp"
#include "nlab/errors.hpp"
#include "nlab/experiment.hpp"
#include "nlab/metrics.hpp"
#include "nlab/model.hpp"
#include "nlab/trainer.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

nlab::ExperimentConfig parse_config(const std::string& text) {
  return nlab::config_from_json(text.empty() ? nlohmann::json::object()
                                             : nlohmann::json::parse(text));
}

nlab::Variant variant_from(const std::string& name) {
  auto v = nlab::parse_variant(name);
  if (!v) throw nlab::UsageError("unknown variant \"" + name + "\"");
  return *v;
}

Array to_array(const nlab::Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

nlab::Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw nlab::ConfigError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return nlab::Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

const std::vector<nlab::Sample>& split_of(const nlab::DatasetSplit& d, const std::string& name) {
  const auto split = nlab::parse_split(name);
  if (!split) throw nlab::UsageError("unknown split \"" + name + "\" (T, V or E)");
  switch (*split) {
    case nlab::Split::kTrain: return d.train;
    case nlab::Split::kVerified: return d.verified;
    case nlab::Split::kEval: return d.eval;
  }
  return d.eval;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

py::dict report_dict(const nlab::MetricsReport& r) {
  py::dict d;
  d["map"] = r.map;
  d["ap_all"] = r.ap_all;
  d["ap"] = r.ap;
  d["undefined_classes"] = r.undefined_classes;
  py::list pr;
  for (const auto& p : r.pr) pr.append(py::make_tuple(p.threshold, p.recall, p.precision));
  d["pr"] = pr;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label-cleaning experiments on synthetic noisy multi-label data";

  auto base = py::register_exception<nlab::Error>(m, "Error");
  py::register_exception<nlab::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<nlab::UsageError>(m, "UsageError", base.ptr());
  py::register_exception<nlab::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<nlab::RuntimeFailure>(m, "RuntimeFailure", base.ptr());

  py::class_<nlab::DatasetSplit>(m, "Dataset")
      .def_property_readonly("num_classes", &nlab::DatasetSplit::num_classes)
      .def_readonly("feature_dim", &nlab::DatasetSplit::feature_dim)
      .def_property_readonly("class_names", [](const nlab::DatasetSplit& d) { return d.vocabulary.names; })
      .def_readonly("planted_quality", &nlab::DatasetSplit::planted_quality)
      .def_property_readonly("fp_rate", [](const nlab::DatasetSplit& d) { return d.stats.fp_rate(); })
      .def_property_readonly("annotations", [](const nlab::DatasetSplit& d) { return d.stats.annotations; })
      .def("size", [](const nlab::DatasetSplit& d, const std::string& split) {
        return split_of(d, split).size();
      }, py::arg("split"))
      .def("features", [](const nlab::DatasetSplit& d, const std::string& split) {
        const auto& s = split_of(d, split);
        return to_array(nlab::feature_matrix(s, all_rows(s.size())));
      }, py::arg("split"))
      .def("noisy_labels", [](const nlab::DatasetSplit& d, const std::string& split) {
        const auto& s = split_of(d, split);
        return to_array(nlab::label_matrix(s, all_rows(s.size()), nlab::LabelSource::kNoisy));
      }, py::arg("split"))
      .def("verified_labels", [](const nlab::DatasetSplit& d, const std::string& split) {
        const auto& s = split_of(d, split);
        return to_array(nlab::label_matrix(s, all_rows(s.size()), nlab::LabelSource::kVerified));
      }, py::arg("split"))
      .def("annotation_quality", [](const nlab::DatasetSplit& d) {
        return nlab::annotation_quality(d).quality;
      })
      .def("class_frequency", [](const nlab::DatasetSplit& d) { return nlab::class_frequency(d); })
      .def("save", [](const nlab::DatasetSplit& d, const std::string& path) {
        nlab::save_dataset(d, path);
      }, py::arg("path"))
      .def("__eq__", [](const nlab::DatasetSplit& a, const nlab::DatasetSplit& b) { return a == b; });

  m.def("_generate", [](const std::string& config, std::uint64_t seed) {
    return nlab::generate_dataset(parse_config(config).dataset, seed);
  }, py::arg("config_json"), py::arg("seed"));
  m.def("load_dataset", &nlab::load_dataset, py::arg("path"));

  py::class_<nlab::ModelParams>(m, "Model")
      .def_property_readonly("parameter_count", &nlab::ModelParams::parameter_count)
      .def("predict", [](const nlab::ModelParams& p, const Array& x) {
        return to_array(nlab::predict(p, nlab::features(p, to_tensor(x))));
      }, py::arg("features"))
      .def("clean_labels", [](const nlab::ModelParams& p, const Array& y, const Array& x) {
        return to_array(nlab::clean_labels(p, to_tensor(y), nlab::features(p, to_tensor(x))));
      }, py::arg("noisy_labels"), py::arg("features"))
      .def("save", [](const nlab::ModelParams& p, const std::string& path) {
        nlab::save_checkpoint(p, path);
      }, py::arg("path"));
  m.def("load_checkpoint", &nlab::load_checkpoint, py::arg("path"));

  m.def("_train", [](const nlab::DatasetSplit& data, const std::string& variant,
                     const std::string& config, const nlab::ModelParams* baseline) {
    const nlab::Variant v = variant_from(variant);
    const nlab::TrainConfig train = parse_config(config).train_config(v);
    nlab::TrainResult r;
    {
      py::gil_scoped_release release;
      r = nlab::train(v, data, train, baseline);
    }
    py::list log;
    for (const auto& row : r.log) {
      log.append(py::make_tuple(row.step, row.clean, row.classify, row.total, row.lr));
    }
    return py::make_tuple(std::move(r.params), log);
  }, py::arg("dataset"), py::arg("variant"), py::arg("config_json"),
     py::arg("baseline") = nullptr);

  m.def("evaluate", [](const nlab::ModelParams& p, const nlab::DatasetSplit& data,
                       std::size_t granularity) {
    nlab::EvalConfig eval;
    eval.pr_granularity = granularity;
    return report_dict(nlab::evaluate_params(p, data, eval));
  }, py::arg("model"), py::arg("dataset"), py::arg("pr_granularity") = 200);

  m.def("average_precision", [](const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& truths,
                                const std::vector<std::uint64_t>& ids) {
    return nlab::average_precision(scores, truths, ids);
  }, py::arg("scores"), py::arg("truths"), py::arg("ids") = std::vector<std::uint64_t>{});
  m.def("mean_average_precision", [](const std::vector<std::optional<double>>& aps) {
    return nlab::mean_average_precision(aps);
  }, py::arg("aps"));

  m.def("_reproduce", [](const std::string& config) {
    std::ostringstream log;
    const auto cfg = parse_config(config);
    nlab::RunManifest manifest;
    {
      py::gil_scoped_release release;
      manifest = nlab::cmd_reproduce(cfg, log);
    }
    return py::make_tuple(manifest.to_json().dump(), log.str());
  }, py::arg("config_json"));
  m.def("_load_config", [](const std::string& path, const std::vector<std::string>& overrides) {
    return nlab::load_config(path, overrides).to_json().dump();
  }, py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
}
