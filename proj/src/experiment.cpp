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

#include "nlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "nlab/dataset_io.hpp"
#include "nlab/errors.hpp"

namespace nlab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Field lists shared by the JSON reader and writer.
template <typename F>
void visit_fields(DatasetConfig& c, F&& f) {
  f("num_classes", c.num_classes);
  f("feature_dim", c.feature_dim);
  f("train_size", c.train_size);
  f("verified_size", c.verified_size);
  f("eval_size", c.eval_size);
  f("num_groups", c.num_groups);
  f("top_rate", c.top_rate);
  f("zipf_exponent", c.zipf_exponent);
  f("group_affinity", c.group_affinity);
  f("max_modes", c.max_modes);
  f("num_implications", c.num_implications);
  f("num_exclusions", c.num_exclusions);
  f("prototype_scale", c.prototype_scale);
  f("group_prototype_weight", c.group_prototype_weight);
  f("feature_noise", c.feature_noise);
  f("target_fp_rate", c.target_fp_rate);
  f("miss_rate", c.miss_rate);
  f("random_fp_share", c.random_fp_share);
  f("clean_class_fraction", c.clean_class_fraction);
  f("max_class_noise", c.max_class_noise);
  f("confusion_strength", c.confusion_strength);
  f("pilot_samples", c.pilot_samples);
  f("verify_negatives", c.verify_negatives);
  f("extra_implications", c.extra_implications);
  f("extra_exclusions", c.extra_exclusions);
  f("extra_confusions", c.extra_confusions);
}

template <typename F>
void visit_fields(TrainConfig& c, F&& f) {
  f("batch_size", c.batch_size);
  f("mix_noisy", c.mix_noisy);
  f("mix_clean", c.mix_clean);
  f("clean_weight", c.clean_weight);
  f("classify_weight", c.classify_weight);
  f("lr_baseline", c.lr_baseline);
  f("lr_classifier", c.lr_classifier);
  f("lr_cleaner", c.lr_cleaner);
  f("lr_cleaner_pretrain", c.lr_cleaner_pretrain);
  f("lr_cleaner_after_pretrain", c.lr_cleaner_after_pretrain);
  f("rms_decay", c.rms_decay);
  f("rms_epsilon", c.rms_epsilon);
  f("lr_decay", c.lr_decay);
  f("decay_epochs", c.decay_epochs);
  f("max_steps", c.max_steps);
  f("pretrain_steps", c.pretrain_steps);
  f("pretrain_tolerance", c.pretrain_tolerance);
  f("pretrain_window", c.pretrain_window);
}

template <typename F>
void visit_fields(EvalConfig& c, F&& f) {
  f("pr_granularity", c.pr_granularity);
  f("deciles", c.deciles);
}

json to_json_value(const ClassPair& p) { return json::array({p.first, p.second}); }
json to_json_value(const ConfusionEdge& e) {
  return {{"source", e.source}, {"mode", e.mode}, {"target", e.target},
          {"probability", e.probability}};
}
template <typename T>
json to_json_value(const std::vector<T>& v) {
  json out = json::array();
  for (const T& x : v) out.push_back(to_json_value(x));
  return out;
}
template <typename T>
json to_json_value(const T& v) { return json(v); }

template <typename T>
json section_json(T& section) {
  json out = json::object();
  visit_fields(section, [&](const char* key, auto& value) { out[key] = to_json_value(value); });
  return out;
}

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void read_value(const json& j, const std::string& path, std::size_t& out) {
  if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    bad(path, "expected a non-negative integer");
  }
  out = j.get<std::size_t>();
}
void read_value(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) bad(path, "expected a number");
  out = j.get<double>();
}
void read_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) bad(path, "expected true or false");
  out = j.get<bool>();
}
void read_value(const json& j, const std::string& path, ClassPair& out) {
  if (!j.is_array() || j.size() != 2) bad(path, "expected a pair [a, b] of class indices");
  read_value(j[0], path + "[0]", out.first);
  read_value(j[1], path + "[1]", out.second);
}
void read_value(const json& j, const std::string& path, ConfusionEdge& out) {
  if (!j.is_object()) bad(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string p = path + "." + key;
    if (key == "source") read_value(value, p, out.source);
    else if (key == "mode") read_value(value, p, out.mode);
    else if (key == "target") read_value(value, p, out.target);
    else if (key == "probability") read_value(value, p, out.probability);
    else bad(p, "unknown key");
  }
}
template <typename T>
void read_value(const json& j, const std::string& path, std::vector<T>& out) {
  if (!j.is_array()) bad(path, "expected an array");
  out.assign(j.size(), T{});
  for (std::size_t i = 0; i < j.size(); ++i) {
    read_value(j[i], path + "[" + std::to_string(i) + "]", out[i]);
  }
}

template <typename T>
void read_section(const json& j, const std::string& path, T& section,
                  const std::set<std::string>& extra = {}) {
  if (!j.is_object()) bad(path, "expected an object");
  std::set<std::string> known = extra;
  visit_fields(section, [&](const char* key, auto& value) {
    known.insert(key);
    auto it = j.find(key);
    if (it != j.end()) read_value(*it, path + "." + key, value);
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) bad(path + "." + key, "unknown key");
  }
}

// Rethrows with a prefix while keeping the error category.
template <typename F>
auto in_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const ParseError& e) {
    throw ParseError(stage + ": " + e.what(), 0);
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(stage + ": " + e.what());
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure(stage + ": " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw RuntimeFailure("cannot create directory " + parent.string() + ": " + ec.message());
}

DatasetSplit load_run_dataset(const RunPaths& paths) {
  if (!fs::exists(paths.dataset())) {
    throw ConfigError("dataset " + paths.dataset() +
                      " not found; run the generate subcommand first");
  }
  return load_dataset(paths.dataset());
}

std::vector<double> frequency_key(const DatasetSplit& data) {
  const auto counts = class_frequency(data);
  return {counts.begin(), counts.end()};
}

void write_deciles(const std::vector<DecileGroup>& groups, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw RuntimeFailure("cannot write " + path);
  std::fprintf(f, "group,classes,MAP,reference_MAP,delta\n");
  auto put = [&](const std::optional<double>& v) {
    if (v) std::fprintf(f, ",%.17g", *v);
    else std::fprintf(f, ",nan");
  };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::fprintf(f, "%zu,%zu", g + 1, groups[g].classes.size());
    put(groups[g].map);
    put(groups[g].reference_map);
    put(groups[g].delta);
    std::fprintf(f, "\n");
  }
  if (std::fclose(f) != 0) throw RuntimeFailure("failed writing " + path);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  variant_train = {{variant_name(Variant::kBaseline), {{"max_steps", 20000}}}};
}

TrainConfig ExperimentConfig::train_config(Variant variant) const {
  TrainConfig out = train;
  auto it = variant_train.find(variant_name(variant));
  if (it != variant_train.end()) {
    read_section(*it, std::string("train.variants.") + variant_name(variant), out);
  }
  out.seed = seed;
  return out;
}

json ExperimentConfig::to_json() const {
  ExperimentConfig copy = *this;
  json train_json = section_json(copy.train);
  train_json["variants"] = variant_train;
  json names = json::array();
  for (Variant v : variants) names.push_back(variant_name(v));
  return {{"seed", seed},
          {"dataset", section_json(copy.dataset)},
          {"train", train_json},
          {"eval", section_json(copy.eval)},
          {"variants", names},
          {"out", out}};
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (!j.is_object()) bad("config", "expected an object at top level");
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      read_value(value, "seed", c.seed);
    } else if (key == "dataset") {
      read_section(value, "dataset", c.dataset);
    } else if (key == "train") {
      read_section(value, "train", c.train, {"variants"});
      if (value.contains("variants")) {
        const json& per = value["variants"];
        if (!per.is_object()) bad("train.variants", "expected an object keyed by variant");
        for (const auto& [name, section] : per.items()) {
          if (!parse_variant(name)) bad("train.variants." + name, "unknown variant");
          c.variant_train[name] = section;
        }
      }
    } else if (key == "eval") {
      read_section(value, "eval", c.eval);
    } else if (key == "variants") {
      if (!value.is_array() || value.empty()) bad("variants", "expected a non-empty array of variant names");
      c.variants.clear();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string path = "variants[" + std::to_string(i) + "]";
        if (!value[i].is_string()) bad(path, "expected a variant name");
        auto v = parse_variant(value[i].get<std::string>());
        if (!v) bad(path, "unknown variant \"" + value[i].get<std::string>() + "\"");
        if (std::find(c.variants.begin(), c.variants.end(), *v) != c.variants.end()) {
          bad(path, "duplicate variant");
        }
        c.variants.push_back(*v);
      }
    } else if (key == "out") {
      if (!value.is_string()) bad("out", "expected a path string");
      c.out = value.get<std::string>();
    } else {
      bad(key, "unknown key");
    }
  }
  c.dataset.validate();  // messages already carry the dataset.* path
  for (Variant v : kAllVariants) {
    try {
      c.train_config(v).validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("train (") + variant_name(v) + "): " + e.what());
    }
  }
  if (c.eval.pr_granularity == 0) bad("eval.pr_granularity", "must be > 0");
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override \"" + assignment + "\": expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override \"" + assignment + "\": empty path segment");
    if (!node->is_object()) {
      throw ConfigError("override \"" + assignment + "\": " + key.substr(0, start - 1) + " is not a section");
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": malformed JSON: " + e.what());
    }
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

std::string RunPaths::dataset() const { return root + "/dataset.jsonl"; }
std::string RunPaths::checkpoint(Variant v) const {
  return root + "/checkpoints/" + variant_name(v) + ".ckpt";
}
std::string RunPaths::training_log(Variant v) const {
  return root + "/logs/" + variant_name(v) + ".csv";
}
std::string RunPaths::summary() const { return root + "/reports/summary.csv"; }
std::string RunPaths::per_class(Variant v) const {
  return root + "/reports/per_class_" + variant_name(v) + ".csv";
}
std::string RunPaths::pr_curve(Variant v) const {
  return root + "/reports/pr_" + variant_name(v) + ".tsv";
}
std::string RunPaths::deciles(Variant v, const std::string& key) const {
  return root + "/reports/deciles_" + key + "_" + variant_name(v) + ".csv";
}
std::string RunPaths::manifest() const { return root + "/manifest.json"; }

GenerateSummary dataset_summary(const DatasetSplit& data) {
  GenerateSummary s;
  s.stats = data.stats;
  auto counts = class_frequency(data);
  std::sort(counts.begin(), counts.end(), std::greater<>());
  if (!counts.empty()) {
    const std::size_t p90 = std::min(counts.size() - 1, counts.size() * 9 / 10);
    s.skew_ratio = counts[p90] == 0 ? 0.0 : static_cast<double>(counts[0]) / counts[p90];
  }
  return s;
}

MetricsReport evaluate_params(const ModelParams& params, const DatasetSplit& data,
                              const EvalConfig& eval) {
  if (params.vocabulary_fingerprint != data.vocabulary.fingerprint() ||
      params.dims.num_classes != data.num_classes() ||
      params.dims.feature_dim != data.feature_dim) {
    throw ConfigError("checkpoint vocabulary or dimensions do not match the dataset");
  }
  const Tensor scores = predict_scores(params, data.eval);
  return make_report(RankedPredictions::from_samples(data.eval, scores),
                     data.vocabulary, eval.pr_granularity);
}

std::size_t worker_limit() {
  if (const char* env = std::getenv("NOISY_LABEL_LAB_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

GenerateSummary cmd_generate(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out};
  const DatasetSplit data = generate_dataset(config.dataset, config.seed);
  ensure_parent(paths.dataset());
  save_dataset(data, paths.dataset());
  const GenerateSummary s = dataset_summary(data);
  char line[256];
  std::snprintf(line, sizeof(line),
                "wrote %s: |T|=%zu |V|=%zu |E|=%zu, %llu annotations, FP rate %.3f, "
                "frequency skew (top / p90) %.1f\n",
                paths.dataset().c_str(), data.train.size(), data.verified.size(),
                data.eval.size(), static_cast<unsigned long long>(s.stats.annotations),
                s.stats.fp_rate(), s.skew_ratio);
  log << line;
  return s;
}

namespace {

TrainResult train_variant(const ExperimentConfig& config, Variant variant,
                          const DatasetSplit& data, const RunPaths& paths) {
  std::optional<ModelParams> baseline;
  if (needs_baseline(variant)) {
    if (!fs::exists(paths.checkpoint(Variant::kBaseline))) {
      throw ConfigError(std::string("variant ") + variant_name(variant) +
                        " needs the baseline checkpoint " +
                        paths.checkpoint(Variant::kBaseline) +
                        "; train the baseline variant first");
    }
    baseline = load_checkpoint(paths.checkpoint(Variant::kBaseline));
    if (baseline->vocabulary_fingerprint != data.vocabulary.fingerprint()) {
      throw ConfigError("baseline checkpoint was trained on a different vocabulary");
    }
  }
  TrainResult result = train(variant, data, config.train_config(variant),
                             baseline ? &*baseline : nullptr);
  ensure_parent(paths.checkpoint(variant));
  ensure_parent(paths.training_log(variant));
  save_checkpoint(result.params, paths.checkpoint(variant));
  write_training_log(result.log, paths.training_log(variant));
  return result;
}

}  // namespace

TrainResult cmd_train(const ExperimentConfig& config, Variant variant, std::ostream& log) {
  const RunPaths paths{config.out};
  const DatasetSplit data = load_run_dataset(paths);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result = train_variant(config, variant, data, paths);
  char line[256];
  std::snprintf(line, sizeof(line), "trained %s: %zu steps in %.1fs -> %s\n",
                variant_name(variant), result.log.size(), seconds_since(start),
                paths.checkpoint(variant).c_str());
  log << line;
  return result;
}

std::vector<VariantReport> cmd_evaluate(const ExperimentConfig& config,
                                        const std::vector<Variant>& requested,
                                        std::ostream& log) {
  const RunPaths paths{config.out};
  const DatasetSplit data = load_run_dataset(paths);
  std::vector<Variant> variants = requested;
  if (variants.empty()) {
    for (Variant v : kAllVariants) {
      if (fs::exists(paths.checkpoint(v))) variants.push_back(v);
    }
    if (variants.empty()) {
      throw ConfigError("no checkpoints under " + config.out + "/checkpoints; train a variant first");
    }
  }
  const auto quality = annotation_quality(data).quality;
  const auto frequency = class_frequency(data);
  const std::vector<double> planted = data.planted_quality;

  std::vector<VariantReport> reports;
  std::vector<SummaryRow> rows;
  for (Variant v : variants) {
    if (!fs::exists(paths.checkpoint(v))) {
      throw ConfigError(std::string("checkpoint for ") + variant_name(v) + " not found at " +
                        paths.checkpoint(v));
    }
    MetricsReport report = evaluate_params(load_checkpoint(paths.checkpoint(v)), data, config.eval);
    ensure_parent(paths.per_class(v));
    write_per_class_csv(report, frequency, quality, data.vocabulary.groups, paths.per_class(v));
    write_pr_tsv(report.pr, paths.pr_curve(v));
    rows.push_back({variant_name(v), report.map, report.ap_all});
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s MAP %.4f  AP_all %.4f  (%zu classes undefined)\n",
                  variant_name(v), report.map, report.ap_all, report.undefined_classes);
    log << line;
    reports.push_back({v, std::move(report)});
  }
  if (config.eval.deciles) {
    const auto base = std::find_if(reports.begin(), reports.end(), [](const VariantReport& r) {
      return r.variant == Variant::kBaseline;
    });
    if (base != reports.end()) {
      const std::vector<double> by_frequency = frequency_key(data);
      std::vector<double> by_quality = planted.empty() ? quality : planted;
      for (double& q : by_quality) {
        if (!std::isfinite(q)) q = 1.0;
      }
      for (const VariantReport& r : reports) {
        if (r.variant == Variant::kBaseline) continue;
        write_deciles(decile_breakdown(r.report, base->report, by_frequency),
                      paths.deciles(r.variant, "frequency"));
        write_deciles(decile_breakdown(r.report, base->report, by_quality),
                      paths.deciles(r.variant, "quality"));
      }
    }
  }
  ensure_parent(paths.summary());
  write_summary_csv(rows, paths.summary());
  return reports;
}

json RunManifest::to_json() const {
  char hash_text[17];
  std::snprintf(hash_text, sizeof(hash_text), "%016llx",
                static_cast<unsigned long long>(config_hash));
  return {{"config_hash", hash_text}, {"seed", seed},        {"dataset", dataset},
          {"checkpoints", checkpoints}, {"reports", reports}, {"summary", summary},
          {"seconds", seconds}};
}

RunManifest cmd_reproduce(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out};
  RunManifest manifest;
  manifest.config_hash = config.hash();
  manifest.seed = config.seed;
  manifest.dataset = paths.dataset();

  auto start = std::chrono::steady_clock::now();
  in_stage("generate", [&] { cmd_generate(config, log); });
  manifest.seconds["generate"] = seconds_since(start);
  const DatasetSplit data = in_stage("load dataset", [&] { return load_run_dataset(paths); });

  std::vector<Variant> variants = config.variants;
  if (std::find(variants.begin(), variants.end(), Variant::kBaseline) == variants.end()) {
    variants.insert(variants.begin(), Variant::kBaseline);
  }
  std::mutex log_mutex;
  auto run = [&](Variant v) {
    const auto t0 = std::chrono::steady_clock::now();
    in_stage(std::string("train ") + variant_name(v),
             [&] { train_variant(config, v, data, paths); });
    const double took = seconds_since(t0);
    std::lock_guard lock(log_mutex);
    manifest.seconds[std::string("train_") + variant_name(v)] = took;
    char line[128];
    std::snprintf(line, sizeof(line), "trained %s in %.1fs\n", variant_name(v), took);
    log << line;
  };
  run(Variant::kBaseline);

  std::vector<Variant> rest;
  for (Variant v : variants) {
    if (v != Variant::kBaseline) rest.push_back(v);
  }
  const std::size_t workers = std::min(worker_limit(), std::max<std::size_t>(1, rest.size()));
  std::vector<std::exception_ptr> errors(rest.size());
  std::size_t next = 0;
  std::mutex queue_mutex;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(queue_mutex);
        if (next == rest.size()) return;
        i = next++;
      }
      try {
        run(rest[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  start = std::chrono::steady_clock::now();
  in_stage("evaluate", [&] { cmd_evaluate(config, variants, log); });
  manifest.seconds["evaluate"] = seconds_since(start);

  for (Variant v : variants) {
    manifest.checkpoints[variant_name(v)] = paths.checkpoint(v);
    manifest.reports[variant_name(v)] = paths.per_class(v);
  }
  manifest.summary = paths.summary();
  std::ofstream os(paths.manifest());
  json j = manifest.to_json();
  j["config"] = config.to_json();
  os << j.dump(2) << '\n';
  if (!os) throw RuntimeFailure("cannot write manifest " + paths.manifest());
  return manifest;
}

}  // namespace nlab
