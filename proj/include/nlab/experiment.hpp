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

#ifndef NLAB_EXPERIMENT_HPP_
#define NLAB_EXPERIMENT_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlab/dataset.hpp"
#include "nlab/metrics.hpp"
#include "nlab/trainer.hpp"

namespace nlab {

struct EvalConfig {
  std::size_t pr_granularity = 200;
  bool deciles = true;
};

// Everything a run needs. Parsed from JSON; unknown keys are rejected and
// errors name the offending field path (e.g. "train.max_steps").
struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetConfig dataset;
  TrainConfig train;
  // Per-variant partial train sections layered over `train`, keyed by
  // variant name.
  nlohmann::json variant_train = nlohmann::json::object();
  EvalConfig eval;
  std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::string out = "runs/default";

  ExperimentConfig();

  // Train settings of one variant, seeded from `seed`.
  TrainConfig train_config(Variant variant) const;
  nlohmann::json to_json() const;
  // FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
// Applies "dotted.path=value" to a JSON config. The value is read as JSON
// when it parses, as a plain string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);
// Defaults, then the file (if non-empty path), then overrides.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

// Files of a run directory.
struct RunPaths {
  std::string root;

  std::string dataset() const;
  std::string checkpoint(Variant variant) const;
  std::string training_log(Variant variant) const;
  std::string summary() const;
  std::string per_class(Variant variant) const;
  std::string pr_curve(Variant variant) const;
  std::string deciles(Variant variant, const std::string& key) const;
  std::string manifest() const;
};

struct GenerateSummary {
  GenerationStats stats;
  // Annotations of the most frequent class over the 90th-percentile class.
  double skew_ratio = 0.0;
};

GenerateSummary dataset_summary(const DatasetSplit& data);

struct VariantReport {
  Variant variant = Variant::kBaseline;
  MetricsReport report;
};

// Evaluates on E. Throws ConfigError when the checkpoint was trained on a
// different vocabulary.
MetricsReport evaluate_params(const ModelParams& params, const DatasetSplit& data,
                              const EvalConfig& eval);

// Upper bound on parallel variant workers: NOISY_LABEL_LAB_THREADS when set
// to a positive integer, hardware concurrency otherwise.
std::size_t worker_limit();

// Subcommands. Progress goes to `log`.
GenerateSummary cmd_generate(const ExperimentConfig& config, std::ostream& log);
TrainResult cmd_train(const ExperimentConfig& config, Variant variant,
                      std::ostream& log);
// Evaluates the given variants (all with checkpoints present when empty).
std::vector<VariantReport> cmd_evaluate(const ExperimentConfig& config,
                                        const std::vector<Variant>& variants,
                                        std::ostream& log);

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string dataset;
  std::map<std::string, std::string> checkpoints;
  std::map<std::string, std::string> reports;
  std::string summary;
  std::map<std::string, double> seconds;

  nlohmann::json to_json() const;
};

// generate -> baseline -> remaining variants (parallel) -> evaluate.
// Stage failures are rethrown with the stage name prepended.
RunManifest cmd_reproduce(const ExperimentConfig& config, std::ostream& log);

}  // namespace nlab

#endif  // NLAB_EXPERIMENT_HPP_
