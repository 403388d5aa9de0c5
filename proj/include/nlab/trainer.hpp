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

#ifndef NLAB_TRAINER_HPP_
#define NLAB_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlab/dataset.hpp"
#include "nlab/graph.hpp"
#include "nlab/model.hpp"
#include "nlab/random.hpp"

namespace nlab {

enum class Variant { kBaseline, kFtClean, kFtMixed, kOursPretrained, kOursJoint };

inline constexpr Variant kAllVariants[] = {
    Variant::kBaseline, Variant::kFtClean, Variant::kFtMixed,
    Variant::kOursPretrained, Variant::kOursJoint};

const char* variant_name(Variant variant);
std::optional<Variant> parse_variant(const std::string& name);
// Everything except the baseline starts from a trained baseline.
bool needs_baseline(Variant variant);

struct TrainConfig {
  std::size_t batch_size = 32;
  // noisy:clean composition of mixed batches.
  double mix_noisy = 9.0;
  double mix_clean = 1.0;
  double clean_weight = 0.1;
  double classify_weight = 1.0;

  // Trunk and head while training the baseline.
  double lr_baseline = 0.003;
  // Trunk and head while fine-tuning, and the classifier in joint training.
  double lr_classifier = 0.001;
  // Cleaner in joint training from the start.
  double lr_cleaner = 0.003;
  // Cleaner while it is pretrained alone.
  double lr_cleaner_pretrain = 0.003;
  // Cleaner once a pretrained cleaner enters joint training.
  double lr_cleaner_after_pretrain = 0.001;

  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  // lr *= lr_decay every decay_epochs passes over T (staircase).
  double lr_decay = 0.94;
  double decay_epochs = 2.0;

  // Steps of the variant's main phase. Zero means no training at all.
  std::size_t max_steps = 10000;
  // Pretraining of the cleaner (ours_pretrained), run before the main
  // phase. Stops early when the mean cleaning loss over the last window
  // improves by less than pretrain_tolerance relative to the window before.
  std::size_t pretrain_steps = 2000;
  double pretrain_tolerance = 1e-4;
  std::size_t pretrain_window = 200;

  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Clip-based residual cleaning objective: sum |c_hat - v|.
Var clean_loss(Var cleaned, Var verified);
// Binary cross-entropy summed over classes and rows; log arguments are
// clamped below at eps. Targets outside [0, 1] raise UsageError.
Var classify_loss(Var predicted, Var targets, double eps = 1e-12);

double clean_loss(const Tensor& cleaned, const Tensor& verified);
double classify_loss(const Tensor& predicted, const Tensor& targets,
                     double eps = 1e-12);

// Row indices into T (noisy) and V (clean). Membership is the source tag.
struct Batch {
  std::vector<std::size_t> noisy;
  std::vector<std::size_t> clean;

  std::size_t size() const { return noisy.size() + clean.size(); }
};

struct BatchMix {
  std::size_t batch_size = 32;
  double noisy = 9.0;
  double clean = 1.0;

  // round(B * noisy / (noisy + clean)).
  std::size_t noisy_count() const;
  std::size_t clean_count() const { return batch_size - noisy_count(); }
};

// Uniform draws with replacement; exact composition per batch.
Batch sample_batch(std::size_t train_count, std::size_t verified_count,
                   const BatchMix& mix, Rng& rng);

enum class Phase { kBaseline, kFineTune, kPretrainCleaner, kJoint };

const char* phase_name(Phase phase);
TrainableGroups trainable_groups(Phase phase);
BatchMix batch_mix(Variant variant, Phase phase, const TrainConfig& config);

struct GroupRates {
  double trunk = 0.0;
  double cleaner = 0.0;
  double head = 0.0;

  double for_group(ParamGroup group) const;
};

using GradientMap = std::map<std::string, Tensor, std::less<>>;

// RMSprop: accum <- rho*accum + (1-rho)*g^2; p <- p - lr*g/(sqrt(accum)+eps).
// `grads` must name trainable parameters only. Non-finite gradients raise
// RuntimeFailure naming the parameter.
void optimizer_update(ModelParams& params, ModelParams& accum,
                      const GradientMap& grads, const GroupRates& rates,
                      double rho, double epsilon);

struct StepLosses {
  double clean = 0.0;
  double classify = 0.0;
  double total = 0.0;
};

// Loss terms of one batch, built on a graph.
struct LossGraph {
  Var clean;              // L_clean over clean rows (0 when absent)
  Var classify_noisy;     // cross-entropy of T rows
  Var classify_verified;  // cross-entropy of V rows
  Var classify;           // classify_noisy + classify_verified
  Var total;              // clean_weight * clean + classify_weight * classify
};

LossGraph build_losses(Graph& graph, const BoundModel& model,
                       const DatasetSplit& data, const Batch& batch,
                       Phase phase, const TrainConfig& config);

enum class LossTerm { kTotal, kClean, kClassifyNoisy, kClassifyVerified };

struct StepResult {
  StepLosses losses;
  GradientMap gradients;
};

// Forward and backward of one batch without touching the parameters.
// Gradients are reported for every parameter bound as trainable in `phase`
// (or for all parameters when `all_params` is set).
StepResult compute_gradients(const ModelParams& params,
                             const DatasetSplit& data, const Batch& batch,
                             Phase phase, const TrainConfig& config,
                             LossTerm term = LossTerm::kTotal,
                             bool all_params = false);

struct TrainState {
  std::size_t step = 0;
  ModelParams params;
  ModelParams accum;
  std::uint64_t noisy_seen = 0;
  double avg_clean = 0.0;
  double avg_classify = 0.0;

  explicit TrainState(ModelParams initial);
};

// Learning rates of the phase after staircase decay on passes over T.
GroupRates phase_rates(Variant variant, Phase phase, const TrainConfig& config,
                       std::uint64_t noisy_seen, std::size_t train_size);

StepLosses train_step(TrainState& state, const DatasetSplit& data,
                      const Batch& batch, Phase phase, const GroupRates& rates,
                      const TrainConfig& config);

struct LogRow {
  std::size_t step = 0;
  double clean = 0.0;
  double classify = 0.0;
  double total = 0.0;
  double lr = 0.0;
  Phase phase = Phase::kJoint;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogRow> log;
};

ModelDims model_dims_for(const DatasetSplit& data);

// Trains one variant. Non-baseline variants start from `baseline` and
// throw ConfigError when it is missing.
TrainResult train(Variant variant, const DatasetSplit& data,
                  const TrainConfig& config,
                  const ModelParams* baseline = nullptr,
                  const ModelDims* dims = nullptr);

// CSV: step,L_clean,L_classify,total,lr
void write_training_log(const std::vector<LogRow>& log, const std::string& path);

}  // namespace nlab

#endif  // NLAB_TRAINER_HPP_
