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

#include "nlab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "nlab/errors.hpp"

namespace nlab {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(std::string("train.") + field + ": " + what);
}

Var zero_scalar(Graph& g) { return g.constant(Tensor::scalar(0.0)); }

struct RowForward {
  Var feat;
  Var predicted;
};

}  // namespace

const char* variant_name(Variant variant) {
  switch (variant) {
    case Variant::kBaseline: return "baseline";
    case Variant::kFtClean: return "ft_clean";
    case Variant::kFtMixed: return "ft_mixed";
    case Variant::kOursPretrained: return "ours_pretrained";
    case Variant::kOursJoint: return "ours_joint";
  }
  return "?";
}

std::optional<Variant> parse_variant(const std::string& name) {
  for (Variant v : kAllVariants) {
    if (name == variant_name(v)) return v;
  }
  return std::nullopt;
}

bool needs_baseline(Variant variant) { return variant != Variant::kBaseline; }

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::kBaseline: return "baseline";
    case Phase::kFineTune: return "fine_tune";
    case Phase::kPretrainCleaner: return "pretrain_cleaner";
    case Phase::kJoint: return "joint";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(batch_size > 0, "batch_size", "must be > 0");
  require(mix_noisy > 0.0, "mix_noisy", "must be > 0");
  require(mix_clean > 0.0, "mix_clean", "must be > 0");
  require(clean_weight > 0.0, "clean_weight", "must be > 0");
  require(classify_weight > 0.0, "classify_weight", "must be > 0");
  for (auto [name, lr] : {std::pair{"lr_baseline", lr_baseline},
                          {"lr_classifier", lr_classifier},
                          {"lr_cleaner", lr_cleaner},
                          {"lr_cleaner_pretrain", lr_cleaner_pretrain},
                          {"lr_cleaner_after_pretrain", lr_cleaner_after_pretrain}}) {
    require(lr >= 0.0, name, "must be >= 0");
  }
  require(rms_decay > 0.0 && rms_decay < 1.0, "rms_decay", "must be in (0,1)");
  require(rms_epsilon > 0.0, "rms_epsilon", "must be > 0");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay", "must be in (0,1]");
  require(decay_epochs > 0.0, "decay_epochs", "must be > 0");
  require(pretrain_window > 0, "pretrain_window", "must be > 0");
}

double GroupRates::for_group(ParamGroup group) const {
  switch (group) {
    case ParamGroup::kTrunk: return trunk;
    case ParamGroup::kCleaner: return cleaner;
    case ParamGroup::kHead: return head;
  }
  return 0.0;
}

Var clean_loss(Var cleaned, Var verified) {
  if (cleaned.shape() != verified.shape()) {
    throw ConfigError("clean_loss: cleaned labels " +
                      shape_string(cleaned.shape()) + " vs verified " +
                      shape_string(verified.shape()));
  }
  return sum(abs(cleaned - verified));
}

Var classify_loss(Var predicted, Var targets, double eps) {
  if (predicted.shape() != targets.shape()) {
    throw ConfigError("classify_loss: predictions " +
                      shape_string(predicted.shape()) + " vs targets " +
                      shape_string(targets.shape()));
  }
  for (double t : targets.value().values()) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw UsageError("classify_loss: target " + std::to_string(t) +
                       " outside [0,1]");
    }
  }
  Var positive = targets * log_clamped(predicted, eps);
  Var negative = one_minus(targets) * log_clamped(one_minus(predicted), eps);
  return scale(sum(positive + negative), -1.0);
}

double clean_loss(const Tensor& cleaned, const Tensor& verified) {
  Graph g;
  return clean_loss(g.constant(cleaned), g.constant(verified)).value().item();
}

double classify_loss(const Tensor& predicted, const Tensor& targets,
                     double eps) {
  Graph g;
  return classify_loss(g.constant(predicted), g.constant(targets), eps)
      .value()
      .item();
}

std::size_t BatchMix::noisy_count() const {
  const double share = noisy / (noisy + clean);
  return static_cast<std::size_t>(std::llround(batch_size * share));
}

Batch sample_batch(std::size_t train_count, std::size_t verified_count,
                   const BatchMix& mix, Rng& rng) {
  Batch batch;
  const std::size_t n_noisy = mix.noisy_count();
  const std::size_t n_clean = mix.clean_count();
  if (n_noisy > 0 && train_count == 0) {
    throw ConfigError("sample_batch: batch needs noisy samples but T is empty");
  }
  if (n_clean > 0 && verified_count == 0) {
    throw ConfigError(
        "sample_batch: batch needs verified samples but V is empty");
  }
  batch.noisy.reserve(n_noisy);
  batch.clean.reserve(n_clean);
  for (std::size_t i = 0; i < n_noisy; ++i) batch.noisy.push_back(rng.index(train_count));
  for (std::size_t i = 0; i < n_clean; ++i) batch.clean.push_back(rng.index(verified_count));
  return batch;
}

TrainableGroups trainable_groups(Phase phase) {
  switch (phase) {
    case Phase::kBaseline: return {.trunk = true, .cleaner = false, .head = true};
    case Phase::kFineTune: return {.trunk = false, .cleaner = false, .head = true};
    case Phase::kPretrainCleaner: return {.trunk = false, .cleaner = true, .head = false};
    case Phase::kJoint: return TrainableGroups::all();
  }
  return {};
}

BatchMix batch_mix(Variant variant, Phase phase, const TrainConfig& config) {
  BatchMix mix{config.batch_size, config.mix_noisy, config.mix_clean};
  if (phase == Phase::kPretrainCleaner || variant == Variant::kFtClean) {
    mix.noisy = 0.0;
    mix.clean = 1.0;
  } else if (variant == Variant::kBaseline) {
    mix.noisy = 1.0;
    mix.clean = 0.0;
  }
  return mix;
}

void optimizer_update(ModelParams& params, ModelParams& accum,
                      const GradientMap& grads, const GroupRates& rates,
                      double rho, double epsilon) {
  std::size_t matched = 0;
  params.for_each([&](std::string_view name, ParamGroup group, Tensor& p) {
    auto it = grads.find(name);
    if (it == grads.end()) return;
    ++matched;
    const Tensor& g = it->second;
    if (g.shape() != p.shape()) {
      throw ConfigError("gradient for " + std::string(name) + " has shape " +
                        shape_string(g.shape()));
    }
    if (!g.all_finite()) {
      throw RuntimeFailure("non-finite gradient in parameter " +
                           std::string(name));
    }
    Tensor* acc = nullptr;
    accum.for_each([&](std::string_view n, ParamGroup, Tensor& a) {
      if (n == name) acc = &a;
    });
    if (acc->shape() != p.shape()) *acc = Tensor(p.shape());
    const double lr = rates.for_group(group);
    for (std::size_t i = 0; i < p.size(); ++i) {
      (*acc)[i] = rho * (*acc)[i] + (1.0 - rho) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt((*acc)[i]) + epsilon);
    }
  });
  if (matched != grads.size()) {
    throw ConfigError("optimizer_update: gradient map names unknown parameters");
  }
}

LossGraph build_losses(Graph& graph, const BoundModel& model,
                       const DatasetSplit& data, const Batch& batch,
                       Phase phase, const TrainConfig& config) {
  LossGraph out;
  out.clean = zero_scalar(graph);
  out.classify_noisy = zero_scalar(graph);
  out.classify_verified = zero_scalar(graph);
  const bool classify = phase != Phase::kPretrainCleaner;
  const bool cleaner = phase == Phase::kPretrainCleaner || phase == Phase::kJoint;

  if (!batch.noisy.empty() && phase != Phase::kPretrainCleaner) {
    Var x = graph.constant(feature_matrix(data.train, batch.noisy));
    Var y = graph.constant(label_matrix(data.train, batch.noisy, LabelSource::kNoisy));
    Var feat = features(model, x);
    Var predicted = predict(model, feat);
    Var targets = y;
    if (phase == Phase::kJoint) {
      // T rows learn from cleaned labels, held constant for this term.
      targets = stop_gradient(clean_labels(model, y, feat));
    }
    out.classify_noisy = classify_loss(predicted, targets);
  }
  if (!batch.clean.empty()) {
    Var x = graph.constant(feature_matrix(data.verified, batch.clean));
    Var v = graph.constant(label_matrix(data.verified, batch.clean, LabelSource::kVerified));
    Var feat = features(model, x);
    if (cleaner) {
      Var y = graph.constant(label_matrix(data.verified, batch.clean, LabelSource::kNoisy));
      out.clean = clean_loss(clean_labels(model, y, feat), v);
    }
    if (classify) out.classify_verified = classify_loss(predict(model, feat), v);
  }
  out.classify = out.classify_noisy + out.classify_verified;
  out.total = scale(out.clean, config.clean_weight) +
              scale(out.classify, config.classify_weight);
  return out;
}

StepResult compute_gradients(const ModelParams& params,
                             const DatasetSplit& data, const Batch& batch,
                             Phase phase, const TrainConfig& config,
                             LossTerm term, bool all_params) {
  const TrainableGroups trainable =
      all_params ? TrainableGroups::all() : trainable_groups(phase);
  Graph graph;
  BoundModel model = bind(graph, params, trainable);
  LossGraph losses = build_losses(graph, model, data, batch, phase, config);
  Var root = losses.total;
  switch (term) {
    case LossTerm::kTotal: break;
    case LossTerm::kClean: root = losses.clean; break;
    case LossTerm::kClassifyNoisy: root = losses.classify_noisy; break;
    case LossTerm::kClassifyVerified: root = losses.classify_verified; break;
  }
  graph.backward(root);

  StepResult result;
  result.losses.clean = losses.clean.value().item();
  result.losses.classify = losses.classify.value().item();
  result.losses.total = losses.total.value().item();
  model.for_each([&](std::string_view name, ParamGroup group, Var v) {
    if (trainable.contains(group)) {
      result.gradients.emplace(std::string(name), graph.grad(v));
    }
  });
  return result;
}

TrainState::TrainState(ModelParams initial) : params(std::move(initial)) {
  accum = params;
  accum.for_each([](std::string_view, ParamGroup, Tensor& t) { t.fill(0.0); });
}

GroupRates phase_rates(Variant variant, Phase phase, const TrainConfig& config,
                       std::uint64_t noisy_seen, std::size_t train_size) {
  GroupRates r;
  switch (phase) {
    case Phase::kBaseline:
      r.trunk = r.head = config.lr_baseline;
      break;
    case Phase::kFineTune:
      r.head = config.lr_classifier;
      break;
    case Phase::kPretrainCleaner:
      r.cleaner = config.lr_cleaner_pretrain;
      break;
    case Phase::kJoint:
      r.trunk = r.head = config.lr_classifier;
      r.cleaner = variant == Variant::kOursPretrained
                      ? config.lr_cleaner_after_pretrain
                      : config.lr_cleaner;
      break;
  }
  if (train_size > 0) {
    const double epochs = static_cast<double>(noisy_seen) / train_size;
    const double factor =
        std::pow(config.lr_decay, std::floor(epochs / config.decay_epochs));
    r.trunk *= factor;
    r.cleaner *= factor;
    r.head *= factor;
  }
  return r;
}

StepLosses train_step(TrainState& state, const DatasetSplit& data,
                      const Batch& batch, Phase phase, const GroupRates& rates,
                      const TrainConfig& config) {
  StepResult step = compute_gradients(state.params, data, batch, phase, config);
  optimizer_update(state.params, state.accum, step.gradients, rates,
                   config.rms_decay, config.rms_epsilon);
  ++state.step;
  state.noisy_seen += batch.noisy.size();
  const double a = state.step == 1 ? 1.0 : 0.01;
  state.avg_clean += a * (step.losses.clean - state.avg_clean);
  state.avg_classify += a * (step.losses.classify - state.avg_classify);
  return step.losses;
}

ModelDims model_dims_for(const DatasetSplit& data) {
  ModelDims dims;
  dims.num_classes = data.num_classes();
  dims.feature_dim = data.feature_dim;
  return dims;
}

TrainResult train(Variant variant, const DatasetSplit& data,
                  const TrainConfig& config, const ModelParams* baseline,
                  const ModelDims* dims) {
  config.validate();
  const ModelDims model_dims = dims != nullptr ? *dims : model_dims_for(data);
  ModelParams initial;
  if (variant == Variant::kBaseline) {
    initial = init_params(model_dims, config.seed);
  } else {
    if (baseline == nullptr) {
      throw ConfigError(std::string("variant ") + variant_name(variant) +
                        " needs a baseline checkpoint; train the baseline "
                        "variant first");
    }
    validate_params(*baseline);
    if (baseline->dims.num_classes != data.num_classes() ||
        baseline->dims.feature_dim != data.feature_dim) {
      throw ConfigError("baseline checkpoint dims do not match the dataset");
    }
    initial = *baseline;
    // The cleaner always starts fresh with an identity residual.
    const ModelParams fresh = init_params(baseline->dims, config.seed);
    initial.label_embed_w = fresh.label_embed_w;
    initial.label_embed_b = fresh.label_embed_b;
    initial.fusion_w = fresh.fusion_w;
    initial.fusion_b = fresh.fusion_b;
    initial.residual_w = fresh.residual_w;
    initial.residual_b = fresh.residual_b;
  }
  initial.vocabulary_fingerprint = data.vocabulary.fingerprint();

  TrainResult result;
  if (config.max_steps == 0) {
    result.params = std::move(initial);
    return result;
  }

  TrainState state(std::move(initial));
  const std::size_t train_size = data.train.size();
  auto run_phase = [&](Phase phase, std::size_t steps, std::uint64_t stream) {
    Rng rng = make_rng(config.seed, Stream::kBatches,
                       stream * 16 + static_cast<std::uint64_t>(variant));
    const BatchMix mix = batch_mix(variant, phase, config);
    std::vector<double> recent;
    for (std::size_t i = 0; i < steps; ++i) {
      const Batch batch = sample_batch(train_size, data.verified.size(), mix, rng);
      const GroupRates rates =
          phase_rates(variant, phase, config, state.noisy_seen, train_size);
      const StepLosses losses = train_step(state, data, batch, phase, rates, config);
      const TrainableGroups groups = trainable_groups(phase);
      result.log.push_back({state.step, losses.clean, losses.classify,
                            losses.total, groups.head ? rates.head : rates.cleaner,
                            phase});
      if (phase != Phase::kPretrainCleaner) continue;
      recent.push_back(losses.clean);
      const std::size_t w = config.pretrain_window;
      if (recent.size() >= 2 * w) {
        const auto end = recent.end();
        const double cur = std::accumulate(end - w, end, 0.0) / w;
        const double prev = std::accumulate(end - 2 * w, end - w, 0.0) / w;
        if (prev > 0.0 && (prev - cur) / prev < config.pretrain_tolerance) break;
      }
    }
  };

  switch (variant) {
    case Variant::kBaseline:
      run_phase(Phase::kBaseline, config.max_steps, 0);
      break;
    case Variant::kFtClean:
    case Variant::kFtMixed:
      run_phase(Phase::kFineTune, config.max_steps, 1);
      break;
    case Variant::kOursPretrained:
      run_phase(Phase::kPretrainCleaner, config.pretrain_steps, 2);
      run_phase(Phase::kJoint, config.max_steps, 3);
      break;
    case Variant::kOursJoint:
      run_phase(Phase::kJoint, config.max_steps, 3);
      break;
  }
  result.params = std::move(state.params);
  return result;
}

void write_training_log(const std::vector<LogRow>& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw RuntimeFailure("cannot write training log: " + path);
  std::fprintf(f, "step,L_clean,L_classify,total,lr\n");
  for (const LogRow& r : log) {
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.clean,
                 r.classify, r.total, r.lr);
  }
  if (std::fclose(f) != 0) throw RuntimeFailure("failed writing " + path);
}

}  // namespace nlab
