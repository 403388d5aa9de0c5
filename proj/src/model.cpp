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

#include "nlab/model.hpp"

#include <cmath>
#include <string>

#include "nlab/errors.hpp"
#include "nlab/random.hpp"

namespace nlab {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(Shape{fan_in, fan_out});
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

Shape expected_shape(const ModelDims& d, std::string_view name) {
  const std::size_t fusion_in = d.label_embedding + d.embedding;
  if (name == "trunk.hidden.weight") return {d.feature_dim, d.trunk_hidden};
  if (name == "trunk.hidden.bias") return {d.trunk_hidden};
  if (name == "trunk.out.weight") return {d.trunk_hidden, d.embedding};
  if (name == "trunk.out.bias") return {d.embedding};
  if (name == "cleaner.label_embed.weight") return {d.num_classes, d.label_embedding};
  if (name == "cleaner.label_embed.bias") return {d.label_embedding};
  if (name == "cleaner.fusion.weight") return {fusion_in, d.cleaner_hidden};
  if (name == "cleaner.fusion.bias") return {d.cleaner_hidden};
  if (name == "cleaner.residual.weight") return {d.cleaner_hidden, d.num_classes};
  if (name == "cleaner.residual.bias") return {d.num_classes};
  if (name == "head.weight") return {d.embedding, d.num_classes};
  if (name == "head.bias") return {d.num_classes};
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

void require_cols(const char* what, const Tensor& t, std::size_t cols) {
  if (t.rank() != 2 || t.cols() != cols) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(cols) +
                      " columns, got shape " + shape_string(t.shape()));
  }
}

}  // namespace

const char* group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kTrunk: return "trunk";
    case ParamGroup::kCleaner: return "cleaner";
    case ParamGroup::kHead: return "head";
  }
  return "?";
}

bool TrainableGroups::contains(ParamGroup group) const {
  switch (group) {
    case ParamGroup::kTrunk: return trunk;
    case ParamGroup::kCleaner: return cleaner;
    case ParamGroup::kHead: return head;
  }
  return false;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, ParamGroup, const Tensor& t) { n += t.size(); });
  return n;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.num_classes < 2 || dims.feature_dim == 0 || dims.trunk_hidden == 0 ||
      dims.embedding == 0 || dims.label_embedding == 0 ||
      dims.cleaner_hidden == 0) {
    throw ConfigError("model dims must be positive (and num_classes >= 2)");
  }
  Rng rng = make_rng(seed, Stream::kModelInit);
  ModelParams p;
  p.dims = dims;
  p.for_each([&](std::string_view name, ParamGroup, Tensor& t) {
    const Shape shape = expected_shape(dims, name);
    const bool is_residual = name.starts_with("cleaner.residual");
    if (shape.size() == 2 && !is_residual) {
      t = glorot(shape[0], shape[1], rng);
    } else {
      t = Tensor(shape);
    }
  });
  return p;
}

void validate_params(const ModelParams& params) {
  params.for_each([&](std::string_view name, ParamGroup, const Tensor& t) {
    const Shape shape = expected_shape(params.dims, name);
    if (t.shape() != shape) {
      throw ConfigError("parameter " + std::string(name) + " has shape " +
                        shape_string(t.shape()) + ", expected " +
                        shape_string(shape));
    }
  });
}

BoundModel bind(Graph& graph, const ModelParams& params,
                TrainableGroups trainable) {
  BoundModel m;
  m.params = &params;
  auto leaf = [&](const Tensor& t, ParamGroup group) {
    return trainable.contains(group) ? graph.parameter(t) : graph.constant(t);
  };
  m.trunk_hidden_w = leaf(params.trunk_hidden_w, ParamGroup::kTrunk);
  m.trunk_hidden_b = leaf(params.trunk_hidden_b, ParamGroup::kTrunk);
  m.trunk_out_w = leaf(params.trunk_out_w, ParamGroup::kTrunk);
  m.trunk_out_b = leaf(params.trunk_out_b, ParamGroup::kTrunk);
  m.label_embed_w = leaf(params.label_embed_w, ParamGroup::kCleaner);
  m.label_embed_b = leaf(params.label_embed_b, ParamGroup::kCleaner);
  m.fusion_w = leaf(params.fusion_w, ParamGroup::kCleaner);
  m.fusion_b = leaf(params.fusion_b, ParamGroup::kCleaner);
  m.residual_w = leaf(params.residual_w, ParamGroup::kCleaner);
  m.residual_b = leaf(params.residual_b, ParamGroup::kCleaner);
  m.head_w = leaf(params.head_w, ParamGroup::kHead);
  m.head_b = leaf(params.head_b, ParamGroup::kHead);
  return m;
}

Var features(const BoundModel& model, Var x) {
  require_cols("features", x.value(), model.params->dims.feature_dim);
  Var hidden = tanh(affine(x, model.trunk_hidden_w, model.trunk_hidden_b));
  return tanh(affine(hidden, model.trunk_out_w, model.trunk_out_b));
}

Var cleaning_residual(const BoundModel& model, Var y, Var feat) {
  require_cols("clean_labels", y.value(), model.params->dims.num_classes);
  require_cols("clean_labels", feat.value(), model.params->dims.embedding);
  Var label_embedding = affine(y, model.label_embed_w, model.label_embed_b);
  Var fused = tanh(affine(concat_cols(label_embedding, feat), model.fusion_w,
                          model.fusion_b));
  return affine(fused, model.residual_w, model.residual_b);
}

Var clean_labels(const BoundModel& model, Var y, Var feat) {
  return clip01(y + cleaning_residual(model, y, feat));
}

Var predict(const BoundModel& model, Var feat) {
  require_cols("predict", feat.value(), model.params->dims.embedding);
  return sigmoid(affine(feat, model.head_w, model.head_b));
}

Tensor features(const ModelParams& params, const Tensor& x) {
  Graph g;
  BoundModel m = bind(g, params, {});
  return features(m, g.constant(x)).value();
}

Tensor clean_labels(const ModelParams& params, const Tensor& y,
                    const Tensor& feat) {
  Graph g;
  BoundModel m = bind(g, params, {});
  return clean_labels(m, g.constant(y), g.constant(feat)).value();
}

Tensor predict(const ModelParams& params, const Tensor& feat) {
  Graph g;
  BoundModel m = bind(g, params, {});
  return predict(m, g.constant(feat)).value();
}

Tensor feature_matrix(std::span<const Sample> samples,
                      std::span<const std::size_t> rows) {
  const std::size_t k = samples.empty() ? 0 : samples[rows.empty() ? 0 : rows[0]].features.size();
  Tensor x(Shape{rows.size(), k});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = samples[rows[i]].features;
    if (f.size() != k) throw ConfigError("feature_matrix: ragged feature rows");
    std::copy(f.begin(), f.end(), x.data() + i * k);
  }
  return x;
}

Tensor label_matrix(std::span<const Sample> samples,
                    std::span<const std::size_t> rows, LabelSource source) {
  auto pick = [&](const Sample& s) -> const LabelVector& {
    return source == LabelSource::kNoisy ? s.y : s.v;
  };
  const std::size_t d = rows.empty() ? 0 : pick(samples[rows[0]]).size();
  Tensor y(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const LabelVector& labels = pick(samples[rows[i]]);
    if (labels.size() != d) {
      throw ConfigError("label_matrix: sample " +
                        std::to_string(samples[rows[i]].id) +
                        " lacks the requested labels");
    }
    for (std::size_t c = 0; c < d; ++c) y[i * d + c] = labels[c];
  }
  return y;
}

Tensor predict_scores(const ModelParams& params,
                      std::span<const Sample> samples) {
  const std::size_t d = params.dims.num_classes;
  const std::size_t chunk = 512;
  Tensor scores(Shape{samples.size(), d});
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    rows.clear();
    for (std::size_t i = start; i < end; ++i) rows.push_back(i);
    const Tensor p = predict(params, features(params, feature_matrix(samples, rows)));
    std::copy(p.data(), p.data() + p.size(), scores.data() + start * d);
  }
  return scores;
}

}  // namespace nlab
