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

#ifndef NLAB_MODEL_HPP_
#define NLAB_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nlab/dataset.hpp"
#include "nlab/graph.hpp"
#include "nlab/tensor.hpp"

namespace nlab {

struct ModelDims {
  std::size_t num_classes = 0;  // d
  std::size_t feature_dim = 0;  // k
  std::size_t trunk_hidden = 64;
  std::size_t embedding = 32;
  std::size_t label_embedding = 32;
  std::size_t cleaner_hidden = 64;

  bool operator==(const ModelDims&) const = default;
};

enum class ParamGroup { kTrunk, kCleaner, kHead };

const char* group_name(ParamGroup group);

// Which parameter groups receive gradients.
struct TrainableGroups {
  bool trunk = false;
  bool cleaner = false;
  bool head = false;

  static TrainableGroups all() { return {true, true, true}; }
  bool contains(ParamGroup group) const;
};

// Parameters of the feature trunk f, the residual cleaner g' and the
// classifier head w. Weights are [fan_in x fan_out], biases [fan_out].
struct ModelParams {
  ModelDims dims;
  std::uint64_t vocabulary_fingerprint = 0;

  Tensor trunk_hidden_w, trunk_hidden_b;
  Tensor trunk_out_w, trunk_out_b;
  Tensor label_embed_w, label_embed_b;
  Tensor fusion_w, fusion_b;
  Tensor residual_w, residual_b;
  Tensor head_w, head_b;

  // Calls f(name, group, tensor) for every parameter in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;
  bool operator==(const ModelParams&) const = default;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string_view("trunk.hidden.weight"), ParamGroup::kTrunk, self.trunk_hidden_w);
    f(std::string_view("trunk.hidden.bias"), ParamGroup::kTrunk, self.trunk_hidden_b);
    f(std::string_view("trunk.out.weight"), ParamGroup::kTrunk, self.trunk_out_w);
    f(std::string_view("trunk.out.bias"), ParamGroup::kTrunk, self.trunk_out_b);
    f(std::string_view("cleaner.label_embed.weight"), ParamGroup::kCleaner, self.label_embed_w);
    f(std::string_view("cleaner.label_embed.bias"), ParamGroup::kCleaner, self.label_embed_b);
    f(std::string_view("cleaner.fusion.weight"), ParamGroup::kCleaner, self.fusion_w);
    f(std::string_view("cleaner.fusion.bias"), ParamGroup::kCleaner, self.fusion_b);
    f(std::string_view("cleaner.residual.weight"), ParamGroup::kCleaner, self.residual_w);
    f(std::string_view("cleaner.residual.bias"), ParamGroup::kCleaner, self.residual_b);
    f(std::string_view("head.weight"), ParamGroup::kHead, self.head_w);
    f(std::string_view("head.bias"), ParamGroup::kHead, self.head_b);
  }
};

// Glorot-uniform weights, zero biases, and an all-zero residual projection
// so that the cleaner starts as the identity on the noisy labels.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

// Throws ConfigError unless every tensor matches `dims`.
void validate_params(const ModelParams& params);

// Parameters bound into a graph as leaves.
struct BoundModel {
  const ModelParams* params = nullptr;
  Var trunk_hidden_w, trunk_hidden_b;
  Var trunk_out_w, trunk_out_b;
  Var label_embed_w, label_embed_b;
  Var fusion_w, fusion_b;
  Var residual_w, residual_b;
  Var head_w, head_b;

  // Calls f(name, group, var) in ModelParams order.
  template <typename F>
  void for_each(F&& f) const;
};

BoundModel bind(Graph& graph, const ModelParams& params,
                TrainableGroups trainable);

// f(x): [b x k] -> [b x embedding].
Var features(const BoundModel& model, Var x);
// g'(y, f(x)) before the skip connection and clip.
Var cleaning_residual(const BoundModel& model, Var y, Var feat);
// clip(y + g'(y, f(x)), [0, 1]).
Var clean_labels(const BoundModel& model, Var y, Var feat);
// sigmoid(w(f(x))).
Var predict(const BoundModel& model, Var feat);

// Value-level forward passes on throwaway graphs.
Tensor features(const ModelParams& params, const Tensor& x);
Tensor clean_labels(const ModelParams& params, const Tensor& y,
                    const Tensor& feat);
Tensor predict(const ModelParams& params, const Tensor& feat);

// Stacks rows of the given samples.
Tensor feature_matrix(std::span<const Sample> samples,
                      std::span<const std::size_t> rows);
enum class LabelSource { kNoisy, kVerified };
Tensor label_matrix(std::span<const Sample> samples,
                    std::span<const std::size_t> rows, LabelSource source);

// Classifier scores p-hat for every sample, [n x d].
Tensor predict_scores(const ModelParams& params,
                      std::span<const Sample> samples);

// Versioned binary checkpoint: named tensors with little-endian float64
// payloads. Round-trips bitwise.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

template <typename F>
void BoundModel::for_each(F&& f) const {
  f(std::string_view("trunk.hidden.weight"), ParamGroup::kTrunk, trunk_hidden_w);
  f(std::string_view("trunk.hidden.bias"), ParamGroup::kTrunk, trunk_hidden_b);
  f(std::string_view("trunk.out.weight"), ParamGroup::kTrunk, trunk_out_w);
  f(std::string_view("trunk.out.bias"), ParamGroup::kTrunk, trunk_out_b);
  f(std::string_view("cleaner.label_embed.weight"), ParamGroup::kCleaner, label_embed_w);
  f(std::string_view("cleaner.label_embed.bias"), ParamGroup::kCleaner, label_embed_b);
  f(std::string_view("cleaner.fusion.weight"), ParamGroup::kCleaner, fusion_w);
  f(std::string_view("cleaner.fusion.bias"), ParamGroup::kCleaner, fusion_b);
  f(std::string_view("cleaner.residual.weight"), ParamGroup::kCleaner, residual_w);
  f(std::string_view("cleaner.residual.bias"), ParamGroup::kCleaner, residual_b);
  f(std::string_view("head.weight"), ParamGroup::kHead, head_w);
  f(std::string_view("head.bias"), ParamGroup::kHead, head_b);
}

}  // namespace nlab

#endif  // NLAB_MODEL_HPP_
