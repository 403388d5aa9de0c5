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

#ifndef NLAB_DATASET_HPP_
#define NLAB_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nlab {

// Binary (0/1) per-class labels.
using LabelVector = std::vector<std::uint8_t>;

struct Vocabulary {
  std::vector<std::string> names;
  // Optional group id per class (empty, or one entry per class).
  std::vector<int> groups;

  std::size_t size() const { return names.size(); }
  // Throws ConfigError unless d >= 2 and names are unique.
  void validate() const;
  // FNV-1a over the class names; stored in checkpoints.
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary&) const = default;
};

enum class Split { kTrain, kVerified, kEval };

const char* split_name(Split split);
std::optional<Split> parse_split(const std::string& name);

struct Sample {
  std::uint64_t id = 0;
  Split split = Split::kTrain;
  std::vector<double> features;
  LabelVector y;
  // Verified labels and mask; empty for samples without verification.
  // Invariant: v[c] == 1 implies mask[c] == 1.
  LabelVector v;
  LabelVector mask;

  bool verified() const { return !mask.empty(); }
  bool operator==(const Sample&) const = default;
};

// When class `source` is present in mode `mode`, the annotator also tags
// `target` with `probability` (a false positive whenever target is absent).
struct ConfusionEdge {
  std::size_t source = 0;
  std::size_t mode = 0;
  std::size_t target = 0;
  double probability = 0.0;

  bool operator==(const ConfusionEdge&) const = default;
};

using ClassPair = std::pair<std::size_t, std::size_t>;

struct NoiseSpec {
  // Per class: P(y=1 | class absent) from unstructured injection.
  std::vector<double> fp_rate;
  // Per class: P(y=0 | class present).
  std::vector<double> miss_rate;
  std::vector<ConfusionEdge> confusions;
  // (child, parent): child present implies parent present.
  std::vector<ClassPair> implications;
  // (a, b): never both present.
  std::vector<ClassPair> exclusions;

  // Throws ConfigError for out-of-range rates or indices, cyclic
  // implications, or exclusions between classes that can co-occur through
  // implication.
  void validate(std::size_t num_classes, std::size_t max_modes) const;
};

// Knobs of the synthetic generator. All fields have usable defaults.
struct DatasetConfig {
  std::size_t num_classes = 200;
  std::size_t feature_dim = 64;
  std::size_t train_size = 50000;
  std::size_t verified_size = 1000;
  std::size_t eval_size = 5000;
  std::size_t num_groups = 10;

  // Label model: base rate of class of rank r is top_rate * (r+1)^-zipf.
  double top_rate = 0.4;
  double zipf_exponent = 1.1;
  // Multiplier on classes of the sample's latent group (others get the
  // complementary multiplier so the average is 1).
  double group_affinity = 3.0;
  std::size_t max_modes = 3;
  std::size_t num_implications = 30;
  std::size_t num_exclusions = 20;

  // Features: sum of present classes' mode prototypes plus Gaussian noise.
  double prototype_scale = 0.5;
  double group_prototype_weight = 0.5;
  double feature_noise = 0.5;

  // Noise model.
  double target_fp_rate = 0.266;
  double miss_rate = 0.1;
  // Share of false positives injected at random rather than by confusion.
  double random_fp_share = 0.2;
  double clean_class_fraction = 0.3;
  double max_class_noise = 0.9;
  // Preferred per-edge confusion probability when picking confusers.
  double confusion_strength = 0.9;
  std::size_t pilot_samples = 40000;

  // Verification masks: y-positives plus this many random y-negatives.
  std::size_t verify_negatives = 5;

  std::vector<ClassPair> extra_implications;
  std::vector<ClassPair> extra_exclusions;
  std::vector<ConfusionEdge> extra_confusions;

  // Throws ConfigError with the offending field name.
  void validate() const;
};

struct GenerationStats {
  // Noisy annotations (y == 1) over all splits, and how many are false.
  std::uint64_t annotations = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t missed = 0;
  // Noisy annotations over T only; equals the sum of class_frequency().
  std::uint64_t train_annotations = 0;

  double fp_rate() const {
    return annotations == 0
               ? 0.0
               : static_cast<double>(false_positives) / annotations;
  }
  bool operator==(const GenerationStats&) const = default;
};

struct DatasetSplit {
  Vocabulary vocabulary;
  std::size_t feature_dim = 0;
  std::vector<Sample> train;     // T: noisy labels only
  std::vector<Sample> verified;  // V: noisy + verified labels
  std::vector<Sample> eval;      // E: held out, verified
  // Per-class quality planted by the generator; empty for external data.
  std::vector<double> planted_quality;
  GenerationStats stats;

  std::size_t num_classes() const { return vocabulary.size(); }
  // Throws ConfigError on dimension mismatches, split tags, or id reuse.
  void validate() const;
  bool operator==(const DatasetSplit&) const = default;
};

// Everything the generator derives from (config, seed) before drawing
// samples: class structure, prototypes, and the calibrated noise plan.
struct SyntheticWorld {
  Vocabulary vocabulary;
  std::vector<double> base_rate;
  // prototypes[c][m] is a feature_dim vector.
  std::vector<std::vector<std::vector<double>>> prototypes;
  std::vector<std::vector<double>> mode_weights;
  NoiseSpec noise;
  std::vector<double> planted_quality;

  // Derived lookups used while sampling.
  std::vector<std::size_t> group_of;
  // Classes ordered so that every implication child precedes its parents.
  std::vector<std::size_t> implication_order;
  std::vector<std::vector<std::size_t>> parents;
  // Transitive closure: classes whose presence implies class c.
  std::vector<std::vector<std::size_t>> implied_by;
  std::vector<std::vector<std::size_t>> confusions_from;
};

SyntheticWorld build_world(const DatasetConfig& config, std::uint64_t seed);

// Draws one sample. Content depends only on (world, config, seed, id, split).
Sample draw_sample(const SyntheticWorld& world, const DatasetConfig& config,
                   std::uint64_t seed, std::uint64_t id, Split split,
                   GenerationStats* stats = nullptr);

DatasetSplit generate_dataset(const DatasetConfig& config, std::uint64_t seed);

struct ClassQuality {
  // quality[c] = P(truly present | annotated); NaN when undefined.
  std::vector<double> quality;
  std::vector<bool> defined;
  std::vector<std::uint64_t> annotated;
};

// Measured over every sample carrying verification (V and E). Masks cover
// all y-positives, so each annotation's correctness is known.
ClassQuality annotation_quality(const DatasetSplit& split);
ClassQuality annotation_quality(const std::vector<Sample>& samples,
                                std::size_t num_classes);

// Noisy annotation counts per class over T.
std::vector<std::uint64_t> class_frequency(const DatasetSplit& split);

}  // namespace nlab

#endif  // NLAB_DATASET_HPP_
