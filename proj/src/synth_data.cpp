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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include "nlab/dataset.hpp"
#include "nlab/errors.hpp"
#include "nlab/random.hpp"

namespace nlab {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("dataset." + field + ": " + what);
}

bool is_rate(double r) { return r >= 0.0 && r <= 1.0; }

// reach[a][b]: a implies b (transitively, reflexive).
std::vector<std::vector<bool>> implication_closure(
    std::size_t d, const std::vector<ClassPair>& implications) {
  std::vector<std::vector<std::size_t>> parents(d);
  for (auto [child, parent] : implications) parents[child].push_back(parent);
  std::vector<std::vector<bool>> reach(d, std::vector<bool>(d, false));
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<std::size_t> stack{c};
    reach[c][c] = true;
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      for (std::size_t p : parents[x]) {
        if (!reach[c][p]) {
          reach[c][p] = true;
          stack.push_back(p);
        }
      }
    }
  }
  return reach;
}

// Children-before-parents order; throws on cycles.
std::vector<std::size_t> implication_order(
    std::size_t d, const std::vector<ClassPair>& implications) {
  std::vector<std::size_t> pending_children(d, 0);
  std::vector<std::vector<std::size_t>> parents(d);
  for (auto [child, parent] : implications) {
    parents[child].push_back(parent);
    ++pending_children[parent];
  }
  std::vector<std::size_t> order;
  std::vector<std::size_t> ready;
  for (std::size_t c = d; c-- > 0;) {
    if (pending_children[c] == 0) ready.push_back(c);
  }
  while (!ready.empty()) {
    const std::size_t c = ready.back();
    ready.pop_back();
    order.push_back(c);
    for (std::size_t p : parents[c]) {
      if (--pending_children[p] == 0) ready.push_back(p);
    }
  }
  if (order.size() != d) {
    throw ConfigError("noise.implications: implication graph has a cycle");
  }
  return order;
}

std::string class_name(std::size_t c, std::size_t d) {
  const int width = static_cast<int>(std::to_string(d - 1).size());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "class_%0*zu", width, c);
  return buf;
}

struct Truth {
  LabelVector present;
  std::vector<std::size_t> mode;
};

void draw_truth(const SyntheticWorld& world, const DatasetConfig& config,
                Rng& rng, Truth& truth) {
  const std::size_t d = world.vocabulary.size();
  const std::size_t groups = config.num_groups;
  const std::size_t scene = rng.index(groups);
  const double boost = groups > 1 ? config.group_affinity : 1.0;
  const double damp = groups > 1 ? (groups - boost) / (groups - 1.0) : 1.0;

  truth.present.assign(d, 0);
  truth.mode.assign(d, 0);
  for (std::size_t c = 0; c < d; ++c) {
    const double m = world.group_of[c] == scene ? boost : damp;
    const double p = std::min(0.95, world.base_rate[c] * m);
    truth.present[c] = rng.uniform() < p ? 1 : 0;
  }
  for (std::size_t c : world.implication_order) {
    if (!truth.present[c]) continue;
    for (std::size_t p : world.parents[c]) truth.present[p] = 1;
  }
  for (auto [a, b] : world.noise.exclusions) {
    if (!truth.present[a] || !truth.present[b]) continue;
    const std::size_t drop = std::max(a, b);
    truth.present[drop] = 0;
    for (std::size_t x : world.implied_by[drop]) truth.present[x] = 0;
  }
  for (std::size_t c = 0; c < d; ++c) {
    const auto& w = world.mode_weights[c];
    const double u = rng.uniform();
    if (!truth.present[c]) continue;
    double acc = 0.0;
    std::size_t m = 0;
    for (; m + 1 < w.size(); ++m) {
      acc += w[m];
      if (u < acc) break;
    }
    truth.mode[c] = m;
  }
}

void finalize_lookups(SyntheticWorld& world, std::size_t d) {
  const NoiseSpec& noise = world.noise;
  world.implication_order = implication_order(d, noise.implications);
  world.parents.assign(d, {});
  for (auto [child, parent] : noise.implications) {
    world.parents[child].push_back(parent);
  }
  const auto reach = implication_closure(d, noise.implications);
  world.implied_by.assign(d, {});
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      if (a != b && reach[a][b]) world.implied_by[b].push_back(a);
    }
  }
  world.confusions_from.assign(d, {});
  for (std::size_t i = 0; i < noise.confusions.size(); ++i) {
    world.confusions_from[noise.confusions[i].source].push_back(i);
  }
}

// Generates implication and exclusion edges compatible with each other.
void build_structure(const DatasetConfig& config, Rng& rng,
                     SyntheticWorld& world) {
  const std::size_t d = config.num_classes;
  NoiseSpec& noise = world.noise;
  const std::size_t first_child = std::max<std::size_t>(1, d / 10);

  std::vector<bool> has_parent(d, false);
  for (std::size_t attempt = 0;
       noise.implications.size() < config.num_implications &&
       attempt < 50 * config.num_implications && first_child < d;
       ++attempt) {
    const std::size_t child = first_child + rng.index(d - first_child);
    if (has_parent[child]) continue;
    std::vector<std::size_t> same_group;
    for (std::size_t p = 0; p < child; ++p) {
      if (world.group_of[p] == world.group_of[child]) same_group.push_back(p);
    }
    const std::size_t parent =
        same_group.empty() ? rng.index(child) : same_group[rng.index(same_group.size())];
    has_parent[child] = true;
    noise.implications.emplace_back(child, parent);
  }
  for (const auto& e : config.extra_implications) noise.implications.push_back(e);

  auto reach = implication_closure(d, noise.implications);
  auto compatible = [&](std::size_t a, std::size_t b) {
    if (a == b || reach[a][b] || reach[b][a]) return false;
    for (std::size_t x = 0; x < d; ++x) {
      if (reach[x][a] && reach[x][b]) return false;
    }
    return true;
  };
  std::set<ClassPair> seen;
  for (std::size_t attempt = 0;
       noise.exclusions.size() < config.num_exclusions &&
       attempt < 50 * config.num_exclusions && first_child < d;
       ++attempt) {
    std::size_t a = first_child + rng.index(d - first_child);
    std::size_t b = first_child + rng.index(d - first_child);
    if (a > b) std::swap(a, b);
    if (world.group_of[a] == world.group_of[b] || !compatible(a, b)) continue;
    if (!seen.insert({a, b}).second) continue;
    noise.exclusions.emplace_back(a, b);
  }
  for (const auto& e : config.extra_exclusions) noise.exclusions.push_back(e);
}

// Calibrates per-class miss, random false-positive and confusion rates so
// that the expected global false-positive rate hits the configured target.
void plan_noise(const DatasetConfig& config, std::uint64_t seed,
                SyntheticWorld& world) {
  const std::size_t d = config.num_classes;
  NoiseSpec& noise = world.noise;
  noise.miss_rate.assign(d, config.miss_rate);
  noise.fp_rate.assign(d, 0.0);
  world.planted_quality.assign(d, 1.0);

  // Pilot draws of the true label process estimate class marginals and
  // (class, mode) supplies for confusion edges.
  const std::size_t modes = config.max_modes;
  const std::size_t pilots = config.pilot_samples;
  std::vector<double> present(d, 0.0);
  std::vector<double> present_mode(d * modes, 0.0);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> pilot(pilots);
  Truth truth;
  for (std::size_t i = 0; i < pilots; ++i) {
    Rng rng = make_rng(seed, Stream::kPilot, i);
    draw_truth(world, config, rng, truth);
    for (std::size_t c = 0; c < d; ++c) {
      if (!truth.present[c]) continue;
      present[c] += 1.0;
      present_mode[c * modes + truth.mode[c]] += 1.0;
      pilot[i].emplace_back(c, truth.mode[c]);
    }
  }
  const double n = std::max<double>(1.0, static_cast<double>(pilots));
  for (double& p : present) p /= n;
  for (double& p : present_mode) p /= n;

  Rng rng = make_rng(seed, Stream::kNoisePlan);
  std::vector<double> propensity(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    const double u = rng.uniform();
    const double z = rng.uniform(0.05, 1.0);
    propensity[c] = u < config.clean_class_fraction ? 0.0 : z;
  }

  std::vector<double> true_pos(d);
  for (std::size_t c = 0; c < d; ++c) true_pos[c] = present[c] * (1.0 - config.miss_rate);
  const double total_tp = std::accumulate(true_pos.begin(), true_pos.end(), 0.0);
  auto noise_level = [&](double lambda, std::size_t c) {
    return std::min(config.max_class_noise, lambda * propensity[c]);
  };
  auto global_rate = [&](double lambda) {
    double fp = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double nc = noise_level(lambda, c);
      fp += true_pos[c] * nc / (1.0 - nc);
    }
    return total_tp + fp > 0.0 ? fp / (total_tp + fp) : 0.0;
  };

  double lambda = 0.0;
  if (config.target_fp_rate > 0.0) {
    double lo = 0.0, hi = 1.0;
    while (global_rate(hi) < config.target_fp_rate) {
      hi *= 2.0;
      if (hi > 1e9) {
        throw ConfigError(
            "dataset.target_fp_rate: unreachable with max_class_noise=" +
            std::to_string(config.max_class_noise));
      }
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (global_rate(mid) < config.target_fp_rate ? lo : hi) = mid;
    }
    lambda = 0.5 * (lo + hi);
  }

  auto reach = implication_closure(d, noise.implications);
  for (std::size_t c = 0; c < d; ++c) {
    const double nc = noise_level(lambda, c);
    world.planted_quality[c] = 1.0 - nc;
    const double fp_mass = true_pos[c] * nc / (1.0 - nc);
    if (fp_mass <= 0.0) continue;
    double random_mass = config.random_fp_share * fp_mass;
    const double structured = fp_mass - random_mass;

    if (structured > 0.0) {
      const double need = structured / config.confusion_strength;
      struct Candidate {
        std::size_t source, mode;
        double supply;
      };
      std::vector<Candidate> candidates;
      for (std::size_t a = 0; a < d; ++a) {
        if (a == c || reach[a][c] || reach[c][a]) continue;
        for (std::size_t m = 0; m < modes; ++m) {
          const double s = present_mode[a * modes + m];
          if (s > 0.0) candidates.push_back({a, m, s});
        }
      }
      std::vector<Candidate> chosen;
      std::vector<Candidate> window;
      for (const auto& cand : candidates) {
        if (cand.supply >= need && cand.supply <= 4.0 * need) window.push_back(cand);
      }
      if (!window.empty()) {
        std::vector<Candidate> same;
        for (const auto& cand : window) {
          if (world.group_of[cand.source] == world.group_of[c]) same.push_back(cand);
        }
        const auto& pool = same.empty() ? window : same;
        chosen.push_back(pool[rng.index(pool.size())]);
      } else {
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& x, const Candidate& y) {
                    if (x.supply != y.supply) return x.supply < y.supply;
                    return x.source * 1000 + x.mode < y.source * 1000 + y.mode;
                  });
        auto it = std::lower_bound(
            candidates.begin(), candidates.end(), need,
            [](const Candidate& x, double v) { return x.supply < v; });
        if (it != candidates.end()) {
          chosen.push_back(*it);
        } else {
          double acc = 0.0;
          for (auto r = candidates.rbegin(); r != candidates.rend() && acc < need; ++r) {
            chosen.push_back(*r);
            acc += r->supply;
          }
        }
      }

      // Exact supply: source present in the mode while target is absent.
      double supply = 0.0;
      for (const auto& pairs : pilot) {
        bool target_present = false;
        for (auto [k, m] : pairs) target_present = target_present || k == c;
        if (target_present) continue;
        for (const auto& cand : chosen) {
          for (auto [k, m] : pairs) {
            if (k == cand.source && m == cand.mode) {
              supply += 1.0;
              break;
            }
          }
        }
      }
      supply /= n;
      double prob = supply > 0.0 ? std::min(1.0, structured / supply) : 0.0;
      random_mass += structured - prob * supply;
      if (prob > 0.0) {
        for (const auto& cand : chosen) {
          noise.confusions.push_back({cand.source, cand.mode, c, prob});
        }
      }
      const double absent_untagged = std::max(1e-9, 1.0 - present[c] - prob * supply);
      noise.fp_rate[c] = std::min(1.0, random_mass / absent_untagged);
    } else {
      noise.fp_rate[c] = std::min(1.0, random_mass / std::max(1e-9, 1.0 - present[c]));
    }
  }
  for (const auto& e : config.extra_confusions) noise.confusions.push_back(e);
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "T";
    case Split::kVerified: return "V";
    case Split::kEval: return "E";
  }
  return "?";
}

std::optional<Split> parse_split(const std::string& name) {
  if (name == "T") return Split::kTrain;
  if (name == "V") return Split::kVerified;
  if (name == "E") return Split::kEval;
  return std::nullopt;
}

void Vocabulary::validate() const {
  if (names.size() < 2) {
    throw ConfigError("vocabulary: need at least 2 classes, got " +
                      std::to_string(names.size()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : names) {
    if (!seen.insert(name).second) {
      throw ConfigError("vocabulary: duplicate class name '" + name + "'");
    }
  }
  if (!groups.empty() && groups.size() != names.size()) {
    throw ConfigError("vocabulary: " + std::to_string(groups.size()) +
                      " group ids for " + std::to_string(names.size()) +
                      " classes");
  }
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& name : names) {
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

void NoiseSpec::validate(std::size_t num_classes, std::size_t max_modes) const {
  const std::size_t d = num_classes;
  auto check_rates = [&](const std::vector<double>& rates, const char* name) {
    if (rates.size() != d) {
      throw ConfigError(std::string("noise.") + name + ": expected " +
                        std::to_string(d) + " entries, got " +
                        std::to_string(rates.size()));
    }
    for (std::size_t c = 0; c < d; ++c) {
      if (!is_rate(rates[c])) {
        throw ConfigError(std::string("noise.") + name + "[" +
                          std::to_string(c) + "]: rate outside [0,1]");
      }
    }
  };
  check_rates(fp_rate, "fp_rate");
  check_rates(miss_rate, "miss_rate");
  for (const auto& e : confusions) {
    if (e.source >= d || e.target >= d || e.source == e.target) {
      throw ConfigError("noise.confusions: invalid edge " +
                        std::to_string(e.source) + " -> " +
                        std::to_string(e.target));
    }
    if (e.mode >= max_modes) {
      throw ConfigError("noise.confusions: mode " + std::to_string(e.mode) +
                        " out of range");
    }
    if (!is_rate(e.probability)) {
      throw ConfigError("noise.confusions: probability outside [0,1]");
    }
  }
  for (auto [a, b] : implications) {
    if (a >= d || b >= d || a == b) {
      throw ConfigError("noise.implications: invalid edge " +
                        std::to_string(a) + " -> " + std::to_string(b));
    }
  }
  implication_order(d, implications);
  const auto reach = implication_closure(d, implications);
  for (auto [a, b] : exclusions) {
    if (a >= d || b >= d || a == b) {
      throw ConfigError("noise.exclusions: invalid pair " + std::to_string(a) +
                        " -- " + std::to_string(b));
    }
    bool conflict = reach[a][b] || reach[b][a];
    for (std::size_t x = 0; x < d && !conflict; ++x) {
      conflict = reach[x][a] && reach[x][b];
    }
    if (conflict) {
      throw ConfigError("noise.exclusions: classes " + std::to_string(a) +
                        " and " + std::to_string(b) +
                        " are linked by implication and cannot be exclusive");
    }
  }
}

void DatasetConfig::validate() const {
  require(num_classes >= 2, "num_classes", "must be >= 2");
  require(feature_dim >= 1, "feature_dim", "must be >= 1");
  require(num_groups >= 1, "num_groups", "must be >= 1");
  require(train_size >= 10 * verified_size, "train_size",
          "must be at least 10x verified_size");
  require(top_rate > 0.0 && top_rate <= 1.0, "top_rate", "must be in (0,1]");
  require(zipf_exponent >= 0.0, "zipf_exponent", "must be >= 0");
  require(group_affinity >= 1.0 &&
              group_affinity <= static_cast<double>(num_groups),
          "group_affinity", "must be in [1, num_groups]");
  require(max_modes >= 1, "max_modes", "must be >= 1");
  require(prototype_scale >= 0.0, "prototype_scale", "must be >= 0");
  require(group_prototype_weight >= 0.0 && group_prototype_weight <= 1.0,
          "group_prototype_weight", "must be in [0,1]");
  require(feature_noise >= 0.0, "feature_noise", "must be >= 0");
  require(target_fp_rate >= 0.0 && target_fp_rate < 1.0, "target_fp_rate",
          "must be in [0,1)");
  require(miss_rate >= 0.0 && miss_rate < 1.0, "miss_rate", "must be in [0,1)");
  require(is_rate(random_fp_share), "random_fp_share", "must be in [0,1]");
  require(is_rate(clean_class_fraction), "clean_class_fraction",
          "must be in [0,1]");
  require(max_class_noise > 0.0 && max_class_noise < 1.0, "max_class_noise",
          "must be in (0,1)");
  require(confusion_strength > 0.0 && confusion_strength <= 1.0,
          "confusion_strength", "must be in (0,1]");
  require(target_fp_rate == 0.0 || pilot_samples > 0, "pilot_samples",
          "must be > 0 when target_fp_rate > 0");
}

void DatasetSplit::validate() const {
  vocabulary.validate();
  const std::size_t d = num_classes();
  std::unordered_set<std::uint64_t> ids;
  auto check = [&](const std::vector<Sample>& samples, Split split) {
    for (const auto& s : samples) {
      const std::string where =
          std::string("sample ") + std::to_string(s.id) + " (" + split_name(split) + ")";
      if (s.split != split) throw ConfigError(where + ": wrong split tag");
      if (!ids.insert(s.id).second) throw ConfigError(where + ": duplicate id");
      if (s.features.size() != feature_dim) {
        throw ConfigError(where + ": expected " + std::to_string(feature_dim) +
                          " features, got " + std::to_string(s.features.size()));
      }
      if (s.y.size() != d) throw ConfigError(where + ": y has wrong length");
      const bool needs_mask = split != Split::kTrain;
      if (needs_mask && (s.v.size() != d || s.mask.size() != d)) {
        throw ConfigError(where + ": missing verified labels or mask");
      }
      if (s.verified()) {
        for (std::size_t c = 0; c < d; ++c) {
          if (s.v[c] && !s.mask[c]) {
            throw ConfigError(where + ": verified label outside mask");
          }
        }
      }
    }
  };
  check(train, Split::kTrain);
  check(verified, Split::kVerified);
  check(eval, Split::kEval);
  if (!planted_quality.empty() && planted_quality.size() != d) {
    throw ConfigError("planted_quality has wrong length");
  }
}

SyntheticWorld build_world(const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.num_classes;
  const std::size_t k = config.feature_dim;
  SyntheticWorld world;
  Rng rng = make_rng(seed, Stream::kVocabulary);

  world.group_of.resize(d);
  world.vocabulary.names.resize(d);
  world.vocabulary.groups.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    world.group_of[c] = rng.index(config.num_groups);
    world.vocabulary.names[c] = class_name(c, d);
    world.vocabulary.groups[c] = static_cast<int>(world.group_of[c]);
  }
  world.base_rate.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    world.base_rate[c] =
        config.top_rate * std::pow(static_cast<double>(c + 1), -config.zipf_exponent);
  }

  const double s = config.prototype_scale;
  const double wg = config.group_prototype_weight;
  const double wi = std::sqrt(1.0 - wg * wg);
  std::vector<std::vector<double>> centers(config.num_groups, std::vector<double>(k));
  for (auto& center : centers) {
    for (double& x : center) x = s * rng.normal();
  }
  world.prototypes.resize(d);
  world.mode_weights.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    const std::size_t count = 1 + rng.index(config.max_modes);
    auto& weights = world.mode_weights[c];
    weights.resize(count);
    for (double& w : weights) w = rng.uniform(0.5, 1.5);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= total;
    world.prototypes[c].resize(count, std::vector<double>(k));
    for (auto& proto : world.prototypes[c]) {
      for (std::size_t j = 0; j < k; ++j) {
        proto[j] = wg * centers[world.group_of[c]][j] + wi * s * rng.normal();
      }
    }
  }

  build_structure(config, rng, world);
  // Structural lookups are needed by the pilot draws inside plan_noise.
  world.noise.fp_rate.assign(d, 0.0);
  world.noise.miss_rate.assign(d, 0.0);
  world.noise.validate(d, config.max_modes);
  finalize_lookups(world, d);
  plan_noise(config, seed, world);
  world.noise.validate(d, config.max_modes);
  finalize_lookups(world, d);
  return world;
}

Sample draw_sample(const SyntheticWorld& world, const DatasetConfig& config,
                   std::uint64_t seed, std::uint64_t id, Split split,
                   GenerationStats* stats) {
  const std::size_t d = world.vocabulary.size();
  const std::size_t k = config.feature_dim;
  Sample sample;
  sample.id = id;
  sample.split = split;

  Truth truth;
  Rng truth_rng = make_rng(seed, Stream::kSampleTruth, id);
  draw_truth(world, config, truth_rng, truth);

  Rng feature_rng = make_rng(seed, Stream::kSampleFeatures, id);
  sample.features.assign(k, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    if (!truth.present[c]) continue;
    const auto& proto = world.prototypes[c][truth.mode[c]];
    for (std::size_t j = 0; j < k; ++j) sample.features[j] += proto[j];
  }
  for (std::size_t j = 0; j < k; ++j) {
    sample.features[j] += config.feature_noise * feature_rng.normal();
  }

  Rng noise_rng = make_rng(seed, Stream::kSampleNoise, id);
  const NoiseSpec& noise = world.noise;
  sample.y.assign(d, 0);
  for (std::size_t c = 0; c < d; ++c) {
    const double u = noise_rng.uniform();
    if (truth.present[c]) sample.y[c] = u < noise.miss_rate[c] ? 0 : 1;
  }
  for (std::size_t a = 0; a < d; ++a) {
    if (!truth.present[a]) continue;
    for (std::size_t e : world.confusions_from[a]) {
      const ConfusionEdge& edge = noise.confusions[e];
      if (edge.mode != truth.mode[a] || truth.present[edge.target]) continue;
      if (noise_rng.uniform() < edge.probability) sample.y[edge.target] = 1;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double u = noise_rng.uniform();
    if (!truth.present[c] && !sample.y[c] && u < noise.fp_rate[c]) sample.y[c] = 1;
  }

  if (split != Split::kTrain) {
    Rng mask_rng = make_rng(seed, Stream::kSampleMask, id);
    sample.mask = sample.y;
    std::vector<std::size_t> negatives;
    for (std::size_t c = 0; c < d; ++c) {
      if (!sample.y[c]) negatives.push_back(c);
    }
    const std::size_t extra = std::min(config.verify_negatives, negatives.size());
    for (std::size_t i = 0; i < extra; ++i) {
      const std::size_t j = i + mask_rng.index(negatives.size() - i);
      std::swap(negatives[i], negatives[j]);
      sample.mask[negatives[i]] = 1;
    }
    sample.v.assign(d, 0);
    for (std::size_t c = 0; c < d; ++c) {
      sample.v[c] = sample.mask[c] && truth.present[c] ? 1 : 0;
    }
  }

  if (stats != nullptr) {
    for (std::size_t c = 0; c < d; ++c) {
      if (sample.y[c]) {
        ++stats->annotations;
        if (!truth.present[c]) ++stats->false_positives;
        if (split == Split::kTrain) ++stats->train_annotations;
      } else if (truth.present[c]) {
        ++stats->missed;
      }
    }
  }
  return sample;
}

DatasetSplit generate_dataset(const DatasetConfig& config, std::uint64_t seed) {
  const SyntheticWorld world = build_world(config, seed);
  DatasetSplit split;
  split.vocabulary = world.vocabulary;
  split.feature_dim = config.feature_dim;
  split.planted_quality = world.planted_quality;

  std::uint64_t id = 0;
  auto fill = [&](std::vector<Sample>& out, std::size_t count, Split tag) {
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i, ++id) {
      out.push_back(draw_sample(world, config, seed, id, tag, &split.stats));
    }
  };
  fill(split.train, config.train_size, Split::kTrain);
  fill(split.verified, config.verified_size, Split::kVerified);
  fill(split.eval, config.eval_size, Split::kEval);
  return split;
}

ClassQuality annotation_quality(const std::vector<Sample>& samples,
                                std::size_t num_classes) {
  const std::size_t d = num_classes;
  ClassQuality q;
  q.annotated.assign(d, 0);
  std::vector<std::uint64_t> correct(d, 0);
  for (const auto& s : samples) {
    if (!s.verified()) continue;
    for (std::size_t c = 0; c < d; ++c) {
      if (!s.y[c]) continue;
      ++q.annotated[c];
      if (s.v[c]) ++correct[c];
    }
  }
  q.quality.assign(d, std::numeric_limits<double>::quiet_NaN());
  q.defined.assign(d, false);
  for (std::size_t c = 0; c < d; ++c) {
    if (q.annotated[c] == 0) continue;
    q.defined[c] = true;
    q.quality[c] = static_cast<double>(correct[c]) / q.annotated[c];
  }
  return q;
}

ClassQuality annotation_quality(const DatasetSplit& split) {
  std::vector<Sample> all;
  all.reserve(split.verified.size() + split.eval.size());
  all.insert(all.end(), split.verified.begin(), split.verified.end());
  all.insert(all.end(), split.eval.begin(), split.eval.end());
  return annotation_quality(all, split.num_classes());
}

std::vector<std::uint64_t> class_frequency(const DatasetSplit& split) {
  std::vector<std::uint64_t> counts(split.num_classes(), 0);
  for (const auto& s : split.train) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += s.y[c];
  }
  return counts;
}

}  // namespace nlab
