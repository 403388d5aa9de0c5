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

#ifndef NLAB_METRICS_HPP_
#define NLAB_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlab/dataset.hpp"
#include "nlab/tensor.hpp"

namespace nlab {

// Average precision of one ranked list: sort by score descending, ties by
// ascending id, AP = sum_k precision(k) * rel(k) / #positives. `ids`
// defaults to list positions. nullopt when the list has no positive.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truths,
                                        std::span<const std::uint64_t> ids = {});

// Mean over defined entries. Throws UsageError when none is defined.
double mean_average_precision(std::span<const std::optional<double>> aps);

// Scores over (sample, class) with the verification mask and verified
// truth. Only masked pairs take part in any metric.
struct RankedPredictions {
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> ids;
  std::vector<double> scores;        // row-major num_samples x num_classes
  std::vector<std::uint8_t> mask;    // same layout
  std::vector<std::uint8_t> truth;   // meaningful where mask is set

  // From verified samples and a score matrix (rows aligned with samples).
  static RankedPredictions from_samples(std::span<const Sample> samples,
                                        const Tensor& scores);
  // Throws ConfigError on size mismatches or non-finite masked scores.
  void validate() const;
};

std::vector<std::optional<double>> per_class_ap(const RankedPredictions& p);

// Every verified pair pooled into one list; ties by (sample id, class).
// nullopt without any verified positive.
std::optional<double> ap_all(const RankedPredictions& p);

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;

  bool operator==(const PrPoint&) const = default;
};

// One point per distinct score over the pooled verified pairs, in order of
// decreasing threshold. Longer sweeps are thinned to `granularity` evenly
// spaced points that always keep the last one (full recall, precision over
// all verified pairs). Empty without a verified positive.
std::vector<PrPoint> pr_curve(const RankedPredictions& p,
                              std::size_t granularity = 200);

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> ap;
  std::size_t undefined_classes = 0;
  double map = 0.0;
  double ap_all = 0.0;
  std::vector<PrPoint> pr;
};

MetricsReport make_report(const RankedPredictions& p,
                          const Vocabulary& vocabulary,
                          std::size_t granularity = 200);

struct DecileGroup {
  std::vector<std::size_t> classes;
  // Means over classes defined in both reports; nullopt when none is.
  std::optional<double> map;
  std::optional<double> reference_map;
  std::optional<double> delta;
};

// Classes sorted by ascending key (ties by index) and split into `groups`
// equal parts, the remainder going to the leading groups. Throws
// ConfigError when the reports cover different vocabularies.
std::vector<DecileGroup> decile_breakdown(const MetricsReport& report,
                                          const MetricsReport& reference,
                                          std::span<const double> key,
                                          std::size_t groups = 10);

// MAP gain of `report` over `reference` on classes whose key lies in
// [lo, hi]; nullopt when no class in the band is defined in both.
std::optional<double> band_gain(const MetricsReport& report,
                                const MetricsReport& reference,
                                std::span<const double> key, double lo,
                                double hi);

// class,AP,frequency,quality,group
void write_per_class_csv(const MetricsReport& report,
                         std::span<const std::uint64_t> frequency,
                         std::span<const double> quality,
                         std::span<const int> groups, const std::string& path);

struct SummaryRow {
  std::string variant;
  double map = 0.0;
  double ap_all = 0.0;
};

// variant,MAP,AP_all
void write_summary_csv(const std::vector<SummaryRow>& rows,
                       const std::string& path);
// threshold<TAB>recall<TAB>precision
void write_pr_tsv(const std::vector<PrPoint>& curve, const std::string& path);

}  // namespace nlab

#endif  // NLAB_METRICS_HPP_
