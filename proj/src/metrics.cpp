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

#include "nlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nlab/errors.hpp"

namespace nlab {

namespace {

struct Entry {
  double score;
  std::uint64_t id;
  std::uint64_t sub;
  bool positive;
};

void rank(std::vector<Entry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.id != b.id) return a.id < b.id;
    return a.sub < b.sub;
  });
}

std::optional<double> ranked_ap(std::vector<Entry>& entries) {
  rank(entries);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (!entries[k].positive) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

std::vector<Entry> pooled(const RankedPredictions& p) {
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < p.num_samples; ++i) {
    for (std::size_t c = 0; c < p.num_classes; ++c) {
      const std::size_t at = i * p.num_classes + c;
      if (p.mask[at]) entries.push_back({p.scores[at], p.ids[i], c, p.truth[at] != 0});
    }
  }
  return entries;
}

std::optional<double> mean_over(const std::vector<std::optional<double>>& aps,
                                const std::vector<std::optional<double>>& other,
                                const std::vector<std::size_t>& classes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c : classes) {
    if (aps[c] && other[c]) {
      sum += *aps[c];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

void require_same_vocabulary(const MetricsReport& a, const MetricsReport& b) {
  if (a.class_names != b.class_names || a.ap.size() != b.ap.size()) {
    throw ConfigError("metrics reports cover different vocabularies");
  }
}

std::FILE* open_for_write(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw RuntimeFailure("cannot write " + path);
  return f;
}

void close_written(std::FILE* f, const std::string& path) {
  if (std::fclose(f) != 0) throw RuntimeFailure("failed writing " + path);
}

void put_optional(std::FILE* f, const std::optional<double>& v) {
  if (v) {
    std::fprintf(f, "%.17g", *v);
  } else {
    std::fprintf(f, "nan");
  }
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truths,
                                        std::span<const std::uint64_t> ids) {
  if (scores.size() != truths.size() || (!ids.empty() && ids.size() != scores.size())) {
    throw ConfigError("average_precision: scores, truths and ids differ in length");
  }
  std::vector<Entry> entries(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    entries[i] = {scores[i], ids.empty() ? i : ids[i], 0, truths[i] != 0};
  }
  return ranked_ap(entries);
}

double mean_average_precision(std::span<const std::optional<double>> aps) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& ap : aps) {
    if (!ap) continue;
    sum += *ap;
    ++n;
  }
  if (n == 0) throw UsageError("MAP undefined: no class has a verified positive");
  return sum / static_cast<double>(n);
}

RankedPredictions RankedPredictions::from_samples(std::span<const Sample> samples,
                                                  const Tensor& scores) {
  if (scores.rank() != 2 || scores.rows() != samples.size()) {
    throw ConfigError("score matrix " + shape_string(scores.shape()) +
                      " does not match " + std::to_string(samples.size()) +
                      " samples");
  }
  RankedPredictions p;
  p.num_samples = samples.size();
  p.num_classes = scores.cols();
  const std::size_t d = p.num_classes;
  p.scores.assign(scores.data(), scores.data() + scores.size());
  p.mask.assign(p.num_samples * d, 0);
  p.truth.assign(p.num_samples * d, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    p.ids.push_back(s.id);
    if (!s.verified()) continue;
    if (s.mask.size() != d || s.v.size() != d) {
      throw ConfigError("sample " + std::to_string(s.id) +
                        " has verification for " + std::to_string(s.mask.size()) +
                        " classes, expected " + std::to_string(d));
    }
    std::copy(s.mask.begin(), s.mask.end(), p.mask.begin() + i * d);
    std::copy(s.v.begin(), s.v.end(), p.truth.begin() + i * d);
  }
  p.validate();
  return p;
}

void RankedPredictions::validate() const {
  const std::size_t n = num_samples * num_classes;
  if (ids.size() != num_samples || scores.size() != n || mask.size() != n ||
      truth.size() != n) {
    throw ConfigError("ranked predictions: inconsistent array sizes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] && !std::isfinite(scores[i])) {
      throw ConfigError("ranked predictions: non-finite score for sample " +
                        std::to_string(ids[i / num_classes]) + ", class " +
                        std::to_string(i % num_classes));
    }
  }
}

std::vector<std::optional<double>> per_class_ap(const RankedPredictions& p) {
  p.validate();
  std::vector<std::optional<double>> out(p.num_classes);
  std::vector<Entry> entries;
  for (std::size_t c = 0; c < p.num_classes; ++c) {
    entries.clear();
    for (std::size_t i = 0; i < p.num_samples; ++i) {
      const std::size_t at = i * p.num_classes + c;
      if (p.mask[at]) entries.push_back({p.scores[at], p.ids[i], 0, p.truth[at] != 0});
    }
    out[c] = ranked_ap(entries);
  }
  return out;
}

std::optional<double> ap_all(const RankedPredictions& p) {
  p.validate();
  std::vector<Entry> entries = pooled(p);
  return ranked_ap(entries);
}

std::vector<PrPoint> pr_curve(const RankedPredictions& p, std::size_t granularity) {
  if (granularity == 0) throw ConfigError("pr_curve: granularity must be > 0");
  p.validate();
  std::vector<Entry> entries = pooled(p);
  rank(entries);
  const auto positives = static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [](const Entry& e) { return e.positive; }));
  std::vector<PrPoint> sweep;
  if (positives == 0) return sweep;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    tp += entries[k].positive ? 1 : 0;
    if (k + 1 < entries.size() && entries[k + 1].score == entries[k].score) continue;
    sweep.push_back({entries[k].score,
                     static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(k + 1)});
  }
  if (sweep.size() <= granularity) return sweep;
  std::vector<PrPoint> thinned;
  thinned.reserve(granularity);
  const std::size_t last = sweep.size() - 1;
  for (std::size_t i = 0; i < granularity; ++i) {
    const std::size_t at =
        granularity == 1 ? last : (i * last + (granularity - 1) / 2) / (granularity - 1);
    thinned.push_back(sweep[at]);
  }
  return thinned;
}

MetricsReport make_report(const RankedPredictions& p, const Vocabulary& vocabulary,
                          std::size_t granularity) {
  if (vocabulary.size() != p.num_classes) {
    throw ConfigError("vocabulary has " + std::to_string(vocabulary.size()) +
                      " classes, predictions have " + std::to_string(p.num_classes));
  }
  MetricsReport r;
  r.class_names = vocabulary.names;
  r.ap = per_class_ap(p);
  r.undefined_classes = static_cast<std::size_t>(
      std::count(r.ap.begin(), r.ap.end(), std::nullopt));
  r.map = mean_average_precision(r.ap);
  const auto pooled_ap = ap_all(p);
  r.ap_all = pooled_ap.value_or(0.0);
  r.pr = pr_curve(p, granularity);
  return r;
}

std::vector<DecileGroup> decile_breakdown(const MetricsReport& report,
                                          const MetricsReport& reference,
                                          std::span<const double> key,
                                          std::size_t groups) {
  require_same_vocabulary(report, reference);
  const std::size_t d = report.ap.size();
  if (key.size() != d) {
    throw ConfigError("decile key has " + std::to_string(key.size()) +
                      " entries for " + std::to_string(d) + " classes");
  }
  if (groups == 0 || groups > d) {
    throw ConfigError("decile breakdown needs 1.." + std::to_string(d) + " groups");
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  std::vector<DecileGroup> out(groups);
  const std::size_t base = d / groups;
  const std::size_t extra = d % groups;
  std::size_t at = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    DecileGroup& group = out[g];
    group.classes.assign(order.begin() + at, order.begin() + at + size);
    at += size;
    group.map = mean_over(report.ap, reference.ap, group.classes);
    group.reference_map = mean_over(reference.ap, report.ap, group.classes);
    if (group.map) group.delta = *group.map - *group.reference_map;
  }
  return out;
}

std::optional<double> band_gain(const MetricsReport& report,
                                const MetricsReport& reference,
                                std::span<const double> key, double lo, double hi) {
  require_same_vocabulary(report, reference);
  if (key.size() != report.ap.size()) {
    throw ConfigError("band key does not match the number of classes");
  }
  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < key.size(); ++c) {
    if (key[c] >= lo && key[c] <= hi) classes.push_back(c);
  }
  const auto ours = mean_over(report.ap, reference.ap, classes);
  if (!ours) return std::nullopt;
  return *ours - *mean_over(reference.ap, report.ap, classes);
}

void write_per_class_csv(const MetricsReport& report,
                         std::span<const std::uint64_t> frequency,
                         std::span<const double> quality,
                         std::span<const int> groups, const std::string& path) {
  const std::size_t d = report.ap.size();
  std::FILE* f = open_for_write(path);
  std::fprintf(f, "class,AP,frequency,quality,group\n");
  for (std::size_t c = 0; c < d; ++c) {
    std::fprintf(f, "%s,", report.class_names[c].c_str());
    put_optional(f, report.ap[c]);
    if (c < frequency.size()) {
      std::fprintf(f, ",%llu,", static_cast<unsigned long long>(frequency[c]));
    } else {
      std::fprintf(f, ",,");
    }
    if (c < quality.size() && std::isfinite(quality[c])) {
      std::fprintf(f, "%.17g", quality[c]);
    } else {
      std::fprintf(f, "nan");
    }
    if (c < groups.size()) {
      std::fprintf(f, ",%d\n", groups[c]);
    } else {
      std::fprintf(f, ",\n");
    }
  }
  close_written(f, path);
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
  std::FILE* f = open_for_write(path);
  std::fprintf(f, "variant,MAP,AP_all\n");
  for (const SummaryRow& r : rows) {
    std::fprintf(f, "%s,%.17g,%.17g\n", r.variant.c_str(), r.map, r.ap_all);
  }
  close_written(f, path);
}

void write_pr_tsv(const std::vector<PrPoint>& curve, const std::string& path) {
  std::FILE* f = open_for_write(path);
  std::fprintf(f, "threshold\trecall\tprecision\n");
  for (const PrPoint& p : curve) {
    std::fprintf(f, "%.17g\t%.17g\t%.17g\n", p.threshold, p.recall, p.precision);
  }
  close_written(f, path);
}

}  // namespace nlab
