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
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "nlab/errors.hpp"
#include "nlab/metrics.hpp"
#include "oracles.hpp"

using namespace nlab;

namespace {

struct Instance {
  RankedPredictions p;
  Vocabulary vocab;
};

// Random predictions; `ties` draws scores from a handful of values.
Instance random_instance(std::uint64_t seed, std::size_t n, std::size_t d, bool ties = false) {
  Rng rng(seed, 55, 0);
  Instance out;
  out.p.num_samples = n;
  out.p.num_classes = d;
  for (std::size_t i = 0; i < n; ++i) out.p.ids.push_back(1000 - 3 * i);  // not sorted on purpose
  for (std::size_t j = 0; j < n * d; ++j) {
    out.p.scores.push_back(ties ? 0.1 * (1 + rng.index(5)) : rng.uniform(0.01, 0.99));
    out.p.mask.push_back(rng.bernoulli(0.7) ? 1 : 0);
    out.p.truth.push_back(out.p.mask.back() && rng.bernoulli(0.4) ? 1 : 0);
  }
  for (std::size_t c = 0; c < d; ++c) out.vocab.names.push_back("k" + std::to_string(c));
  return out;
}

std::vector<oracle::Item> class_items(const RankedPredictions& p, std::size_t c) {
  std::vector<oracle::Item> items;
  for (std::size_t i = 0; i < p.num_samples; ++i) {
    const std::size_t at = i * p.num_classes + c;
    if (p.mask[at]) items.push_back({p.scores[at], p.ids[i], 0, p.truth[at] != 0});
  }
  return items;
}

std::vector<oracle::Item> pooled_items(const RankedPredictions& p) {
  std::vector<oracle::Item> items;
  for (std::size_t i = 0; i < p.num_samples; ++i)
    for (std::size_t c = 0; c < p.num_classes; ++c) {
      const std::size_t at = i * p.num_classes + c;
      if (p.mask[at]) items.push_back({p.scores[at], p.ids[i], c, p.truth[at] != 0});
    }
  return items;
}

// Precision and recall at every distinct threshold, by counting.
std::vector<PrPoint> sweep_oracle(const RankedPredictions& p) {
  const auto items = pooled_items(p);
  std::set<double, std::greater<>> thresholds;
  std::size_t positives = 0;
  for (const auto& it : items) {
    thresholds.insert(it.score);
    positives += it.positive;
  }
  std::vector<PrPoint> out;
  for (double t : thresholds) {
    std::size_t above = 0, tp = 0;
    for (const auto& it : items) {
      if (it.score < t) continue;
      ++above;
      tp += it.positive;
    }
    out.push_back({t, double(tp) / positives, double(tp) / above});
  }
  return out;
}

MetricsReport report_with(std::vector<std::optional<double>> ap) {
  MetricsReport r;
  for (std::size_t c = 0; c < ap.size(); ++c) r.class_names.push_back("k" + std::to_string(c));
  r.ap = std::move(ap);
  return r;
}

std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("average_precision examples") {
  const std::vector<double> s1{0.9, 0.8, 0.7};
  CHECK(*average_precision(s1, bits({1, 1, 0})) == 1.0);
  const std::vector<double> s2{0.9, 0.8};
  CHECK(*average_precision(s2, bits({0, 1})) == 0.5);
  CHECK_FALSE(average_precision(s2, bits({0, 0})).has_value());
  CHECK_THROWS_AS(average_precision(s2, bits({0, 1, 1})), ConfigError);
}

TEST_CASE("average_precision ties break by ascending id") {
  const std::vector<double> s{0.5, 0.5};
  const std::vector<std::uint64_t> ids{2, 1};
  // The negative has the smaller id, so it ranks first.
  CHECK(*average_precision(s, bits({1, 0}), ids) == 0.5);
  const std::vector<std::uint64_t> swapped{1, 2};
  CHECK(*average_precision(s, bits({1, 0}), swapped) == 1.0);
}

TEST_CASE("average_precision matches the pairwise oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    const bool ties = trial % 3 == 0;
    std::vector<double> scores;
    std::vector<std::uint8_t> truths;
    std::vector<std::uint64_t> ids;
    std::vector<oracle::Item> items;
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back(ties ? 0.25 * rng.index(4) : rng.uniform(0, 1));
      truths.push_back(rng.bernoulli(0.4));
      ids.push_back(rng.index(1000000));
      items.push_back({scores.back(), ids.back(), i, truths.back() != 0});
    }
    // Duplicate ids fall back to input order, which the oracle's minor key encodes.
    const auto want = oracle::brute_force_ap(items);
    const auto got = average_precision(scores, truths, ids);
    REQUIRE(want.has_value() == got.has_value());
    if (want) CHECK(std::fabs(*want - *got) <= 1e-12);
  }
}

TEST_CASE("average_precision analytic rankings") {
  for (std::size_t n = 1; n <= 12; ++n)
    for (std::size_t p = 1; p <= n; ++p) {
      std::vector<double> scores(n);
      std::vector<std::uint8_t> perfect(n), reversed(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = 1.0 - 0.01 * i;
        perfect[i] = i < p;
        reversed[i] = i >= n - p;
      }
      CHECK(*average_precision(scores, perfect) == 1.0);
      CHECK(*average_precision(scores, reversed) == doctest::Approx(oracle::reversed_ranking_ap(n, p)).epsilon(1e-14));
    }
}

TEST_CASE("mean_average_precision") {
  std::vector<std::optional<double>> two{1.0, 0.5};
  CHECK(mean_average_precision(two) == 0.75);
  std::vector<std::optional<double>> one{std::nullopt, 0.3, std::nullopt};
  CHECK(mean_average_precision(one) == 0.3);
  std::vector<std::optional<double>> none{std::nullopt, std::nullopt};
  CHECK_THROWS_AS(mean_average_precision(none), UsageError);

  Rng rng(3);
  std::vector<std::optional<double>> ten;
  long double sum = 0.0L;
  int defined = 0;
  for (int c = 0; c < 10; ++c) {
    if (c % 4 == 1) {
      ten.push_back(std::nullopt);
      continue;
    }
    ten.push_back(rng.uniform(0, 1));
    sum += *ten.back();
    ++defined;
  }
  CHECK(mean_average_precision(ten) == doctest::Approx(double(sum / defined)).epsilon(1e-14));
}

TEST_CASE("per-class AP and AP_all match the oracles") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const Instance inst = random_instance(seed, 15, 4, seed % 2 == 0);
    const auto ap = per_class_ap(inst.p);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto want = oracle::brute_force_ap(class_items(inst.p, c));
      REQUIRE(want.has_value() == ap[c].has_value());
      if (want) CHECK(std::fabs(*want - *ap[c]) <= 1e-12);
    }
    const auto pooled = oracle::brute_force_ap(pooled_items(inst.p));
    const auto got = ap_all(inst.p);
    REQUIRE(pooled.has_value() == got.has_value());
    if (pooled) CHECK(std::fabs(*pooled - *got) <= 1e-12);
  }
}

TEST_CASE("AP_all special cases") {
  Instance inst = random_instance(4, 12, 1);
  CHECK(*ap_all(inst.p) == *per_class_ap(inst.p)[0]);

  inst = random_instance(5, 12, 3);
  for (std::size_t j = 0; j < inst.p.truth.size(); ++j) inst.p.truth[j] = inst.p.mask[j];
  CHECK(*ap_all(inst.p) == 1.0);
}

TEST_CASE("unverified pairs never influence the metrics") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Instance inst = random_instance(seed, 20, 5);
    const MetricsReport before = make_report(inst.p, inst.vocab, 1000);
    RankedPredictions changed = inst.p;
    Rng rng(seed, 8, 8);
    for (std::size_t j = 0; j < changed.scores.size(); ++j) {
      if (changed.mask[j]) continue;
      changed.scores[j] = rng.uniform(0, 1);
      changed.truth[j] = rng.bernoulli(0.5);
    }
    const MetricsReport after = make_report(changed, inst.vocab, 1000);
    CHECK(after.ap == before.ap);
    CHECK(after.map == before.map);
    CHECK(after.ap_all == before.ap_all);
    CHECK(after.pr == before.pr);
  }
}

TEST_CASE("strictly increasing transforms leave rankings alone") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Instance inst = random_instance(seed, 20, 4, seed % 2 == 1);
    const MetricsReport before = make_report(inst.p, inst.vocab, 1000);
    RankedPredictions warped = inst.p;
    for (double& s : warped.scores) s = std::pow(s, 3.0) * 0.5 + 0.1;
    const MetricsReport after = make_report(warped, inst.vocab, 1000);
    CHECK(after.ap == before.ap);
    CHECK(after.map == before.map);
    CHECK(after.ap_all == before.ap_all);
    REQUIRE(after.pr.size() == before.pr.size());
    for (std::size_t k = 0; k < after.pr.size(); ++k) {
      CHECK(after.pr[k].recall == before.pr[k].recall);
      CHECK(after.pr[k].precision == before.pr[k].precision);
    }
  }
}

TEST_CASE("pr_curve") {
  SUBCASE("matches the threshold sweep") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const Instance inst = random_instance(seed, 25, 3, seed % 3 == 0);
      const auto curve = pr_curve(inst.p, 10000);
      const auto want = sweep_oracle(inst.p);
      REQUIRE(curve.size() == want.size());
      for (std::size_t k = 0; k < curve.size(); ++k) {
        CHECK(curve[k].threshold == want[k].threshold);
        CHECK(curve[k].recall == doctest::Approx(want[k].recall).epsilon(1e-15));
        CHECK(curve[k].precision == doctest::Approx(want[k].precision).epsilon(1e-15));
        if (k > 0) CHECK(curve[k].recall >= curve[k - 1].recall);
      }
    }
  }
  SUBCASE("thinning keeps both ends and stays ordered") {
    const Instance inst = random_instance(9, 200, 5);
    const auto full = pr_curve(inst.p, 100000);
    REQUIRE(full.size() > 50);
    const auto thin = pr_curve(inst.p, 50);
    REQUIRE(thin.size() == 50);
    CHECK(thin.front() == full.front());
    CHECK(thin.back() == full.back());
    CHECK(thin.back().recall == 1.0);
    for (std::size_t k = 1; k < thin.size(); ++k) CHECK(thin[k].threshold < thin[k - 1].threshold);
    CHECK_THROWS_AS(pr_curve(inst.p, 0), ConfigError);
  }
  SUBCASE("perfect classifier stays at precision one until full recall") {
    Instance inst = random_instance(10, 30, 3);
    for (std::size_t j = 0; j < inst.p.scores.size(); ++j) {
      inst.p.scores[j] = inst.p.truth[j] ? 0.6 + 0.001 * (j % 97) : 0.4 - 0.001 * (j % 97);
    }
    const auto curve = pr_curve(inst.p, 10000);
    bool reached = false;
    for (const PrPoint& pt : curve) {
      if (reached) break;
      CHECK(pt.precision == 1.0);
      reached = pt.recall == 1.0;
    }
    CHECK(reached);
  }
  SUBCASE("constant scores give one point") {
    Instance inst = random_instance(11, 30, 3);
    std::fill(inst.p.scores.begin(), inst.p.scores.end(), 0.3);
    std::size_t verified = 0, positive = 0;
    for (std::size_t j = 0; j < inst.p.mask.size(); ++j) {
      verified += inst.p.mask[j];
      positive += inst.p.truth[j];
    }
    const auto curve = pr_curve(inst.p, 200);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].recall == 1.0);
    CHECK(curve[0].precision == doctest::Approx(double(positive) / verified).epsilon(1e-15));
  }
}

TEST_CASE("predictions from samples follow the verification mask") {
  std::vector<Sample> samples(2);
  samples[0].id = 4;
  samples[0].y = {1, 0};
  samples[0].v = {1, 0};
  samples[0].mask = {1, 0};
  samples[1].id = 5;
  samples[1].y = {0, 1};
  const Tensor scores = Tensor::matrix(2, 2, {0.9, 0.2, 0.3, 0.8});
  const RankedPredictions p = RankedPredictions::from_samples(samples, scores);
  CHECK(p.ids == std::vector<std::uint64_t>{4, 5});
  CHECK(p.mask == bits({1, 0, 0, 0}));
  CHECK(p.truth == bits({1, 0, 0, 0}));
  CHECK_THROWS_AS(RankedPredictions::from_samples(samples, Tensor({3, 2})), ConfigError);
  RankedPredictions broken = p;
  broken.scores[0] = std::nan("");
  CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("report counts undefined classes") {
  Instance inst = random_instance(12, 10, 3);
  for (std::size_t i = 0; i < 10; ++i) inst.p.truth[i * 3 + 1] = 0;
  const MetricsReport r = make_report(inst.p, inst.vocab);
  CHECK_FALSE(r.ap[1].has_value());
  CHECK(r.undefined_classes == 1);
  CHECK(r.map == doctest::Approx((*r.ap[0] + *r.ap[2]) / 2).epsilon(1e-15));
  Vocabulary wrong{{"a", "b"}, {}};
  CHECK_THROWS_AS(make_report(inst.p, wrong), ConfigError);
}

TEST_CASE("decile breakdown") {
  SUBCASE("against itself") {
    const MetricsReport r = report_with({0.1, 0.5, 0.3, std::nullopt, 0.9, 0.2, 0.4, 0.8, 0.6, 0.7, 0.05, 0.15});
    const std::vector<double> key{5, 3, 1, 2, 8, 0, 4, 9, 7, 6, 11, 10};
    for (const DecileGroup& g : decile_breakdown(r, r, key)) {
      if (g.delta) CHECK(*g.delta == 0.0);
    }
  }
  SUBCASE("ten classes give one class per group") {
    const MetricsReport a = report_with({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
    const MetricsReport b = report_with({0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    const std::vector<double> key{9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
    const auto groups = decile_breakdown(a, b, key);
    REQUIRE(groups.size() == 10);
    for (std::size_t g = 0; g < 10; ++g) {
      REQUIRE(groups[g].classes.size() == 1);
      CHECK(groups[g].classes[0] == 9 - g);
      CHECK(*groups[g].delta == doctest::Approx(1.0 - 0.1 * g));
    }
  }
  SUBCASE("recomputed by hand from per-class values") {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t d = 10 + rng.index(40);
      std::vector<std::optional<double>> x, y;
      std::vector<double> key;
      for (std::size_t c = 0; c < d; ++c) {
        x.push_back(rng.bernoulli(0.1) ? std::nullopt : std::optional<double>(rng.uniform(0, 1)));
        y.push_back(rng.bernoulli(0.1) ? std::nullopt : std::optional<double>(rng.uniform(0, 1)));
        key.push_back(double(rng.index(d / 2)));  // plenty of ties
      }
      const auto groups = decile_breakdown(report_with(x), report_with(y), key);
      std::vector<std::pair<double, std::size_t>> order;
      for (std::size_t c = 0; c < d; ++c) order.push_back({key[c], c});
      std::sort(order.begin(), order.end());
      std::size_t at = 0;
      for (std::size_t g = 0; g < 10; ++g) {
        const std::size_t size = (d + 9 - g) / 10;
        long double sx = 0, sy = 0;
        int n = 0;
        REQUIRE(groups[g].classes.size() == size);
        for (std::size_t i = at; i < at + size; ++i) {
          const std::size_t c = order[i].second;
          CHECK(groups[g].classes[i - at] == c);
          if (!x[c] || !y[c]) continue;
          sx += *x[c];
          sy += *y[c];
          ++n;
        }
        at += size;
        REQUIRE(groups[g].delta.has_value() == (n > 0));
        if (n > 0) CHECK(*groups[g].delta == doctest::Approx(double((sx - sy) / n)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("vocabulary mismatch") {
    MetricsReport a = report_with({0.1, 0.2}), b = report_with({0.1, 0.2});
    b.class_names[1] = "other";
    const std::vector<double> key{0, 1};
    CHECK_THROWS_AS(decile_breakdown(a, b, key, 2), ConfigError);
    CHECK_THROWS_AS(decile_breakdown(a, a, std::vector<double>{0}, 2), ConfigError);
    CHECK_THROWS_AS(decile_breakdown(a, a, key, 3), ConfigError);
  }
  SUBCASE("band gain is inclusive") {
    const MetricsReport a = report_with({0.5, 0.6, 0.9, 0.4});
    const MetricsReport b = report_with({0.4, 0.4, 0.3, 0.4});
    const std::vector<double> key{0.2, 0.8, 0.96, 0.5};
    CHECK(*band_gain(a, b, key, 0.2, 0.8) == doctest::Approx((0.1 + 0.2 + 0.0) / 3));
    CHECK(*band_gain(a, b, key, 0.95, 1.0) == doctest::Approx(0.6));
    CHECK_FALSE(band_gain(a, b, key, 0.81, 0.9).has_value());
  }
}

TEST_CASE("report writers") {
  const auto dir = std::filesystem::temp_directory_path() / "nlab_test_reports";
  std::filesystem::create_directories(dir);
  auto read_all = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  MetricsReport r = report_with({0.5, std::nullopt});
  const std::vector<std::uint64_t> freq{10, 0};
  const std::vector<double> quality{0.75, std::nan("")};
  const std::vector<int> groups{0, 1};
  write_per_class_csv(r, freq, quality, groups, (dir / "per_class.csv").string());
  CHECK(read_all(dir / "per_class.csv") == "class,AP,frequency,quality,group\nk0,0.5,10,0.75,0\nk1,nan,0,nan,1\n");

  write_summary_csv({{"baseline", 0.25, 0.5}}, (dir / "summary.csv").string());
  CHECK(read_all(dir / "summary.csv") == "variant,MAP,AP_all\nbaseline,0.25,0.5\n");

  write_pr_tsv({{0.9, 0.5, 1.0}}, (dir / "pr.tsv").string());
  CHECK(read_all(dir / "pr.tsv") == "threshold\trecall\tprecision\n0.90000000000000002\t0.5\t1\n");
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(write_summary_csv({}, "/nonexistent/dir/summary.csv"), RuntimeFailure);
}
