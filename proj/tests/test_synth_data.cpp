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
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nlab/dataset.hpp"
#include "nlab/dataset_io.hpp"
#include "nlab/errors.hpp"
#include "nlab/random.hpp"

using namespace nlab;

namespace {

DatasetConfig small_config() {
  DatasetConfig c;
  c.num_classes = 30;
  c.num_groups = 5;
  c.feature_dim = 12;
  c.train_size = 3000;
  c.verified_size = 200;
  c.eval_size = 400;
  c.num_implications = 6;
  c.num_exclusions = 4;
  c.pilot_samples = 5000;
  return c;
}

DatasetConfig noiseless(DatasetConfig c) {
  c.target_fp_rate = 0.0;
  c.miss_rate = 0.0;
  return c;
}

std::vector<const Sample*> all_samples(const DatasetSplit& d) {
  std::vector<const Sample*> out;
  for (const auto* split : {&d.train, &d.verified, &d.eval})
    for (const Sample& s : *split) out.push_back(&s);
  return out;
}

}  // namespace

TEST_CASE("rng: streams are reproducible and distinct") {
  Rng a(1, 2, 3), b(1, 2, 3), c(1, 2, 4), d(1, 3, 3);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  CHECK(x != d.next_u64());
  Rng r(9);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(std::fabs(sq / n - 1.0) < 0.02);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.index(7)];
  for (int k : counts) CHECK(std::abs(k - 10000) < 400);
}

TEST_CASE("vocabulary: validation and fingerprint") {
  Vocabulary v{{"a", "b"}, {}};
  CHECK_NOTHROW(v.validate());
  CHECK_THROWS_AS((Vocabulary{{"a"}, {}}).validate(), ConfigError);
  CHECK_THROWS_AS((Vocabulary{{"a", "a"}, {}}).validate(), ConfigError);
  CHECK(v.fingerprint() != (Vocabulary{{"a", "c"}, {}}).fingerprint());
}

TEST_CASE("generate: deterministic given config and seed") {
  const DatasetConfig c = small_config();
  const DatasetSplit a = generate_dataset(c, 5);
  const DatasetSplit b = generate_dataset(c, 5);
  CHECK(a == b);
  const DatasetSplit other = generate_dataset(c, 6);
  CHECK_FALSE(a.train == other.train);
}

TEST_CASE("generate: splits disjoint by id with verification where required") {
  const DatasetSplit d = generate_dataset(small_config(), 2);
  CHECK_NOTHROW(d.validate());
  std::vector<std::uint64_t> ids;
  for (const Sample* s : all_samples(d)) ids.push_back(s->id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  for (const Sample& s : d.train) CHECK_FALSE(s.verified());
  for (const auto* split : {&d.verified, &d.eval}) {
    for (const Sample& s : *split) {
      REQUIRE(s.verified());
      for (std::size_t c = 0; c < s.y.size(); ++c) {
        if (s.y[c]) CHECK(s.mask[c] == 1);
        if (s.v[c]) CHECK(s.mask[c] == 1);
      }
    }
  }
  CHECK(d.train.size() >= 10 * d.verified.size());
}

TEST_CASE("generate: noiseless config gives y == v") {
  const DatasetSplit d = generate_dataset(noiseless(small_config()), 3);
  CHECK(d.stats.false_positives == 0);
  CHECK(d.stats.missed == 0);
  CHECK(d.stats.fp_rate() == 0.0);
  for (const auto* split : {&d.verified, &d.eval})
    for (const Sample& s : *split) CHECK(s.y == s.v);
}

TEST_CASE("generate: implication and exclusion edges hold for true labels") {
  DatasetConfig c = noiseless(small_config());
  c.num_implications = 10;
  c.num_exclusions = 8;
  const SyntheticWorld world = build_world(c, 4);
  REQUIRE(!world.noise.implications.empty());
  REQUIRE(!world.noise.exclusions.empty());
  const DatasetSplit d = generate_dataset(c, 4);
  // Without noise the annotations are the true labels.
  for (const Sample* s : all_samples(d)) {
    for (auto [child, parent] : world.noise.implications) {
      if (s->y[child]) CHECK(s->y[parent] == 1);
    }
    for (auto [a, b] : world.noise.exclusions) CHECK_FALSE((s->y[a] && s->y[b]));
  }
}

TEST_CASE("generate: inconsistent noise structure is a configuration error") {
  DatasetConfig c = small_config();
  c.extra_implications = {{3, 4}, {4, 3}};
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);

  c = small_config();
  c.extra_implications = {{3, 4}};
  c.extra_exclusions = {{3, 4}};
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);

  c = small_config();
  c.extra_confusions = {{0, 0, 99, 0.5}};
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);

  c = small_config();
  c.num_classes = 1;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);

  c = small_config();
  c.train_size = 100;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);
}

TEST_CASE("NoiseSpec: rates must lie in [0, 1]") {
  NoiseSpec n;
  n.fp_rate = {0.1, 1.5};
  n.miss_rate = {0.0, 0.0};
  CHECK_THROWS_AS(n.validate(2, 1), ConfigError);
  n.fp_rate = {0.1, 0.5};
  CHECK_NOTHROW(n.validate(2, 1));
  n.confusions = {{0, 0, 1, 1.2}};
  CHECK_THROWS_AS(n.validate(2, 1), ConfigError);
}

TEST_CASE("generate: default config hits the false-positive target") {
  const DatasetSplit d = generate_dataset(DatasetConfig{}, 1);
  CHECK(d.stats.annotations >= 100000);
  CHECK(d.stats.fp_rate() >= 0.256);
  CHECK(d.stats.fp_rate() <= 0.276);

  // Frequency skew by counting: most frequent class vs 90th percentile.
  auto counts = class_frequency(d);
  std::sort(counts.begin(), counts.end(), std::greater<>());
  const std::uint64_t p90 = counts[counts.size() * 9 / 10];
  REQUIRE(p90 > 0);
  CHECK(counts.front() >= 100 * p90);

  // Counts agree with the generator's own tally over T.
  std::uint64_t total = 0;
  for (auto c : class_frequency(d)) total += c;
  CHECK(total == d.stats.train_annotations);

  // Measured quality tracks the planted quality on well-sampled classes.
  const ClassQuality q = annotation_quality(d);
  double diff = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < d.num_classes(); ++c) {
    if (q.annotated[c] < 200) continue;
    diff += std::fabs(q.quality[c] - d.planted_quality[c]);
    ++n;
  }
  REQUIRE(n >= 8);
  MESSAGE("classes ", n, " mean |measured - planted| ", diff / n);
  CHECK(diff / n < 0.05);
}

TEST_CASE("annotation_quality: counting oracle") {
  const std::size_t d = 3;
  auto verified = [&](LabelVector y, LabelVector v) {
    Sample s;
    s.split = Split::kEval;
    s.y = y;
    s.v = v;
    s.mask = y;
    for (std::size_t c = 0; c < d; ++c) s.mask[c] = s.mask[c] || v[c];
    return s;
  };
  SUBCASE("all correct") {
    std::vector<Sample> samples = {verified({1, 1, 0}, {1, 1, 0}), verified({1, 0, 0}, {1, 0, 0})};
    const ClassQuality q = annotation_quality(samples, d);
    CHECK(q.quality[0] == 1.0);
    CHECK(q.quality[1] == 1.0);
    CHECK_FALSE(q.defined[2]);
    CHECK(std::isnan(q.quality[2]));
  }
  SUBCASE("all flipped for one class") {
    std::vector<Sample> samples = {verified({0, 1, 0}, {0, 0, 1}), verified({1, 1, 0}, {1, 0, 0})};
    const ClassQuality q = annotation_quality(samples, d);
    CHECK(q.quality[1] == 0.0);
    CHECK(q.quality[0] == 1.0);
  }
  SUBCASE("planted flip rate 0.3") {
    Rng rng(12);
    std::vector<Sample> samples;
    for (int i = 0; i < 2000; ++i) {
      samples.push_back(verified({1, 0, 0}, {static_cast<std::uint8_t>(rng.bernoulli(0.7)), 0, 0}));
    }
    const ClassQuality q = annotation_quality(samples, d);
    CHECK(q.annotated[0] == 2000);
    CHECK(q.quality[0] >= 0.67);
    CHECK(q.quality[0] <= 0.73);
  }
}

TEST_CASE("class_frequency: counts over T") {
  DatasetSplit d;
  d.vocabulary.names = {"a", "b", "c"};
  CHECK(class_frequency(d) == std::vector<std::uint64_t>{0, 0, 0});
  Sample s;
  s.y = {1, 0, 1};
  d.train.push_back(s);
  CHECK(class_frequency(d) == std::vector<std::uint64_t>{1, 0, 1});
}

TEST_CASE("dataset io: round trip is exact") {
  const DatasetSplit d = generate_dataset(small_config(), 8);
  std::stringstream buffer;
  write_dataset(d, buffer);
  const DatasetSplit back = read_dataset(buffer);
  CHECK(back == d);
  for (std::size_t i = 0; i < d.eval.size(); ++i) {
    for (std::size_t j = 0; j < d.feature_dim; ++j) {
      CHECK(std::bit_cast<std::uint64_t>(back.eval[i].features[j]) ==
            std::bit_cast<std::uint64_t>(d.eval[i].features[j]));
    }
  }
}

TEST_CASE("dataset io: hand-written fixture") {
  const DatasetSplit d = load_dataset(std::string(NLAB_SOURCE_DIR) + "/tests/data/three_samples.jsonl");
  CHECK(d.num_classes() == 4);
  CHECK(d.feature_dim == 2);
  REQUIRE(d.train.size() == 1);
  REQUIRE(d.verified.size() == 1);
  REQUIRE(d.eval.size() == 1);
  CHECK(d.train[0].id == 10);
  CHECK(d.train[0].y == LabelVector{1, 0, 0, 1});
  CHECK_FALSE(d.train[0].verified());
  CHECK(d.verified[0].id == 11);
  CHECK(d.verified[0].features == std::vector<double>{0.5, -1.25});
  CHECK(d.verified[0].y == LabelVector{0, 1, 1, 0});
  CHECK(d.verified[0].v == LabelVector{0, 1, 0, 0});
  CHECK(d.verified[0].mask == LabelVector{1, 1, 1, 0});
  CHECK(d.eval[0].id == 12);
  CHECK(d.eval[0].v == LabelVector{1, 0, 0, 0});
  CHECK(d.vocabulary.names[2] == "bicycle");
}

TEST_CASE("dataset io: malformed records") {
  const std::string header =
      R"({"format":"nlab-dataset","version":1,"num_classes":2,"feature_dim":1,"classes":["a","b"]})";
  auto parse = [](const std::string& text) {
    std::stringstream s(text);
    return read_dataset(s);
  };
  SUBCASE("missing verification mask on a V record names the record and line") {
    try {
      parse(header + "\n" + R"({"id":1,"split":"T","features":[0.1],"y":[0]})" + "\n" +
            R"({"id":7,"split":"V","features":[0.1],"y":[0],"v":[0]})" + "\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      const std::string what = e.what();
      CHECK(what.find("record 7") != std::string::npos);
      CHECK(what.find("mask") != std::string::npos);
    }
  }
  SUBCASE("version mismatch") {
    std::string h = header;
    h.replace(h.find("\"version\":1"), 11, "\"version\":9");
    CHECK_THROWS_WITH_AS(parse(h + "\n"), doctest::Contains("version 9"), ParseError);
  }
  SUBCASE("bad json") {
    try {
      parse(header + "\n{not json\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("class index out of range") {
    CHECK_THROWS_AS(parse(header + "\n" + R"({"id":1,"split":"T","features":[0.1],"y":[2]})" + "\n"),
                    ParseError);
  }
  SUBCASE("wrong feature count") {
    CHECK_THROWS_AS(parse(header + "\n" + R"({"id":1,"split":"T","features":[0.1,2],"y":[]})" + "\n"),
                    ParseError);
  }
  SUBCASE("duplicate ids") {
    CHECK_THROWS_AS(parse(header + "\n" + R"({"id":1,"split":"T","features":[0.1],"y":[]})" + "\n" +
                          R"({"id":1,"split":"T","features":[0.2],"y":[]})" + "\n"),
                    ParseError);
  }
  SUBCASE("unreadable path") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/dataset.jsonl"), ConfigError);
  }
}
