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

#include "nlab/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "nlab/errors.hpp"

namespace nlab {

using nlohmann::json;

namespace {

json sparse(const LabelVector& labels) {
  json out = json::array();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c]) out.push_back(c);
  }
  return out;
}

class LineReader {
 public:
  LineReader(const json& object, std::size_t line, std::string where)
      : object_(object), line_(line), where_(std::move(where)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(where_ + ": " + what, line_);
  }

  bool has(const char* key) const { return object_.contains(key); }

  const json& field(const char* key) const {
    auto it = object_.find(key);
    if (it == object_.end()) fail(std::string("missing field \"") + key + "\"");
    return *it;
  }

  std::uint64_t unsigned_field(const char* key) const {
    const json& v = field(key);
    if (!v.is_number_unsigned()) fail(std::string("\"") + key + "\" must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string_field(const char* key) const {
    const json& v = field(key);
    if (!v.is_string()) fail(std::string("\"") + key + "\" must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) const {
    const json& v = field(key);
    if (!v.is_array()) fail(std::string("\"") + key + "\" must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& x : v) {
      if (!x.is_number()) fail(std::string("\"") + key + "\" must hold numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  LabelVector labels(const char* key, std::size_t d) const {
    const json& v = field(key);
    if (!v.is_array()) fail(std::string("\"") + key + "\" must be an array of class indices");
    LabelVector out(d, 0);
    for (const json& x : v) {
      if (!x.is_number_unsigned() || x.get<std::uint64_t>() >= d) {
        fail(std::string("\"") + key + "\" holds an invalid class index " + x.dump());
      }
      out[x.get<std::size_t>()] = 1;
    }
    return out;
  }

 private:
  const json& object_;
  std::size_t line_;
  std::string where_;
};

json parse_line(const std::string& text, std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError("expected a JSON object", line);
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
}

}  // namespace

void write_dataset(const DatasetSplit& split, std::ostream& os) {
  json header = {
      {"format", kDatasetFormat},
      {"version", kDatasetVersion},
      {"num_classes", split.num_classes()},
      {"feature_dim", split.feature_dim},
      {"classes", split.vocabulary.names},
  };
  if (!split.vocabulary.groups.empty()) header["groups"] = split.vocabulary.groups;
  if (!split.planted_quality.empty()) header["planted_quality"] = split.planted_quality;
  header["stats"] = {
      {"annotations", split.stats.annotations},
      {"false_positives", split.stats.false_positives},
      {"missed", split.stats.missed},
      {"train_annotations", split.stats.train_annotations},
  };
  os << header.dump() << '\n';
  for (const auto* samples : {&split.train, &split.verified, &split.eval}) {
    for (const Sample& s : *samples) {
      json record = {
          {"id", s.id},
          {"split", split_name(s.split)},
          {"features", s.features},
          {"y", sparse(s.y)},
      };
      if (s.verified()) {
        record["v"] = sparse(s.v);
        record["mask"] = sparse(s.mask);
      }
      os << record.dump() << '\n';
    }
  }
}

void save_dataset(const DatasetSplit& split, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write dataset: " + path);
  write_dataset(split, os);
  if (!os) throw RuntimeFailure("failed writing dataset: " + path);
}

DatasetSplit read_dataset(std::istream& is) {
  std::string text;
  std::size_t line = 1;
  if (!std::getline(is, text)) throw ParseError("empty dataset file", 0);
  const json header = parse_line(text, line);
  LineReader h(header, line, "header");
  if (h.string_field("format") != kDatasetFormat) {
    h.fail("not a dataset file (format \"" + h.string_field("format") + "\")");
  }
  const std::uint64_t version = h.unsigned_field("version");
  if (version != static_cast<std::uint64_t>(kDatasetVersion)) {
    h.fail("unsupported dataset version " + std::to_string(version) +
           " (expected " + std::to_string(kDatasetVersion) + ")");
  }

  DatasetSplit split;
  const std::size_t d = h.unsigned_field("num_classes");
  split.feature_dim = h.unsigned_field("feature_dim");
  const json& classes = h.field("classes");
  if (!classes.is_array() || classes.size() != d) h.fail("\"classes\" must list num_classes names");
  for (const json& name : classes) {
    if (!name.is_string()) h.fail("class names must be strings");
    split.vocabulary.names.push_back(name.get<std::string>());
  }
  if (h.has("groups")) {
    const json& groups = h.field("groups");
    if (!groups.is_array() || groups.size() != d) h.fail("\"groups\" must hold one id per class");
    for (const json& g : groups) {
      if (!g.is_number_integer()) h.fail("group ids must be integers");
      split.vocabulary.groups.push_back(g.get<int>());
    }
  }
  if (h.has("planted_quality")) {
    split.planted_quality = h.numbers("planted_quality");
    if (split.planted_quality.size() != d) h.fail("\"planted_quality\" must hold one value per class");
  }
  if (h.has("stats")) {
    LineReader st(h.field("stats"), line, "header stats");
    split.stats.annotations = st.unsigned_field("annotations");
    split.stats.false_positives = st.unsigned_field("false_positives");
    split.stats.missed = st.unsigned_field("missed");
    split.stats.train_annotations = st.unsigned_field("train_annotations");
  }
  try {
    split.vocabulary.validate();
  } catch (const ConfigError& e) {
    h.fail(e.what());
  }

  while (std::getline(is, text)) {
    ++line;
    if (text.empty()) continue;
    const json record = parse_line(text, line);
    const std::string id_text =
        record.contains("id") ? record["id"].dump() : std::string("?");
    LineReader r(record, line, "record " + id_text);
    Sample s;
    s.id = r.unsigned_field("id");
    const auto parsed = parse_split(r.string_field("split"));
    if (!parsed) r.fail("unknown split \"" + r.string_field("split") + "\"");
    s.split = *parsed;
    s.features = r.numbers("features");
    if (s.features.size() != split.feature_dim) {
      r.fail("expected " + std::to_string(split.feature_dim) + " features, got " +
             std::to_string(s.features.size()));
    }
    for (double f : s.features) {
      if (!std::isfinite(f)) r.fail("features must be finite");
    }
    s.y = r.labels("y", d);
    const bool needs_verification = s.split != Split::kTrain;
    if (r.has("mask") || needs_verification) {
      if (!r.has("mask")) r.fail("missing verification mask on a " + std::string(split_name(s.split)) + " record");
      if (!r.has("v")) r.fail("missing verified labels \"v\"");
      s.mask = r.labels("mask", d);
      s.v = r.labels("v", d);
      for (std::size_t c = 0; c < d; ++c) {
        if (s.v[c] && !s.mask[c]) r.fail("verified label for class " + std::to_string(c) + " lies outside the mask");
      }
    } else if (r.has("v")) {
      r.fail("\"v\" given without \"mask\"");
    }
    switch (s.split) {
      case Split::kTrain: split.train.push_back(std::move(s)); break;
      case Split::kVerified: split.verified.push_back(std::move(s)); break;
      case Split::kEval: split.eval.push_back(std::move(s)); break;
    }
  }
  try {
    split.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 0);
  }
  return split;
}

DatasetSplit load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open dataset: " + path);
  return read_dataset(is);
}

}  // namespace nlab
