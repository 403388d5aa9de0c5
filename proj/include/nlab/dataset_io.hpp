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

#ifndef NLAB_DATASET_IO_HPP_
#define NLAB_DATASET_IO_HPP_

#include <iosfwd>
#include <string>

#include "nlab/dataset.hpp"

namespace nlab {

// JSON Lines, UTF-8, LF endings. The first line is a header
//
//   {"format": "nlab-dataset", "version": 1, "num_classes": d,
//    "feature_dim": k, "classes": [names], "groups": [ints] (optional),
//    "planted_quality": [numbers] (optional), "stats": {...} (optional)}
//
// followed by one record per sample
//
//   {"id": 17, "split": "T"|"V"|"E", "features": [k numbers],
//    "y": [class indices], "v": [class indices], "mask": [class indices]}
//
// Label fields list the indices of the 1 entries. "v" and "mask" are
// required on V and E records and optional on T records.
inline constexpr const char* kDatasetFormat = "nlab-dataset";
inline constexpr int kDatasetVersion = 1;

void save_dataset(const DatasetSplit& split, const std::string& path);
void write_dataset(const DatasetSplit& split, std::ostream& os);

// Throws ParseError with the 1-based line number for malformed content or
// an unsupported version, ConfigError when the file cannot be opened.
DatasetSplit load_dataset(const std::string& path);
DatasetSplit read_dataset(std::istream& is);

}  // namespace nlab

#endif  // NLAB_DATASET_IO_HPP_
