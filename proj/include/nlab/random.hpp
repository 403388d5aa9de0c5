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

#ifndef NLAB_RANDOM_HPP_
#define NLAB_RANDOM_HPP_

#include <cstddef>
#include <cstdint>
#include <random>

namespace nlab {

// Seedable 64-bit generator with portable distributions.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The std:: distributions are implementation-defined, so the
// transforms below are spelled out to keep streams identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  // Independent stream for (seed, stream, index); e.g. one per sample id.
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via the Box-Muller transform.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Named stream tags so that different consumers never share a stream.
enum class Stream : std::uint64_t {
  kSampleTruth = 1,
  kSampleNoise = 2,
  kSampleFeatures = 3,
  kSampleMask = 4,
  kVocabulary = 10,
  kNoisePlan = 11,
  kPilot = 12,
  kModelInit = 20,
  kBatches = 30,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(seed, static_cast<std::uint64_t>(stream), index);
}

}  // namespace nlab

#endif  // NLAB_RANDOM_HPP_
