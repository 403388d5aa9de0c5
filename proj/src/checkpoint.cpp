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

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "nlab/errors.hpp"
#include "nlab/model.hpp"

// Layout (all integers little-endian):
//   8 bytes  magic "NLABCKPT"
//   u32      format version
//   u64      vocabulary fingerprint
//   u64 x 6  dims: num_classes feature_dim trunk_hidden embedding
//                  label_embedding cleaner_hidden
//   u32      tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank],
//               float64 payload in row-major order

namespace nlab {

namespace {

constexpr char kMagic[8] = {'N', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(value) >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ParseError(std::string("checkpoint truncated while reading ") + what, 0);
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  validate_params(params);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, params.vocabulary_fingerprint);
  const ModelDims& d = params.dims;
  for (std::size_t v : {d.num_classes, d.feature_dim, d.trunk_hidden, d.embedding,
                        d.label_embedding, d.cleaner_hidden}) {
    put<std::uint64_t>(os, v);
  }
  std::uint32_t count = 0;
  params.for_each([&](std::string_view, ParamGroup, const Tensor&) { ++count; });
  put<std::uint32_t>(os, count);
  params.for_each([&](std::string_view name, ParamGroup, const Tensor& t) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t dim : t.shape()) put<std::uint64_t>(os, dim);
    for (double v : t.values()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  });
  if (!os) throw RuntimeFailure("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError(path + ": not a checkpoint file", 0);
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw ParseError(path + ": unsupported checkpoint version " +
                         std::to_string(version) + " (expected " +
                         std::to_string(kVersion) + ")",
                     0);
  }
  ModelParams p;
  p.vocabulary_fingerprint = get<std::uint64_t>(is, "fingerprint");
  p.dims.num_classes = get<std::uint64_t>(is, "dims");
  p.dims.feature_dim = get<std::uint64_t>(is, "dims");
  p.dims.trunk_hidden = get<std::uint64_t>(is, "dims");
  p.dims.embedding = get<std::uint64_t>(is, "dims");
  p.dims.label_embedding = get<std::uint64_t>(is, "dims");
  p.dims.cleaner_hidden = get<std::uint64_t>(is, "dims");

  std::map<std::string, Tensor, std::less<>> tensors;
  const auto count = get<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, "name length");
    if (len > 256) throw ParseError(path + ": implausible tensor name length", 0);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ParseError(path + ": truncated name", 0);
    const auto rank = get<std::uint32_t>(is, "rank");
    if (rank > 4) throw ParseError(path + ": implausible rank for " + name, 0);
    Shape shape(rank);
    for (auto& dim : shape) dim = get<std::uint64_t>(is, "shape");
    const std::size_t n = shape_size(shape);
    if (n > (std::size_t{1} << 32)) throw ParseError(path + ": tensor too large", 0);
    std::vector<double> values(n);
    for (double& v : values) v = std::bit_cast<double>(get<std::uint64_t>(is, "payload"));
    tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  p.for_each([&](std::string_view name, ParamGroup, Tensor& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw ParseError(path + ": missing tensor " + std::string(name), 0);
    }
    t = std::move(it->second);
    tensors.erase(it);
  });
  if (!tensors.empty()) {
    throw ParseError(path + ": unexpected tensor " + tensors.begin()->first, 0);
  }
  validate_params(p);
  return p;
}

}  // namespace nlab
