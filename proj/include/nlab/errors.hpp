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

#ifndef NLAB_ERRORS_HPP_
#define NLAB_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nlab {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes, invalid settings, missing prerequisites.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar root).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values during optimization, I/O failures.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace nlab

#endif  // NLAB_ERRORS_HPP_
