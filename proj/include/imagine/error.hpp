// Copyright 2026 The Imagine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace imagine {

/// Ordered list of classifier layer names (a layer set such as the
/// distribution-matching taps).
using LayerSet = std::vector<std::string>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weights could not be resolved, read or matched to the architecture.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Tensor arguments disagree on shape, channel count or value domain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A job or config file is invalid. `key()` names the offending setting.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key.empty() ? message : key + ": " + message),
        key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// The synthesis objective became non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(int stage, std::int64_t iteration, const std::string& message)
      : Error(message), stage_(stage), iteration_(iteration) {}

  int stage() const noexcept { return stage_; }
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  int stage_;
  std::int64_t iteration_;
};

}  // namespace imagine
