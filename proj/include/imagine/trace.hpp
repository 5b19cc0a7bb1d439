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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace imagine {

struct TraceRecord {
  std::int64_t iteration = 0;
  int stage = 1;
  std::string term;
  double value = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

/// Per-iteration loss records, serialized as "iter,stage,term,value".
class Trace {
 public:
  void add(std::int64_t iteration, int stage, std::string term, double value);

  const std::vector<TraceRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

  /// Number of distinct iterations recorded.
  std::int64_t iteration_count() const;
  /// Values of `term` in iteration order (optionally one stage only).
  std::vector<double> series(std::string_view term,
                             std::optional<int> stage = std::nullopt) const;
  bool contains(std::string_view term, std::optional<int> stage = std::nullopt) const;
  /// Distinct term names that start with `prefix`, in first-seen order.
  std::vector<std::string> terms_with_prefix(std::string_view prefix) const;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static Trace parse_csv(std::string_view text);

  bool operator==(const Trace&) const = default;

 private:
  std::vector<TraceRecord> records_;
};

}  // namespace imagine
