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

#include "imagine/trace.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace imagine {

void Trace::add(std::int64_t iteration, int stage, std::string term, double value) {
  records_.push_back({iteration, stage, std::move(term), value});
}

std::int64_t Trace::iteration_count() const {
  std::set<std::int64_t> seen;
  for (const auto& r : records_) seen.insert(r.iteration);
  return static_cast<std::int64_t>(seen.size());
}

std::vector<double> Trace::series(std::string_view term, std::optional<int> stage) const {
  std::vector<double> out;
  for (const auto& r : records_)
    if (r.term == term && (!stage || r.stage == *stage)) out.push_back(r.value);
  return out;
}

bool Trace::contains(std::string_view term, std::optional<int> stage) const {
  return std::any_of(records_.begin(), records_.end(), [&](const TraceRecord& r) {
    return r.term == term && (!stage || r.stage == *stage);
  });
}

std::vector<std::string> Trace::terms_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& r : records_) {
    if (r.term.starts_with(prefix) &&
        std::find(out.begin(), out.end(), r.term) == out.end())
      out.push_back(r.term);
  }
  return out;
}

std::string Trace::to_csv() const {
  std::string out = "iter,stage,term,value\n";
  for (const auto& r : records_) {
    out += fmt::format("{},{},{},{}\n", r.iteration, r.stage, r.term, r.value);
  }
  return out;
}

void Trace::write_csv(const std::filesystem::path& path) const {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write trace " + path.string());
  file << to_csv();
}

Trace Trace::parse_csv(std::string_view text) {
  Trace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "iter,stage,term,value") {
    throw std::runtime_error("trace header missing");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string::size_type start = 0;
    for (int i = 0; i < 3; ++i) {
      auto comma = line.find(',', start);
      if (comma == std::string::npos) throw std::runtime_error("malformed trace line: " + line);
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    fields.push_back(line.substr(start));
    TraceRecord r;
    r.iteration = std::stoll(fields[0]);
    r.stage = std::stoi(fields[1]);
    r.term = fields[2];
    auto res = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), r.value);
    if (res.ec != std::errc{}) throw std::runtime_error("malformed trace value: " + line);
    trace.records_.push_back(std::move(r));
  }
  return trace;
}

}  // namespace imagine
