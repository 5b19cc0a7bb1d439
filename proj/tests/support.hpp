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

// Conversions between library tensors and testkit arrays, plus the fixture
// classifier shared by the test binaries.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "imagine/backbone.hpp"
#include "imagine/testkit.hpp"

namespace imagine::test {

inline torch::Tensor to_tensor(const testkit::Array4& a, torch::Dtype dtype = torch::kFloat64) {
  auto t = torch::empty({a.shape[0], a.shape[1], a.shape[2], a.shape[3]}, torch::kFloat64);
  std::copy(a.data.begin(), a.data.end(), t.data_ptr<double>());
  return t.to(dtype);
}

inline torch::Tensor to_tensor(std::span<const double> values, at::IntArrayRef shape) {
  auto t = torch::empty(shape, torch::kFloat64);
  std::copy(values.begin(), values.end(), t.data_ptr<double>());
  return t;
}

inline std::vector<double> to_vector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

inline testkit::Array4 to_array(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  testkit::Array4 a(c.size(0), c.size(1), c.size(2), c.size(3));
  std::copy(c.data_ptr<double>(), c.data_ptr<double>() + c.numel(), a.data.begin());
  return a;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

inline ClassifierHandle tiny_classifier() {
  return make_tiny_classifier(testkit::generate_tiny_weights());
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("imagine-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace imagine::test
