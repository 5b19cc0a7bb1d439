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

// Concrete networks behind ClassifierHandle. Parameter names follow the
// torchvision layout so exported checkpoints map one-to-one.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "imagine/backbone.hpp"
#include "imagine/testkit.hpp"

namespace imagine::detail {

class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(std::int64_t in_planes, std::int64_t planes,
                 std::int64_t stride);

  /// Returns the block output and the input of its last normalization.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);

  torch::nn::BatchNorm2d final_norm() const { return bn3; }

  static constexpr std::int64_t kExpansion = 4;

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet-50. Taps: conv1_1 (stem, after rectifier) and conv{s}_{b} for
/// every bottleneck block b of stage s = 2..5.
class ResNet50Impl : public TappedNetworkImpl {
 public:
  explicit ResNet50Impl(std::int64_t classes);

  FeatureBundle run(const torch::Tensor& input, const Request& request) override;
  std::map<std::string, std::pair<torch::Tensor, torch::Tensor>>
  running_statistics() override;

  static LayerSet tap_names();
  static std::map<std::string, std::int64_t> tap_channels();

 private:
  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  std::vector<std::vector<Bottleneck>> stages_;
  torch::nn::Linear fc{nullptr};
};

/// Desk-scale classifier built from testkit::TinyWeights.
class TinyNetImpl : public TappedNetworkImpl {
 public:
  explicit TinyNetImpl(const testkit::TinyArchitecture& architecture);

  void assign(const testkit::TinyWeights& weights);

  FeatureBundle run(const torch::Tensor& input, const Request& request) override;
  std::map<std::string, std::pair<torch::Tensor, torch::Tensor>>
  running_statistics() override;

 private:
  std::vector<torch::nn::Conv2d> blocks_;
  torch::nn::Linear head{nullptr};
  std::vector<torch::Tensor> running_mean_;
  std::vector<torch::Tensor> running_var_;
};

}  // namespace imagine::detail
