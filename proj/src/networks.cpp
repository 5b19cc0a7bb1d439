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

#include "networks.hpp"

#include <algorithm>

namespace imagine::detail {

namespace {

bool wants(const TappedNetworkImpl::Request& request, const std::string& name) {
  return request.taps != nullptr &&
         std::find(request.taps->begin(), request.taps->end(), name) !=
             request.taps->end();
}

torch::nn::Conv2dOptions conv_options(std::int64_t in, std::int64_t out,
                                      std::int64_t kernel, std::int64_t stride,
                                      std::int64_t padding) {
  return torch::nn::Conv2dOptions(in, out, kernel)
      .stride(stride)
      .padding(padding)
      .bias(false);
}

constexpr std::array<std::int64_t, 4> kStageBlocks{3, 4, 6, 3};
constexpr std::array<std::int64_t, 4> kStagePlanes{64, 128, 256, 512};

}  // namespace

BottleneckImpl::BottleneckImpl(std::int64_t in_planes, std::int64_t planes,
                               std::int64_t stride) {
  conv1 = register_module("conv1", torch::nn::Conv2d(conv_options(in_planes, planes, 1, 1, 0)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(planes));
  conv2 = register_module("conv2", torch::nn::Conv2d(conv_options(planes, planes, 3, stride, 1)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(planes));
  conv3 = register_module("conv3", torch::nn::Conv2d(conv_options(planes, planes * kExpansion, 1, 1, 0)));
  bn3 = register_module("bn3", torch::nn::BatchNorm2d(planes * kExpansion));
  if (stride != 1 || in_planes != planes * kExpansion) {
    downsample = register_module(
        "downsample",
        torch::nn::Sequential(
            torch::nn::Conv2d(conv_options(in_planes, planes * kExpansion, 1, stride, 0)),
            torch::nn::BatchNorm2d(planes * kExpansion)));
  }
}

std::pair<torch::Tensor, torch::Tensor> BottleneckImpl::forward(
    const torch::Tensor& x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = torch::relu(bn2(conv2(out)));
  auto pre_norm = conv3(out);
  out = bn3(pre_norm);
  auto identity = downsample ? downsample->forward(x) : x;
  return {torch::relu(out + identity), pre_norm};
}

ResNet50Impl::ResNet50Impl(std::int64_t classes) {
  conv1 = register_module("conv1", torch::nn::Conv2d(conv_options(3, 64, 7, 2, 3)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(64));
  std::int64_t in_planes = 64;
  for (std::size_t s = 0; s < kStageBlocks.size(); ++s) {
    torch::nn::ModuleList list;
    std::vector<Bottleneck> blocks;
    for (std::int64_t b = 0; b < kStageBlocks[s]; ++b) {
      const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      Bottleneck block(in_planes, kStagePlanes[s], stride);
      in_planes = kStagePlanes[s] * BottleneckImpl::kExpansion;
      list->push_back(block);
      blocks.push_back(block);
    }
    register_module("layer" + std::to_string(s + 1), list);
    stages_.push_back(std::move(blocks));
  }
  fc = register_module("fc", torch::nn::Linear(in_planes, classes));
}

LayerSet ResNet50Impl::tap_names() {
  LayerSet names{"conv1_1"};
  for (std::size_t s = 0; s < kStageBlocks.size(); ++s)
    for (std::int64_t b = 0; b < kStageBlocks[s]; ++b)
      names.push_back("conv" + std::to_string(s + 2) + "_" + std::to_string(b + 1));
  return names;
}

std::map<std::string, std::int64_t> ResNet50Impl::tap_channels() {
  std::map<std::string, std::int64_t> channels{{"conv1_1", 64}};
  for (std::size_t s = 0; s < kStageBlocks.size(); ++s)
    for (std::int64_t b = 0; b < kStageBlocks[s]; ++b)
      channels["conv" + std::to_string(s + 2) + "_" + std::to_string(b + 1)] =
          kStagePlanes[s] * BottleneckImpl::kExpansion;
  return channels;
}

FeatureBundle ResNet50Impl::run(const torch::Tensor& input,
                                const Request& request) {
  FeatureBundle bundle;
  auto pre = conv1(input);
  auto x = torch::relu(bn1(pre));
  if (wants(request, "conv1_1")) {
    bundle.activations["conv1_1"] = x;
    if (request.norm_inputs) bundle.norm_inputs["conv1_1"] = pre;
  }
  x = torch::max_pool2d(x, 3, 2, 1);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      auto [out, pre_norm] = stages_[s][b]->forward(x);
      x = out;
      const auto name = "conv" + std::to_string(s + 2) + "_" + std::to_string(b + 1);
      if (wants(request, name)) {
        bundle.activations[name] = x;
        if (request.norm_inputs) bundle.norm_inputs[name] = pre_norm;
      }
    }
  }
  bundle.logits = fc(torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1));
  return bundle;
}

std::map<std::string, std::pair<torch::Tensor, torch::Tensor>>
ResNet50Impl::running_statistics() {
  std::map<std::string, std::pair<torch::Tensor, torch::Tensor>> stats;
  stats["conv1_1"] = {bn1->running_mean, bn1->running_var};
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      auto norm = stages_[s][b]->final_norm();
      stats["conv" + std::to_string(s + 2) + "_" + std::to_string(b + 1)] = {
          norm->running_mean, norm->running_var};
    }
  }
  return stats;
}

TinyNetImpl::TinyNetImpl(const testkit::TinyArchitecture& architecture) {
  std::int64_t in = 3;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::int64_t out = architecture.widths[i];
    const auto name = "t" + std::to_string(i + 1);
    blocks_.push_back(register_module(
        name, torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, testkit::kTinyKernel)
                                    .stride(testkit::kTinyStride)
                                    .padding(testkit::kTinyPadding))));
    running_mean_.push_back(register_buffer(name + "_running_mean", torch::zeros({out})));
    running_var_.push_back(register_buffer(name + "_running_var", torch::ones({out})));
    in = out;
  }
  head = register_module("head", torch::nn::Linear(in, architecture.classes));
}

void TinyNetImpl::assign(const testkit::TinyWeights& weights) {
  torch::NoGradGuard no_grad;
  auto from = [](const std::vector<double>& v) {
    return torch::tensor(v, torch::kFloat64);
  };
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& conv = weights.blocks[i];
    blocks_[i]->weight.copy_(from(conv.weight).view(
        {conv.out_channels, conv.in_channels, testkit::kTinyKernel, testkit::kTinyKernel}));
    blocks_[i]->bias.copy_(from(conv.bias));
    running_mean_[i].copy_(from(weights.running_mean[i]));
    running_var_[i].copy_(from(weights.running_var[i]));
  }
  head->weight.copy_(from(weights.head_weight).view(head->weight.sizes()));
  head->bias.copy_(from(weights.head_bias));
}

FeatureBundle TinyNetImpl::run(const torch::Tensor& input,
                               const Request& request) {
  FeatureBundle bundle;
  auto x = input;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto pre = blocks_[i]->forward(x);
    x = torch::relu(pre);
    const auto name = "t" + std::to_string(i + 1);
    if (wants(request, name)) {
      bundle.activations[name] = x;
      if (request.norm_inputs) bundle.norm_inputs[name] = pre;
    }
  }
  bundle.logits = head(x.mean({2, 3}));
  return bundle;
}

std::map<std::string, std::pair<torch::Tensor, torch::Tensor>>
TinyNetImpl::running_statistics() {
  std::map<std::string, std::pair<torch::Tensor, torch::Tensor>> stats;
  for (std::size_t i = 0; i < running_mean_.size(); ++i)
    stats["t" + std::to_string(i + 1)] = {running_mean_[i], running_var_[i]};
  return stats;
}

}  // namespace imagine::detail
