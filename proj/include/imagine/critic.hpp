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

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <vector>

#include "imagine/error.hpp"

namespace imagine {

/// Fully-convolutional patch scorer: each output cell scores one receptive
/// field patch, so the mean of the map is the equal-weight patch expectation.
struct CriticConfig {
  std::vector<std::int64_t> widths{64, 128, 256, 1};
  std::int64_t kernel_size = 4;
  std::vector<std::int64_t> strides{2, 2, 2, 1};
  std::int64_t padding = 0;
  double leaky_slope = 0.2;
  double gradient_penalty_weight = 10.0;
  std::int64_t steps_per_image_step = 1;
  // Extra critic steps against the first image of the adversarial stage.
  std::int64_t warmup_steps = 100;
  double learning_rate = 5e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  double init_std = 0.02;

  bool operator==(const CriticConfig&) const = default;
};

/// Receptive field of one output cell: r <- r + (k - 1) * prod(strides so far).
std::int64_t receptive_field(const CriticConfig& config);

/// Smallest square input extent that yields a non-empty score map.
std::int64_t minimum_input_extent(const CriticConfig& config);

/// Validates widths/strides consistency; throws ConfigError.
void validate(const CriticConfig& config);

class PatchCriticImpl : public torch::nn::Module {
 public:
  explicit PatchCriticImpl(const CriticConfig& config);

  /// (batch, 3, H, W) -> (batch, 1, h, w) patch scores.
  torch::Tensor forward(const torch::Tensor& image);

  /// The last convolution (the output head).
  torch::nn::Conv2d& head() { return layers_.back(); }

 private:
  std::vector<torch::nn::Conv2d> layers_;
  double slope_;
};
TORCH_MODULE(PatchCritic);

struct CriticDiagnostics {
  double wasserstein_gap = 0.0;  // mean d(real patches) - mean d(fake patches)
  double penalty = 0.0;          // weighted gradient penalty
  double loss = 0.0;             // -gap + penalty
  double gradient_norm = 0.0;    // mean ||grad_u D(u)|| over interpolates
};

/// Critic parameters, optimizer state and the generator used for
/// interpolation coefficients. One per synthesis sample; move-only.
class CriticState {
 public:
  CriticState(const CriticConfig& config, std::uint64_t seed,
              torch::Dtype dtype);

  CriticState(CriticState&&) noexcept = default;
  CriticState& operator=(CriticState&&) noexcept = default;
  CriticState(const CriticState&) = delete;
  CriticState& operator=(const CriticState&) = delete;

  const CriticConfig& config() const { return config_; }
  PatchCritic& network() const { return *network_; }
  torch::optim::Adam& optimizer() { return *optimizer_; }
  at::Generator& generator() { return generator_; }
  std::int64_t step() const { return step_; }
  void advance() { ++step_; }
  torch::Dtype dtype() const { return dtype_; }

 private:
  CriticConfig config_;
  std::unique_ptr<PatchCritic> network_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  at::Generator generator_;
  std::int64_t step_ = 0;
  torch::Dtype dtype_;
};

/// Normal(0, init_std) weights and zero biases, keyed by `seed`.
CriticState init_critic(const CriticConfig& config, std::uint64_t seed,
                        torch::Dtype dtype = torch::kFloat64);

/// Patch score map; throws ShapeError when the image is too small.
torch::Tensor critic_score_map(const CriticState& state,
                               const torch::Tensor& image);

/// Mean patch score D(image); differentiable in image and parameters.
torch::Tensor critic_score(const CriticState& state, const torch::Tensor& image);

/// One WGAN-GP ascent step on the critic. `fake` is detached internally.
CriticDiagnostics critic_train_step(CriticState& state,
                                    const torch::Tensor& real,
                                    const torch::Tensor& fake);

}  // namespace imagine
