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

#include "imagine/critic.hpp"

#include "imagine/backbone.hpp"

#include <fmt/format.h>

namespace imagine {

std::int64_t receptive_field(const CriticConfig& config) {
  std::int64_t field = 1;
  std::int64_t jump = 1;
  for (auto stride : config.strides) {
    field += (config.kernel_size - 1) * jump;
    jump *= stride;
  }
  return field;
}

std::int64_t minimum_input_extent(const CriticConfig& config) {
  // Invert out = floor((in + 2p - k) / s) + 1 >= 1 layer by layer.
  std::int64_t extent = 1;
  for (auto it = config.strides.rbegin(); it != config.strides.rend(); ++it) {
    extent = std::max<std::int64_t>(1, (extent - 1) * *it + config.kernel_size -
                                           2 * config.padding);
  }
  return extent;
}

void validate(const CriticConfig& config) {
  if (config.widths.empty() || config.widths.size() != config.strides.size()) {
    throw ConfigError("critic.widths", "widths and strides must be non-empty and of equal length");
  }
  if (config.widths.back() != 1) {
    throw ConfigError("critic.widths", "the final layer must output a 1-channel score map");
  }
  if (config.kernel_size < 1 || config.padding < 0) {
    throw ConfigError("critic.kernel", "kernel must be positive and padding non-negative");
  }
  for (auto s : config.strides)
    if (s < 1) throw ConfigError("critic.strides", "strides must be positive");
  if (config.steps_per_image_step < 0) {
    throw ConfigError("critic.steps_per_image_step", "must be non-negative");
  }
  if (config.warmup_steps < 0) {
    throw ConfigError("critic.warmup_steps", "must be non-negative");
  }
}

PatchCriticImpl::PatchCriticImpl(const CriticConfig& config)
    : slope_(config.leaky_slope) {
  std::int64_t in = 3;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    layers_.push_back(register_module(
        "conv" + std::to_string(i + 1),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, config.widths[i], config.kernel_size)
                              .stride(config.strides[i])
                              .padding(config.padding))));
    in = config.widths[i];
  }
}

torch::Tensor PatchCriticImpl::forward(const torch::Tensor& image) {
  auto x = image;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x);
    if (i + 1 < layers_.size()) x = torch::leaky_relu(x, slope_);
  }
  return x;
}

CriticState::CriticState(const CriticConfig& config, std::uint64_t seed,
                         torch::Dtype dtype)
    : config_(config),
      generator_(at::make_generator<at::CPUGeneratorImpl>(seed)),
      dtype_(dtype) {
  validate(config_);
  network_ = std::make_unique<PatchCritic>(config_);
  (*network_)->to(dtype_);
  {
    torch::NoGradGuard no_grad;
    for (auto& item : (*network_)->named_parameters()) {
      if (item.key().ends_with("weight")) {
        item.value().normal_(0.0, config_.init_std, generator_);
      } else {
        item.value().zero_();
      }
    }
  }
  optimizer_ = std::make_unique<torch::optim::Adam>(
      (*network_)->parameters(),
      torch::optim::AdamOptions(config_.learning_rate)
          .betas({config_.adam_beta1, config_.adam_beta2}));
}

CriticState init_critic(const CriticConfig& config, std::uint64_t seed,
                        torch::Dtype dtype) {
  return CriticState(config, seed, dtype);
}

torch::Tensor critic_score_map(const CriticState& state,
                               const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ShapeError("critic expects images of shape (batch, 3, H, W)");
  }
  const auto min_extent = minimum_input_extent(state.config());
  if (image.size(2) < min_extent || image.size(3) < min_extent) {
    throw ShapeError(fmt::format(
        "image {}x{} is smaller than the critic's minimum extent {} (receptive field {})",
        image.size(2), image.size(3), min_extent, receptive_field(state.config())));
  }
  return state.network()->forward(image.to(state.dtype()));
}

torch::Tensor critic_score(const CriticState& state, const torch::Tensor& image) {
  return critic_score_map(state, image).mean();
}

CriticDiagnostics critic_train_step(CriticState& state,
                                    const torch::Tensor& real,
                                    const torch::Tensor& fake) {
  if (real.sizes() != fake.sizes()) {
    throw ShapeError("critic real and fake images differ in shape");
  }
  auto real_d = real.detach().to(state.dtype());
  auto fake_d = fake.detach().to(state.dtype());
  auto& net = state.network();

  auto score_real = critic_score(state, real_d);
  auto score_fake = critic_score(state, fake_d);
  auto gap = score_real - score_fake;

  torch::Tensor penalty = torch::zeros({}, real_d.options());
  double gradient_norm = 0.0;
  const auto weight = state.config().gradient_penalty_weight;
  {
    auto alpha = torch::rand({real_d.size(0), 1, 1, 1}, state.generator(), real_d.options());
    auto mixed = (alpha * real_d + (1.0 - alpha) * fake_d).requires_grad_(true);
    // Per-sample image score so each interpolate gets its own gradient.
    auto per_sample = net->forward(mixed).mean({1, 2, 3});
    auto grad = torch::autograd::grad({per_sample.sum()}, {mixed},
                                      /*grad_outputs=*/{}, /*retain_graph=*/true,
                                      /*create_graph=*/weight != 0.0)[0];
    auto norms = safe_sqrt(grad.pow(2).flatten(1).sum(1));
    gradient_norm = norms.mean().item<double>();
    if (weight != 0.0) penalty = weight * (norms - 1.0).pow(2).mean();
  }

  auto loss = -gap + penalty;
  CriticDiagnostics diag;
  diag.wasserstein_gap = gap.item<double>();
  diag.penalty = penalty.item<double>();
  diag.loss = loss.item<double>();
  diag.gradient_norm = gradient_norm;

  state.optimizer().zero_grad();
  loss.backward();
  state.optimizer().step();
  state.advance();
  return diag;
}

}  // namespace imagine
