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

#include "imagine/attribution.hpp"

#include <fmt/format.h>

namespace imagine {

AttributionMap cam_from_activations(const torch::Tensor& activations,
                                    const torch::Tensor& logit_grad,
                                    std::int64_t height, std::int64_t width) {
  if (activations.dim() != 4 || activations.size(0) != 1 ||
      activations.sizes() != logit_grad.sizes()) {
    throw ShapeError("Grad-CAM expects matching (1, C, h, w) activations and gradients");
  }
  auto weights = logit_grad.detach().mean({2, 3}, /*keepdim=*/true);
  auto cam = torch::relu((weights * activations).sum(1, /*keepdim=*/true));
  cam = torch::nn::functional::interpolate(
      cam, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<std::int64_t>{height, width})
               .mode(torch::kBilinear)
               .align_corners(false));
  cam = cam.view({height, width});
  auto peak = cam.max();
  AttributionMap map;
  if (peak.item<double>() <= 0.0) {
    map.values = torch::zeros_like(cam);
    map.degenerate = true;
  } else {
    map.values = cam / peak;
  }
  return map;
}

AttributionMap grad_cam(const ClassifierHandle& handle,
                        const torch::Tensor& image, std::int64_t target_class,
                        const std::string& layer) {
  const std::string tap = layer.empty() ? handle.reference_layers().back() : layer;
  if (!handle.has_tap(tap)) {
    throw Error(fmt::format("unknown Grad-CAM layer '{}'", tap));
  }
  if (target_class < 0 || target_class >= handle.class_count()) {
    throw Error(fmt::format("class index {} outside [0, {})", target_class,
                            handle.class_count()));
  }
  if (image.dim() != 4 || image.size(0) != 1) {
    throw ShapeError("Grad-CAM expects a single image (1, 3, H, W)");
  }
  // Activations need a graph even when the caller's image is a constant.
  auto input = image.requires_grad() ? image : image.detach().requires_grad_(true);
  auto bundle = forward_with_features(handle, input, {tap});
  const auto& activations = bundle.activations.at(tap);
  auto score = bundle.logits.index({0, target_class});
  torch::Tensor grad;
  if (score.requires_grad()) {
    grad = torch::autograd::grad({score}, {activations}, {}, /*retain_graph=*/true,
                                 /*create_graph=*/false, /*allow_unused=*/true)[0];
  }
  if (!grad.defined()) grad = torch::zeros_like(activations);
  return cam_from_activations(activations, grad, image.size(2), image.size(3));
}

AttributionMap gaussian_target(double row, double col, double sigma,
                               std::int64_t height, std::int64_t width,
                               torch::Dtype dtype) {
  if (row < 0.0 || col < 0.0 || row > static_cast<double>(height - 1) ||
      col > static_cast<double>(width - 1)) {
    throw Error(fmt::format("blob center ({}, {}) outside a {}x{} image", row, col,
                            height, width));
  }
  if (!(sigma > 0.0)) {
    throw Error("blob sigma must be positive");
  }
  auto opts = torch::TensorOptions().dtype(dtype);
  auto rows = torch::arange(height, opts).view({height, 1}) - row;
  auto cols = torch::arange(width, opts).view({1, width}) - col;
  auto values = torch::exp(-(rows * rows + cols * cols) / (2.0 * sigma * sigma));
  return AttributionMap{values, false};
}

torch::Tensor region_mask_from_map(const AttributionMap& map, double quantile) {
  auto flat = map.values.detach().flatten();
  auto threshold = torch::quantile(flat, quantile);
  return (map.values.detach() < threshold).to(map.values.scalar_type());
}

}  // namespace imagine
