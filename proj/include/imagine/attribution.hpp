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
#include <string>

#include "imagine/backbone.hpp"

namespace imagine {

/// Spatial map in [0,1] of shape (H, W). A degenerate map is all zeros.
struct AttributionMap {
  torch::Tensor values;
  bool degenerate = false;
};

/// Grad-CAM map from a layer's activations (1, C, h, w) and the gradient of
/// the class logit with respect to them. Channel weights are the spatial mean
/// of `logit_grad` and are treated as constants; the map stays differentiable
/// through `activations`. Bilinear upsampling to (height, width), then max
/// normalization unless the rectified map is all zero.
AttributionMap cam_from_activations(const torch::Tensor& activations,
                                    const torch::Tensor& logit_grad,
                                    std::int64_t height, std::int64_t width);

/// Grad-CAM for class `target_class` at `layer` (defaults to the deepest
/// reference tap when empty). `image` is (1, 3, H, W) in pixel space.
AttributionMap grad_cam(const ClassifierHandle& handle,
                        const torch::Tensor& image, std::int64_t target_class,
                        const std::string& layer = {});

/// exp(-((i - row)^2 + (j - col)^2) / (2 sigma^2)) on an (height, width) grid.
AttributionMap gaussian_target(double row, double col, double sigma,
                               std::int64_t height, std::int64_t width,
                               torch::Dtype dtype = torch::kFloat64);

/// Convenience, not part of the synthesis objective: binary region mask with
/// value 0 where `map` is at or above its `quantile` (default 60th
/// percentile) and 1 elsewhere, matching the counterfactual mask convention.
torch::Tensor region_mask_from_map(const AttributionMap& map,
                                   double quantile = 0.6);

}  // namespace imagine
