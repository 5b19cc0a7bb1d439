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
#include <filesystem>

#include "imagine/attribution.hpp"

namespace imagine {

/// Decodes a raster image, expands it to three channels, resizes it to
/// (height, width) with bilinear filtering and scales it to [0,1].
/// Returns (1, 3, height, width) float64. Throws Error naming the path.
torch::Tensor load_image(const std::filesystem::path& path, std::int64_t height,
                         std::int64_t width);

/// 8-bit grayscale mask thresholded at 128: white (outside the region) -> 1,
/// black -> 0. Returns (1, 1, height, width) float64.
torch::Tensor load_mask(const std::filesystem::path& path, std::int64_t height,
                        std::int64_t width);

/// Writes (1, 3, H, W) or (3, H, W) values in [0,1] as a lossless 8-bit RGB
/// file; the format follows the extension (PNG recommended).
void save_image(const torch::Tensor& image, const std::filesystem::path& path);

/// Writes an attribution map as 8-bit grayscale, value * 255 rounded.
void save_map(const AttributionMap& map, const std::filesystem::path& path);

}  // namespace imagine
