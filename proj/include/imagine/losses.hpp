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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "imagine/attribution.hpp"
#include "imagine/backbone.hpp"
#include "imagine/critic.hpp"

namespace imagine {

enum class SynthesisMode {
  kStandard,
  kDeepInversionBaseline,
  kPosition,
  kShape,
  kStyle,
  kCounterfactual,
};

std::string_view to_string(SynthesisMode mode);
/// Accepts the names produced by to_string; throws ConfigError("mode", ...).
SynthesisMode parse_mode(std::string_view name);

/// Scaling weights of the synthesis objective.
struct LossWeights {
  double total_variation = 1e-4;
  double l2 = 1e-5;
  double distribution = 5.0;
  double patch_stage1 = 0.0;
  double patch_stage2 = 10.0;
  double location = 10.0;
  double baseline = 5.0;
  double counterfactual = 1.0;

  bool operator==(const LossWeights&) const = default;
};

/// Binary region masks, (1, 1, H, W). 1 outside the discriminant region,
/// 0 inside.
struct MaskPair {
  torch::Tensor query;
  torch::Tensor counterfactual;
};

/// Throws Error unless every entry is exactly 0 or 1.
void check_binary_mask(const torch::Tensor& mask, std::string_view name);

/// Cross-entropy of softmax(logits) against `target_class`. `logits` is (C)
/// or (1, C).
torch::Tensor class_loss(const torch::Tensor& logits, std::int64_t target_class);

/// Anisotropic total variation: absolute differences of vertically and
/// horizontally adjacent pixels, summed over every leading dimension.
torch::Tensor total_variation(const torch::Tensor& image);

/// tv_weight * TV(image) + l2_weight * sum(image^2), on [0,1] pixels.
torch::Tensor image_prior_loss(const torch::Tensor& image, double tv_weight,
                               double l2_weight);

struct LayeredLoss {
  torch::Tensor total;
  std::map<std::string, torch::Tensor> per_layer;
};

/// Sum over layers of ||mu_a - mu_b||_2 + ||sigma_a - sigma_b||_2
/// (unsquared Euclidean norms of mean and std differences).
LayeredLoss feature_distribution_loss(const FeatureStats& a,
                                      const FeatureStats& b,
                                      const LayerSet& layers);

/// Sum over layers of ||mu_x - mu_D||^2 + ||sigma_x^2 - sigma_D^2||^2
/// (squared norms, variances) against stored dataset statistics.
LayeredLoss dataset_statistics_loss(const FeatureStats& image_stats,
                                    const FeatureStats& dataset,
                                    const LayerSet& layers);

/// -D(image): negative mean patch score. Differentiable in the image; the
/// critic parameters are not updated here.
torch::Tensor patch_consistency_loss(const CriticState& critic,
                                     const torch::Tensor& image);

/// ||map - target||_2 over all entries.
torch::Tensor location_loss(const torch::Tensor& map, const torch::Tensor& target);

struct CounterfactualLoss {
  torch::Tensor total;
  torch::Tensor preserve;   // ||r_q * (x_q - x)||_1
  torch::Tensor region;     // distribution matching of the masked regions
};

/// Region statistics of the counterfactual image, (1 - r_0) * x_0, at `layers`.
FeatureStats counterfactual_region_stats(const ClassifierHandle& handle,
                                         const torch::Tensor& counterfactual,
                                         const torch::Tensor& counterfactual_mask,
                                         const LayerSet& layers);

/// Keeps `image` equal to `query` outside the query region while matching the
/// region's feature statistics to those of the counterfactual region.
CounterfactualLoss counterfactual_loss(const ClassifierHandle& handle,
                                       const torch::Tensor& image,
                                       const torch::Tensor& query,
                                       const torch::Tensor& query_mask,
                                       const FeatureStats& region_stats,
                                       const LayerSet& layers);

CounterfactualLoss counterfactual_loss(const ClassifierHandle& handle,
                                       const torch::Tensor& image,
                                       const torch::Tensor& query,
                                       const torch::Tensor& counterfactual,
                                       const MaskPair& masks,
                                       const LayerSet& layers);

struct CounterfactualContext {
  torch::Tensor query;
  torch::Tensor query_mask;
  FeatureStats region_stats;
  LayerSet layers;
};

/// Everything the objective needs besides the image being optimized.
struct ObjectiveContext {
  const ClassifierHandle* backbone = nullptr;
  SynthesisMode mode = SynthesisMode::kStandard;
  std::int64_t target_class = 0;
  LossWeights weights;
  int stage = 1;
  // Distribution-matching layers and the matching statistics of the
  // reference image: the target (standard modes), the style image (style),
  // or the target over the residual layers (shape).
  LayerSet layers;
  FeatureStats reference_stats;
  // Shape mode.
  LayerSet clipart_layers;
  FeatureStats clipart_stats;
  // Baseline mode; statistics of the normalization positions.
  FeatureStats dataset_stats;
  // Position mode.
  std::optional<AttributionMap> location_target;
  std::string gradcam_layer;
  // The location term joins the adversarial stage; in the warm-up stage it is
  // recorded with zero weight unless this is set.
  bool location_in_stage1 = false;
  // Counterfactual mode.
  std::optional<CounterfactualContext> counterfactual;
  // Stage 2.
  const CriticState* critic = nullptr;
};

struct ObjectiveTerm {
  std::string name;
  double value = 0.0;
  double weight = 0.0;
};

struct Objective {
  torch::Tensor total;
  std::vector<ObjectiveTerm> terms;  // summands; total = sum(weight * value)
  std::vector<std::pair<std::string, double>> details;  // per-layer parts
  std::optional<AttributionMap> attribution;            // position mode

  /// Value of a summand or detail entry; nullopt when absent.
  std::optional<double> value(std::string_view name) const;
  /// Weighted sum of every summand except the class term.
  double regularizer_total() const;
};

/// Patch weight in effect for `stage`.
double patch_weight(const LossWeights& weights, int stage);

/// Evaluates the full objective for `image` (1, 3, H, W). Throws ConfigError
/// when the context lacks an input the mode requires.
Objective total_objective(const ObjectiveContext& context,
                          const torch::Tensor& image);

}  // namespace imagine
