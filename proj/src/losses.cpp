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

#include "imagine/losses.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <utility>

namespace imagine {

namespace {

constexpr std::array<std::pair<SynthesisMode, std::string_view>, 6> kModeNames{{
    {SynthesisMode::kStandard, "standard"},
    {SynthesisMode::kDeepInversionBaseline, "deepinversion-baseline"},
    {SynthesisMode::kPosition, "position"},
    {SynthesisMode::kShape, "shape"},
    {SynthesisMode::kStyle, "style"},
    {SynthesisMode::kCounterfactual, "counterfactual"},
}};

torch::Tensor l2_norm(const torch::Tensor& v) { return safe_sqrt(v.pow(2).sum()); }

const ChannelStats& stats_for(const FeatureStats& stats, const std::string& layer,
                              std::string_view which) {
  auto it = stats.find(layer);
  if (it == stats.end()) {
    throw Error(fmt::format("{} statistics lack layer '{}'", which, layer));
  }
  return it->second;
}

void check_channels(const ChannelStats& a, const ChannelStats& b,
                    const std::string& layer) {
  if (a.mean.numel() != b.mean.numel() || a.stddev.numel() != b.stddev.numel()) {
    throw ShapeError(fmt::format("channel count mismatch at layer '{}': {} vs {}",
                                 layer, a.mean.numel(), b.mean.numel()));
  }
}

torch::Tensor as_mask(const torch::Tensor& mask) {
  if (mask.dim() == 2) return mask.view({1, 1, mask.size(0), mask.size(1)});
  return mask;
}

LayerSet merged(LayerSet base, const LayerSet& extra) {
  for (const auto& l : extra)
    if (std::find(base.begin(), base.end(), l) == base.end()) base.push_back(l);
  return base;
}

}  // namespace

std::string_view to_string(SynthesisMode mode) {
  for (const auto& [m, name] : kModeNames)
    if (m == mode) return name;
  return "unknown";
}

SynthesisMode parse_mode(std::string_view name) {
  for (const auto& [m, n] : kModeNames)
    if (n == name) return m;
  throw ConfigError("mode", fmt::format("unknown synthesis mode '{}'", name));
}

void check_binary_mask(const torch::Tensor& mask, std::string_view name) {
  if (!mask.defined()) throw Error(fmt::format("{} mask is missing", name));
  auto binary = (mask == 0) | (mask == 1);
  if (!binary.all().item<bool>()) {
    throw Error(fmt::format("{} mask has entries other than 0 and 1", name));
  }
}

torch::Tensor class_loss(const torch::Tensor& logits, std::int64_t target_class) {
  auto flat = logits.dim() == 2 ? logits.squeeze(0) : logits;
  if (flat.dim() != 1) throw ShapeError("class_loss expects a single logit vector");
  if (target_class < 0 || target_class >= flat.size(0)) {
    throw Error(fmt::format("class index {} outside [0, {})", target_class, flat.size(0)));
  }
  return -torch::log_softmax(flat, 0)[target_class];
}

torch::Tensor total_variation(const torch::Tensor& image) {
  if (image.dim() < 2 || image.size(-1) < 2 || image.size(-2) < 2) {
    throw ShapeError("total variation needs at least 2 pixels along each spatial axis");
  }
  const auto h = image.size(-2);
  const auto w = image.size(-1);
  auto vertical = image.narrow(-2, 1, h - 1) - image.narrow(-2, 0, h - 1);
  auto horizontal = image.narrow(-1, 1, w - 1) - image.narrow(-1, 0, w - 1);
  return vertical.abs().sum() + horizontal.abs().sum();
}

torch::Tensor image_prior_loss(const torch::Tensor& image, double tv_weight,
                               double l2_weight) {
  return tv_weight * total_variation(image) + l2_weight * image.pow(2).sum();
}

LayeredLoss feature_distribution_loss(const FeatureStats& a,
                                      const FeatureStats& b,
                                      const LayerSet& layers) {
  LayeredLoss out;
  out.total = torch::zeros({}, torch::kFloat64);
  for (const auto& layer : layers) {
    const auto& sa = stats_for(a, layer, "first");
    const auto& sb = stats_for(b, layer, "second");
    check_channels(sa, sb, layer);
    auto term = l2_norm(sa.mean - sb.mean) + l2_norm(sa.stddev - sb.stddev);
    out.per_layer[layer] = term;
    out.total = out.total + term;
  }
  return out;
}

LayeredLoss dataset_statistics_loss(const FeatureStats& image_stats,
                                    const FeatureStats& dataset,
                                    const LayerSet& layers) {
  LayeredLoss out;
  out.total = torch::zeros({}, torch::kFloat64);
  for (const auto& layer : layers) {
    const auto& sx = stats_for(image_stats, layer, "image");
    const auto& sd = stats_for(dataset, layer, "dataset");
    check_channels(sx, sd, layer);
    auto mean_term = (sx.mean - sd.mean.to(sx.mean.scalar_type())).pow(2).sum();
    auto var_term =
        (sx.stddev.pow(2) - sd.stddev.to(sx.stddev.scalar_type()).pow(2)).pow(2).sum();
    out.per_layer[layer] = mean_term + var_term;
    out.total = out.total + mean_term + var_term;
  }
  return out;
}

torch::Tensor patch_consistency_loss(const CriticState& critic,
                                     const torch::Tensor& image) {
  return -critic_score(critic, image);
}

torch::Tensor location_loss(const torch::Tensor& map, const torch::Tensor& target) {
  if (map.sizes() != target.sizes()) {
    throw ShapeError("attribution map and target differ in shape");
  }
  return l2_norm(map - target.to(map.scalar_type()));
}

FeatureStats counterfactual_region_stats(const ClassifierHandle& handle,
                                         const torch::Tensor& counterfactual,
                                         const torch::Tensor& counterfactual_mask,
                                         const LayerSet& layers) {
  check_binary_mask(counterfactual_mask, "counterfactual");
  auto region = (1.0 - as_mask(counterfactual_mask)) * counterfactual;
  auto bundle = forward_with_features(handle, region, layers);
  return channel_stats(bundle, layers);
}

CounterfactualLoss counterfactual_loss(const ClassifierHandle& handle,
                                       const torch::Tensor& image,
                                       const torch::Tensor& query,
                                       const torch::Tensor& query_mask,
                                       const FeatureStats& region_stats,
                                       const LayerSet& layers) {
  check_binary_mask(query_mask, "query");
  if (image.sizes() != query.sizes()) {
    throw ShapeError("counterfactual query and synthesized image differ in shape");
  }
  auto mask = as_mask(query_mask).to(image.scalar_type());
  if (mask.size(-1) != image.size(-1) || mask.size(-2) != image.size(-2)) {
    throw ShapeError("query mask and image differ in spatial size");
  }
  CounterfactualLoss out;
  out.preserve = (mask * (query.to(image.scalar_type()) - image)).abs().sum();
  auto bundle = forward_with_features(handle, (1.0 - mask) * image, layers);
  out.region = feature_distribution_loss(channel_stats(bundle, layers), region_stats,
                                         layers)
                   .total;
  out.total = out.preserve + out.region;
  return out;
}

CounterfactualLoss counterfactual_loss(const ClassifierHandle& handle,
                                       const torch::Tensor& image,
                                       const torch::Tensor& query,
                                       const torch::Tensor& counterfactual,
                                       const MaskPair& masks,
                                       const LayerSet& layers) {
  if (counterfactual.size(-1) != image.size(-1) ||
      counterfactual.size(-2) != image.size(-2)) {
    throw ShapeError("counterfactual image and synthesized image differ in spatial size");
  }
  FeatureStats region;
  {
    torch::NoGradGuard no_grad;
    region = counterfactual_region_stats(handle, counterfactual, masks.counterfactual,
                                         layers);
  }
  return counterfactual_loss(handle, image, query, masks.query, region, layers);
}

std::optional<double> Objective::value(std::string_view name) const {
  for (const auto& t : terms)
    if (t.name == name) return t.value;
  for (const auto& [n, v] : details)
    if (n == name) return v;
  return std::nullopt;
}

double Objective::regularizer_total() const {
  double sum = 0.0;
  for (const auto& t : terms)
    if (t.name != "class") sum += t.weight * t.value;
  return sum;
}

double patch_weight(const LossWeights& weights, int stage) {
  return stage == 1 ? weights.patch_stage1 : weights.patch_stage2;
}

Objective total_objective(const ObjectiveContext& context,
                          const torch::Tensor& image) {
  if (context.backbone == nullptr) throw Error("objective context has no backbone");
  const auto& handle = *context.backbone;
  const auto mode = context.mode;
  const auto& w = context.weights;

  if (mode == SynthesisMode::kShape && context.clipart_stats.empty() &&
      !context.clipart_layers.empty()) {
    throw ConfigError("clipart", "shape mode requires clipart statistics");
  }
  if (mode == SynthesisMode::kPosition && !context.location_target) {
    throw ConfigError("location", "position mode requires a target attribution map");
  }
  if (mode == SynthesisMode::kCounterfactual && !context.counterfactual) {
    throw ConfigError("query", "counterfactual mode requires a query image and masks");
  }
  if (mode == SynthesisMode::kDeepInversionBaseline && context.dataset_stats.empty() &&
      !context.layers.empty()) {
    throw ConfigError("architecture", "baseline mode requires stored dataset statistics");
  }

  std::string cam_layer;
  if (mode == SynthesisMode::kPosition) {
    cam_layer = context.gradcam_layer.empty() ? handle.reference_layers().back()
                                              : context.gradcam_layer;
  }
  LayerSet forward_layers = merged(context.layers, context.clipart_layers);
  if (!cam_layer.empty()) forward_layers = merged(forward_layers, {cam_layer});

  const bool norm_inputs = mode == SynthesisMode::kDeepInversionBaseline;
  auto bundle = forward_with_features(handle, image, forward_layers, norm_inputs);

  Objective out;
  std::vector<torch::Tensor> weighted;
  auto add = [&](std::string name, const torch::Tensor& value, double weight) {
    out.terms.push_back({std::move(name), value.item<double>(), weight});
    weighted.push_back(weight * value.to(torch::kFloat64));
  };
  auto add_details = [&](const std::string& prefix, const LayeredLoss& loss) {
    for (const auto& [layer, v] : loss.per_layer)
      out.details.emplace_back(prefix + ":" + layer, v.item<double>());
  };

  if (mode != SynthesisMode::kStyle) {
    add("class", class_loss(bundle.logits, context.target_class), 1.0);
  }
  add("tv", total_variation(image), w.total_variation);
  add("l2", image.pow(2).sum(), w.l2);

  auto stats = channel_stats(bundle, context.layers);
  auto dm = feature_distribution_loss(stats, context.reference_stats, context.layers);
  add("r_dm", dm.total, w.distribution);
  add_details("r_dm", dm);

  if (mode == SynthesisMode::kShape) {
    auto clip_stats = channel_stats(bundle, context.clipart_layers);
    auto clip = feature_distribution_loss(clip_stats, context.clipart_stats,
                                          context.clipart_layers);
    add("r_dm_clipart", clip.total, w.distribution);
    add_details("r_dm_clipart", clip);
  }

  if (mode == SynthesisMode::kDeepInversionBaseline) {
    auto pre_stats = channel_stats(bundle, context.layers, FeatureSite::kNormInput);
    auto feat = dataset_statistics_loss(pre_stats, context.dataset_stats, context.layers);
    add("r_feat", feat.total, w.baseline);
    add_details("r_feat", feat);
  }

  if (mode == SynthesisMode::kPosition) {
    const auto& activations = bundle.activations.at(cam_layer);
    auto score = bundle.logits.index({0, context.target_class});
    auto grad = torch::autograd::grad({score}, {activations}, {},
                                      /*retain_graph=*/true, /*create_graph=*/false,
                                      /*allow_unused=*/true)[0];
    if (!grad.defined()) grad = torch::zeros_like(activations);
    auto map = cam_from_activations(activations, grad, image.size(2), image.size(3));
    const bool active = context.stage == 2 || context.location_in_stage1;
    add("r_loc", location_loss(map.values, context.location_target->values),
        active ? w.location : 0.0);
    out.attribution = AttributionMap{map.values.detach(), map.degenerate};
  }

  if (mode == SynthesisMode::kCounterfactual) {
    const auto& cf = *context.counterfactual;
    auto cou = counterfactual_loss(handle, image, cf.query, cf.query_mask,
                                   cf.region_stats, cf.layers);
    add("r_cou", cou.total, w.counterfactual);
    out.details.emplace_back("r_cou_preserve", cou.preserve.item<double>());
    out.details.emplace_back("r_cou_region", cou.region.item<double>());
  }

  if (context.critic != nullptr) {
    add("r_pc", patch_consistency_loss(*context.critic, image),
        patch_weight(w, context.stage));
  }

  out.total = weighted.empty() ? torch::zeros({}, torch::kFloat64)
                               : torch::stack(weighted).sum();
  return out;
}

}  // namespace imagine
