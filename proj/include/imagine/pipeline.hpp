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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imagine/attribution.hpp"
#include "imagine/backbone.hpp"
#include "imagine/critic.hpp"
#include "imagine/losses.hpp"
#include "imagine/trace.hpp"

namespace imagine {

/// Gaussian blob target for position control, in output-pixel coordinates.
struct BlobSpec {
  double row = 0.0;
  double col = 0.0;
  double sigma = 0.0;

  bool operator==(const BlobSpec&) const = default;
};

/// Declarative description of one synthesis run. Optional layer sets and the
/// Grad-CAM layer are filled from the architecture by resolve_job.
struct SynthesisJob {
  std::string job_id = "imagine";
  SynthesisMode mode = SynthesisMode::kStandard;
  std::string architecture = "resnet50-imagenet";
  std::string weights_source = "registry";

  std::string target;  // x0; the content image in style mode
  std::optional<std::string> clipart;
  std::optional<std::string> style;
  std::optional<std::string> query;
  std::optional<std::string> query_mask;
  std::optional<std::string> counterfactual_mask;
  std::optional<BlobSpec> blob;
  std::optional<std::int64_t> target_class;

  std::optional<LayerSet> layers;           // distribution matching
  std::optional<LayerSet> clipart_layers;   // shape: high-level layers
  std::optional<LayerSet> residual_layers;  // shape: low-level layers
  std::optional<LayerSet> style_layers;
  std::optional<LayerSet> query_layers;     // counterfactual regions
  std::optional<std::string> gradcam_layer;

  LossWeights weights;
  CriticConfig critic;
  std::int64_t stage1_iterations = 2000;
  std::int64_t stage2_iterations = 2000;
  double image_learning_rate = 0.2;
  double image_beta1 = 0.9;
  double image_beta2 = 0.999;
  // "constant", "cosine" (decay to 0 within each stage) or "cosine-run"
  // (one decay over both stages).
  std::string lr_schedule = "cosine-run";
  double init_low = 0.4;
  double init_high = 0.6;
  std::int64_t jitter = 0;
  bool single_stage = false;
  bool location_stage1 = false;  // apply the location term in stage 1 too

  std::int64_t height = 224;
  std::int64_t width = 224;
  std::int64_t samples = 1;
  std::int64_t parallel = 1;
  std::uint64_t seed = 0;

  bool operator==(const SynthesisJob&) const = default;
};

/// Fills unset layer sets from the architecture's reference taps
/// (all reference taps; the deepest for the clipart set; the others for the
/// residual and style sets) and the default blob, then validates the job.
SynthesisJob resolve_job(const SynthesisJob& job);

/// Throws ConfigError naming the offending field.
void validate_job(const SynthesisJob& job);

/// Images a job consumes, (1, 3, H, W) in [0,1]; masks are (1, 1, H, W).
struct SynthesisInputs {
  torch::Tensor target;
  torch::Tensor clipart;
  torch::Tensor style;
  torch::Tensor query;
  std::optional<MaskPair> masks;
};

/// Loads every image path of a resolved job at the job's size.
SynthesisInputs load_inputs(const SynthesisJob& job);

/// The optimization variable and its Adam state.
struct ImageState {
  torch::Tensor pixels;  // (1, 3, H, W), requires grad
  std::unique_ptr<torch::optim::Adam> optimizer;
};

/// Uniform [init_low, init_high] noise keyed by `seed`; the content target in
/// style mode.
ImageState init_image(const SynthesisJob& job, const SynthesisInputs& inputs,
                      std::uint64_t seed, torch::Dtype dtype);

/// Precomputes reference statistics and masks for the objective.
ObjectiveContext make_objective_context(const ClassifierHandle& handle,
                                        const SynthesisJob& resolved,
                                        const SynthesisInputs& inputs,
                                        std::int64_t target_class);

/// Image the critic treats as real: the style image in style mode, the
/// target otherwise.
torch::Tensor critic_reference(const SynthesisJob& job, const SynthesisInputs& inputs);

struct StageOptions {
  int stage = 1;
  std::int64_t iterations = 0;
  std::int64_t iteration_offset = 0;  // global index of the first iteration
  std::uint64_t jitter_seed = 0;
};

/// Runs `iterations` alternating steps: (stage 2) critic update against the
/// current image, then one Adam step on the image and a clamp to [0,1].
/// Appends every objective term (and critic diagnostics) to `trace`.
/// Throws DivergenceError when the objective is non-finite.
void run_stage(ImageState& state, CriticState* critic, ObjectiveContext& context,
               const SynthesisJob& job, const torch::Tensor& critic_real,
               const StageOptions& options, Trace& trace);

struct SampleResult {
  std::uint64_t seed = 0;
  torch::Tensor image;  // (1, 3, H, W) in [0,1]
  Trace trace;
  std::int64_t stage1_iterations = 0;
  std::int64_t stage2_iterations = 0;
  std::optional<AttributionMap> attribution;  // position mode
  double seconds = 0.0;
};

struct SynthesisResult {
  SynthesisJob job;  // resolved
  std::int64_t target_class = 0;
  std::vector<SampleResult> samples;
  std::uint64_t backbone_checksum = 0;
};

/// Per sample i (seed = job.seed + i): init, stage 1, fresh critic, stage 2.
SynthesisResult synthesize(const ClassifierHandle& handle, const SynthesisJob& job,
                           const SynthesisInputs& inputs);

/// Synthesis with distribution matching restricted to `layers`.
SynthesisResult ablate_layers(const ClassifierHandle& handle, const SynthesisJob& job,
                              const LayerSet& layers, const SynthesisInputs& inputs);

}  // namespace imagine
