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

#include "imagine/pipeline.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

#include "imagine/image_io.hpp"

namespace imagine {

namespace {

// Offset between the image-initialization and critic-initialization streams
// of one sample.
constexpr std::uint64_t kCriticSeedOffset = 0x9E3779B97F4A7C15ULL;

void check_layers(const LayerSet& layers, const ArchitectureInfo& info,
                  const std::string& key) {
  for (const auto& layer : layers) {
    if (std::find(info.tap_layers.begin(), info.tap_layers.end(), layer) ==
        info.tap_layers.end()) {
      throw ConfigError(key, fmt::format("unknown layer '{}'; available taps: {}", layer,
                                         fmt::join(info.tap_layers, ", ")));
    }
  }
}

void require_path(const std::optional<std::string>& value, const std::string& key,
                  SynthesisMode mode) {
  if (!value || value->empty()) {
    throw ConfigError(key, fmt::format("required in {} mode", to_string(mode)));
  }
}

void require_non_negative(double value, const std::string& key) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw ConfigError(key, "must be a finite non-negative number");
  }
}

const ArchitectureInfo& info_or_config_error(const std::string& architecture) {
  try {
    return architecture_info(architecture);
  } catch (const LoadError& e) {
    throw ConfigError("architecture", e.what());
  }
}

torch::Tensor stats_input(const torch::Tensor& image, torch::Dtype dtype) {
  return image.detach().to(dtype);
}

}  // namespace

void validate_job(const SynthesisJob& job) {
  const auto& info = info_or_config_error(job.architecture);
  if (job.job_id.empty() || job.job_id.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("id", "job id must be a non-empty file-name-safe string");
  }
  if (job.target.empty()) throw ConfigError("target", "a target image is required");
  switch (job.mode) {
    case SynthesisMode::kShape:
      require_path(job.clipart, "clipart", job.mode);
      break;
    case SynthesisMode::kStyle:
      require_path(job.style, "style", job.mode);
      break;
    case SynthesisMode::kCounterfactual:
      require_path(job.query, "query", job.mode);
      require_path(job.query_mask, "mask_query", job.mode);
      require_path(job.counterfactual_mask, "mask_cf", job.mode);
      break;
    case SynthesisMode::kPosition:
      if (!job.blob) throw ConfigError("location", "position mode requires a blob target");
      break;
    default:
      break;
  }
  if (job.height < 2 || job.width < 2) throw ConfigError("size", "image size must be at least 2x2");
  if (job.stage1_iterations < 0) throw ConfigError("stage1_iterations", "must be >= 0");
  if (job.stage2_iterations < 0) throw ConfigError("stage2_iterations", "must be >= 0");
  if (job.samples < 1) throw ConfigError("samples", "must be >= 1");
  if (job.parallel < 1) throw ConfigError("parallel", "must be >= 1");
  if (job.jitter < 0) throw ConfigError("jitter", "must be >= 0");
  if (!(job.image_learning_rate > 0.0)) throw ConfigError("image_lr", "must be positive");
  if (!(job.image_beta1 >= 0.0 && job.image_beta1 < 1.0)) throw ConfigError("image_beta1", "must be in [0, 1)");
  if (!(job.image_beta2 >= 0.0 && job.image_beta2 < 1.0)) throw ConfigError("image_beta2", "must be in [0, 1)");
  if (job.lr_schedule != "constant" && job.lr_schedule != "cosine" && job.lr_schedule != "cosine-run") {
    throw ConfigError("lr_schedule", "expected constant, cosine or cosine-run");
  }
  if (!(job.init_low >= 0.0 && job.init_low <= job.init_high && job.init_high <= 1.0)) {
    throw ConfigError("init_low", "initial range must satisfy 0 <= low <= high <= 1");
  }
  const auto& w = job.weights;
  require_non_negative(w.total_variation, "tv");
  require_non_negative(w.l2, "l2");
  require_non_negative(w.distribution, "distribution");
  require_non_negative(w.patch_stage1, "patch_stage1");
  require_non_negative(w.patch_stage2, "patch_stage2");
  require_non_negative(w.location, "location");
  require_non_negative(w.baseline, "baseline");
  require_non_negative(w.counterfactual, "counterfactual");
  validate(job.critic);
  if (!(job.critic.learning_rate > 0.0)) throw ConfigError("critic.learning_rate", "must be positive");
  require_non_negative(job.critic.gradient_penalty_weight, "critic.gradient_penalty");
  if (job.layers) check_layers(*job.layers, info, "layers");
  if (job.clipart_layers) check_layers(*job.clipart_layers, info, "clipart_layers");
  if (job.residual_layers) check_layers(*job.residual_layers, info, "residual_layers");
  if (job.style_layers) check_layers(*job.style_layers, info, "style_layers");
  if (job.query_layers) check_layers(*job.query_layers, info, "query_layers");
  if (job.gradcam_layer) check_layers({*job.gradcam_layer}, info, "gradcam_layer");
  if (job.target_class &&
      (*job.target_class < 0 || *job.target_class >= info.class_count)) {
    throw ConfigError("class", fmt::format("class index {} outside [0, {})",
                                           *job.target_class, info.class_count));
  }
  if (job.blob) {
    const auto& b = *job.blob;
    if (b.row < 0 || b.col < 0 || b.row > static_cast<double>(job.height - 1) ||
        b.col > static_cast<double>(job.width - 1)) {
      throw ConfigError("blob_center", "blob center lies outside the image");
    }
    if (!(b.sigma > 0.0)) throw ConfigError("blob_sigma", "must be positive");
  }
  const auto stage2 = job.single_stage ? job.stage1_iterations + job.stage2_iterations
                                       : job.stage2_iterations;
  const auto min_extent = minimum_input_extent(job.critic);
  if (stage2 > 0 && (job.height < min_extent || job.width < min_extent)) {
    throw ConfigError("size", fmt::format("the critic needs images of at least {}x{}",
                                          min_extent, min_extent));
  }
}

SynthesisJob resolve_job(const SynthesisJob& job) {
  const auto& info = info_or_config_error(job.architecture);
  SynthesisJob out = job;
  const LayerSet& ref = info.reference_layers;
  const LayerSet shallow(ref.begin(), ref.end() - 1);
  if (!out.layers) out.layers = ref;
  if (!out.clipart_layers) out.clipart_layers = LayerSet{ref.back()};
  if (!out.residual_layers) out.residual_layers = shallow;
  if (!out.style_layers) out.style_layers = shallow;
  if (!out.query_layers) out.query_layers = ref;
  if (!out.gradcam_layer) out.gradcam_layer = ref.back();
  if (out.mode == SynthesisMode::kPosition && !out.blob) {
    out.blob = BlobSpec{static_cast<double>(out.height / 2),
                        static_cast<double>(out.width / 2),
                        static_cast<double>(std::min(out.height, out.width)) / 8.0};
  }
  validate_job(out);
  return out;
}

SynthesisInputs load_inputs(const SynthesisJob& job) {
  SynthesisInputs in;
  in.target = load_image(job.target, job.height, job.width);
  if (job.clipart) in.clipart = load_image(*job.clipart, job.height, job.width);
  if (job.style) in.style = load_image(*job.style, job.height, job.width);
  if (job.query) in.query = load_image(*job.query, job.height, job.width);
  if (job.query_mask && job.counterfactual_mask) {
    in.masks = MaskPair{load_mask(*job.query_mask, job.height, job.width),
                        load_mask(*job.counterfactual_mask, job.height, job.width)};
  }
  return in;
}

ImageState init_image(const SynthesisJob& job, const SynthesisInputs& inputs,
                      std::uint64_t seed, torch::Dtype dtype) {
  ImageState state;
  if (job.mode == SynthesisMode::kStyle) {
    state.pixels = inputs.target.detach().to(dtype).clone();
  } else {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    state.pixels = torch::rand({1, 3, job.height, job.width}, gen,
                               torch::TensorOptions().dtype(dtype));
    state.pixels.mul_(job.init_high - job.init_low).add_(job.init_low);
  }
  state.pixels.set_requires_grad(true);
  state.optimizer = std::make_unique<torch::optim::Adam>(
      std::vector<torch::Tensor>{state.pixels},
      torch::optim::AdamOptions(job.image_learning_rate)
          .betas({job.image_beta1, job.image_beta2}));
  return state;
}

ObjectiveContext make_objective_context(const ClassifierHandle& handle,
                                        const SynthesisJob& resolved,
                                        const SynthesisInputs& inputs,
                                        std::int64_t target_class) {
  torch::NoGradGuard no_grad;
  const auto dtype = handle.dtype();
  auto stats_of = [&](const torch::Tensor& image, const LayerSet& layers) {
    if (!image.defined()) throw ConfigError("target", "missing input image");
    auto bundle = forward_with_features(handle, stats_input(image, dtype), layers);
    return channel_stats(bundle, layers);
  };

  ObjectiveContext ctx;
  ctx.backbone = &handle;
  ctx.mode = resolved.mode;
  ctx.target_class = target_class;
  ctx.weights = resolved.weights;
  ctx.gradcam_layer = resolved.gradcam_layer.value_or("");
  ctx.location_in_stage1 = resolved.location_stage1;

  switch (resolved.mode) {
    case SynthesisMode::kShape:
      if (!inputs.clipart.defined()) throw ConfigError("clipart", "shape mode requires a clipart image");
      ctx.layers = *resolved.residual_layers;
      ctx.reference_stats = stats_of(inputs.target, ctx.layers);
      ctx.clipart_layers = *resolved.clipart_layers;
      ctx.clipart_stats = stats_of(inputs.clipart, ctx.clipart_layers);
      break;
    case SynthesisMode::kStyle:
      if (!inputs.style.defined()) throw ConfigError("style", "style mode requires a style image");
      ctx.layers = *resolved.style_layers;
      ctx.reference_stats = stats_of(inputs.style, ctx.layers);
      break;
    default:
      ctx.layers = *resolved.layers;
      ctx.reference_stats = stats_of(inputs.target, ctx.layers);
      break;
  }

  if (resolved.mode == SynthesisMode::kDeepInversionBaseline) {
    ctx.dataset_stats = dataset_stats(handle, ctx.layers);
  }
  if (resolved.mode == SynthesisMode::kPosition) {
    const auto& b = *resolved.blob;
    ctx.location_target =
        gaussian_target(b.row, b.col, b.sigma, resolved.height, resolved.width, dtype);
  }
  if (resolved.mode == SynthesisMode::kCounterfactual) {
    if (!inputs.query.defined() || !inputs.masks) {
      throw ConfigError("query", "counterfactual mode requires a query image and both masks");
    }
    CounterfactualContext cf;
    cf.layers = *resolved.query_layers;
    cf.query = stats_input(inputs.query, dtype);
    cf.query_mask = inputs.masks->query.to(dtype);
    check_binary_mask(cf.query_mask, "query");
    cf.region_stats = counterfactual_region_stats(
        handle, stats_input(inputs.target, dtype), inputs.masks->counterfactual.to(dtype),
        cf.layers);
    ctx.counterfactual = std::move(cf);
  }
  return ctx;
}

torch::Tensor critic_reference(const SynthesisJob& job, const SynthesisInputs& inputs) {
  return job.mode == SynthesisMode::kStyle ? inputs.style : inputs.target;
}

namespace {

// Multiplier in [0, 1] applied to both learning rates.
double schedule_factor(const SynthesisJob& job, const StageOptions& options, std::int64_t i) {
  double progress = 0.0;
  if (job.lr_schedule == "cosine") {
    progress = static_cast<double>(i) / static_cast<double>(std::max<std::int64_t>(options.iterations, 1));
  } else if (job.lr_schedule == "cosine-run") {
    const auto total = std::max<std::int64_t>(job.stage1_iterations + job.stage2_iterations, 1);
    progress = static_cast<double>(options.iteration_offset + i) / static_cast<double>(total);
  } else {
    return 1.0;
  }
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void set_learning_rate(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

}  // namespace

void run_stage(ImageState& state, CriticState* critic, ObjectiveContext& context,
               const SynthesisJob& job, const torch::Tensor& critic_real,
               const StageOptions& options, Trace& trace) {
  if (options.stage != 1 && options.stage != 2) {
    throw Error("stage index must be 1 or 2");
  }
  if ((options.stage == 2) != (critic != nullptr)) {
    throw Error("a critic is required in stage 2 and not allowed in stage 1");
  }
  context.stage = options.stage;
  context.critic = critic;
  std::mt19937_64 jitter_rng(options.jitter_seed);
  std::uniform_int_distribution<std::int64_t> offset(-job.jitter, job.jitter);
  torch::Tensor real;
  if (critic != nullptr) real = critic_real.detach().to(critic->dtype());

  for (std::int64_t i = 0; i < options.iterations; ++i) {
    const std::int64_t iteration = options.iteration_offset + i;
    const double factor = schedule_factor(job, options, i);
    if (critic != nullptr) {
      CriticDiagnostics diag;
      auto steps = critic->config().steps_per_image_step;
      if (i == 0) steps += critic->config().warmup_steps;
      for (std::int64_t k = 0; k < steps; ++k) {
        diag = critic_train_step(*critic, real, state.pixels.detach());
      }
      trace.add(iteration, options.stage, "wgap", diag.wasserstein_gap);
      trace.add(iteration, options.stage, "gp", diag.penalty);
      trace.add(iteration, options.stage, "d_loss", diag.loss);
    }

    set_learning_rate(*state.optimizer, factor * job.image_learning_rate);

    torch::Tensor input = state.pixels;
    if (job.jitter > 0) {
      const auto dy = offset(jitter_rng);
      const auto dx = offset(jitter_rng);
      input = torch::roll(input, {dy, dx}, {2, 3});
    }
    auto objective = total_objective(context, input);
    const double total = objective.total.item<double>();
    if (!std::isfinite(total)) {
      throw DivergenceError(options.stage, iteration,
                            fmt::format("objective became non-finite at stage {} iteration {}",
                                        options.stage, iteration));
    }
    for (const auto& t : objective.terms) trace.add(iteration, options.stage, t.name, t.value);
    for (const auto& [name, v] : objective.details) trace.add(iteration, options.stage, name, v);
    trace.add(iteration, options.stage, "total", total);

    auto grad = torch::autograd::grad({objective.total}, {state.pixels}, {},
                                      /*retain_graph=*/false, /*create_graph=*/false,
                                      /*allow_unused=*/true)[0];
    if (!grad.defined()) grad = torch::zeros_like(state.pixels);
    state.pixels.mutable_grad() = grad;
    state.optimizer->step();
    {
      torch::NoGradGuard no_grad;
      state.pixels.clamp_(0.0, 1.0);
    }
  }
  context.critic = nullptr;
}

namespace {

SampleResult run_sample(const ClassifierHandle& handle, const SynthesisJob& job,
                        const SynthesisInputs& inputs, const ObjectiveContext& base,
                        std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SampleResult sample;
  sample.seed = seed;
  ObjectiveContext context = base;
  auto state = init_image(job, inputs, seed, handle.dtype());
  auto critic = init_critic(job.critic, seed + kCriticSeedOffset, handle.dtype());
  const auto real = critic_reference(job, inputs);

  if (job.single_stage) {
    sample.stage2_iterations = job.stage1_iterations + job.stage2_iterations;
    run_stage(state, &critic, context, job, real,
              {2, sample.stage2_iterations, 0, seed + 2}, sample.trace);
  } else {
    sample.stage1_iterations = job.stage1_iterations;
    sample.stage2_iterations = job.stage2_iterations;
    run_stage(state, nullptr, context, job, real, {1, job.stage1_iterations, 0, seed + 1},
              sample.trace);
    run_stage(state, &critic, context, job, real,
              {2, job.stage2_iterations, job.stage1_iterations, seed + 2}, sample.trace);
  }
  sample.image = state.pixels.detach().to(torch::kFloat64).clone();
  if (job.mode == SynthesisMode::kPosition) {
    sample.attribution = grad_cam(handle, sample.image, context.target_class,
                                  job.gradcam_layer.value_or(""));
    sample.attribution->values = sample.attribution->values.detach();
  }
  sample.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sample;
}

}  // namespace

SynthesisResult synthesize(const ClassifierHandle& handle, const SynthesisJob& job,
                           const SynthesisInputs& inputs) {
  SynthesisResult result;
  result.job = resolve_job(job);
  const auto& resolved = result.job;
  if (resolved.architecture != handle.architecture_id()) {
    throw ConfigError("architecture",
                      fmt::format("job expects '{}' but the loaded backbone is '{}'",
                                  resolved.architecture, handle.architecture_id()));
  }
  if (!inputs.target.defined()) throw ConfigError("target", "target image not loaded");
  for (const auto* image : {&inputs.target, &inputs.clipart, &inputs.style, &inputs.query}) {
    if (image->defined() &&
        (image->size(2) != resolved.height || image->size(3) != resolved.width)) {
      throw ConfigError("size", "input images must match the job size");
    }
  }

  result.backbone_checksum = handle.parameter_checksum();
  result.target_class = resolved.target_class
                            ? *resolved.target_class
                            : predict_class(handle, stats_input(inputs.target, handle.dtype()));
  const auto base = make_objective_context(handle, resolved, inputs, result.target_class);

  result.samples.resize(static_cast<std::size_t>(resolved.samples));
  auto run_one = [&](std::int64_t i) {
    result.samples[static_cast<std::size_t>(i)] = run_sample(
        handle, resolved, inputs, base, resolved.seed + static_cast<std::uint64_t>(i));
  };
  if (resolved.parallel <= 1 || resolved.samples == 1) {
    for (std::int64_t i = 0; i < resolved.samples; ++i) run_one(i);
  } else {
    std::atomic<std::int64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    const auto count = std::min(resolved.parallel, resolved.samples);
    for (std::int64_t t = 0; t < count; ++t) {
      workers.emplace_back([&] {
        for (auto i = next++; i < resolved.samples; i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }

  if (handle.parameter_checksum() != result.backbone_checksum) {
    throw Error("backbone parameters changed during synthesis");
  }
  return result;
}

SynthesisResult ablate_layers(const ClassifierHandle& handle, const SynthesisJob& job,
                              const LayerSet& layers, const SynthesisInputs& inputs) {
  SynthesisJob ablated = job;
  ablated.layers = layers;
  return synthesize(handle, ablated, inputs);
}

}  // namespace imagine
