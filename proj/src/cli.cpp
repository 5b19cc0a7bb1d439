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

#include "imagine/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "imagine/backbone.hpp"
#include "imagine/image_io.hpp"
#include "imagine/job_config.hpp"
#include "imagine/pipeline.hpp"

namespace imagine::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string target;
  std::string out_dir = ".";
  std::optional<std::int64_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> iters_stage1;
  std::optional<std::int64_t> iters_stage2;
  std::string size;
  std::optional<std::int64_t> target_class;
  std::string architecture;
  std::string weights;
  std::string job_id;
  std::optional<std::int64_t> parallel;
  std::string blob_center;
  std::optional<double> blob_sigma;
  std::string clipart;
  std::string style;
  std::string query;
  std::string mask_query;
  std::string mask_cf;
  std::string layers;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, fmt::format("expected a number, got '{}'", s));
  }
}

void parse_size(const std::string& text, SynthesisJob& job) {
  auto parts = split(text, 'x');
  if (parts.size() == 1) parts.push_back(parts[0]);
  if (parts.size() != 2) throw ConfigError("size", "expected N or HxW");
  job.height = static_cast<std::int64_t>(parse_double(parts[0], "size"));
  job.width = static_cast<std::int64_t>(parse_double(parts[1], "size"));
}

SynthesisJob build_job(const Options& o, std::optional<SynthesisMode> mode) {
  SynthesisJob job = o.config.empty() ? SynthesisJob{} : load_job_config(o.config);
  if (mode) job.mode = *mode;
  if (!o.target.empty()) job.target = o.target;
  if (o.samples) job.samples = *o.samples;
  if (o.seed) job.seed = *o.seed;
  if (o.iters_stage1) job.stage1_iterations = *o.iters_stage1;
  if (o.iters_stage2) job.stage2_iterations = *o.iters_stage2;
  if (!o.size.empty()) parse_size(o.size, job);
  if (o.target_class) job.target_class = *o.target_class;
  if (!o.architecture.empty()) job.architecture = o.architecture;
  if (!o.weights.empty()) job.weights_source = o.weights;
  if (!o.job_id.empty()) job.job_id = o.job_id;
  if (o.parallel) job.parallel = *o.parallel;
  if (!o.clipart.empty()) job.clipart = o.clipart;
  if (!o.style.empty()) job.style = o.style;
  if (!o.query.empty()) job.query = o.query;
  if (!o.mask_query.empty()) job.query_mask = o.mask_query;
  if (!o.mask_cf.empty()) job.counterfactual_mask = o.mask_cf;
  if (!o.blob_center.empty()) {
    auto parts = split(o.blob_center, ',');
    if (parts.size() != 2) throw ConfigError("blob-center", "expected ROW,COL");
    BlobSpec blob = job.blob.value_or(BlobSpec{});
    blob.row = parse_double(parts[0], "blob-center");
    blob.col = parse_double(parts[1], "blob-center");
    if (!(blob.sigma > 0.0)) {
      blob.sigma = static_cast<double>(std::min(job.height, job.width)) / 8.0;
    }
    job.blob = blob;
  }
  if (o.blob_sigma) {
    BlobSpec blob = job.blob.value_or(BlobSpec{static_cast<double>(job.height / 2),
                                               static_cast<double>(job.width / 2), 0.0});
    blob.sigma = *o.blob_sigma;
    job.blob = blob;
  }
  return job;
}

void add_job_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Job config file");
  cmd->add_option("--target", o.target, "Target image (the content image in style mode)");
  cmd->add_option("--out-dir", o.out_dir, "Output directory");
  cmd->add_option("--samples", o.samples, "Number of samples");
  cmd->add_option("--seed", o.seed, "Seed of the first sample");
  cmd->add_option("--iters-stage1", o.iters_stage1, "Warm-up iterations");
  cmd->add_option("--iters-stage2", o.iters_stage2, "Adversarial iterations");
  cmd->add_option("--size", o.size, "Output size N or HxW");
  cmd->add_option("--class", o.target_class, "Target class (default: prediction on the target)");
  cmd->add_option("--arch", o.architecture, "Backbone architecture id");
  cmd->add_option("--weights", o.weights, "Weights file, 'registry' or 'testkit'");
  cmd->add_option("--job-id", o.job_id, "Prefix of output file names");
  cmd->add_option("--parallel", o.parallel, "Samples run concurrently");
}

int synthesize_command(const Options& o, SynthesisMode mode, std::optional<LayerSet> ablation,
                       std::ostream& out) {
  SynthesisJob job = build_job(o, mode);
  if (ablation) job.layers = *ablation;
  const SynthesisJob resolved = resolve_job(job);

  SynthesisInputs inputs;
  try {
    inputs = load_inputs(resolved);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("target", e.what());
  }

  auto handle = load_classifier(resolved.architecture, resolved.weights_source,
                                LoadOptions{resolved.layers.value_or(LayerSet{})});
  auto result = synthesize(handle, resolved, inputs);

  fs::create_directories(o.out_dir);
  std::vector<ManifestSample> samples;
  for (std::size_t i = 0; i < result.samples.size(); ++i) {
    const auto& s = result.samples[i];
    ManifestSample entry;
    entry.index = static_cast<std::int64_t>(i);
    entry.seed = s.seed;
    entry.seconds = s.seconds;
    entry.image = fmt::format("{}_{}.png", resolved.job_id, i);
    entry.trace = fmt::format("{}_{}_trace.csv", resolved.job_id, i);
    save_image(s.image, fs::path(o.out_dir) / entry.image);
    s.trace.write_csv(fs::path(o.out_dir) / entry.trace);
    if (s.attribution) {
      entry.attribution = fmt::format("{}_{}_attribution.png", resolved.job_id, i);
      save_map(*s.attribution, fs::path(o.out_dir) / entry.attribution);
    }
    samples.push_back(entry);
    out << fmt::format("sample {} (seed {}): {} in {:.1f}s\n", i, s.seed, entry.image, s.seconds);
  }
  auto manifest = make_manifest(result.job, result.backbone_checksum, result.target_class, samples);
  std::ofstream file(fs::path(o.out_dir) / fmt::format("{}_manifest.json", resolved.job_id));
  file << manifest.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image synthesis by guided inversion of a pre-trained classifier"};
  app.require_subcommand(1);
  Options o;

  struct Mode {
    const char* name;
    const char* help;
    SynthesisMode mode;
  };
  const std::vector<Mode> modes{
      {"synth", "Synthesize variations of the target image", SynthesisMode::kStandard},
      {"position", "Control object position with a Grad-CAM blob target", SynthesisMode::kPosition},
      {"shape", "Take high-level shape from a clipart image", SynthesisMode::kShape},
      {"style", "Restyle the target with the statistics of a style image", SynthesisMode::kStyle},
      {"counterfactual", "Translate a counterfactual region into a query image",
       SynthesisMode::kCounterfactual},
      {"baseline-deepinversion", "Add the dataset-statistics regularizer",
       SynthesisMode::kDeepInversionBaseline},
  };
  std::map<CLI::App*, SynthesisMode> by_command;
  for (const auto& m : modes) {
    auto* cmd = app.add_subcommand(m.name, m.help);
    add_job_options(cmd, o);
    by_command[cmd] = m.mode;
    if (m.mode == SynthesisMode::kPosition) {
      cmd->add_option("--blob-center", o.blob_center, "Blob center ROW,COL in pixels");
      cmd->add_option("--blob-sigma", o.blob_sigma, "Blob standard deviation in pixels");
    }
    if (m.mode == SynthesisMode::kShape) cmd->add_option("--clipart", o.clipart, "Clipart image");
    if (m.mode == SynthesisMode::kStyle) cmd->add_option("--style", o.style, "Style image");
    if (m.mode == SynthesisMode::kCounterfactual) {
      cmd->add_option("--query", o.query, "Query image");
      cmd->add_option("--mask-query", o.mask_query, "Query region mask (white = outside)");
      cmd->add_option("--mask-cf", o.mask_cf, "Counterfactual region mask (white = outside)");
    }
  }
  auto* ablate = app.add_subcommand("ablate", "Synthesize with distribution matching on a subset of layers");
  add_job_options(ablate, o);
  ablate->add_option("--layers", o.layers, "Comma-separated layer set (may be empty)")->required();
  auto* validate_cmd = app.add_subcommand("validate-config", "Resolve a config and print it");
  validate_cmd->add_option("--config", o.config, "Job config file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (validate_cmd->parsed()) {
      auto job = resolve_job(build_job(o, std::nullopt));
      out << serialize_job_config(job);
      return kExitOk;
    }
    if (ablate->parsed()) {
      return synthesize_command(o, SynthesisMode::kStandard, split(o.layers, ','), out);
    }
    for (const auto& [cmd, mode] : by_command) {
      if (cmd->parsed()) return synthesize_command(o, mode, std::nullopt, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace imagine::cli
