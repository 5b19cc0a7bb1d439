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

// Job configuration files: key = value lines grouped in [sections]
//
//   [job]       id mode architecture weights target clipart style query
//               mask_query mask_cf class seed samples parallel height width
//   [layers]    distribution clipart residual style query gradcam
//   [weights]   tv l2 distribution patch_stage1 patch_stage2 location
//               baseline counterfactual
//   [schedule]  stage1_iterations stage2_iterations image_lr image_beta1
//               image_beta2 lr_schedule init_low init_high jitter
//               single_stage location_stage1
//   [critic]    widths kernel strides padding slope gradient_penalty
//               steps_per_image_step warmup_steps learning_rate beta1 beta2
//               init_std
//   [location]  center_row center_col sigma
//
// Layer lists are comma separated; an empty value is an empty set. Lines
// starting with ';' or '#' are comments. Unknown sections or keys are errors.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "imagine/pipeline.hpp"

namespace imagine {

/// Parses a config document; throws ConfigError naming "section.key" for
/// unknown or malformed settings.
SynthesisJob parse_job_config(std::string_view text);
SynthesisJob load_job_config(const std::filesystem::path& path);

/// Emits every set field; parse_job_config(serialize_job_config(j)) == j.
std::string serialize_job_config(const SynthesisJob& job);

/// "section.key" names of every job field, in document order.
std::vector<std::string> job_field_names();

struct ManifestSample {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  std::string image;
  std::string trace;
  std::string attribution;
  double seconds = 0.0;
};

/// Record of a resolved job: every field under "job" (unset optionals as
/// null), the per-stage patch weights, the backbone checksum and any outputs.
nlohmann::json make_manifest(const SynthesisJob& resolved, std::uint64_t backbone_checksum,
                             std::optional<std::int64_t> target_class = std::nullopt,
                             const std::vector<ManifestSample>& samples = {});

}  // namespace imagine
