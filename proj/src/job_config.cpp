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

#include "imagine/job_config.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace imagine {

namespace {

using nlohmann::json;

struct Field {
  std::string section;
  std::string key;
  std::function<json(const SynthesisJob&)> get;
  std::function<void(SynthesisJob&, const std::string&)> set;

  std::string name() const { return section + "." + key; }
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const auto s = trim(text);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key, fmt::format("expected a number, got '{}'", text));
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& key) {
  const auto s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key, fmt::format("expected true or false, got '{}'", text));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<std::int64_t>(item, key));
  return out;
}

template <typename T>
Field number(std::string section, std::string key, T SynthesisJob::*member) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key),
          [member](const SynthesisJob& j) { return json(j.*member); },
          [member, name](SynthesisJob& j, const std::string& v) {
            j.*member = parse_number<T>(v, name);
          }};
}

template <typename T>
Field weight(std::string key, T LossWeights::*member) {
  const std::string name = "weights." + key;
  return {"weights", std::move(key),
          [member](const SynthesisJob& j) { return json(j.weights.*member); },
          [member, name](SynthesisJob& j, const std::string& v) {
            j.weights.*member = parse_number<T>(v, name);
          }};
}

template <typename T>
Field critic(std::string key, T CriticConfig::*member) {
  const std::string name = "critic." + key;
  return {"critic", std::move(key),
          [member](const SynthesisJob& j) { return json(j.critic.*member); },
          [member, name](SynthesisJob& j, const std::string& v) {
            j.critic.*member = parse_number<T>(v, name);
          }};
}

Field text(std::string section, std::string key, std::string SynthesisJob::*member) {
  return {std::move(section), std::move(key),
          [member](const SynthesisJob& j) { return json(j.*member); },
          [member](SynthesisJob& j, const std::string& v) { j.*member = trim(v); }};
}

Field optional_text(std::string section, std::string key,
                    std::optional<std::string> SynthesisJob::*member) {
  return {std::move(section), std::move(key),
          [member](const SynthesisJob& j) {
            return (j.*member) ? json(*(j.*member)) : json(nullptr);
          },
          [member](SynthesisJob& j, const std::string& v) { j.*member = trim(v); }};
}

Field layer_list(std::string key, std::optional<LayerSet> SynthesisJob::*member) {
  return {"layers", std::move(key),
          [member](const SynthesisJob& j) {
            return (j.*member) ? json(*(j.*member)) : json(nullptr);
          },
          [member](SynthesisJob& j, const std::string& v) { j.*member = split_list(v); }};
}

Field blob_field(std::string key, double BlobSpec::*member) {
  const std::string name = "location." + key;
  return {"location", std::move(key),
          [member](const SynthesisJob& j) {
            return j.blob ? json(*j.blob.*member) : json(nullptr);
          },
          [member, name](SynthesisJob& j, const std::string& v) {
            if (!j.blob) j.blob = BlobSpec{};
            (*j.blob).*member = parse_number<double>(v, name);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("job", "id", &SynthesisJob::job_id));
    f.push_back({"job", "mode",
                 [](const SynthesisJob& j) { return json(std::string(to_string(j.mode))); },
                 [](SynthesisJob& j, const std::string& v) {
                   try {
                     j.mode = parse_mode(trim(v));
                   } catch (const ConfigError& e) {
                     throw ConfigError("job.mode", e.what());
                   }
                 }});
    f.push_back(text("job", "architecture", &SynthesisJob::architecture));
    f.push_back(text("job", "weights", &SynthesisJob::weights_source));
    f.push_back(text("job", "target", &SynthesisJob::target));
    f.push_back(optional_text("job", "clipart", &SynthesisJob::clipart));
    f.push_back(optional_text("job", "style", &SynthesisJob::style));
    f.push_back(optional_text("job", "query", &SynthesisJob::query));
    f.push_back(optional_text("job", "mask_query", &SynthesisJob::query_mask));
    f.push_back(optional_text("job", "mask_cf", &SynthesisJob::counterfactual_mask));
    f.push_back({"job", "class",
                 [](const SynthesisJob& j) {
                   return j.target_class ? json(*j.target_class) : json(nullptr);
                 },
                 [](SynthesisJob& j, const std::string& v) {
                   j.target_class = parse_number<std::int64_t>(v, "job.class");
                 }});
    f.push_back(number("job", "seed", &SynthesisJob::seed));
    f.push_back(number("job", "samples", &SynthesisJob::samples));
    f.push_back(number("job", "parallel", &SynthesisJob::parallel));
    f.push_back(number("job", "height", &SynthesisJob::height));
    f.push_back(number("job", "width", &SynthesisJob::width));

    f.push_back(layer_list("distribution", &SynthesisJob::layers));
    f.push_back(layer_list("clipart", &SynthesisJob::clipart_layers));
    f.push_back(layer_list("residual", &SynthesisJob::residual_layers));
    f.push_back(layer_list("style", &SynthesisJob::style_layers));
    f.push_back(layer_list("query", &SynthesisJob::query_layers));
    f.push_back(optional_text("layers", "gradcam", &SynthesisJob::gradcam_layer));

    f.push_back(weight("tv", &LossWeights::total_variation));
    f.push_back(weight("l2", &LossWeights::l2));
    f.push_back(weight("distribution", &LossWeights::distribution));
    f.push_back(weight("patch_stage1", &LossWeights::patch_stage1));
    f.push_back(weight("patch_stage2", &LossWeights::patch_stage2));
    f.push_back(weight("location", &LossWeights::location));
    f.push_back(weight("baseline", &LossWeights::baseline));
    f.push_back(weight("counterfactual", &LossWeights::counterfactual));

    f.push_back(number("schedule", "stage1_iterations", &SynthesisJob::stage1_iterations));
    f.push_back(number("schedule", "stage2_iterations", &SynthesisJob::stage2_iterations));
    f.push_back(number("schedule", "image_lr", &SynthesisJob::image_learning_rate));
    f.push_back(number("schedule", "image_beta1", &SynthesisJob::image_beta1));
    f.push_back(number("schedule", "image_beta2", &SynthesisJob::image_beta2));
    f.push_back(text("schedule", "lr_schedule", &SynthesisJob::lr_schedule));
    f.push_back(number("schedule", "init_low", &SynthesisJob::init_low));
    f.push_back(number("schedule", "init_high", &SynthesisJob::init_high));
    f.push_back(number("schedule", "jitter", &SynthesisJob::jitter));
    f.push_back({"schedule", "single_stage",
                 [](const SynthesisJob& j) { return json(j.single_stage); },
                 [](SynthesisJob& j, const std::string& v) {
                   j.single_stage = parse_bool(v, "schedule.single_stage");
                 }});

    f.push_back({"schedule", "location_stage1",
                 [](const SynthesisJob& j) { return json(j.location_stage1); },
                 [](SynthesisJob& j, const std::string& v) {
                   j.location_stage1 = parse_bool(v, "schedule.location_stage1");
                 }});

    f.push_back({"critic", "widths", [](const SynthesisJob& j) { return json(j.critic.widths); },
                 [](SynthesisJob& j, const std::string& v) {
                   j.critic.widths = parse_int_list(v, "critic.widths");
                 }});
    f.push_back(critic("kernel", &CriticConfig::kernel_size));
    f.push_back({"critic", "strides", [](const SynthesisJob& j) { return json(j.critic.strides); },
                 [](SynthesisJob& j, const std::string& v) {
                   j.critic.strides = parse_int_list(v, "critic.strides");
                 }});
    f.push_back(critic("padding", &CriticConfig::padding));
    f.push_back(critic("slope", &CriticConfig::leaky_slope));
    f.push_back(critic("gradient_penalty", &CriticConfig::gradient_penalty_weight));
    f.push_back(critic("steps_per_image_step", &CriticConfig::steps_per_image_step));
    f.push_back(critic("warmup_steps", &CriticConfig::warmup_steps));
    f.push_back(critic("learning_rate", &CriticConfig::learning_rate));
    f.push_back(critic("beta1", &CriticConfig::adam_beta1));
    f.push_back(critic("beta2", &CriticConfig::adam_beta2));
    f.push_back(critic("init_std", &CriticConfig::init_std));

    f.push_back(blob_field("center_row", &BlobSpec::row));
    f.push_back(blob_field("center_col", &BlobSpec::col));
    f.push_back(blob_field("sigma", &BlobSpec::sigma));
    return f;
  }();
  return table;
}

std::string to_config_value(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (i) out += ",";
      out += value[i].is_string() ? value[i].get<std::string>() : value[i].dump();
    }
    return out;
  }
  return value.dump();
}

}  // namespace

SynthesisJob parse_job_config(std::string_view text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", fmt::format("malformed config (line {}): {}", e.line(), e.message()));
  }
  std::map<std::string, const Field*> by_name;
  for (const auto& f : fields()) by_name[f.name()] = &f;

  SynthesisJob job;
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) {
      throw ConfigError(section, "setting outside of a [section]");
    }
    for (const auto& [key, value] : entries) {
      const auto name = section + "." + key;
      auto it = by_name.find(name);
      if (it == by_name.end()) throw ConfigError(name, "unknown configuration key");
      it->second->set(job, value.get_value<std::string>());
    }
  }
  return job;
}

SynthesisJob load_job_config(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError("config", "cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse_job_config(buffer.str());
}

std::string serialize_job_config(const SynthesisJob& job) {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    const auto value = f.get(job);
    if (value.is_null()) continue;
    if (f.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + to_config_value(value) + "\n";
  }
  return out;
}

std::vector<std::string> job_field_names() {
  std::vector<std::string> names;
  for (const auto& f : fields()) names.push_back(f.name());
  return names;
}

nlohmann::json make_manifest(const SynthesisJob& resolved, std::uint64_t backbone_checksum,
                             std::optional<std::int64_t> target_class,
                             const std::vector<ManifestSample>& samples) {
  json manifest;
  json job = json::object();
  for (const auto& f : fields()) job[f.section][f.key] = f.get(resolved);
  manifest["job"] = job;
  manifest["patch_weight_by_stage"] = {{"1", resolved.weights.patch_stage1},
                                       {"2", resolved.weights.patch_stage2}};
  manifest["backbone"] = {{"architecture", resolved.architecture},
                          {"weights", resolved.weights_source},
                          {"checksum", fmt::format("{:016x}", backbone_checksum)}};
  manifest["target_class"] = target_class ? json(*target_class) : json(nullptr);
  json outputs = json::array();
  for (const auto& s : samples) {
    json entry = {{"index", s.index},     {"seed", s.seed},   {"image", s.image},
                  {"trace", s.trace},     {"seconds", s.seconds}};
    if (!s.attribution.empty()) entry["attribution"] = s.attribution;
    outputs.push_back(entry);
  }
  manifest["samples"] = outputs;
  return manifest;
}

}  // namespace imagine
