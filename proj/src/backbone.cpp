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

#include "imagine/backbone.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>

#include "networks.hpp"

namespace imagine {

namespace {

constexpr InputNormalization kImageNetNormalization{{0.485, 0.456, 0.406},
                                                    {0.229, 0.224, 0.225}};

ArchitectureInfo resnet50_info(std::string id, std::int64_t classes) {
  ArchitectureInfo info;
  info.id = std::move(id);
  info.class_count = classes;
  info.tap_layers = detail::ResNet50Impl::tap_names();
  info.reference_layers = {"conv1_1", "conv2_3", "conv3_4", "conv4_6"};
  info.tap_channels = detail::ResNet50Impl::tap_channels();
  info.normalization = kImageNetNormalization;
  info.dtype = torch::kFloat32;
  return info;
}

ArchitectureInfo tiny_info(const testkit::TinyArchitecture& architecture) {
  ArchitectureInfo info;
  info.id = "tiny-test-net";
  info.class_count = architecture.classes;
  info.tap_layers = {"t1", "t2", "t3"};
  info.reference_layers = info.tap_layers;
  for (std::size_t i = 0; i < 3; ++i)
    info.tap_channels["t" + std::to_string(i + 1)] = architecture.widths[i];
  info.normalization = InputNormalization{};
  info.dtype = torch::kFloat64;
  return info;
}

const std::vector<ArchitectureInfo>& registry() {
  static const std::vector<ArchitectureInfo> infos{
      resnet50_info("resnet50-imagenet", 1000),
      resnet50_info("resnet50-places365", 365),
      resnet50_info("resnet50-cub200", 200),
      tiny_info(testkit::TinyArchitecture{}),
  };
  return infos;
}

std::shared_ptr<TappedNetworkImpl> build_network(const ArchitectureInfo& info) {
  std::shared_ptr<TappedNetworkImpl> net;
  if (info.id == "tiny-test-net") {
    testkit::TinyArchitecture arch;
    arch.classes = info.class_count;
    for (std::size_t i = 0; i < 3; ++i)
      arch.widths[i] = info.tap_channels.at("t" + std::to_string(i + 1));
    net = std::make_shared<detail::TinyNetImpl>(arch);
  } else {
    net = std::make_shared<detail::ResNet50Impl>(info.class_count);
  }
  net->to(info.dtype);
  return net;
}

std::map<std::string, std::vector<std::int64_t>> parameter_shapes(
    torch::nn::Module& module) {
  std::map<std::string, std::vector<std::int64_t>> shapes;
  for (const auto& item : module.named_parameters())
    shapes[item.key()] = item.value().sizes().vec();
  for (const auto& item : module.named_buffers())
    shapes[item.key()] = item.value().sizes().vec();
  return shapes;
}

std::string join(const LayerSet& names) { return fmt::format("{}", fmt::join(names, ", ")); }

}  // namespace

const ArchitectureInfo& architecture_info(const std::string& architecture_id) {
  for (const auto& info : registry())
    if (info.id == architecture_id) return info;
  throw LoadError(fmt::format("unknown architecture '{}'; known: {}",
                              architecture_id, join(known_architectures())));
}

std::vector<std::string> known_architectures() {
  std::vector<std::string> ids;
  for (const auto& info : registry()) ids.push_back(info.id);
  return ids;
}

ClassifierHandle::ClassifierHandle(ArchitectureInfo info,
                                   std::shared_ptr<TappedNetworkImpl> network)
    : info_(std::move(info)), network_(std::move(network)) {
  network_->eval();
  for (auto& p : network_->parameters()) p.set_requires_grad(false);
  auto running = network_->running_statistics();
  if (!running.empty()) {
    FeatureStats stats;
    for (auto& [name, moments] : running) {
      stats[name] = ChannelStats{moments.first.detach().clone(),
                                 moments.second.detach().clamp_min(0.0).sqrt()};
    }
    dataset_stats_ = std::move(stats);
  }
}

bool ClassifierHandle::has_tap(const std::string& name) const {
  return std::find(info_.tap_layers.begin(), info_.tap_layers.end(), name) !=
         info_.tap_layers.end();
}

std::uint64_t ClassifierHandle::parameter_checksum() const {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](const torch::Tensor& t) {
    auto c = t.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  for (const auto& item : network_->named_parameters()) mix(item.value());
  for (const auto& item : network_->named_buffers()) mix(item.value());
  return hash;
}

std::filesystem::path weights_directory() {
  if (const char* dir = std::getenv("IMAGINE_WEIGHTS_DIR"); dir && *dir) {
    return dir;
  }
  const char* home = std::getenv("HOME");
  return std::filesystem::path(home ? home : ".") / ".cache" / "imagine" / "weights";
}

std::filesystem::path registry_path(const std::string& architecture_id) {
  return weights_directory() / (architecture_id + ".pt");
}

ClassifierHandle make_tiny_classifier(const testkit::TinyWeights& weights) {
  auto info = tiny_info(weights.architecture);
  auto net = std::make_shared<detail::TinyNetImpl>(weights.architecture);
  net->to(torch::kFloat64);
  net->assign(weights);
  return ClassifierHandle(std::move(info), std::move(net));
}

ClassifierHandle make_untrained_classifier(const std::string& architecture_id,
                                           std::uint64_t seed) {
  const auto& info = architecture_info(architecture_id);
  if (info.id == "tiny-test-net") {
    testkit::TinyArchitecture arch;
    arch.seed = seed;
    return make_tiny_classifier(testkit::generate_tiny_weights(arch));
  }
  torch::manual_seed(seed);
  return ClassifierHandle(info, build_network(info));
}

void save_classifier_weights(const ClassifierHandle& handle,
                             const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  handle.network().save(archive);
  archive.save_to(path.string());
}

ClassifierHandle load_classifier(const std::string& architecture_id,
                                 const std::string& weights_source,
                                 const LoadOptions& options) {
  const auto& info = architecture_info(architecture_id);
  const LayerSet& required =
      options.required_taps.empty() ? info.reference_layers : options.required_taps;
  LayerSet missing;
  for (const auto& tap : required) {
    if (std::find(info.tap_layers.begin(), info.tap_layers.end(), tap) ==
        info.tap_layers.end())
      missing.push_back(tap);
  }
  if (!missing.empty()) {
    throw LoadError(fmt::format("architecture '{}' has no tap(s) {}; available taps: {}",
                                info.id, join(missing), join(info.tap_layers)));
  }

  if (info.id == "tiny-test-net" && weights_source.starts_with("testkit")) {
    testkit::TinyArchitecture arch;
    if (weights_source.size() > 7) {
      if (weights_source[7] != ':')
        throw LoadError("malformed testkit weights source '" + weights_source + "'");
      try {
        arch.seed = std::stoull(weights_source.substr(8));
      } catch (const std::exception&) {
        throw LoadError("malformed testkit seed in '" + weights_source + "'");
      }
    }
    return make_tiny_classifier(testkit::generate_tiny_weights(arch));
  }

  const std::filesystem::path path =
      (weights_source.empty() || weights_source == "registry")
          ? registry_path(info.id)
          : std::filesystem::path(weights_source);
  if (!std::filesystem::is_regular_file(path)) {
    throw LoadError(fmt::format("weights for '{}' not found at {}", info.id, path.string()));
  }

  auto net = build_network(info);
  const auto expected = parameter_shapes(*net);
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    net->load(archive);
  } catch (const c10::Error& e) {
    throw LoadError(fmt::format("corrupt or incomplete weights at {}: {}",
                                path.string(), e.what_without_backtrace()));
  }
  net->to(info.dtype);
  if (parameter_shapes(*net) != expected) {
    throw LoadError(fmt::format("weights at {} do not match architecture '{}'",
                                path.string(), info.id));
  }
  return ClassifierHandle(info, std::move(net));
}

FeatureBundle forward_with_features(const ClassifierHandle& handle,
                                    const torch::Tensor& images,
                                    const LayerSet& layers,
                                    bool with_norm_inputs) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ShapeError(fmt::format("expected images of shape (batch, 3, H, W), got {}",
                                 fmt::join(images.sizes(), "x")));
  }
  for (const auto& layer : layers) {
    if (!handle.has_tap(layer)) {
      throw Error(fmt::format("unknown layer '{}'; available taps: {}", layer,
                              join(handle.tap_layers())));
    }
  }
  const auto opts = torch::TensorOptions().dtype(handle.dtype());
  const auto& norm = handle.normalization();
  auto mean = torch::tensor({norm.mean[0], norm.mean[1], norm.mean[2]}, opts).view({1, 3, 1, 1});
  auto stddev = torch::tensor({norm.stddev[0], norm.stddev[1], norm.stddev[2]}, opts).view({1, 3, 1, 1});
  auto input = (images.to(handle.dtype()) - mean) / stddev;
  TappedNetworkImpl::Request request{&layers, with_norm_inputs};
  return handle.network().run(input, request);
}

torch::Tensor safe_sqrt(const torch::Tensor& x) {
  auto positive = x > 0;
  auto safe = torch::where(positive, x, torch::ones_like(x));
  return torch::where(positive, torch::sqrt(safe), torch::zeros_like(x));
}

ChannelStats channel_stats(const torch::Tensor& activations) {
  if (activations.dim() != 4) {
    throw ShapeError("channel statistics need (batch, channels, h, w) activations");
  }
  auto mean = activations.mean({0, 2, 3});
  auto centered = activations - mean.view({1, -1, 1, 1});
  auto var = (centered * centered).mean({0, 2, 3});
  return ChannelStats{mean, safe_sqrt(var)};
}

FeatureStats channel_stats(const FeatureBundle& bundle, const LayerSet& layers,
                           FeatureSite site) {
  const auto& source =
      site == FeatureSite::kActivation ? bundle.activations : bundle.norm_inputs;
  FeatureStats stats;
  for (const auto& layer : layers) {
    auto it = source.find(layer);
    if (it == source.end()) {
      throw Error(fmt::format("layer '{}' missing from feature bundle", layer));
    }
    stats[layer] = channel_stats(it->second);
  }
  return stats;
}

FeatureStats dataset_stats(const ClassifierHandle& handle,
                           const LayerSet& layers) {
  const auto& stored = handle.stored_dataset_stats();
  FeatureStats out;
  for (const auto& layer : layers) {
    if (!stored || !stored->contains(layer)) {
      throw Error(fmt::format("no stored dataset statistics for layer '{}'", layer));
    }
    out[layer] = stored->at(layer);
  }
  return out;
}

std::int64_t predict_class(const ClassifierHandle& handle,
                           const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  auto bundle = forward_with_features(handle, image, {});
  return bundle.logits[0].argmax().item<std::int64_t>();
}

}  // namespace imagine
