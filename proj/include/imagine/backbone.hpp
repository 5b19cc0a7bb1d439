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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imagine/error.hpp"
#include "imagine/testkit.hpp"

namespace imagine {

/// Per-channel affine map from [0,1] pixels to classifier input space.
struct InputNormalization {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

/// Where a tap's activations are read.
enum class FeatureSite {
  kActivation,  // block output after the rectifier
  kNormInput,   // input of the block's normalization position
};

/// Activations of one forward pass. Tensors are (batch, channels, h, w) and
/// stay attached to the autograd graph of the input image.
struct FeatureBundle {
  std::map<std::string, torch::Tensor> activations;
  std::map<std::string, torch::Tensor> norm_inputs;
  torch::Tensor logits;  // (batch, classes)
};

/// Channel-wise mean and population standard deviation of one layer.
struct ChannelStats {
  torch::Tensor mean;
  torch::Tensor stddev;
};

using FeatureStats = std::map<std::string, ChannelStats>;

/// Network interface the backbone wraps: a classifier that can record named
/// intermediate activations during its forward pass.
class TappedNetworkImpl : public torch::nn::Module {
 public:
  struct Request {
    const std::vector<std::string>* taps = nullptr;
    bool norm_inputs = false;
  };

  /// `input` is already normalized.
  virtual FeatureBundle run(const torch::Tensor& input,
                            const Request& request) = 0;
  /// Running mean/variance recorded at each tap's normalization position.
  virtual std::map<std::string, std::pair<torch::Tensor, torch::Tensor>>
  running_statistics() = 0;
};

/// Static description of a supported architecture.
struct ArchitectureInfo {
  std::string id;
  std::int64_t class_count = 0;
  LayerSet tap_layers;       // every tap the network exposes, in depth order
  LayerSet reference_layers; // default distribution-matching taps
  std::map<std::string, std::int64_t> tap_channels;
  InputNormalization normalization;
  torch::Dtype dtype = torch::kFloat32;
};

/// Known architecture ids: "resnet50-imagenet", "resnet50-places365",
/// "resnet50-cub200" and "tiny-test-net". Throws LoadError listing the known
/// ids otherwise.
const ArchitectureInfo& architecture_info(const std::string& architecture_id);
std::vector<std::string> known_architectures();

/// Frozen classifier. Immutable after load; share it freely between jobs.
class ClassifierHandle {
 public:
  ClassifierHandle(ArchitectureInfo info,
                   std::shared_ptr<TappedNetworkImpl> network);

  const std::string& architecture_id() const { return info_.id; }
  std::int64_t class_count() const { return info_.class_count; }
  const LayerSet& tap_layers() const { return info_.tap_layers; }
  const LayerSet& reference_layers() const { return info_.reference_layers; }
  const InputNormalization& normalization() const { return info_.normalization; }
  torch::Dtype dtype() const { return info_.dtype; }
  const ArchitectureInfo& info() const { return info_; }
  const std::optional<FeatureStats>& stored_dataset_stats() const {
    return dataset_stats_;
  }
  bool has_tap(const std::string& name) const;

  /// FNV-1a over every parameter and buffer, in registration order.
  std::uint64_t parameter_checksum() const;

  TappedNetworkImpl& network() const { return *network_; }

 private:
  ArchitectureInfo info_;
  std::shared_ptr<TappedNetworkImpl> network_;
  std::optional<FeatureStats> dataset_stats_;
};

struct LoadOptions {
  // Taps the caller needs; empty means the architecture's reference taps.
  LayerSet required_taps;
};

/// Directory holding registry weights: $IMAGINE_WEIGHTS_DIR when set,
/// otherwise ~/.cache/imagine/weights.
std::filesystem::path weights_directory();
/// Registry file for an architecture id: <weights_directory>/<id>.pt
std::filesystem::path registry_path(const std::string& architecture_id);

/// `weights_source` is "registry" (or empty) for the registry file, a file
/// path, or, for tiny-test-net only, "testkit" / "testkit:<seed>" for
/// generated weights.
ClassifierHandle load_classifier(const std::string& architecture_id,
                                 const std::string& weights_source,
                                 const LoadOptions& options = {});

/// Builds the tiny classifier from explicit fixture weights.
ClassifierHandle make_tiny_classifier(const testkit::TinyWeights& weights);

/// Builds a randomly initialized network of a known architecture; used to
/// produce weight files and for shape tests.
ClassifierHandle make_untrained_classifier(const std::string& architecture_id,
                                           std::uint64_t seed);

/// Serializes the network parameters in the format load_classifier reads.
void save_classifier_weights(const ClassifierHandle& handle,
                             const std::filesystem::path& path);

/// Runs the classifier on pixel-space images (batch, 3, H, W) in [0,1].
/// Normalization is applied internally; gradients flow back to `images`.
FeatureBundle forward_with_features(const ClassifierHandle& handle,
                                    const torch::Tensor& images,
                                    const LayerSet& layers,
                                    bool with_norm_inputs = false);

/// Reduces every requested layer over batch and spatial axes.
FeatureStats channel_stats(const FeatureBundle& bundle, const LayerSet& layers,
                           FeatureSite site = FeatureSite::kActivation);

/// Per-channel statistics of one activation tensor (batch, c, h, w).
ChannelStats channel_stats(const torch::Tensor& activations);

/// Stored running statistics (std = sqrt(running variance)).
FeatureStats dataset_stats(const ClassifierHandle& handle,
                           const LayerSet& layers);

/// sqrt with a zero subgradient at 0 instead of an infinite one.
torch::Tensor safe_sqrt(const torch::Tensor& x);

/// Predicted class of a single image.
std::int64_t predict_class(const ClassifierHandle& handle,
                           const torch::Tensor& image);

}  // namespace imagine
