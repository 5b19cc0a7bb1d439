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

// Desk-scale fixtures and reference oracles.
//
// Nothing in this header depends on the tensor runtime: every oracle is an
// explicit double-precision loop so it can check the production path without
// sharing code with it.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace imagine::testkit {

/// Dense NCHW array of doubles.
struct Array4 {
  std::array<std::int64_t, 4> shape{0, 0, 0, 0};
  std::vector<double> data;

  Array4() = default;
  Array4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
         double fill = 0.0);

  std::int64_t batch() const { return shape[0]; }
  std::int64_t channels() const { return shape[1]; }
  std::int64_t height() const { return shape[2]; }
  std::int64_t width() const { return shape[3]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) *
                                             shape[3] +
                                         w)];
  }
  double at(std::int64_t n, std::int64_t c, std::int64_t h,
            std::int64_t w) const {
    return data[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) *
                                             shape[3] +
                                         w)];
  }
};

/// 3x3 convolution, stride 2, zero padding 1.
struct TinyConv {
  std::int64_t out_channels = 0;
  std::int64_t in_channels = 0;
  std::vector<double> weight;  // [out][in][3][3]
  std::vector<double> bias;    // [out]
};

struct TinyArchitecture {
  std::array<std::int64_t, 3> widths{8, 16, 32};
  std::int64_t classes = 10;
  std::uint64_t seed = 20211209;
};

/// Parameters of the desk-scale classifier: three conv+rectifier blocks
/// (taps t1, t2, t3), global average pooling and a linear head.
struct TinyWeights {
  TinyArchitecture architecture;
  std::array<TinyConv, 3> blocks;
  std::vector<double> head_weight;  // [classes][widths[2]]
  std::vector<double> head_bias;    // [classes]
  // Synthetic running statistics per block (mean 0, variance 1).
  std::array<std::vector<double>, 3> running_mean;
  std::array<std::vector<double>, 3> running_var;
};

inline constexpr std::int64_t kTinyKernel = 3;
inline constexpr std::int64_t kTinyStride = 2;
inline constexpr std::int64_t kTinyPadding = 1;

/// Seed-deterministic He-normal weights with small random biases.
TinyWeights generate_tiny_weights(const TinyArchitecture& architecture = {});

struct OracleForward {
  std::array<Array4, 3> taps;            // post-rectifier block outputs
  std::array<Array4, 3> pre_activation;  // conv outputs before the rectifier
  std::vector<std::vector<double>> logits;  // [batch][classes]
};

/// Direct loop evaluation of the tiny classifier on pixel-space input
/// (the tiny classifier uses identity input normalization).
OracleForward forward_oracle(const TinyWeights& weights, const Array4& image);

struct ChannelMoments {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
};

/// Per-channel mean and population std over batch and spatial axes.
ChannelMoments stat_oracle(const Array4& activations);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (L(x + eps e_i) - L(x - eps e_i)) / 2 eps for every
/// coordinate. Throws std::domain_error naming the coordinate if a probe is
/// non-finite.
std::vector<double> finite_diff_grad(const ScalarFunction& loss,
                                     std::span<const double> point,
                                     double eps);

struct RefinedGradient {
  std::vector<double> gradient;
  // Coordinates where the base step straddled a kink of the loss and a
  // smaller step was needed for the estimates to agree.
  std::vector<std::size_t> refined;
  // Coordinates with no successive pair agreeing within the tolerance.
  std::vector<std::size_t> unresolved;
};

/// Central differences with per-coordinate step refinement. Starting from
/// `eps`, the step is divided by 10 until two successive estimates agree to
/// `agreement` relative error. If none do down to `min_eps`, the coarser
/// estimate of the most consistent successive pair is used and the coordinate
/// is reported unresolved.
RefinedGradient refined_finite_diff_grad(const ScalarFunction& loss,
                                         std::span<const double> point,
                                         double eps, double min_eps = 1e-7,
                                         double agreement = 1e-6);

struct GradientComparison {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;  // coordinates with |g| above the threshold
};

/// Relative error |a - b| / max(|a|, |b|) over coordinates where either
/// magnitude exceeds `threshold`; `skip` lists coordinates to leave out.
GradientComparison compare_gradients(std::span<const double> analytic,
                                     std::span<const double> numeric,
                                     double threshold,
                                     std::span<const std::size_t> skip = {});

/// Bilinear resize with half-pixel centers (align-corners off).
std::vector<double> bilinear_resize(std::span<const double> map,
                                    std::int64_t height, std::int64_t width,
                                    std::int64_t out_height,
                                    std::int64_t out_width);

/// Procedural target image in [0,1]: a warm disc and a dark bar over a
/// vertical gradient. Shape (1, 3, size, size).
Array4 desk_target(std::int64_t size);

/// I.i.d. uniform [lo, hi) array from a seeded engine.
Array4 random_array(std::int64_t n, std::int64_t c, std::int64_t h,
                    std::int64_t w, std::uint64_t seed, double lo = 0.0,
                    double hi = 1.0);

}  // namespace imagine::testkit
