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

#include "imagine/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace imagine::testkit {

Array4::Array4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
               double fill)
    : shape{n, c, h, w}, data(static_cast<std::size_t>(n * c * h * w), fill) {}

namespace {

TinyConv make_conv(std::int64_t out, std::int64_t in, std::mt19937_64& rng) {
  TinyConv conv;
  conv.out_channels = out;
  conv.in_channels = in;
  std::normal_distribution<double> weight_dist(
      0.0, std::sqrt(2.0 / static_cast<double>(in * kTinyKernel * kTinyKernel)));
  std::normal_distribution<double> bias_dist(0.0, 0.1);
  conv.weight.resize(static_cast<std::size_t>(out * in * kTinyKernel * kTinyKernel));
  for (auto& w : conv.weight) w = weight_dist(rng);
  conv.bias.resize(static_cast<std::size_t>(out));
  for (auto& b : conv.bias) b = bias_dist(rng);
  return conv;
}

void conv_block(const TinyConv& conv, const Array4& in, Array4& pre,
                Array4& post) {
  const std::int64_t n = in.batch();
  const std::int64_t oh = (in.height() + 2 * kTinyPadding - kTinyKernel) / kTinyStride + 1;
  const std::int64_t ow = (in.width() + 2 * kTinyPadding - kTinyKernel) / kTinyStride + 1;
  pre = Array4(n, conv.out_channels, oh, ow);
  post = Array4(n, conv.out_channels, oh, ow);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t o = 0; o < conv.out_channels; ++o) {
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
          double acc = conv.bias[static_cast<std::size_t>(o)];
          for (std::int64_t i = 0; i < conv.in_channels; ++i) {
            for (std::int64_t ky = 0; ky < kTinyKernel; ++ky) {
              const std::int64_t iy = y * kTinyStride - kTinyPadding + ky;
              if (iy < 0 || iy >= in.height()) continue;
              for (std::int64_t kx = 0; kx < kTinyKernel; ++kx) {
                const std::int64_t ix = x * kTinyStride - kTinyPadding + kx;
                if (ix < 0 || ix >= in.width()) continue;
                const auto widx = static_cast<std::size_t>(
                    ((o * conv.in_channels + i) * kTinyKernel + ky) * kTinyKernel + kx);
                acc += conv.weight[widx] * in.at(b, i, iy, ix);
              }
            }
          }
          pre.at(b, o, y, x) = acc;
          post.at(b, o, y, x) = acc > 0.0 ? acc : 0.0;
        }
      }
    }
  }
}

}  // namespace

TinyWeights generate_tiny_weights(const TinyArchitecture& architecture) {
  std::mt19937_64 rng(architecture.seed);
  TinyWeights weights;
  weights.architecture = architecture;
  std::int64_t in = 3;
  for (std::size_t i = 0; i < 3; ++i) {
    weights.blocks[i] = make_conv(architecture.widths[i], in, rng);
    in = architecture.widths[i];
    weights.running_mean[i].assign(static_cast<std::size_t>(in), 0.0);
    weights.running_var[i].assign(static_cast<std::size_t>(in), 1.0);
  }
  std::normal_distribution<double> head_dist(0.0, std::sqrt(1.0 / static_cast<double>(in)));
  weights.head_weight.resize(static_cast<std::size_t>(architecture.classes * in));
  for (auto& w : weights.head_weight) w = head_dist(rng);
  weights.head_bias.assign(static_cast<std::size_t>(architecture.classes), 0.0);
  return weights;
}

OracleForward forward_oracle(const TinyWeights& weights, const Array4& image) {
  OracleForward out;
  const Array4* in = &image;
  for (std::size_t i = 0; i < 3; ++i) {
    conv_block(weights.blocks[i], *in, out.pre_activation[i], out.taps[i]);
    in = &out.taps[i];
  }
  const Array4& last = out.taps[2];
  const std::int64_t classes = weights.architecture.classes;
  const std::int64_t channels = last.channels();
  const double area = static_cast<double>(last.height() * last.width());
  out.logits.assign(static_cast<std::size_t>(last.batch()),
                    std::vector<double>(static_cast<std::size_t>(classes), 0.0));
  for (std::int64_t b = 0; b < last.batch(); ++b) {
    std::vector<double> pooled(static_cast<std::size_t>(channels), 0.0);
    for (std::int64_t c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (std::int64_t y = 0; y < last.height(); ++y)
        for (std::int64_t x = 0; x < last.width(); ++x) sum += last.at(b, c, y, x);
      pooled[static_cast<std::size_t>(c)] = sum / area;
    }
    for (std::int64_t k = 0; k < classes; ++k) {
      double acc = weights.head_bias[static_cast<std::size_t>(k)];
      for (std::int64_t c = 0; c < channels; ++c)
        acc += weights.head_weight[static_cast<std::size_t>(k * channels + c)] *
               pooled[static_cast<std::size_t>(c)];
      out.logits[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = acc;
    }
  }
  return out;
}

ChannelMoments stat_oracle(const Array4& activations) {
  const std::int64_t channels = activations.channels();
  ChannelMoments moments;
  moments.mean.assign(static_cast<std::size_t>(channels), 0.0);
  moments.stddev.assign(static_cast<std::size_t>(channels), 0.0);
  const double count = static_cast<double>(activations.batch() *
                                           activations.height() *
                                           activations.width());
  for (std::int64_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::int64_t n = 0; n < activations.batch(); ++n)
      for (std::int64_t y = 0; y < activations.height(); ++y)
        for (std::int64_t x = 0; x < activations.width(); ++x)
          sum += activations.at(n, c, y, x);
    const double mean = sum / count;
    double sq = 0.0;
    for (std::int64_t n = 0; n < activations.batch(); ++n)
      for (std::int64_t y = 0; y < activations.height(); ++y)
        for (std::int64_t x = 0; x < activations.width(); ++x) {
          const double d = activations.at(n, c, y, x) - mean;
          sq += d * d;
        }
    moments.mean[static_cast<std::size_t>(c)] = mean;
    moments.stddev[static_cast<std::size_t>(c)] = std::sqrt(sq / count);
  }
  return moments;
}

namespace {

double central_difference(const ScalarFunction& loss, std::vector<double>& x,
                          std::size_t i, double eps) {
  const double saved = x[i];
  x[i] = saved + eps;
  const double plus = loss(x);
  x[i] = saved - eps;
  const double minus = loss(x);
  x[i] = saved;
  if (!std::isfinite(plus) || !std::isfinite(minus)) {
    throw std::domain_error("non-finite loss probing coordinate " +
                            std::to_string(i));
  }
  return (plus - minus) / (2.0 * eps);
}

}  // namespace

std::vector<double> finite_diff_grad(const ScalarFunction& loss,
                                     std::span<const double> point,
                                     double eps) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    grad[i] = central_difference(loss, x, i, eps);
  }
  return grad;
}

RefinedGradient refined_finite_diff_grad(const ScalarFunction& loss,
                                         std::span<const double> point,
                                         double eps, double min_eps,
                                         double agreement) {
  std::vector<double> x(point.begin(), point.end());
  RefinedGradient out;
  out.gradient.assign(x.size(), 0.0);
  auto relative_gap = [](double a, double b) {
    const double gap = std::abs(a - b);
    if (gap <= 1e-12) return 0.0;
    return gap / std::max({std::abs(a), std::abs(b), 1e-300});
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> estimates{central_difference(loss, x, i, eps)};
    double step = eps;
    std::size_t best = 0;
    double best_gap = INFINITY;
    while (step / 10.0 >= min_eps * (1.0 - 1e-12)) {
      step /= 10.0;
      estimates.push_back(central_difference(loss, x, i, step));
      const std::size_t k = estimates.size() - 2;
      const double gap = relative_gap(estimates[k], estimates[k + 1]);
      if (gap < best_gap) {
        best_gap = gap;
        best = k;
      }
      if (gap <= agreement) break;
    }
    // The coarser estimate of the most consistent pair carries the least
    // round-off.
    out.gradient[i] = estimates[best];
    if (best_gap > agreement) {
      out.unresolved.push_back(i);
    } else if (best > 0) {
      out.refined.push_back(i);
    }
  }
  return out;
}

GradientComparison compare_gradients(std::span<const double> analytic,
                                     std::span<const double> numeric,
                                     double threshold,
                                     std::span<const std::size_t> skip) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("gradient length mismatch");
  }
  GradientComparison result;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale <= threshold) continue;
    ++result.checked;
    const double rel = std::abs(analytic[i] - numeric[i]) / scale;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

std::vector<double> bilinear_resize(std::span<const double> map,
                                    std::int64_t height, std::int64_t width,
                                    std::int64_t out_height,
                                    std::int64_t out_width) {
  std::vector<double> out(static_cast<std::size_t>(out_height * out_width), 0.0);
  const double sy = static_cast<double>(height) / static_cast<double>(out_height);
  const double sx = static_cast<double>(width) / static_cast<double>(out_width);
  auto at = [&](std::int64_t y, std::int64_t x) {
    return map[static_cast<std::size_t>(y * width + x)];
  };
  for (std::int64_t oy = 0; oy < out_height; ++oy) {
    double fy = std::max(0.0, (static_cast<double>(oy) + 0.5) * sy - 0.5);
    std::int64_t y0 = std::min(static_cast<std::int64_t>(fy), height - 1);
    std::int64_t y1 = std::min(y0 + 1, height - 1);
    double wy = fy - static_cast<double>(y0);
    for (std::int64_t ox = 0; ox < out_width; ++ox) {
      double fx = std::max(0.0, (static_cast<double>(ox) + 0.5) * sx - 0.5);
      std::int64_t x0 = std::min(static_cast<std::int64_t>(fx), width - 1);
      std::int64_t x1 = std::min(x0 + 1, width - 1);
      double wx = fx - static_cast<double>(x0);
      out[static_cast<std::size_t>(oy * out_width + ox)] =
          (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
          wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
    }
  }
  return out;
}

Array4 desk_target(std::int64_t size) {
  Array4 image(1, 3, size, size);
  const double s = static_cast<double>(size);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double v = static_cast<double>(y) / s;
      double r = 0.25 + 0.2 * v;
      double g = 0.45 + 0.25 * v;
      double b = 0.8 - 0.4 * v;
      const double dy = static_cast<double>(y) - 0.45 * s;
      const double dx = static_cast<double>(x) - 0.4 * s;
      if (dx * dx + dy * dy < (0.22 * s) * (0.22 * s)) {
        r = 0.95;
        g = 0.55 + 0.2 * std::sin(0.8 * static_cast<double>(x));
        b = 0.15;
      }
      if (x > 0.7 * s && x < 0.82 * s && y > 0.2 * s && y < 0.85 * s) {
        r = g = b = 0.08;
      }
      image.at(0, 0, y, x) = r;
      image.at(0, 1, y, x) = g;
      image.at(0, 2, y, x) = b;
    }
  }
  return image;
}

Array4 random_array(std::int64_t n, std::int64_t c, std::int64_t h,
                    std::int64_t w, std::uint64_t seed, double lo, double hi) {
  Array4 out(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : out.data) v = dist(rng);
  return out;
}

}  // namespace imagine::testkit
