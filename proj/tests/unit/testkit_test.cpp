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

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "imagine/testkit.hpp"

namespace imagine::testkit {
namespace {

TEST(FiniteDiff, QuadraticMatchesClosedForm) {
  const std::vector<double> a{1.0, -2.0, 0.5, 3.0};
  ScalarFunction f = [&](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += a[i] * x[i] * x[i];
    return s;
  };
  const std::vector<double> point{0.3, -1.2, 2.0, 0.0};
  const auto g = finite_diff_grad(f, point, 1e-3);
  ASSERT_EQ(g.size(), point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    EXPECT_NEAR(g[i], 2.0 * a[i] * point[i], 1e-9);
  }
}

TEST(FiniteDiff, ConstantFunctionHasZeroGradient) {
  ScalarFunction f = [](std::span<const double>) { return 4.2; };
  const std::vector<double> point{1.0, 2.0, 3.0};
  for (double g : finite_diff_grad(f, point, 1e-2)) EXPECT_EQ(g, 0.0);
}

TEST(FiniteDiff, NonFiniteProbeThrows) {
  ScalarFunction f = [](std::span<const double> x) { return std::log(x[0]); };
  const std::vector<double> point{1e-4};
  EXPECT_THROW(finite_diff_grad(f, point, 1e-3), std::domain_error);
}

TEST(RefinedFiniteDiff, ResolvesKinkNearPoint) {
  ScalarFunction f = [](std::span<const double> x) { return std::abs(x[0]) + 2.0 * x[1]; };
  const std::vector<double> point{2e-4, 1.0};
  const auto plain = finite_diff_grad(f, point, 1e-3);
  EXPECT_NEAR(plain[0], 0.2, 1e-9);
  const auto refined = refined_finite_diff_grad(f, point, 1e-3);
  EXPECT_NEAR(refined.gradient[0], 1.0, 1e-9);
  EXPECT_NEAR(refined.gradient[1], 2.0, 1e-9);
  ASSERT_EQ(refined.refined.size(), 1u);
  EXPECT_EQ(refined.refined[0], 0u);
  EXPECT_TRUE(refined.unresolved.empty());
}

TEST(CompareGradients, ReportsWorstIndexAboveThreshold) {
  const std::vector<double> a{1.0, 2.0, 1e-9};
  const std::vector<double> b{1.0, 2.2, 5e-9};
  const auto cmp = compare_gradients(a, b, 1e-6);
  EXPECT_EQ(cmp.checked, 2u);
  EXPECT_EQ(cmp.worst_index, 1u);
  EXPECT_NEAR(cmp.max_relative_error, 0.2 / 2.2, 1e-12);
  const std::vector<std::size_t> skip{1};
  EXPECT_EQ(compare_gradients(a, b, 1e-6, skip).max_relative_error, 0.0);
}

TEST(StatOracle, ClosedFormChannels) {
  Array4 a(1, 2, 2, 2);
  const double ch1[] = {0.0, 2.0, 0.0, 2.0};
  for (int i = 0; i < 4; ++i) {
    a.at(0, 0, i / 2, i % 2) = 1.0;
    a.at(0, 1, i / 2, i % 2) = ch1[i];
  }
  const auto m = stat_oracle(a);
  EXPECT_DOUBLE_EQ(m.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(m.mean[1], 1.0);
  EXPECT_DOUBLE_EQ(m.stddev[0], 0.0);
  EXPECT_DOUBLE_EQ(m.stddev[1], 1.0);
}

TEST(StatOracle, SingleElementHasZeroSpread) {
  Array4 a(1, 3, 1, 1);
  a.data = {0.5, -1.0, 7.0};
  const auto m = stat_oracle(a);
  EXPECT_EQ(m.mean, a.data);
  for (double s : m.stddev) EXPECT_EQ(s, 0.0);
}

TEST(ForwardOracle, ZeroImagePropagatesBiases) {
  const auto weights = generate_tiny_weights();
  const auto out = forward_oracle(weights, Array4(1, 3, 8, 8));
  const auto& first = out.taps[0];
  ASSERT_EQ(first.channels(), weights.blocks[0].out_channels);
  EXPECT_EQ(first.height(), 4);
  for (std::int64_t c = 0; c < first.channels(); ++c) {
    const double expected = std::max(0.0, weights.blocks[0].bias[c]);
    for (std::int64_t h = 0; h < first.height(); ++h)
      for (std::int64_t w = 0; w < first.width(); ++w)
        EXPECT_DOUBLE_EQ(first.at(0, c, h, w), expected);
  }
  ASSERT_EQ(out.logits.size(), 1u);
  EXPECT_EQ(out.logits[0].size(), 10u);
}

TEST(ForwardOracle, ImpulseOnlyReachesItsNeighbourhood) {
  const auto weights = generate_tiny_weights();
  const auto base = forward_oracle(weights, Array4(1, 3, 16, 16));
  Array4 impulse(1, 3, 16, 16);
  impulse.at(0, 0, 8, 8) = 1.0;
  const auto out = forward_oracle(weights, impulse);
  // Output cell 4 reads input rows 7..9; output cell 3 reads rows 5..7.
  const auto& t1 = out.pre_activation[0];
  const auto& b1 = base.pre_activation[0];
  for (std::int64_t c = 0; c < t1.channels(); ++c) {
    EXPECT_DOUBLE_EQ(t1.at(0, c, 3, 3), b1.at(0, c, 3, 3));
    const auto centre = static_cast<std::size_t>((c * weights.blocks[0].in_channels) * 9 + 4);
    EXPECT_NEAR(t1.at(0, c, 4, 4) - b1.at(0, c, 4, 4), weights.blocks[0].weight[centre], 1e-12);
  }
}

TEST(TinyWeights, SeedDeterministic) {
  const auto a = generate_tiny_weights();
  const auto b = generate_tiny_weights();
  EXPECT_EQ(a.blocks[1].weight, b.blocks[1].weight);
  TinyArchitecture other;
  other.seed = 1;
  EXPECT_NE(generate_tiny_weights(other).blocks[1].weight, a.blocks[1].weight);
  for (const auto& v : a.running_mean) for (double m : v) EXPECT_EQ(m, 0.0);
  for (const auto& v : a.running_var) for (double s : v) EXPECT_EQ(s, 1.0);
}

TEST(BilinearResize, ConstantStaysConstantAndIdentitySizeIsIdentity) {
  const std::vector<double> flat(6, 0.25);
  for (double v : bilinear_resize(flat, 2, 3, 5, 7)) EXPECT_DOUBLE_EQ(v, 0.25);
  const std::vector<double> map{0.0, 1.0, 2.0, 3.0};
  EXPECT_EQ(bilinear_resize(map, 2, 2, 2, 2), map);
  // Half-pixel centers: the upsampled corner equals the source corner.
  const auto up = bilinear_resize(map, 2, 2, 4, 4);
  EXPECT_DOUBLE_EQ(up[0], 0.0);
  EXPECT_DOUBLE_EQ(up[1], 0.25);
  EXPECT_DOUBLE_EQ(up[15], 3.0);
}

TEST(Fixtures, DeskTargetAndRandomArrayRanges) {
  const auto desk = desk_target(32);
  EXPECT_EQ(desk.shape, (std::array<std::int64_t, 4>{1, 3, 32, 32}));
  for (double v : desk.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto r = random_array(2, 3, 4, 5, 9, 0.4, 0.6);
  EXPECT_EQ(r.size(), 120);
  for (double v : r.data) {
    EXPECT_GE(v, 0.4);
    EXPECT_LT(v, 0.6);
  }
  EXPECT_EQ(random_array(2, 3, 4, 5, 9, 0.4, 0.6).data, r.data);
  EXPECT_NE(random_array(2, 3, 4, 5, 10, 0.4, 0.6).data, r.data);
}

}  // namespace
}  // namespace imagine::testkit
