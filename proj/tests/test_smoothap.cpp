// Copyright 2026 The mveq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "mveq/smoothap.hpp"
#include "mveq/testing/fixtures.hpp"
#include "mveq/testing/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace mveq {
namespace {

// Query, positives and negatives laid end to end.
std::vector<double> flatten(const RankingInstance& inst) {
  std::vector<double> out(inst.query.data(), inst.query.data() + inst.query.size());
  for (const auto* set : {&inst.positives, &inst.negatives}) {
    for (const PixelFeature& f : *set) out.insert(out.end(), f.data(), f.data() + f.size());
  }
  return out;
}

RankingInstance unflatten(RankingInstance inst, const std::vector<double>& x) {
  std::size_t k = 0;
  auto fill = [&](PixelFeature& f) {
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = x[k++];
  };
  fill(inst.query);
  for (PixelFeature& f : inst.positives) fill(f);
  for (PixelFeature& f : inst.negatives) fill(f);
  return inst;
}

std::vector<double> flatten(const LossGrad& g) {
  std::vector<double> out(g.d_query.data(), g.d_query.data() + g.d_query.size());
  for (const auto* set : {&g.d_positives, &g.d_negatives}) {
    for (const PixelFeature& f : *set) out.insert(out.end(), f.data(), f.data() + f.size());
  }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

double max_fd_error(const RankingInstance& inst, const std::function<LossGrad(const RankingInstance&)>& loss) {
  const std::vector<double> analytic = flatten(loss(inst));
  const std::vector<double> numeric = oracle::numeric_gradient(
      [&](const std::vector<double>& x) { return loss(unflatten(inst, x)).loss; }, flatten(inst), 1e-4);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) worst = std::max(worst, rel_err(analytic[i], numeric[i]));
  return worst;
}

PixelFeature unit(std::initializer_list<double> v) {
  PixelFeature f(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) f[i++] = x;
  return f.normalized();
}

// Features in the plane whose cosine with e0 is exactly `s`.
PixelFeature with_score(double s) { return unit({s, std::sqrt(std::max(0.0, 1.0 - s * s))}); }

RankingInstance scored_instance(const std::vector<double>& pos, const std::vector<double>& neg, double tau) {
  RankingInstance inst;
  inst.query = unit({1.0, 0.0});
  for (double s : pos) inst.positives.push_back(with_score(s));
  for (double s : neg) inst.negatives.push_back(with_score(s));
  inst.tau = tau;
  return inst;
}

TEST(SmoothAp, SeparatedRankingApproachesOne) {
  const RankingInstance inst = scored_instance({0.9}, {-0.5, -0.2, 0.1, 0.3}, 1e-3);
  EXPECT_NEAR(smooth_ap(inst), 1.0, 1e-12);
  EXPECT_NEAR(smooth_ap_grad(inst).loss, 0.0, 1e-12);
}

TEST(SmoothAp, EqualSimilarityGivesTwoThirds) {
  RankingInstance inst = scored_instance({0.4}, {0.4}, 1.0);
  EXPECT_NEAR(smooth_ap(inst), 2.0 / 3.0, 1e-12);
  // The literal formula keeps sigma(0) = 1/2 for the query's own positive.
  inst.include_self = true;
  EXPECT_NEAR(smooth_ap(inst), 1.5 / 2.0, 1e-12);
}

TEST(SmoothAp, SharpTemperatureMatchesExactAp) {
  SplitMix64 rng(1);
  int checked = 0;
  while (checked < 200) {
    std::vector<double> pos = {rng.uniform(-1, 1)};
    std::vector<double> neg(4);
    for (double& s : neg) s = rng.uniform(-1, 1);
    const bool tie = std::any_of(neg.begin(), neg.end(), [&](double s) { return std::abs(s - pos[0]) < 1e-3; });
    if (tie) continue;
    ASSERT_NEAR(detail::smooth_ap_scores(pos, neg, 1e-4, false), exact_ap(pos, neg), 1e-3);
    ++checked;
  }
}

TEST(SmoothAp, LimitWithManyPositives) {
  SplitMix64 rng(2);
  int checked = 0;
  while (checked < 200) {
    std::vector<double> pos(1 + rng.below(5)), neg(rng.below(12));
    for (double& s : pos) s = rng.uniform(-1, 1);
    for (double& s : neg) s = rng.uniform(-1, 1);
    std::vector<double> all = pos;
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    bool tie = false;
    for (std::size_t i = 1; i < all.size(); ++i) tie |= all[i] - all[i - 1] < 1e-3;
    if (tie) continue;
    ASSERT_NEAR(detail::smooth_ap_scores(pos, neg, 1e-5, false), exact_ap(pos, neg), 1e-3);
    ++checked;
  }
}

TEST(SmoothAp, MatchesRankRatioOracle) {
  SplitMix64 rng(3);
  for (int n = 0; n < 200; ++n) {
    std::vector<double> pos(1 + rng.below(6)), neg(rng.below(10));
    for (double& s : pos) s = rng.uniform(-1, 1);
    for (double& s : neg) s = rng.uniform(-1, 1);
    const double tau = rng.uniform(0.01, 2.0);
    ASSERT_NEAR(detail::smooth_ap_scores(pos, neg, tau, false), oracle::smooth_ap(pos, neg, tau), 1e-12);
  }
}

TEST(SmoothAp, RangeAndPermutationInvariance) {
  SplitMix64 rng(4);
  for (int n = 0; n < 200; ++n) {
    RankingInstance inst = fixture::random_ranking(rng, 5, 1 + static_cast<int>(rng.below(4)),
                                                   static_cast<int>(rng.below(8)), rng.uniform(0.01, 1.0));
    const double ap = smooth_ap(inst);
    ASSERT_GT(ap, 0.0);
    ASSERT_LE(ap, 1.0);
    const double loss = smooth_ap_grad(inst).loss;
    ASSERT_GE(loss, 0.0);
    ASSERT_LT(loss, 1.0);
    std::reverse(inst.positives.begin(), inst.positives.end());
    std::rotate(inst.negatives.begin(), inst.negatives.begin() + (inst.negatives.empty() ? 0 : 1), inst.negatives.end());
    ASSERT_NEAR(smooth_ap(inst), ap, 1e-14);
  }
}

TEST(SmoothAp, RaisingANegativeNeverHelps) {
  SplitMix64 rng(5);
  for (int n = 0; n < 500; ++n) {
    std::vector<double> pos(1 + rng.below(4)), neg(1 + rng.below(6));
    for (double& s : pos) s = rng.uniform(-1, 1);
    for (double& s : neg) s = rng.uniform(-1, 1);
    const double tau = rng.uniform(0.01, 1.0);
    const double before = detail::smooth_ap_scores(pos, neg, tau, false);
    neg[rng.below(neg.size())] += rng.uniform(0.0, 0.5);
    ASSERT_LE(detail::smooth_ap_scores(pos, neg, tau, false), before + 1e-15);
  }
}

TEST(SmoothAp, TemperatureMustBePositive) {
  RankingInstance inst = scored_instance({0.5}, {0.1}, 0.0);
  EXPECT_THROW(smooth_ap(inst), Error);
  inst.tau = -1.0;
  EXPECT_THROW(smooth_ap_grad(inst), Error);
  inst.tau = 1.0;
  inst.positives.clear();
  EXPECT_THROW(smooth_ap(inst), Error);
}

TEST(SmoothApGrad, FiniteDifferencesOnRandomInstances) {
  SplitMix64 rng(6);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    RankingInstance inst = fixture::random_ranking(rng, 1 + static_cast<int>(rng.below(8)), 1 + static_cast<int>(rng.below(4)),
                                                   static_cast<int>(rng.below(8)), rng.uniform(0.1, 1.0));
    inst.include_self = n % 5 == 0;
    worst = std::max(worst, max_fd_error(inst, smooth_ap_grad));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(SmoothApGrad, SaturatedInstanceStaysFinite) {
  const RankingInstance inst = scored_instance({1.0}, {-1.0, -1.0, -1.0}, 1.0);
  const LossGrad g = smooth_ap_grad(inst);
  double norm = g.d_query.norm();
  for (const auto& d : g.d_negatives) norm += d.norm();
  EXPECT_TRUE(std::isfinite(norm));
  EXPECT_GT(norm, 0.0);
  EXPECT_LT(norm, 1.0);
  const RankingInstance sharp = scored_instance({1.0}, {-1.0, -1.0}, 1e-3);
  const LossGrad gs = smooth_ap_grad(sharp);
  EXPECT_TRUE(gs.d_query.allFinite());
}

TEST(SmoothApGrad, DuplicatedNegativeSumsBothCopies) {
  SplitMix64 rng(7);
  RankingInstance inst = fixture::random_ranking(rng, 4, 2, 3, 0.3);
  inst.negatives.push_back(inst.negatives[0]);
  const LossGrad g = smooth_ap_grad(inst);
  // Moving the shared vector moves both copies.
  const double h = 1e-5;
  for (int i = 0; i < 4; ++i) {
    RankingInstance up = inst, down = inst;
    up.negatives[0][i] += h;
    up.negatives[3][i] += h;
    down.negatives[0][i] -= h;
    down.negatives[3][i] -= h;
    const double fd = (smooth_ap_grad(up).loss - smooth_ap_grad(down).loss) / (2 * h);
    EXPECT_NEAR(g.d_negatives[0][i] + g.d_negatives[3][i], fd, 1e-7);
    EXPECT_NEAR(g.d_negatives[0][i], g.d_negatives[3][i], 1e-15);
  }
}

TEST(ExactAp, Examples) {
  const std::vector<double> pos = {0.9, 0.8}, neg = {0.1, -0.3};
  EXPECT_EQ(exact_ap(pos, neg), 1.0);
  const std::vector<double> p1 = {0.5}, n1 = {0.7, 0.1};
  EXPECT_EQ(exact_ap(p1, n1), 0.5);
  // Ties rank the negative first.
  const std::vector<double> p2 = {0.5}, n2 = {0.5};
  EXPECT_EQ(exact_ap(p2, n2), 0.5);
  const std::vector<double> p3 = {0.9, 0.2}, n3 = {0.5};
  EXPECT_DOUBLE_EQ(exact_ap(p3, n3), (1.0 + 2.0 / 3.0) / 2.0);
}

TEST(Contrastive, Examples) {
  const RankingInstance sep = scored_instance({1.0}, {-1.0, -1.0}, 1.0);
  EXPECT_NEAR(contrastive_loss(sep, 0.01).loss, 0.0, 1e-12);
  const RankingInstance flat = scored_instance({0.3}, {0.3, 0.3, 0.3}, 1.0);
  EXPECT_NEAR(contrastive_loss(flat, 0.07).loss, std::log(4.0), 1e-12);
  EXPECT_THROW(contrastive_loss(flat, 0.0), Error);
}

TEST(Contrastive, FiniteDifferences) {
  SplitMix64 rng(8);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const RankingInstance inst = fixture::random_ranking(rng, 1 + static_cast<int>(rng.below(8)),
                                                         1 + static_cast<int>(rng.below(4)), static_cast<int>(rng.below(8)), 1.0);
    const double temp = rng.uniform(0.1, 1.0);
    worst = std::max(worst, max_fd_error(inst, [temp](const RankingInstance& i) { return contrastive_loss(i, temp); }));
  }
  EXPECT_LT(worst, 1e-4);
}

}  // namespace
}  // namespace mveq
