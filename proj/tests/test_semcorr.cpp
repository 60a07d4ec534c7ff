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

#include "mveq/semcorr.hpp"
#include "mveq/testing/fixtures.hpp"
#include "mveq/testing/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace mveq {
namespace {

Vec2 center(int col, int row) { return Vec2(col + 0.5, row + 0.5); }

TEST(Transfer, IdenticalMapsReturnInputs) {
  SplitMix64 rng(1);
  const FeatureMap m = fixture::random_feature_map(rng, 30, 22, 1, 16);
  std::vector<Vec2> kpts;
  for (int i = 0; i < 40; ++i) kpts.push_back(center(static_cast<int>(rng.below(30)), static_cast<int>(rng.below(22))));
  const auto pred = transfer_keypoints(m, m, kpts);
  for (std::size_t i = 0; i < kpts.size(); ++i) {
    ASSERT_TRUE(pred[i].has_value());
    EXPECT_EQ(*pred[i], kpts[i]);
  }
}

TEST(Transfer, MirroredMapGivesMirroredKeypoints) {
  SplitMix64 rng(2);
  const int w = 26, h = 18;
  const FeatureMap m = fixture::random_feature_map(rng, w, h, 1, 16);
  FeatureMap flipped = m;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto src = m.cell(r, c);
      std::copy(src.begin(), src.end(), flipped.cell(r, w - 1 - c).begin());
    }
  }
  for (int i = 0; i < 30; ++i) {
    const int c = static_cast<int>(rng.below(w)), r = static_cast<int>(rng.below(h));
    const auto pred = transfer_keypoints(m, flipped, {center(c, r)});
    ASSERT_TRUE(pred[0].has_value());
    EXPECT_EQ(*pred[0], Vec2(w - c - 0.5, r + 0.5));
  }
}

TEST(Transfer, MatchesBruteForceOracle) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureMap src = fixture::random_feature_map(rng, 40, 28, 4, 8);
    const FeatureMap dst = fixture::random_feature_map(rng, 36, 32, 4, 8);
    std::vector<Vec2> kpts;
    for (int i = 0; i < 20; ++i) kpts.push_back(Vec2(rng.uniform(0, 40), rng.uniform(0, 28)));
    const auto pred = transfer_keypoints(src, dst, kpts);
    for (std::size_t i = 0; i < kpts.size(); ++i) {
      const PixelFeature q = sample_feature(src, kpts[i], true);
      const oracle::Argmax want = oracle::best_pixel(std::vector<double>(q.data(), q.data() + q.size()), dst);
      ASSERT_TRUE(pred[i].has_value());
      EXPECT_EQ(*pred[i], center(want.col, want.row));
    }
  }
}

TEST(Transfer, OutOfBoundsKeypointsAreSkipped) {
  SplitMix64 rng(4);
  const FeatureMap m = fixture::random_feature_map(rng, 10, 10, 1, 4);
  const auto pred = transfer_keypoints(m, m, {Vec2(-0.1, 5), Vec2(5, 10.01), Vec2(10, 10), Vec2(5.5, 5.5)});
  EXPECT_FALSE(pred[0].has_value());
  EXPECT_FALSE(pred[1].has_value());
  EXPECT_TRUE(pred[2].has_value());
  EXPECT_TRUE(pred[3].has_value());
}

TEST(Transfer, ChannelMismatch) {
  SplitMix64 rng(5);
  EXPECT_THROW(transfer_keypoints(fixture::random_feature_map(rng, 8, 8, 1, 4), fixture::random_feature_map(rng, 8, 8, 1, 5),
                                  {Vec2(1, 1)}),
               Error);
}

TEST(Transfer, EquivariantToDestinationPixelPermutation) {
  SplitMix64 rng(6);
  const int w = 20, h = 16;
  const FeatureMap src = fixture::random_feature_map(rng, w, h, 1, 12);
  const FeatureMap dst = fixture::random_feature_map(rng, w, h, 1, 12);
  std::vector<int> perm(static_cast<std::size_t>(w) * h);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  FeatureMap moved = dst;
  for (int k = 0; k < w * h; ++k) {
    const auto from = dst.cell(k / w, k % w);
    std::copy(from.begin(), from.end(), moved.cell(perm[k] / w, perm[k] % w).begin());
  }
  std::vector<Vec2> kpts;
  for (int i = 0; i < 30; ++i) kpts.push_back(Vec2(rng.uniform(0, w), rng.uniform(0, h)));
  const auto a = transfer_keypoints(src, dst, kpts);
  const auto b = transfer_keypoints(src, moved, kpts);
  for (std::size_t i = 0; i < kpts.size(); ++i) {
    const int k = static_cast<int>(a[i]->y()) * w + static_cast<int>(a[i]->x());
    EXPECT_EQ(*b[i], center(perm[k] % w, perm[k] / w));
  }
}

// Landmark features: channel k marks keypoint k, the last channel is a
// constant background, so each source keypoint matches exactly one pixel.
struct Scene {
  std::map<std::string, FeatureMap> maps;
  std::vector<KeypointPair> pairs;

  std::function<const FeatureMap*(const std::string&)> lookup() const {
    return [this](const std::string& id) -> const FeatureMap* {
      const auto it = maps.find(id);
      return it == maps.end() ? nullptr : &it->second;
    };
  }
};

FeatureMap background(int w, int h, int channels) {
  FeatureMap m = FeatureMap::zeros(w, h, 1, channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) m.cell(r, c)[channels - 1] = 1.0f;
  }
  return m;
}

void mark(FeatureMap& m, const Vec2& at, int channel) {
  m.cell(static_cast<int>(at.y()), static_cast<int>(at.x()))[channel] = 10.0f;
}

// Adds a pair whose k-th keypoint lands `errors[k]` pixels right of its
// ground truth. A negative error marks a source keypoint outside the image.
void add_pair(Scene& s, const std::string& name, std::optional<BoundingBox> bbox, const std::vector<int>& errors) {
  const int w = 100, h = 80, channels = 12;
  FeatureMap src = background(w, h, channels), dst = background(w, h, channels);
  KeypointPair p{name + "_src", name + "_dst", {}, {}, bbox};
  for (std::size_t k = 0; k < errors.size(); ++k) {
    const Vec2 at = center(10 + 8 * static_cast<int>(k), 20 + 5 * static_cast<int>(k));
    if (errors[k] < 0) {
      p.src_kpts.push_back(Vec2(-5, 10));
    } else {
      p.src_kpts.push_back(at);
      mark(src, at, static_cast<int>(k));
      mark(dst, at + Vec2(errors[k], 0), static_cast<int>(k));
    }
    p.dst_kpts.push_back(at);
  }
  s.maps[p.src_image] = std::move(src);
  s.maps[p.dst_image] = std::move(dst);
  s.pairs.push_back(std::move(p));
}

Scene hand_scene() {
  Scene s;
  // Box side 40: thresholds 2, 4, 6 px. Image fallback 80: 4, 8, 12 px.
  add_pair(s, "a", BoundingBox{10, 10, 50, 30}, {0, 3, 5, 7});
  add_pair(s, "b", std::nullopt, {1, 6, 10, 20, -1});
  return s;
}

TEST(EvaluateSemcorr, HandFixture) {
  const Scene s = hand_scene();
  const SemcorrReport r = evaluate_semcorr(s.pairs, s.lookup());
  EXPECT_EQ(r.pairs, 2u);
  EXPECT_EQ(r.keypoints, 9u);
  EXPECT_EQ(r.skipped_keypoints, 1u);
  EXPECT_TRUE(r.excluded_pairs.empty());
  // Pair a hits 1, 2, 3 of 4; pair b hits 1, 2, 3 of 5.
  EXPECT_NEAR(r.pck_bbox.at(0.05), 200.0 / 9.0, 1e-9);
  EXPECT_NEAR(r.pck_bbox.at(0.10), 400.0 / 9.0, 1e-9);
  EXPECT_NEAR(r.pck_bbox.at(0.15), 600.0 / 9.0, 1e-9);
  EXPECT_NEAR(r.pck_bbox_macro.at(0.05), 22.5, 1e-9);
  EXPECT_NEAR(r.pck_bbox_macro.at(0.10), 45.0, 1e-9);
  EXPECT_NEAR(r.pck_bbox_macro.at(0.15), 67.5, 1e-9);
  // Image normalization: pair a hits 2, 4, 4.
  EXPECT_NEAR(r.pck_image.at(0.05), 300.0 / 9.0, 1e-9);
  EXPECT_NEAR(r.pck_image.at(0.10), 600.0 / 9.0, 1e-9);
  EXPECT_NEAR(r.pck_image.at(0.15), 700.0 / 9.0, 1e-9);
}

TEST(EvaluateSemcorr, PerfectFeaturesScoreHundred) {
  Scene s;
  add_pair(s, "a", BoundingBox{0, 0, 30, 30}, {0, 0, 0, 0, 0, 0});
  add_pair(s, "b", std::nullopt, {0, 0, 0});
  const SemcorrReport r = evaluate_semcorr(s.pairs, s.lookup());
  for (double a : kPckAlphas) {
    EXPECT_EQ(r.pck_bbox.at(a), 100.0);
    EXPECT_EQ(r.pck_bbox_macro.at(a), 100.0);
    EXPECT_EQ(r.pck_image.at(a), 100.0);
  }
}

TEST(EvaluateSemcorr, MonotoneInAlphaAndOrderInvariant) {
  SplitMix64 rng(7);
  Scene s;
  for (int i = 0; i < 6; ++i) {
    std::vector<int> errors;
    for (int k = 0; k < 8; ++k) errors.push_back(static_cast<int>(rng.below(15)));
    add_pair(s, "p" + std::to_string(i), i % 2 ? std::optional<BoundingBox>() : BoundingBox{0, 0, 60, 45}, errors);
  }
  const std::vector<double> alphas = {0.01, 0.05, 0.1, 0.15, 0.2, 0.5};
  const SemcorrReport r = evaluate_semcorr(s.pairs, s.lookup(), alphas);
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    EXPECT_LE(r.pck_bbox.at(alphas[i - 1]), r.pck_bbox.at(alphas[i]));
    EXPECT_LE(r.pck_image.at(alphas[i - 1]), r.pck_image.at(alphas[i]));
    EXPECT_LE(r.pck_bbox_macro.at(alphas[i - 1]), r.pck_bbox_macro.at(alphas[i]));
  }
  std::vector<KeypointPair> shuffled = s.pairs;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[1], shuffled[4]);
  const SemcorrReport q = evaluate_semcorr(shuffled, s.lookup(), alphas);
  for (double a : alphas) {
    EXPECT_EQ(q.pck_bbox.at(a), r.pck_bbox.at(a));
    EXPECT_EQ(q.pck_image.at(a), r.pck_image.at(a));
    EXPECT_NEAR(q.pck_bbox_macro.at(a), r.pck_bbox_macro.at(a), 1e-12);
  }
}

TEST(EvaluateSemcorr, MissingFeaturesExcludePair) {
  Scene s = hand_scene();
  s.maps.erase("b_dst");
  const SemcorrReport r = evaluate_semcorr(s.pairs, s.lookup());
  EXPECT_EQ(r.pairs, 1u);
  ASSERT_EQ(r.excluded_pairs.size(), 1u);
  EXPECT_NE(r.excluded_pairs[0].find("b_src->b_dst"), std::string::npos);
  EXPECT_NEAR(r.pck_bbox.at(0.10), 50.0, 1e-9);
}

TEST(EvaluateSemcorr, RaggedKeypointListsExcludePair) {
  Scene s = hand_scene();
  s.pairs[0].dst_kpts.pop_back();
  const SemcorrReport r = evaluate_semcorr(s.pairs, s.lookup());
  EXPECT_EQ(r.pairs, 1u);
  EXPECT_EQ(r.excluded_pairs.size(), 1u);
  EXPECT_EQ(r.keypoints, 5u);
}

}  // namespace
}  // namespace mveq
