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

#include "mveq/tracking.hpp"
#include "mveq/testing/fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace mveq {
namespace {

// Frame t shows `base` translated right by t pixels (patch 1, so one cell
// per pixel). `base` is `frames` columns wider than each frame.
std::vector<FeatureMap> shifted_sequence(const FeatureMap& base, int w, int frames) {
  std::vector<FeatureMap> seq;
  for (int t = 0; t < frames; ++t) {
    FeatureMap f = FeatureMap::zeros(w, base.img_h, 1, base.channels);
    for (int r = 0; r < base.img_h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto src = base.cell(r, c - t + frames);
        std::copy(src.begin(), src.end(), f.cell(r, c).begin());
      }
    }
    seq.push_back(std::move(f));
  }
  return seq;
}

TEST(Track, StaticSequenceStaysPut) {
  SplitMix64 rng(1);
  const FeatureMap m = fixture::random_feature_map(rng, 24, 20, 1, 12);
  const std::vector<FeatureMap> seq(5, m);
  std::vector<TrackQuery> qs;
  for (int i = 0; i < 10; ++i) qs.push_back({Vec2(1 + static_cast<int>(rng.below(22)) + 0.5, static_cast<int>(rng.below(20)) + 0.5), i % 5});
  const auto res = track(seq, qs);
  ASSERT_EQ(res.size(), qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    ASSERT_EQ(res[i].position.size(), 5u);
    for (int t = 0; t < 5; ++t) {
      // The argmax is exact; softmax pull from similar neighbors stays small.
      EXPECT_LE((res[i].position[t] - qs[i].point).norm(), 0.1);
      EXPECT_TRUE(res[i].visible[t]);
      EXPECT_NEAR(res[i].score[t], 1.0, 1e-6);
    }
  }
}

TEST(Track, SymmetricNeighborhoodTracksItselfExactly) {
  // Features point-mirrored through pixel (9, 11) make the refinement window
  // symmetric, so the softmax mean lands on the pixel center.
  SplitMix64 rng(13);
  FeatureMap m = fixture::random_feature_map(rng, 24, 20, 1, 12);
  const int r0 = 9, c0 = 11;
  for (int dr = -4; dr <= 4; ++dr) {
    for (int dc = -4; dc <= 4; ++dc) {
      const auto src = m.cell(r0 + dr, c0 + dc);
      std::copy(src.begin(), src.end(), m.cell(r0 - dr, c0 - dc).begin());
      if (dr > 0 || (dr == 0 && dc >= 0)) break;
    }
  }
  const TrackQuery q{Vec2(c0 + 0.5, r0 + 0.5), 0};
  const auto res = track({m, m, m}, {q});
  for (int t = 0; t < 3; ++t) EXPECT_NEAR((res[0].position[t] - q.point).norm(), 0.0, 1e-12);
}

TEST(Track, QueryFrameReportsQueryPointExactly) {
  SplitMix64 rng(2);
  const FeatureMap m = fixture::random_feature_map(rng, 16, 16, 2, 8);
  const std::vector<TrackQuery> qs = {{Vec2(3.25, 7.75), 1}, {Vec2(0.0, 16.0), 0}};
  const auto res = track({m, m, m}, qs);
  EXPECT_EQ(res[0].position[1], qs[0].point);
  EXPECT_EQ(res[1].position[0], qs[1].point);
  EXPECT_TRUE(res[0].visible[1]);
  EXPECT_EQ(res[0].score[1], 1.0);
}

TEST(Track, ShiftedSequenceAdvancesOnePixelPerFrame) {
  SplitMix64 rng(3);
  const int w = 48, h = 32, frames = 10;
  const FeatureMap base = fixture::random_feature_map(rng, w + frames, h, 1, 16);
  const auto seq = shifted_sequence(base, w, frames);
  std::vector<TrackQuery> qs;
  for (int i = 0; i < 20; ++i) {
    qs.push_back({Vec2(static_cast<int>(rng.below(w - frames)) + 0.5, static_cast<int>(rng.below(h)) + 0.5), 0});
  }
  const auto res = track(seq, qs);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    for (int t = 1; t < frames; ++t) {
      const double step = res[i].position[t].x() - res[i].position[t - 1].x();
      EXPECT_NEAR(step, 1.0, 0.5) << "query " << i << " frame " << t;
      EXPECT_NEAR(res[i].position[t].y(), res[i].position[0].y(), 0.5);
      EXPECT_TRUE(res[i].visible[t]);
    }
  }
}

TEST(Track, ShiftedSequenceFromMiddleFrame) {
  SplitMix64 rng(4);
  const int w = 40, h = 24, frames = 7;
  const auto seq = shifted_sequence(fixture::random_feature_map(rng, w + frames, h, 1, 16), w, frames);
  const TrackQuery q{Vec2(20.5, 11.5), 3};
  const auto res = track(seq, {q});
  EXPECT_EQ(res[0].position[3], q.point);
  for (int t = 0; t < frames; ++t) {
    EXPECT_LE((res[0].position[t] - (q.point + Vec2(t - 3, 0))).norm(), 0.1);
  }
}

TEST(Track, TemporalWindowAgreesOnSmoothMotion) {
  SplitMix64 rng(5);
  const int w = 40, h = 24, frames = 6;
  const auto seq = shifted_sequence(fixture::random_feature_map(rng, w + frames, h, 1, 16), w, frames);
  const std::vector<TrackQuery> qs = {{Vec2(12.5, 8.5), 0}, {Vec2(30.5, 20.5), 2}};
  TrackConfig windowed;
  windowed.temporal_window = 3;
  const auto a = track(seq, qs);
  const auto b = track(seq, qs, windowed);
  for (std::size_t i = 0; i < qs.size(); ++i) EXPECT_EQ(a[i].position, b[i].position);
}

TEST(Track, TemporalWindowRestrictsSearch) {
  // Frame 1 holds the query feature only far from the query point.
  FeatureMap f0 = FeatureMap::zeros(32, 8, 1, 2);
  FeatureMap f1 = f0;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 32; ++c) {
      f0.cell(r, c)[1] = 1.0f;
      f1.cell(r, c)[1] = 1.0f;
    }
  }
  f0.cell(4, 4)[0] = 5.0f;
  f1.cell(4, 28)[0] = 5.0f;
  const TrackQuery q{Vec2(4.5, 4.5), 0};
  EXPECT_NEAR(track({f0, f1}, {q})[0].position[1].x(), 28.5, 1e-3);
  TrackConfig cfg;
  cfg.temporal_window = 4;
  const TrackResult r = track({f0, f1}, {q}, cfg)[0];
  EXPECT_LE(std::abs(r.position[1].x() - 4.5), 4.5);
}

TEST(Track, OrthogonalFeaturesAreOccluded) {
  SplitMix64 rng(6);
  FeatureMap a = FeatureMap::zeros(16, 16, 1, 8);
  FeatureMap b = a;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      for (int ch = 0; ch < 4; ++ch) a.cell(r, c)[ch] = static_cast<float>(rng.normal());
      for (int ch = 4; ch < 8; ++ch) b.cell(r, c)[ch] = static_cast<float>(rng.normal());
    }
  }
  const auto res = track({a, b, a}, {{Vec2(5.5, 9.5), 0}});
  EXPECT_TRUE(res[0].visible[0]);
  EXPECT_FALSE(res[0].visible[1]);
  EXPECT_NEAR(res[0].score[1], 0.0, 1e-9);
  EXPECT_TRUE(res[0].visible[2]);
}

TEST(Track, IndependentOfQueryOrder) {
  SplitMix64 rng(7);
  std::vector<FeatureMap> seq;
  for (int t = 0; t < 4; ++t) seq.push_back(fixture::smooth_feature_map(rng, 28, 20, 2, 6));
  std::vector<TrackQuery> qs;
  for (int i = 0; i < 12; ++i) qs.push_back({Vec2(rng.uniform(0, 28), rng.uniform(0, 20)), static_cast<int>(rng.below(4))});
  std::vector<TrackQuery> rev(qs.rbegin(), qs.rend());
  const auto a = track(seq, qs);
  const auto b = track(seq, rev);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const TrackResult& x = a[i];
    const TrackResult& y = b[qs.size() - 1 - i];
    EXPECT_EQ(x.position, y.position);
    EXPECT_EQ(x.visible, y.visible);
    EXPECT_EQ(x.score, y.score);
  }
}

TEST(Track, LowerThresholdNeverHidesPoints) {
  SplitMix64 rng(8);
  std::vector<FeatureMap> seq;
  for (int t = 0; t < 5; ++t) seq.push_back(fixture::random_feature_map(rng, 20, 20, 2, 6));
  std::vector<TrackQuery> qs;
  for (int i = 0; i < 15; ++i) qs.push_back({Vec2(rng.uniform(0, 20), rng.uniform(0, 20)), 0});
  std::size_t prev = 0;
  for (double thr : {1.01, 0.95, 0.9, 0.8, 0.7, 0.55, 0.4, 0.2, 0.0, -1.0}) {
    TrackConfig cfg;
    cfg.occ_threshold = thr;
    std::size_t visible = 0;
    for (const TrackResult& r : track(seq, qs, cfg)) visible += std::count(r.visible.begin(), r.visible.end(), true);
    EXPECT_GE(visible, prev) << "threshold " << thr;
    prev = visible;
  }
  EXPECT_EQ(prev, 15u * 5u);
}

TEST(Track, Errors) {
  SplitMix64 rng(9);
  const FeatureMap a = fixture::random_feature_map(rng, 8, 8, 1, 4);
  const FeatureMap b = fixture::random_feature_map(rng, 8, 8, 1, 5);
  EXPECT_THROW(track({a, b}, {{Vec2(1, 1), 0}}), Error);
  EXPECT_THROW(track({a, a}, {{Vec2(1, 1), 2}}), Error);
  EXPECT_THROW(track({a, a}, {{Vec2(1, 1), -1}}), Error);
  EXPECT_EQ(track({}, {{Vec2(1, 1), 0}}).size(), 1u);
}

TrackSet hand_tracks() {
  TrackSet gt;
  gt.positions = {{Vec2(10, 10), Vec2(20, 20)}, {Vec2(50, 60), Vec2(70, 80)}, {Vec2(5, 100), Vec2(6, 101)}};
  gt.visible = {{true, true}, {true, true}, {true, false}};
  return gt;
}

std::vector<TrackResult> as_results(const TrackSet& s) {
  std::vector<TrackResult> out;
  for (std::size_t i = 0; i < s.points(); ++i) out.push_back({s.positions[i], s.visible[i], std::vector<double>(s.frames(), 1.0)});
  return out;
}

TEST(EvaluateTracking, PerfectPrediction) {
  const TrackSet gt = hand_tracks();
  const TrackingReport r = evaluate_tracking(as_results(gt), gt, 128, 160);
  EXPECT_EQ(r.aj, 100.0);
  EXPECT_EQ(r.delta_avg, 100.0);
  EXPECT_EQ(r.oa, 100.0);
}

TEST(EvaluateTracking, ThreePixelsAtEvaluationScale) {
  // A 128x64 image maps to 256x256 with scales 2 and 4.
  TrackSet gt;
  gt.positions = {{Vec2(10, 10), Vec2(30, 20)}};
  gt.visible = {{true, true}};
  for (const Vec2& off : {Vec2(1.5, 0), Vec2(0, 0.75)}) {
    auto pred = as_results(gt);
    pred[0].position[1] += off;
    const TrackingReport r = evaluate_tracking(pred, gt, 128, 64);
    // Thresholds 1, 2 see one of two frames; 4, 8, 16 see both.
    EXPECT_NEAR(r.delta_avg, 80.0, 1e-9);
    // Jaccard at 1, 2: TP 1, FP 1, FN 1.
    EXPECT_NEAR(r.aj, (2.0 * 100.0 / 3.0 + 300.0) / 5.0, 1e-9);
    EXPECT_EQ(r.oa, 100.0);
  }
}

TEST(EvaluateTracking, HandFixtureAtNativeScale) {
  const TrackSet gt = hand_tracks();
  auto pred = as_results(gt);
  pred[1].position[1] += Vec2(3, 0);
  pred[0].visible[1] = false;
  const TrackingReport r = evaluate_tracking(pred, gt, 256, 256);
  EXPECT_NEAR(r.aj, 68.0, 1e-9);
  EXPECT_NEAR(r.delta_avg, 92.0, 1e-9);
  EXPECT_NEAR(r.oa, 250.0 / 3.0, 1e-9);
  // Same fixture drawn at half resolution.
  TrackSet half = gt;
  for (auto& row : half.positions) {
    for (Vec2& x : row) x *= 0.5;
  }
  auto pred_half = as_results(half);
  pred_half[1].position[1] += Vec2(1.5, 0);
  pred_half[0].visible[1] = false;
  const TrackingReport h = evaluate_tracking(pred_half, half, 128, 128);
  EXPECT_NEAR(h.aj, 68.0, 1e-9);
  EXPECT_NEAR(h.delta_avg, 92.0, 1e-9);
}

TEST(EvaluateTracking, ShapeErrors) {
  const TrackSet gt = hand_tracks();
  auto pred = as_results(gt);
  pred.pop_back();
  EXPECT_THROW(evaluate_tracking(pred, gt, 64, 64), Error);
  pred = as_results(gt);
  pred[0].position.pop_back();
  EXPECT_THROW(evaluate_tracking(pred, gt, 64, 64), Error);
}

TEST(CalibrateOcclusion, SeparableScores) {
  TrackSet gt = hand_tracks();
  auto pred = as_results(gt);
  pred[0].score = {0.9, 0.7};
  pred[1].score = {0.8, 0.75};
  pred[2].score = {0.95, 0.4};
  EXPECT_EQ(calibrate_occlusion_threshold(pred, gt), 0.7);
  // Everything occluded: a threshold above every score wins.
  for (auto& row : gt.visible) row.assign(2, false);
  EXPECT_GT(calibrate_occlusion_threshold(pred, gt), 0.95);
}

TEST(CalibrateOcclusion, MaximizesOcclusionAccuracy) {
  SplitMix64 rng(12);
  TrackSet gt;
  std::vector<TrackResult> pred;
  for (int i = 0; i < 20; ++i) {
    TrackResult r;
    std::vector<bool> vis;
    for (int t = 0; t < 10; ++t) {
      const bool v = rng.uniform() < 0.6;
      vis.push_back(v);
      r.score.push_back((v ? 0.6 : 0.3) + 0.3 * rng.normal());
      r.position.push_back(Vec2::Zero());
      r.visible.push_back(true);
    }
    gt.positions.push_back(r.position);
    gt.visible.push_back(vis);
    pred.push_back(r);
  }
  auto oa_at = [&](double thr) {
    for (TrackResult& r : pred) {
      for (std::size_t t = 0; t < r.score.size(); ++t) r.visible[t] = r.score[t] >= thr;
    }
    return evaluate_tracking(pred, gt, 256, 256).oa;
  };
  const double best = oa_at(calibrate_occlusion_threshold(pred, gt));
  for (double thr = -0.5; thr <= 1.5; thr += 0.01) EXPECT_LE(oa_at(thr), best + 1e-12);
}

}  // namespace
}  // namespace mveq
