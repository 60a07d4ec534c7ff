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

#ifndef MVEQ_TRACKING_HPP_
#define MVEQ_TRACKING_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"
#include "mveq/matching.hpp"
#include "mveq/metrics.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace mveq {

struct TrackQuery {
  Vec2 point;
  int frame_index = 0;
};

struct TrackResult {
  std::vector<Vec2> position;
  std::vector<bool> visible;
  std::vector<double> score;
};

struct TrackConfig {
  int refine_radius = 3;
  double temperature = 0.05;
  double occ_threshold = 0.55;
  /// Restricts frame t's search to this many pixels around the frame t-1
  /// estimate. Off by default: every frame is searched globally.
  std::optional<int> temporal_window;
};

/// Follows each query point through every frame. The reference feature is
/// sampled once; the query frame itself reports the query point.
inline std::vector<TrackResult> track(const std::vector<FeatureMap>& frames, const std::vector<TrackQuery>& queries,
                                      const TrackConfig& cfg = {}) {
  if (frames.empty()) return std::vector<TrackResult>(queries.size());
  for (const FeatureMap& f : frames) {
    if (!f.same_shape(frames.front())) throw Error(ErrorKind::kConfiguration, "tracking frames differ in shape or channels");
  }
  std::vector<DenseFeatures> fields;
  fields.reserve(frames.size());
  for (const FeatureMap& f : frames) fields.emplace_back(f, 1);

  const int w = frames.front().img_w;
  const int h = frames.front().img_h;
  std::vector<TrackResult> out;
  out.reserve(queries.size());
  for (const TrackQuery& q : queries) {
    if (q.frame_index < 0 || q.frame_index >= static_cast<int>(frames.size())) {
      throw Error(ErrorKind::kConfiguration, "track query frame index out of range");
    }
    const PixelFeature ref = sample_feature(frames[q.frame_index], q.point, true);
    TrackResult tr;
    tr.position.resize(frames.size());
    tr.visible.resize(frames.size());
    tr.score.resize(frames.size());

    auto run_frame = [&](int t, const std::optional<Vec2>& prev) {
      if (t == q.frame_index) {
        tr.position[t] = q.point;
        tr.visible[t] = true;
        tr.score[t] = 1.0;
        return;
      }
      CandidateGrid grid = CandidateGrid::full();
      if (cfg.temporal_window && prev) {
        grid = {1, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0), w, h};
        const int pc = static_cast<int>(std::floor(prev->x()));
        const int pr = static_cast<int>(std::floor(prev->y()));
        for (int r = std::max(0, pr - *cfg.temporal_window); r <= std::min(h - 1, pr + *cfg.temporal_window); ++r) {
          for (int c = std::max(0, pc - *cfg.temporal_window); c <= std::min(w - 1, pc + *cfg.temporal_window); ++c) {
            (*grid.mask)[static_cast<std::size_t>(r) * w + c] = 1;
          }
        }
      }
      const MatchResult coarse = best_match(ref, fields[t], grid);
      tr.position[t] = refine_softmax(frames[t], ref, coarse.row, coarse.col, cfg.refine_radius, cfg.temperature);
      tr.score[t] = coarse.score;
      tr.visible[t] = coarse.score >= cfg.occ_threshold;
    };
    // Forward then backward from the query frame so a temporal window always
    // has a neighbor estimate.
    for (int t = q.frame_index; t < static_cast<int>(frames.size()); ++t) {
      run_frame(t, t > q.frame_index ? std::optional<Vec2>(tr.position[t - 1]) : std::nullopt);
    }
    for (int t = q.frame_index - 1; t >= 0; --t) run_frame(t, tr.position[t + 1]);
    out.push_back(std::move(tr));
  }
  return out;
}

/// Rescales predictions and ground truth from image pixels to an
/// eval_size x eval_size frame and scores them.
inline TrackingReport evaluate_tracking(const std::vector<TrackResult>& pred, const TrackSet& gt, int img_w, int img_h,
                                        int eval_size = 256) {
  gt.validate();
  if (pred.size() != gt.points()) throw Error(ErrorKind::kConfiguration, "prediction/ground-truth point counts differ");
  const Vec2 scale(static_cast<double>(eval_size) / img_w, static_cast<double>(eval_size) / img_h);
  TrackSet p;
  TrackSet g = gt;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].position.size() != gt.frames()) throw Error(ErrorKind::kConfiguration, "frame count mismatch");
    std::vector<Vec2> pos;
    for (const Vec2& x : pred[i].position) pos.push_back(x.cwiseProduct(scale));
    p.positions.push_back(std::move(pos));
    p.visible.push_back(pred[i].visible);
    for (Vec2& x : g.positions[i]) x = x.cwiseProduct(scale);
  }
  return tracking_metrics(p, g);
}

/// Threshold on the coarse cosine maximizing occlusion accuracy against
/// labeled visibility. Candidates are the observed scores; ties keep the
/// smallest threshold.
inline double calibrate_occlusion_threshold(const std::vector<TrackResult>& pred, const TrackSet& gt) {
  std::vector<double> candidates;
  for (const TrackResult& tr : pred) candidates.insert(candidates.end(), tr.score.begin(), tr.score.end());
  candidates.push_back(std::numeric_limits<double>::infinity());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_thr = candidates.front();
  std::size_t best_ok = 0;
  for (double thr : candidates) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      for (std::size_t t = 0; t < pred[i].score.size(); ++t) ok += (pred[i].score[t] >= thr) == gt.visible[i][t];
    }
    if (ok > best_ok) {
      best_ok = ok;
      best_thr = thr;
    }
  }
  return best_thr;
}

}  // namespace mveq

#endif  // MVEQ_TRACKING_HPP_
