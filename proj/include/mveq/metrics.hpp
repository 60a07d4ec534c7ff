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

// Scalar evaluation metrics. All results are percentages in [0, 100] except
// APE, which is an unbounded percentage of the shortest image edge.
// Aggregation runs in index order in double precision.

#ifndef MVEQ_METRICS_HPP_
#define MVEQ_METRICS_HPP_

#include "mveq/common.hpp"
#include "mveq/geometry.hpp"
#include "mveq/matching.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mveq {

inline constexpr std::array<double, 3> kPcdpDeltas = {0.05, 0.10, 0.20};
inline constexpr std::array<double, 3> kPckAlphas = {0.05, 0.10, 0.15};
inline constexpr std::array<double, 5> kTrackingThresholds = {1.0, 2.0, 4.0, 8.0, 16.0};

struct EquivarianceReport {
  double ape_percent = 0.0;
  std::map<double, double> pcdp;  // delta -> percent
  std::size_t pair_count = 0;
};

struct PoseThreshold {
  double cm;
  double deg;
};
inline constexpr std::array<PoseThreshold, 3> kPoseThresholds = {{{1, 1}, {3, 3}, {5, 5}}};

struct PoseAccuracyReport {
  std::array<double, 3> acc{};  // percent per kPoseThresholds entry
  std::size_t n_frames = 0;
};

struct TrackingReport {
  double aj = 0.0;
  double delta_avg = 0.0;
  double oa = 0.0;
};

namespace detail {

inline double normalized_error(const CorrespondenceSet& gt, std::size_t i, const MatchResult& pred) {
  const double edge = std::min(gt.image_w, gt.image_h);
  return (gt.pairs[i].x2 - pred.position).norm() / edge;
}

inline void check_sizes(const CorrespondenceSet& gt, std::span<const MatchResult> pred) {
  if (pred.size() != gt.pairs.size()) {
    throw Error(ErrorKind::kConfiguration, "prediction count " + std::to_string(pred.size()) +
                                               " != correspondence count " + std::to_string(gt.pairs.size()));
  }
  if (gt.image_w <= 0 || gt.image_h <= 0) throw Error(ErrorKind::kConfiguration, "correspondence set lacks image dims");
}

}  // namespace detail

/// Average pixel error: mean of |x2 - pred| / min(W, H), times 100.
inline double ape(const CorrespondenceSet& gt, std::span<const MatchResult> pred) {
  detail::check_sizes(gt, pred);
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += detail::normalized_error(gt, i, pred[i]);
  return 100.0 * sum / static_cast<double>(pred.size());
}

/// Percentage of predictions with normalized error strictly below `delta`.
inline double pcdp(const CorrespondenceSet& gt, std::span<const MatchResult> pred, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::kConfiguration, "pcdp delta must be in (0, 1)");
  detail::check_sizes(gt, pred);
  if (pred.empty()) return 100.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += detail::normalized_error(gt, i, pred[i]) < delta ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Running totals so that APE/PCDP over many view pairs aggregate per
/// correspondence, independent of how pairs are batched.
class EquivarianceAccumulator {
 public:
  void add(const CorrespondenceSet& gt, std::span<const MatchResult> pred) {
    detail::check_sizes(gt, pred);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = detail::normalized_error(gt, i, pred[i]);
      error_sum_ += e;
      for (std::size_t d = 0; d < kPcdpDeltas.size(); ++d) hits_[d] += e < kPcdpDeltas[d] ? 1 : 0;
    }
    count_ += pred.size();
  }

  void merge(const EquivarianceAccumulator& o) {
    error_sum_ += o.error_sum_;
    for (std::size_t d = 0; d < hits_.size(); ++d) hits_[d] += o.hits_[d];
    count_ += o.count_;
  }

  EquivarianceReport report() const {
    EquivarianceReport r;
    r.pair_count = count_;
    r.ape_percent = count_ ? 100.0 * error_sum_ / static_cast<double>(count_) : 0.0;
    for (std::size_t d = 0; d < kPcdpDeltas.size(); ++d) {
      r.pcdp[kPcdpDeltas[d]] = count_ ? 100.0 * static_cast<double>(hits_[d]) / static_cast<double>(count_) : 100.0;
    }
    return r;
  }

 private:
  double error_sum_ = 0.0;
  std::array<std::size_t, kPcdpDeltas.size()> hits_{};
  std::size_t count_ = 0;
};

/// Percentage of keypoints with error at most alpha * norm_len.
inline double pck(std::span<const Vec2> gt, std::span<const Vec2> pred, double norm_len, double alpha) {
  if (gt.size() != pred.size()) throw Error(ErrorKind::kConfiguration, "pck: keypoint list lengths differ");
  if (!(norm_len > 0.0)) throw Error(ErrorKind::kConfiguration, "pck: norm_len must be positive");
  if (gt.empty()) return 100.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hits += (gt[i] - pred[i]).norm() <= alpha * norm_len ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gt.size());
}

/// Scale of scene units relative to meters. Only explicit unit declarations are accepted.
inline double meters_per_unit(const std::optional<std::string>& units) {
  if (!units) throw Error(ErrorKind::kConfiguration, "pose accuracy needs a declared scene unit");
  if (*units == "meters" || *units == "m") return 1.0;
  if (*units == "centimeters" || *units == "cm") return 0.01;
  if (*units == "millimeters" || *units == "mm") return 0.001;
  throw Error(ErrorKind::kConfiguration, "unknown scene unit '" + *units + "'");
}

/// Whether one estimate is correct at a (cm, deg) threshold.
inline bool pose_within(const RigidPose& est, const RigidPose& gt, double meters_per_unit, PoseThreshold thr) {
  const double cm = (est.translation - gt.translation).norm() * meters_per_unit * 100.0;
  return cm <= thr.cm && rotation_error_deg(est.rotation, gt.rotation) <= thr.deg;
}

/// Missing estimates (failed frames) count as incorrect at every threshold.
inline PoseAccuracyReport pose_accuracy(std::span<const std::optional<RigidPose>> est, std::span<const RigidPose> gt,
                                        const std::optional<std::string>& units) {
  if (est.size() != gt.size()) throw Error(ErrorKind::kConfiguration, "pose_accuracy: list lengths differ");
  const double scale = meters_per_unit(units);
  PoseAccuracyReport r;
  r.n_frames = gt.size();
  if (gt.empty()) return r;
  for (std::size_t t = 0; t < kPoseThresholds.size(); ++t) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) ok += est[i] && pose_within(*est[i], gt[i], scale, kPoseThresholds[t]);
    r.acc[t] = 100.0 * static_cast<double>(ok) / static_cast<double>(gt.size());
  }
  return r;
}

/// Tracks for a set of points: positions[point][frame], visible[point][frame].
struct TrackSet {
  std::vector<std::vector<Vec2>> positions;
  std::vector<std::vector<bool>> visible;

  std::size_t points() const { return positions.size(); }
  std::size_t frames() const { return positions.empty() ? 0 : positions.front().size(); }

  void validate() const {
    if (visible.size() != positions.size()) throw Error(ErrorKind::kConfiguration, "track visibility/point mismatch");
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (positions[i].size() != frames() || visible[i].size() != frames()) {
        throw Error(ErrorKind::kConfiguration, "ragged track arrays");
      }
    }
  }
};

/// Threshold-averaged Jaccard, position accuracy and occlusion accuracy with
/// positions already expressed at the evaluation resolution. "Within" is a
/// strict distance test. An empty denominator scores 100.
inline TrackingReport tracking_metrics(const TrackSet& pred, const TrackSet& gt) {
  pred.validate();
  gt.validate();
  if (pred.points() != gt.points() || pred.frames() != gt.frames()) {
    throw Error(ErrorKind::kConfiguration, "tracking_metrics: prediction and ground-truth shapes differ");
  }
  auto pct = [](std::size_t num, std::size_t den) {
    return den == 0 ? 100.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  std::size_t occ_ok = 0;
  std::size_t total = 0;
  double jaccard_sum = 0.0;
  double delta_sum = 0.0;
  for (double thr : kTrackingThresholds) {
    std::size_t tp = 0, fp = 0, fn = 0, within_visible = 0, gt_visible = 0;
    for (std::size_t i = 0; i < gt.points(); ++i) {
      for (std::size_t t = 0; t < gt.frames(); ++t) {
        const bool gv = gt.visible[i][t];
        const bool pv = pred.visible[i][t];
        const bool within = (pred.positions[i][t] - gt.positions[i][t]).squaredNorm() < thr * thr;
        if (gv) {
          ++gt_visible;
          within_visible += within ? 1 : 0;
        }
        if (pv && gv && within) ++tp;
        if (pv && (!gv || !within)) ++fp;
        if (gv && (!pv || !within)) ++fn;
      }
    }
    jaccard_sum += pct(tp, tp + fp + fn);
    delta_sum += pct(within_visible, gt_visible);
  }
  for (std::size_t i = 0; i < gt.points(); ++i) {
    for (std::size_t t = 0; t < gt.frames(); ++t) {
      occ_ok += pred.visible[i][t] == gt.visible[i][t] ? 1 : 0;
      ++total;
    }
  }
  const double n = static_cast<double>(kTrackingThresholds.size());
  return {jaccard_sum / n, delta_sum / n, pct(occ_ok, total)};
}

}  // namespace mveq

#endif  // MVEQ_METRICS_HPP_
