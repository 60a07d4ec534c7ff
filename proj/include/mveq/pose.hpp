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

// One-shot pose estimation: a database of (feature, 3D point) entries built
// from reference views, 2D-3D matching by cosine, and RANSAC over a 6-point
// DLT solver followed by Gauss-Newton refinement.

#ifndef MVEQ_POSE_HPP_
#define MVEQ_POSE_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"
#include "mveq/matching.hpp"
#include "mveq/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mveq {

struct PoseDatabase {
  Eigen::MatrixXd features;  // channels x entries, unit columns
  std::vector<Vec3> points;
  std::vector<int> entry_view;  // index into source_views
  std::vector<std::string> source_views;

  std::size_t size() const { return points.size(); }
};

struct RansacConfig {
  int iterations = 10000;
  double inlier_threshold = 8.0;  // pixels of reprojection error
  int min_sample = 6;
  std::uint64_t seed = 0;
  bool refine = true;

  void validate() const {
    if (iterations < 1) throw Error(ErrorKind::kConfiguration, "RANSAC needs >= 1 iteration");
    if (!(inlier_threshold > 0.0)) throw Error(ErrorKind::kConfiguration, "inlier threshold must be > 0");
    if (min_sample < 6) throw Error(ErrorKind::kConfiguration, "DLT needs min_sample >= 6");
  }
};

/// Threshold given at `working_resolution` rescaled to an image of the given size.
inline double scaled_threshold(double threshold, int width, int height, int working_resolution = 512) {
  return threshold * static_cast<double>(std::min(width, height)) / working_resolution;
}

struct PoseEstimate {
  RigidPose pose;
  std::size_t inlier_count = 0;
  double mean_reproj_err = 0.0;
  std::vector<std::size_t> inliers;
  RigidPose unrefined;  // best RANSAC hypothesis before refinement
  std::vector<std::size_t> unrefined_inliers;

  /// Fewer inliers than a minimal sample plus one means no consensus.
  bool succeeded(const RansacConfig& cfg) const { return inlier_count > static_cast<std::size_t>(cfg.min_sample); }
};

struct Correspondence2D3D {
  Vec2 pixel;
  Vec3 point;
  double score = 1.0;
};

/// Stride-grid entries of every reference view with depth and features.
inline PoseDatabase build_database(const std::vector<ViewRecord>& refs, int stride = 4,
                                   std::vector<std::string>* warnings = nullptr) {
  if (stride < 1) throw Error(ErrorKind::kConfiguration, "stride must be >= 1");
  PoseDatabase db;
  std::vector<PixelFeature> feats;
  for (const ViewRecord& v : refs) {
    if (!v.depth || !v.features) {
      if (warnings) warnings->push_back("reference view '" + v.id + "' lacks depth or features; skipped");
      continue;
    }
    std::size_t added = 0;
    for (int row = 0; row < v.depth->height; row += stride) {
      for (int col = 0; col < v.depth->width; col += stride) {
        const double d = v.depth->at(row, col);
        if (!(d > 0.0)) continue;
        const Vec2 x(col + 0.5, row + 0.5);
        feats.push_back(sample_feature(*v.features, x, true));
        db.points.push_back(backproject(x, d, v.intrinsics, v.pose));
        db.entry_view.push_back(static_cast<int>(db.source_views.size()));
        ++added;
      }
    }
    if (added == 0 && warnings) warnings->push_back("reference view '" + v.id + "' has no valid depth");
    db.source_views.push_back(v.id);
  }
  if (!feats.empty()) {
    db.features.resize(feats.front().size(), static_cast<Eigen::Index>(feats.size()));
    for (std::size_t k = 0; k < feats.size(); ++k) db.features.col(static_cast<Eigen::Index>(k)) = feats[k];
  }
  return db;
}

/// Nearest database entry by cosine for each stride-grid pixel of the query.
/// Query pixels are restricted to valid depth when the query carries depth.
inline std::vector<Correspondence2D3D> match_2d3d(const ViewRecord& query, const PoseDatabase& db, int stride = 4,
                                                  std::optional<double> score_floor = std::nullopt) {
  if (db.size() == 0) throw Error(ErrorKind::kNoCandidates, "pose database is empty");
  if (!query.features) throw Error(ErrorKind::kConfiguration, "query view '" + query.id + "' has no features");
  if (query.features->channels != db.features.rows()) {
    throw Error(ErrorKind::kConfiguration, "query/database channel mismatch");
  }
  const FeatureMap& fm = *query.features;
  std::vector<Vec2> pixels;
  std::vector<PixelFeature> feats;
  for (int row = 0; row < fm.img_h; row += stride) {
    for (int col = 0; col < fm.img_w; col += stride) {
      if (query.depth && !query.depth->valid(row, col)) continue;
      pixels.emplace_back(col + 0.5, row + 0.5);
      feats.push_back(sample_feature(fm, pixels.back(), true));
    }
  }
  std::vector<Correspondence2D3D> out;
  if (pixels.empty()) return out;
  Eigen::MatrixXd q(db.features.rows(), static_cast<Eigen::Index>(pixels.size()));
  for (std::size_t k = 0; k < feats.size(); ++k) q.col(static_cast<Eigen::Index>(k)) = feats[k];

  // Blocked to bound the score matrix size.
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < q.cols(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, q.cols() - start);
    const Eigen::MatrixXd scores = db.features.transpose() * q.middleCols(start, len);
    for (Eigen::Index j = 0; j < len; ++j) {
      Eigen::Index best = 0;
      double best_score = scores(0, j);
      for (Eigen::Index e = 1; e < scores.rows(); ++e) {
        if (scores(e, j) > best_score) {
          best_score = scores(e, j);
          best = e;
        }
      }
      if (score_floor && best_score < *score_floor) continue;
      out.push_back({pixels[static_cast<std::size_t>(start + j)], db.points[static_cast<std::size_t>(best)], best_score});
    }
  }
  return out;
}

namespace detail {

inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

inline bool nearly_coplanar(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const auto ev = es.eigenvalues();
  return !(ev(2) > 0.0) || ev(0) / ev(2) < 1e-10;
}

/// DLT pose from normalized camera rays (K^-1 applied) and world points.
inline std::optional<RigidPose> dlt_pose(const std::vector<Vec2>& rays, const std::vector<Vec3>& pts) {
  const std::size_t n = pts.size();
  if (n < 6 || nearly_coplanar(pts)) return std::nullopt;

  Vec3 c3 = Vec3::Zero();
  Vec2 c2 = Vec2::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    c3 += pts[i];
    c2 += rays[i];
  }
  c3 /= static_cast<double>(n);
  c2 /= static_cast<double>(n);
  double d3 = 0.0;
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d3 += (pts[i] - c3).norm();
    d2 += (rays[i] - c2).norm();
  }
  if (!(d3 > 0.0) || !(d2 > 0.0)) return std::nullopt;
  const double s3 = std::sqrt(3.0) * static_cast<double>(n) / d3;
  const double s2 = std::sqrt(2.0) * static_cast<double>(n) / d2;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector4d xw;
    xw << s3 * (pts[i] - c3), 1.0;
    const Vec2 u = s2 * (rays[i] - c2);
    const auto r = 2 * static_cast<Eigen::Index>(i);
    a.block<1, 4>(r, 0) = xw.transpose();
    a.block<1, 4>(r, 8) = -u.x() * xw.transpose();
    a.block<1, 4>(r + 1, 4) = xw.transpose();
    a.block<1, 4>(r + 1, 8) = -u.y() * xw.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> pn;
  pn << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(), p.segment<4>(8).transpose();

  // Undo the normalizations: P = T2^-1 Pn T3.
  Mat3 t2_inv = Mat3::Identity();
  t2_inv(0, 0) = t2_inv(1, 1) = 1.0 / s2;
  t2_inv(0, 2) = c2.x();
  t2_inv(1, 2) = c2.y();
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.topRightCorner<3, 1>() = -s3 * c3;
  Eigen::Matrix<double, 3, 4> proj = t2_inv * pn * t3;

  Mat3 m = proj.leftCols<3>();
  if (m.determinant() < 0.0) {
    proj = -proj;
    m = -m;
  }
  Eigen::JacobiSVD<Mat3> msvd(m);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0)) return std::nullopt;
  RigidPose pose;
  pose.rotation = nearest_rotation(m);
  pose.translation = proj.col(3) / scale;
  if (!pose.rotation.allFinite() || !pose.translation.allFinite()) return std::nullopt;
  return pose;
}

inline double reproj_error(const Correspondence2D3D& c, const Intrinsics& k, const RigidPose& pose) {
  const Vec3 cam = pose.apply(c.point);
  if (!(cam.z() > 1e-12)) return std::numeric_limits<double>::infinity();
  const Vec2 px(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
  return (px - c.pixel).norm();
}

inline double sq_error_sum(const std::vector<Correspondence2D3D>& corrs, const std::vector<std::size_t>& set,
                           const Intrinsics& k, const RigidPose& pose) {
  double s = 0.0;
  for (std::size_t i : set) {
    const double e = reproj_error(corrs[i], k, pose);
    s += e * e;
  }
  return s;
}

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

/// Damped Gauss-Newton on summed squared reprojection error; never returns a worse pose.
inline RigidPose refine_pose(const std::vector<Correspondence2D3D>& corrs, const std::vector<std::size_t>& set,
                             const Intrinsics& k, RigidPose pose, int max_iters = 30) {
  double cost = sq_error_sum(corrs, set, k, pose);
  double lambda = 1e-6;
  for (int it = 0; it < max_iters && std::isfinite(cost); ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i : set) {
      const Vec3 rx = pose.rotation * corrs[i].point;
      const Vec3 pc = rx + pose.translation;
      const double z = pc.z();
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << k.fx / z, 0, -k.fx * pc.x() / (z * z), 0, k.fy / z, -k.fy * pc.y() / (z * z);
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = dpi * -skew(rx);
      j.rightCols<3>() = dpi;
      const Vec2 r(k.fx * pc.x() / z + k.cx - corrs[i].pixel.x(), k.fy * pc.y() / z + k.cy - corrs[i].pixel.y());
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    bool improved = false;
    for (int tries = 0; tries < 8 && !improved; ++tries) {
      Eigen::Matrix<double, 6, 6> h = jtj;
      h.diagonal() *= 1.0 + lambda;
      const Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-jtr);
      RigidPose cand;
      const Vec3 w = delta.head<3>();
      cand.rotation = (w.norm() > 0.0 ? axis_angle(w, w.norm()) : Mat3::Identity()) * pose.rotation;
      cand.rotation = nearest_rotation(cand.rotation);
      cand.translation = pose.translation + delta.tail<3>();
      const double c = sq_error_sum(corrs, set, k, cand);
      if (c < cost) {
        const double gain = cost - c;
        pose = cand;
        cost = c;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (gain <= 1e-14 * (1.0 + cost)) return pose;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return pose;
}

inline std::vector<std::size_t> inlier_set(const std::vector<Correspondence2D3D>& corrs, const Intrinsics& k,
                                           const RigidPose& pose, double threshold) {
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (reproj_error(corrs[i], k, pose) <= threshold) in.push_back(i);
  }
  return in;
}

inline double mean_error(const std::vector<Correspondence2D3D>& corrs, const std::vector<std::size_t>& set,
                         const Intrinsics& k, const RigidPose& pose) {
  if (set.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i : set) s += reproj_error(corrs[i], k, pose);
  return s / static_cast<double>(set.size());
}

inline std::optional<RigidPose> dlt_from(const std::vector<Correspondence2D3D>& corrs,
                                         const std::vector<std::size_t>& set, const Intrinsics& k) {
  std::vector<Vec2> rays;
  std::vector<Vec3> pts;
  for (std::size_t i : set) {
    rays.emplace_back((corrs[i].pixel.x() - k.cx) / k.fx, (corrs[i].pixel.y() - k.cy) / k.fy);
    pts.push_back(corrs[i].point);
  }
  return dlt_pose(rays, pts);
}

}  // namespace detail

/// RANSAC over 6-point DLT hypotheses. Iteration i draws its sample from an
/// independent stream of `cfg.seed`; ties in inlier count keep the earliest
/// iteration.
inline PoseEstimate solve_pnp_ransac(const std::vector<Correspondence2D3D>& corrs, const Intrinsics& k,
                                     const RansacConfig& cfg) {
  cfg.validate();
  if (corrs.size() < static_cast<std::size_t>(cfg.min_sample)) {
    throw Error(ErrorKind::kInsufficientCorrespondences,
                std::to_string(corrs.size()) + " correspondences, need " + std::to_string(cfg.min_sample));
  }
  PoseEstimate best;
  bool have = false;
  std::vector<std::size_t> sample(static_cast<std::size_t>(cfg.min_sample));
  for (int it = 0; it < cfg.iterations; ++it) {
    SplitMix64 rng = SplitMix64::stream(cfg.seed, static_cast<std::uint64_t>(it));
    for (std::size_t s = 0; s < sample.size(); ++s) {
      std::size_t pick;
      do {
        pick = rng.below(corrs.size());
      } while (std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), pick) !=
               sample.begin() + static_cast<std::ptrdiff_t>(s));
      sample[s] = pick;
    }
    const std::optional<RigidPose> hyp = detail::dlt_from(corrs, sample, k);
    if (!hyp) continue;
    std::size_t count = 0;
    for (const Correspondence2D3D& c : corrs) count += detail::reproj_error(c, k, *hyp) <= cfg.inlier_threshold;
    if (!have || count > best.inlier_count) {
      best.pose = best.unrefined = *hyp;
      best.inlier_count = count;
      have = true;
    }
  }
  if (!have) return best;

  best.unrefined_inliers = detail::inlier_set(corrs, k, best.unrefined, cfg.inlier_threshold);
  best.inliers = best.unrefined_inliers;
  if (cfg.refine && best.inliers.size() >= static_cast<std::size_t>(cfg.min_sample)) {
    RigidPose start = best.unrefined;
    const double base_cost = detail::sq_error_sum(corrs, best.inliers, k, start);
    if (auto all = detail::dlt_from(corrs, best.inliers, k)) {
      if (detail::sq_error_sum(corrs, best.inliers, k, *all) < base_cost) start = *all;
    }
    best.pose = detail::refine_pose(corrs, best.inliers, k, start);
    best.inliers = detail::inlier_set(corrs, k, best.pose, cfg.inlier_threshold);
  }
  best.inlier_count = best.inliers.size();
  best.mean_reproj_err = detail::mean_error(corrs, best.inliers, k, best.pose);
  return best;
}

struct PoseTaskConfig {
  int stride = 4;
  RansacConfig ransac;
  std::optional<double> score_floor;
  std::optional<std::string> units = "meters";
  int working_resolution = 512;  // ransac.inlier_threshold is given at this resolution
};

struct PoseFrameResult {
  std::string view_id;
  std::optional<RigidPose> estimate;
  std::size_t correspondences = 0;
  std::size_t inliers = 0;
  double rotation_err_deg = std::numeric_limits<double>::infinity();
  double translation_err = std::numeric_limits<double>::infinity();
  std::string failure;
};

struct PoseTaskResult {
  PoseAccuracyReport report;
  std::vector<PoseFrameResult> frames;
};

/// Match, solve and score each query against its ground-truth pose. Frames
/// that fail at any stage count as incorrect at every threshold.
inline PoseTaskResult evaluate_pose_task(const std::vector<ViewRecord>& queries, const PoseDatabase& db,
                                         const PoseTaskConfig& cfg) {
  PoseTaskResult out;
  std::vector<std::optional<RigidPose>> est;
  std::vector<RigidPose> gt;
  for (const ViewRecord& q : queries) {
    PoseFrameResult fr;
    fr.view_id = q.id;
    try {
      const auto corrs = match_2d3d(q, db, cfg.stride, cfg.score_floor);
      fr.correspondences = corrs.size();
      RansacConfig rc = cfg.ransac;
      rc.inlier_threshold = scaled_threshold(cfg.ransac.inlier_threshold, q.intrinsics.width, q.intrinsics.height,
                                             cfg.working_resolution);
      const PoseEstimate pe = solve_pnp_ransac(corrs, q.intrinsics, rc);
      fr.inliers = pe.inlier_count;
      if (pe.succeeded(rc)) {
        fr.estimate = pe.pose;
        fr.rotation_err_deg = rotation_error_deg(pe.pose.rotation, q.pose.rotation);
        fr.translation_err = (pe.pose.translation - q.pose.translation).norm();
      } else {
        fr.failure = "no RANSAC consensus";
      }
    } catch (const Error& e) {
      fr.failure = e.what();
    }
    est.push_back(fr.estimate);
    gt.push_back(q.pose);
    out.frames.push_back(std::move(fr));
  }
  out.report = pose_accuracy(est, gt, cfg.units);
  return out;
}

}  // namespace mveq

#endif  // MVEQ_POSE_HPP_
