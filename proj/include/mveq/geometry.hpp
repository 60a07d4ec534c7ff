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

// Pinhole camera model, ground-truth correspondence generation and analytic
// scenes.
//
// Image coordinates are continuous: pixel (col, row) covers
// [col, col + 1) x [row, row + 1) and its center sits at (col + 0.5, row + 0.5).
// project() and backproject() work directly in these coordinates.

#ifndef MVEQ_GEOMETRY_HPP_
#define MVEQ_GEOMETRY_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <type_traits>
#include <variant>
#include <vector>

namespace mveq {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorKind::kConfiguration, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorKind::kConfiguration, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      throw Error(ErrorKind::kConfiguration, "principal point outside the image");
    }
  }

  bool contains(const Vec2& x) const {
    return x.x() >= 0.0 && x.x() < width && x.y() >= 0.0 && x.y() < height;
  }

  static Intrinsics centered(int width, int height, double focal) {
    return {focal, focal, width / 2.0, height / 2.0, width, height};
  }
};

/// World-to-camera transform: p_cam = rotation * p_world + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Camera center in world coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }

  RigidPose inverse() const {
    return {rotation.transpose(), -rotation.transpose() * translation};
  }

  void validate(double tol = 1e-9) const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= tol) || !(std::abs(rotation.determinant() - 1.0) <= tol)) {
      throw Error(ErrorKind::kInvalidRotation, "rotation is not orthonormal with det 1");
    }
    if (!translation.allFinite()) throw Error(ErrorKind::kConfiguration, "non-finite translation");
  }
};

/// Camera at `eye` looking at `target`; image x right, image y down.
inline RigidPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  RigidPose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

inline Mat3 axis_angle(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

/// Optical-axis depth per pixel, row-major. Nonpositive entries mark background.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  bool valid(int row, int col) const { return at(row, col) > 0.0; }

  /// Bilinear depth at continuous image coords. Returns nullopt when a
  /// neighbor that carries weight is background.
  struct Tap {
    int row;
    int col;
    double weight;
  };

  /// The bilinear stencil around image coords `x`, zero weights dropped.
  std::vector<Tap> taps(const Vec2& x) const {
    const double gu = std::clamp(x.x() - 0.5, 0.0, static_cast<double>(width - 1));
    const double gv = std::clamp(x.y() - 0.5, 0.0, static_cast<double>(height - 1));
    const int c0 = static_cast<int>(std::floor(gu));
    const int r0 = static_cast<int>(std::floor(gv));
    const int c1 = std::min(c0 + 1, width - 1);
    const int r1 = std::min(r0 + 1, height - 1);
    const double fu = gu - c0;
    const double fv = gv - r0;
    std::vector<Tap> out;
    for (const Tap& t : {Tap{r0, c0, (1 - fu) * (1 - fv)}, Tap{r0, c1, fu * (1 - fv)}, Tap{r1, c0, (1 - fu) * fv},
                         Tap{r1, c1, fu * fv}}) {
      if (t.weight > 1e-9) out.push_back(t);
    }
    return out;
  }

  std::optional<double> sample(const Vec2& x) const {
    double acc = 0.0;
    double wsum = 0.0;
    for (const Tap& t : taps(x)) {
      const double d = at(t.row, t.col);
      if (!(d > 0.0)) return std::nullopt;
      acc += t.weight * d;
      wsum += t.weight;
    }
    return acc / wsum;
  }

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double d) { return d > 0.0; }));
  }
};

/// One camera view: calibration, pose, and optionally depth and features.
struct ViewRecord {
  std::string id;
  Intrinsics intrinsics;
  RigidPose pose;
  std::optional<DepthMap> depth;
  std::optional<FeatureMap> features;
};

struct OcclusionTolerance {
  double abs = 1e-4;
  double rel = 0.01;

  double at(double z) const { return std::max(abs, rel * z); }
};

struct Correspondence {
  Vec2 x1;
  Vec2 x2;
};

struct CorrespondenceSet {
  std::string view_a;
  std::string view_b;
  std::vector<Correspondence> pairs;
  int image_w = 0;  // of view b
  int image_h = 0;
  std::size_t considered = 0;  // valid-depth grid pixels of view a
  std::size_t rejected = 0;

  std::size_t size() const { return pairs.size(); }
};

/// World point seen at image coords `x` with optical-axis depth `depth`.
inline Vec3 backproject(const Vec2& x, double depth, const Intrinsics& k, const RigidPose& pose) {
  if (!(depth > 0.0)) throw Error(ErrorKind::kInvalidDepth, "depth must be positive, got " + std::to_string(depth));
  const Vec3 ray((x.x() - k.cx) / k.fx, (x.y() - k.cy) / k.fy, 1.0);
  return pose.rotation.transpose() * (depth * ray - pose.translation);
}

struct Projection {
  Vec2 pixel;
  double depth;
};

/// Projects a world point. The returned depth may be negative; callers decide visibility.
inline Projection project(const Vec3& p, const Intrinsics& k, const RigidPose& pose) {
  const Vec3 cam = pose.apply(p);
  if (std::abs(cam.z()) < 1e-12) throw Error(ErrorKind::kBehindCamera, "point on the camera plane");
  return {Vec2(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy), cam.z()};
}

inline double rotation_error_deg(const Mat3& ra, const Mat3& rb) {
  for (const Mat3* r : {&ra, &rb}) {
    const double ortho = (r->transpose() * *r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-6) || !(std::abs(r->determinant() - 1.0) <= 1e-6)) {
      throw Error(ErrorKind::kInvalidRotation, "rotation_error_deg needs orthonormal inputs");
    }
  }
  const double c = std::clamp(((ra.transpose() * rb).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

namespace detail {

/// Unit surface normal at a depth pixel, facing the camera. Each axis uses
/// the one-sided difference with the smaller step so creases do not blur it.
inline std::optional<Vec3> depth_normal(const ViewRecord& v, int row, int col) {
  const DepthMap& d = *v.depth;
  auto point = [&](int r, int c) -> std::optional<Vec3> {
    if (r < 0 || c < 0 || r >= d.height || c >= d.width || !(d.at(r, c) > 0.0)) return std::nullopt;
    return backproject(Vec2(c + 0.5, r + 0.5), d.at(r, c), v.intrinsics, v.pose);
  };
  const std::optional<Vec3> p0 = point(row, col);
  if (!p0) return std::nullopt;
  auto step = [&](std::optional<Vec3> fwd, std::optional<Vec3> bwd) -> std::optional<Vec3> {
    if (fwd && bwd) return (*fwd - *p0).norm() < (*p0 - *bwd).norm() ? Vec3(*fwd - *p0) : Vec3(*p0 - *bwd);
    if (fwd) return Vec3(*fwd - *p0);
    if (bwd) return Vec3(*p0 - *bwd);
    return std::nullopt;
  };
  const std::optional<Vec3> du = step(point(row, col + 1), point(row, col - 1));
  const std::optional<Vec3> dv = step(point(row + 1, col), point(row - 1, col));
  if (!du || !dv) return std::nullopt;
  Vec3 n = du->cross(*dv);
  if (!(n.norm() > 0.0)) return std::nullopt;
  n.normalize();
  if (n.dot(v.pose.center() - *p0) < 0.0) n = -n;
  return n;
}

}  // namespace detail

/// Dense ground-truth matches from view a into view b with occlusion rejection.
inline CorrespondenceSet gt_correspondences(const ViewRecord& a, const ViewRecord& b, int stride = 1,
                                            const OcclusionTolerance& tol = {}) {
  if (stride < 1) throw Error(ErrorKind::kConfiguration, "stride must be >= 1");
  if (!a.depth || !b.depth) throw Error(ErrorKind::kConfiguration, "gt_correspondences needs depth on both views");
  for (const ViewRecord* v : {&a, &b}) {
    if (v->depth->width != v->intrinsics.width || v->depth->height != v->intrinsics.height) {
      throw Error(ErrorKind::kConfiguration, "depth dims do not match intrinsics for view '" + v->id + "'");
    }
  }
  const DepthMap& da = *a.depth;
  const DepthMap& db = *b.depth;
  CorrespondenceSet out;
  out.view_a = a.id;
  out.view_b = b.id;
  out.image_w = b.intrinsics.width;
  out.image_h = b.intrinsics.height;
  const Vec3 center_b = b.pose.center();
  for (int row = 0; row < da.height; row += stride) {
    for (int col = 0; col < da.width; col += stride) {
      const double d = da.at(row, col);
      if (!(d > 0.0)) continue;
      ++out.considered;
      const Vec2 x1(col + 0.5, row + 0.5);
      const Vec3 p = backproject(x1, d, a.intrinsics, a.pose);
      const Vec3 cam = b.pose.apply(p);
      if (!(cam.z() > 1e-12)) {
        ++out.rejected;
        continue;
      }
      const Vec2 x2(b.intrinsics.fx * cam.x() / cam.z() + b.intrinsics.cx,
                    b.intrinsics.fy * cam.y() / cam.z() + b.intrinsics.cy);
      if (!b.intrinsics.contains(x2)) {
        ++out.rejected;
        continue;
      }
      const std::optional<double> zb = db.sample(x2);
      if (!zb || std::abs(cam.z() - *zb) > tol.at(cam.z())) {
        ++out.rejected;
        continue;
      }
      // Interpolation hides thin occluders at creases and silhouettes, so
      // every tap must also lie on or behind the tangent plane through p.
      const std::optional<Vec3> n = detail::depth_normal(a, row, col);
      bool occluded = false;
      for (const DepthMap::Tap& t : db.taps(x2)) {
        const Vec3 ray_cam((t.col + 0.5 - b.intrinsics.cx) / b.intrinsics.fx,
                           (t.row + 0.5 - b.intrinsics.cy) / b.intrinsics.fy, 1.0);
        double expected = cam.z();  // fronto-parallel without a normal
        if (n) {
          const double den = n->dot(b.pose.rotation.transpose() * ray_cam);
          expected = std::abs(den) > 1e-9 ? n->dot(p - center_b) / den : -1.0;
        }
        if (!(expected > 0.0) || db.at(t.row, t.col) < expected - tol.at(expected)) {
          occluded = true;
          break;
        }
      }
      if (occluded) {
        ++out.rejected;
        continue;
      }
      out.pairs.push_back({x1, x2});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analytic scenes

struct Sphere {
  Vec3 center;
  double radius;
};

struct Box {
  Vec3 min;
  Vec3 max;
};

/// Two-sided plane {p : normal . p = offset}.
struct Plane {
  Vec3 normal;
  double offset;
};

using Primitive = std::variant<Sphere, Box, Plane>;

struct SyntheticScene {
  std::vector<Primitive> primitives;

  void validate() const {
    if (primitives.empty()) throw Error(ErrorKind::kConfiguration, "scene has no primitives");
    for (const Primitive& prim : primitives) {
      if (const auto* s = std::get_if<Sphere>(&prim); s && !(s->radius > 0.0)) {
        throw Error(ErrorKind::kConfiguration, "sphere radius must be positive");
      }
      if (const auto* b = std::get_if<Box>(&prim); b && !(b->min.array() < b->max.array()).all()) {
        throw Error(ErrorKind::kConfiguration, "box min must be < max componentwise");
      }
      if (const auto* p = std::get_if<Plane>(&prim); p && !(p->normal.norm() > 0.0)) {
        throw Error(ErrorKind::kConfiguration, "plane normal must be nonzero");
      }
    }
  }
};

inline constexpr double kRayEpsilon = 1e-9;

/// Nearest positive ray parameter of a hit, in units of `dir`.
inline std::optional<double> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir) {
  return std::visit(
      [&](const auto& shape) -> std::optional<double> {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          const Vec3 oc = origin - shape.center;
          const double a = dir.squaredNorm();
          const double b = oc.dot(dir);
          const double c = oc.squaredNorm() - shape.radius * shape.radius;
          const double disc = b * b - a * c;
          if (disc < 0.0) return std::nullopt;
          const double sq = std::sqrt(disc);
          // Cancellation-free pair of roots.
          const double q = b > 0.0 ? -(b + sq) : -(b - sq);
          double t0 = q / a;
          double t1 = q != 0.0 ? c / q : t0;
          if (t0 > t1) std::swap(t0, t1);
          if (t0 > kRayEpsilon) return t0;
          if (t1 > kRayEpsilon) return t1;
          return std::nullopt;
        } else if constexpr (std::is_same_v<T, Box>) {
          double tmin = -std::numeric_limits<double>::infinity();
          double tmax = std::numeric_limits<double>::infinity();
          for (int i = 0; i < 3; ++i) {
            if (dir[i] == 0.0) {
              if (origin[i] < shape.min[i] || origin[i] > shape.max[i]) return std::nullopt;
              continue;
            }
            double ta = (shape.min[i] - origin[i]) / dir[i];
            double tb = (shape.max[i] - origin[i]) / dir[i];
            if (ta > tb) std::swap(ta, tb);
            tmin = std::max(tmin, ta);
            tmax = std::min(tmax, tb);
          }
          if (tmin > tmax) return std::nullopt;
          if (tmin > kRayEpsilon) return tmin;
          if (tmax > kRayEpsilon) return tmax;
          return std::nullopt;
        } else {
          const double denom = shape.normal.dot(dir);
          if (std::abs(denom) < 1e-15) return std::nullopt;
          const double t = (shape.offset - shape.normal.dot(origin)) / denom;
          if (t > kRayEpsilon) return t;
          return std::nullopt;
        }
      },
      prim);
}

inline std::optional<double> trace_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir) {
  std::optional<double> best;
  for (const Primitive& prim : scene.primitives) {
    const std::optional<double> t = intersect(prim, origin, dir);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

/// Optical-axis depth of the first surface seen through continuous image coords `x`.
inline std::optional<double> raytrace_pixel(const SyntheticScene& scene, const Vec2& x, const Intrinsics& k,
                                            const RigidPose& pose) {
  const Vec3 ray_cam((x.x() - k.cx) / k.fx, (x.y() - k.cy) / k.fy, 1.0);
  // With a camera-frame ray of unit z, the ray parameter equals optical-axis depth.
  return trace_ray(scene, pose.center(), pose.rotation.transpose() * ray_cam);
}

inline DepthMap raytrace_depth(const SyntheticScene& scene, const Intrinsics& k, const RigidPose& pose) {
  scene.validate();
  DepthMap depth(k.width, k.height, 0.0);
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      if (auto t = raytrace_pixel(scene, Vec2(col + 0.5, row + 0.5), k, pose)) depth.at(row, col) = *t;
    }
  }
  return depth;
}

/// `n` near-uniform unit directions on a Fibonacci lattice.
inline std::vector<Vec3> fibonacci_sphere(int n) {
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(std::max(n, 0)));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

// ---------------------------------------------------------------------------
// DPT1: "DPT1", u32 width, u32 height, width*height float32, all little-endian.

inline std::string encode_depth_map(const DepthMap& depth) {
  std::string out = "DPT1";
  detail::put_u32(out, static_cast<std::uint32_t>(depth.width));
  detail::put_u32(out, static_cast<std::uint32_t>(depth.height));
  for (double d : depth.values) detail::put_f32(out, static_cast<float>(d));
  return out;
}

inline DepthMap decode_depth_map(std::string bytes) {
  detail::ByteReader in(std::move(bytes));
  in.expect_magic("DPT1");
  const std::uint32_t w = in.u32("width");
  const std::uint32_t h = in.u32("height");
  if (w == 0 || h == 0) throw FormatError("zero depth map dimension", in.offset());
  const std::vector<float> raw = in.f32_array(static_cast<std::uint64_t>(w) * h, "depth");
  in.expect_end();
  DepthMap depth(static_cast<int>(w), static_cast<int>(h));
  std::copy(raw.begin(), raw.end(), depth.values.begin());
  return depth;
}

inline void save_depth_map(const std::filesystem::path& path, const DepthMap& depth) {
  write_file_atomic(path, encode_depth_map(depth));
}

inline DepthMap load_depth_map(const std::filesystem::path& path) { return decode_depth_map(read_file_bytes(path)); }

}  // namespace mveq

#endif  // MVEQ_GEOMETRY_HPP_
