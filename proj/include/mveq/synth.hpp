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

// Synthetic multiview fixtures: analytic scenes viewed from a Fibonacci
// sphere of cameras, exact ray-traced depth, and "oracle" feature maps that
// encode the world point behind every patch, so the true nearest neighbor of
// a feature is known in closed form.

#ifndef MVEQ_SYNTH_HPP_
#define MVEQ_SYNTH_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"
#include "mveq/manifest.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mveq {

inline SyntheticScene scene_preset(const std::string& name) {
  SyntheticScene s;
  if (name == "sphere") {
    s.primitives.push_back(Sphere{Vec3::Zero(), 1.0});
  } else if (name == "box") {
    s.primitives.push_back(Box{Vec3(-0.7, -0.5, -0.6), Vec3(0.7, 0.5, 0.6)});
  } else if (name == "sphere_box") {
    s.primitives.push_back(Sphere{Vec3(-0.3, 0.0, 0.0), 0.8});
    s.primitives.push_back(Box{Vec3(0.2, -0.4, -0.4), Vec3(1.0, 0.4, 0.4)});
  } else {
    throw Error(ErrorKind::kConfiguration, "unknown scene preset '" + name + "'");
  }
  return s;
}

/// {"primitives": [{"type": "sphere", "center": [..], "radius": r},
///                 {"type": "box", "min": [..], "max": [..]},
///                 {"type": "plane", "normal": [..], "offset": d}]}
inline SyntheticScene scene_from_json(const json& j) {
  auto vec = [](const json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); };
  SyntheticScene s;
  for (const json& p : j.at("primitives")) {
    const std::string type = p.at("type").get<std::string>();
    if (type == "sphere") {
      s.primitives.push_back(Sphere{vec(p.at("center")), p.at("radius").get<double>()});
    } else if (type == "box") {
      s.primitives.push_back(Box{vec(p.at("min")), vec(p.at("max"))});
    } else if (type == "plane") {
      s.primitives.push_back(Plane{vec(p.at("normal")), p.at("offset").get<double>()});
    } else {
      throw Error(ErrorKind::kConfiguration, "unknown primitive type '" + type + "'");
    }
  }
  s.validate();
  return s;
}

/// Random-Fourier embedding of world points: channel pairs
/// (cos w_k.P, sin w_k.P) plus one background channel. Foreground features
/// all have norm sqrt(K); cosine between two embeddings is the mean of
/// cos(w_k . (P - Q)), which peaks at P = Q.
class OracleEncoder {
 public:
  OracleEncoder(int channels, double scene_scale = 1.0) : channels_(channels) {
    if (channels < 3) throw Error(ErrorKind::kConfiguration, "oracle features need >= 3 channels");
    const int k = (channels - 1) / 2;
    const std::vector<Vec3> dirs = fibonacci_sphere(k);
    static constexpr double kMagnitudes[] = {1.5, 3.0, 6.0};
    for (int i = 0; i < k; ++i) freqs_.push_back(dirs[i] * kMagnitudes[i % 3] / scene_scale);
  }

  int channels() const { return channels_; }

  void encode(const Vec3& p, std::span<float> out) const {
    std::fill(out.begin(), out.end(), 0.0f);
    for (std::size_t i = 0; i < freqs_.size(); ++i) {
      const double phase = freqs_[i].dot(p);
      out[2 * i] = static_cast<float>(std::cos(phase));
      out[2 * i + 1] = static_cast<float>(std::sin(phase));
    }
  }

  void encode_background(std::span<float> out) const {
    std::fill(out.begin(), out.end(), 0.0f);
    out[channels_ - 1] = static_cast<float>(std::sqrt(static_cast<double>(freqs_.size())));
  }

 private:
  int channels_;
  std::vector<Vec3> freqs_;
};

/// Oracle features for one view at patch resolution. Each cell encodes the
/// surface point seen through its center; `noise` adds i.i.d. Gaussian noise
/// of that standard deviation to every value.
inline FeatureMap oracle_features(const SyntheticScene& scene, const Intrinsics& k, const RigidPose& pose,
                                  const OracleEncoder& enc, int patch, double noise, std::uint64_t seed) {
  FeatureMap m = FeatureMap::zeros(k.width, k.height, patch, enc.channels());
  SplitMix64 rng(seed);
  for (int i = 0; i < m.hf; ++i) {
    for (int j = 0; j < m.wf; ++j) {
      const Vec2 center((j + 0.5) * patch, (i + 0.5) * patch);
      const Vec3 ray((center.x() - k.cx) / k.fx, (center.y() - k.cy) / k.fy, 1.0);
      if (auto depth = raytrace_pixel(scene, center, k, pose)) {
        enc.encode(pose.rotation.transpose() * (*depth * ray - pose.translation), m.cell(i, j));
      } else {
        enc.encode_background(m.cell(i, j));
      }
      if (noise > 0.0) {
        for (float& v : m.cell(i, j)) v += static_cast<float>(noise * rng.normal());
      }
    }
  }
  return m;
}

struct SynthConfig {
  std::string object_id = "synth";
  SyntheticScene scene = scene_preset("sphere");
  int n_views = 42;
  int image_size = 64;
  double focal = 76.8;            // pixels
  double camera_distance = 4.0;   // scene units from the origin
  bool oracle_features = true;
  int patch = 4;
  int channels = 33;
  double noise = 0.0;
  double scene_scale = 1.0;
  std::uint64_t seed = 0;
  int query_views = 0;  // trailing views marked role "query"
};

inline std::vector<RigidPose> fibonacci_cameras(int n, double distance) {
  std::vector<RigidPose> poses;
  for (const Vec3& d : fibonacci_sphere(n)) poses.push_back(look_at(d * distance, Vec3::Zero()));
  return poses;
}

/// Renders every view of `cfg` in memory.
inline std::vector<ViewRecord> synthesize_views(const SynthConfig& cfg,
                                                const std::vector<RigidPose>& poses) {
  cfg.scene.validate();
  const Intrinsics k = Intrinsics::centered(cfg.image_size, cfg.image_size, cfg.focal);
  std::optional<OracleEncoder> enc;
  if (cfg.oracle_features) enc.emplace(cfg.channels, cfg.scene_scale);
  std::vector<ViewRecord> views;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    ViewRecord v;
    char id[32];
    std::snprintf(id, sizeof id, "v%03zu", i);
    v.id = id;
    v.intrinsics = k;
    v.pose = poses[i];
    v.depth = raytrace_depth(cfg.scene, k, v.pose);
    if (enc) {
      v.features = oracle_features(cfg.scene, k, v.pose, *enc, cfg.patch, cfg.noise,
                                   SplitMix64::stream(cfg.seed, i).next());
    }
    views.push_back(std::move(v));
  }
  return views;
}

/// Writes DPT1 depth, optional FTB1 features and a manifest into `out_dir`.
inline DatasetManifest write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.n_views < 2) throw Error(ErrorKind::kConfiguration, "gen-synth needs at least 2 views");
  const auto views = synthesize_views(cfg, fibonacci_cameras(cfg.n_views, cfg.camera_distance));
  DatasetManifest m;
  m.base_dir = out_dir;
  ObjectEntry obj;
  obj.id = cfg.object_id;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const ViewRecord& v = views[i];
    ViewEntry e;
    e.id = v.id;
    e.intrinsics = v.intrinsics;
    e.pose = v.pose;
    e.depth_path = cfg.object_id + "/" + v.id + ".dpt";
    save_depth_map(out_dir / *e.depth_path, *v.depth);
    if (v.features) {
      e.feature_path = cfg.object_id + "/" + v.id + ".ftb";
      save_feature_map(out_dir / *e.feature_path, *v.features);
    }
    if (static_cast<int>(i) >= cfg.n_views - cfg.query_views) e.role = "query";
    obj.views.push_back(std::move(e));
  }
  m.objects.push_back(std::move(obj));
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace mveq

#endif  // MVEQ_SYNTH_HPP_
