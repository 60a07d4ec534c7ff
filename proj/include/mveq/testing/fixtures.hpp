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

// Seeded random fixtures shared by tests, selfcheck and the acceptance run.

#ifndef MVEQ_TESTING_FIXTURES_HPP_
#define MVEQ_TESTING_FIXTURES_HPP_

#include "mveq/common.hpp"
#include "mveq/convhead.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"
#include "mveq/pose.hpp"
#include "mveq/smoothap.hpp"

#include <cmath>
#include <vector>

namespace mveq::fixture {

inline Vec3 random_unit(SplitMix64& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

inline Mat3 random_rotation(SplitMix64& rng) {
  return axis_angle(random_unit(rng), rng.uniform() * 2.0 * M_PI);
}

inline FeatureMap random_feature_map(SplitMix64& rng, int img_w, int img_h, int patch, int channels) {
  FeatureMap m = FeatureMap::zeros(img_w, img_h, patch, channels);
  for (float& v : m.data) v = static_cast<float>(rng.normal());
  return m;
}

/// Random head with weights of standard deviation `scale`.
inline HeadParams random_head(SplitMix64& rng, int channels, int n_layers, bool residual, double scale) {
  HeadParams p = HeadParams::zero_init(channels, n_layers, residual);
  for (ConvLayer& l : p.layers) {
    for (float& w : l.weight) w = static_cast<float>(scale * rng.normal());
    for (float& b : l.bias) b = static_cast<float>(scale * rng.normal());
  }
  return p;
}

inline RankingInstance random_ranking(SplitMix64& rng, int dim, int n_pos, int n_neg, double tau) {
  RankingInstance inst;
  auto unit = [&] {
    PixelFeature f(dim);
    for (int i = 0; i < dim; ++i) f[i] = rng.normal();
    return PixelFeature(f.normalized());
  };
  inst.query = unit();
  for (int i = 0; i < n_pos; ++i) inst.positives.push_back(unit());
  for (int i = 0; i < n_neg; ++i) inst.negatives.push_back(unit());
  inst.tau = tau;
  return inst;
}

struct PnpFixture {
  Intrinsics intrinsics;
  RigidPose truth;
  std::vector<Correspondence2D3D> corrs;
  std::vector<bool> is_outlier;
};

/// Exact 2D-3D correspondences of points in a unit-ish cube in front of a
/// 640x480 camera, with a fraction replaced by uniformly random pixels.
inline PnpFixture pnp_fixture(std::uint64_t seed, int n, double outlier_fraction) {
  SplitMix64 rng(seed);
  PnpFixture f;
  f.intrinsics = {500.0, 500.0, 320.0, 240.0, 640, 480};
  f.truth.rotation = random_rotation(rng);
  f.truth.translation = Vec3(0.2 * rng.normal(), 0.2 * rng.normal(), 5.0 + rng.uniform());
  const int n_out = static_cast<int>(std::lround(n * outlier_fraction));
  while (static_cast<int>(f.corrs.size()) < n) {
    const Vec3 p(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    const Projection pr = project(p, f.intrinsics, f.truth);
    if (!f.intrinsics.contains(pr.pixel)) continue;
    f.corrs.push_back({pr.pixel, p, 1.0});
    f.is_outlier.push_back(false);
  }
  // Outliers at evenly spread indices.
  for (int k = 0; k < n_out; ++k) {
    const std::size_t i = static_cast<std::size_t>(k) * n / n_out;
    f.corrs[i].pixel = Vec2(rng.uniform() * f.intrinsics.width, rng.uniform() * f.intrinsics.height);
    f.is_outlier[i] = true;
  }
  return f;
}

/// A smooth random field: a sum of a few low-frequency cosines per channel,
/// sampled on the patch grid.
inline FeatureMap smooth_feature_map(SplitMix64& rng, int img_w, int img_h, int patch, int channels) {
  FeatureMap m = FeatureMap::zeros(img_w, img_h, patch, channels);
  for (int c = 0; c < channels; ++c) {
    const double fu = 0.5 * rng.normal() / m.wf;
    const double fv = 0.5 * rng.normal() / m.hf;
    const double phase = rng.uniform() * 2.0 * M_PI;
    const double offset = rng.normal();
    for (int r = 0; r < m.hf; ++r) {
      for (int col = 0; col < m.wf; ++col) {
        m.cell(r, col)[c] = static_cast<float>(offset + std::cos(2.0 * M_PI * (fu * col + fv * r) + phase));
      }
    }
  }
  return m;
}

/// Cameras facing the plane z = 0 from `depth` away. View i sees the plane
/// shifted by `pixel_offsets[i]`, so with whole-pixel offsets every ground
/// truth correspondence lands on a pixel center.
inline std::vector<RigidPose> plane_shift_cameras(const std::vector<Vec2>& pixel_offsets, double focal, double depth) {
  std::vector<RigidPose> poses;
  for (const Vec2& o : pixel_offsets) {
    poses.push_back({Mat3::Identity(), Vec3(o.x() * depth / focal, o.y() * depth / focal, depth)});
  }
  return poses;
}

}  // namespace mveq::fixture

#endif  // MVEQ_TESTING_FIXTURES_HPP_
