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

// Built-in oracle suite run by `mveq selfcheck`.

#ifndef MVEQ_SELFCHECK_HPP_
#define MVEQ_SELFCHECK_HPP_

#include "mveq/mveq.hpp"
#include "mveq/testing/fixtures.hpp"
#include "mveq/testing/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace mveq {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelfcheckOptions {
  std::uint64_t seed = 0;
  /// Test hook: "smoothap-gradient" or "convhead-gradient" perturbs the
  /// analytic gradient before it is compared, so that check must fail.
  std::string inject_fault;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

inline CheckResult check_geometry_roundtrip(SplitMix64& rng) {
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Intrinsics k{rng.uniform(50, 1000), rng.uniform(50, 1000), rng.uniform(0, 640), rng.uniform(0, 480), 640, 480};
    const RigidPose pose{fixture::random_rotation(rng), Vec3(rng.normal(), rng.normal(), rng.normal())};
    const Vec2 x(rng.uniform(0, 640), rng.uniform(0, 480));
    const double depth = rng.uniform(0.1, 100.0);
    const Projection p = project(backproject(x, depth, k, pose), k, pose);
    worst = std::max({worst, (p.pixel - x).norm(), std::abs(p.depth - depth) / depth});
  }
  return {"geometry.roundtrip", worst <= 1e-9, "max err " + fmt("%.2e", worst)};
}

inline CheckResult check_sphere_depth() {
  const SyntheticScene scene = scene_preset("sphere");
  const Intrinsics k = Intrinsics::centered(32, 32, 38.4);
  const RigidPose pose = look_at(Vec3(1.0, 2.0, 3.0), Vec3::Zero());
  const DepthMap d = raytrace_depth(scene, k, pose);
  double worst = 0.0;
  bool agree = true;
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const auto o = oracle::sphere_depth(Vec3::Zero(), 1.0, k, pose, c + 0.5, r + 0.5);
      const double v = d.values[static_cast<std::size_t>(r) * 32 + c];
      if (o.has_value() != (v > 0.0)) agree = false;
      if (o) worst = std::max(worst, std::abs(*o - v));
    }
  }
  return {"geometry.sphere_depth", agree && worst <= 1e-9, "max err " + fmt("%.2e", worst)};
}

inline CheckResult check_gt_identity() {
  SynthConfig cfg;
  cfg.image_size = 32;
  cfg.focal = 38.4;
  cfg.oracle_features = false;
  const auto views = synthesize_views(cfg, {look_at(Vec3(0, 0, 4), Vec3::Zero())});
  const CorrespondenceSet gt = gt_correspondences(views[0], views[0]);
  bool identity = true;
  for (const Correspondence& c : gt.pairs) identity = identity && (c.x1 - c.x2).norm() <= 1e-9;
  const bool ok = identity && gt.rejected == 0 && gt.pairs.size() == gt.considered && !gt.pairs.empty();
  return {"geometry.gt_identity", ok, std::to_string(gt.pairs.size()) + " pairs, " + std::to_string(gt.rejected) + " rejected"};
}

inline CheckResult check_bilinear(SplitMix64& rng) {
  const FeatureMap m = fixture::random_feature_map(rng, 37, 29, 4, 6);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const Vec2 x(rng.uniform(0, 37), rng.uniform(0, 29));
    const PixelFeature v = sample_feature(m, x, false);
    const auto o = oracle::bilinear(m, x.x(), x.y());
    for (int c = 0; c < 6; ++c) worst = std::max(worst, std::abs(v[c] - o[c]));
  }
  return {"featstore.bilinear", worst <= 1e-9, "max err " + fmt("%.2e", worst)};
}

inline CheckResult check_brute_force(SplitMix64& rng) {
  const FeatureMap m = fixture::random_feature_map(rng, 16, 16, 2, 8);
  const DenseFeatures field(m);
  int mismatches = 0;
  double worst = 0.0;
  for (int i = 0; i < 40; ++i) {
    PixelFeature q(8);
    for (int c = 0; c < 8; ++c) q[c] = rng.normal();
    q.normalize();
    const MatchResult got = best_match(q, field, CandidateGrid::full());
    const oracle::Argmax want = oracle::best_pixel(std::vector<double>(q.data(), q.data() + 8), m);
    if (got.row != want.row || got.col != want.col) ++mismatches;
    worst = std::max(worst, std::abs(got.score - want.score));
  }
  return {"matching.brute_force", mismatches == 0 && worst <= 1e-9,
          std::to_string(mismatches) + " mismatches, score err " + fmt("%.2e", worst)};
}

inline CheckResult check_coarse_to_fine(SplitMix64& rng) {
  int mismatches = 0;
  int total = 0;
  for (int f = 0; f < 6; ++f) {
    const FeatureMap m = f % 2 ? fixture::smooth_feature_map(rng, 40, 32, 4, 8) : fixture::random_feature_map(rng, 40, 32, 4, 8);
    const DenseFeatures field(m);
    for (int i = 0; i < 20; ++i) {
      const PixelFeature q = sample_feature(m, Vec2(rng.uniform(0, 40), rng.uniform(0, 32)));
      const MatchResult a = coarse_to_fine_match(q, m, 1);
      const MatchResult b = best_match(q, field, CandidateGrid::full());
      mismatches += (a.row != b.row || a.col != b.col || a.score != b.score) ? 1 : 0;
      ++total;
    }
  }
  return {"matching.coarse_to_fine", mismatches == 0, std::to_string(mismatches) + "/" + std::to_string(total) + " differ"};
}

inline CheckResult check_mutual(SplitMix64& rng) {
  const FeatureMap a = fixture::random_feature_map(rng, 8, 8, 2, 4);
  const FeatureMap b = fixture::random_feature_map(rng, 8, 8, 2, 4);
  const MutualMatches got = mutual_matches(a, b, CandidateGrid::full(), 1.0);
  const auto want = oracle::mutual_pixels(a, b, 1.0);
  bool same = got.count == want.size();
  for (std::size_t i = 0; same && i < want.size(); ++i) {
    const Vec2 xa((want[i].first % 8) + 0.5, (want[i].first / 8) + 0.5);
    const Vec2 xb((want[i].second % 8) + 0.5, (want[i].second / 8) + 0.5);
    same = (got.pairs[i].first - xa).norm() == 0.0 && (got.pairs[i].second - xb).norm() == 0.0;
  }
  return {"matching.mutual_nn", same, std::to_string(got.count) + " mutual pairs"};
}

inline CheckResult check_metrics(SplitMix64& rng) {
  CorrespondenceSet gt;
  gt.image_w = 64;
  gt.image_h = 48;
  std::vector<MatchResult> pred;
  std::vector<Vec2> g, p;
  for (int i = 0; i < 1000; ++i) {
    const Vec2 x(rng.uniform(0, 64), rng.uniform(0, 48));
    const Vec2 y = x + Vec2(rng.normal(), rng.normal()) * 4.0;
    gt.pairs.push_back({x, x});
    MatchResult m;
    m.position = y;
    pred.push_back(m);
    g.push_back(x);
    p.push_back(y);
  }
  double worst = std::abs(ape(gt, pred) - oracle::ape(g, p, 64, 48));
  for (double d : kPcdpDeltas) worst = std::max(worst, std::abs(pcdp(gt, pred, d) - oracle::pcdp(g, p, 64, 48, d)));
  for (double a : kPckAlphas) worst = std::max(worst, std::abs(pck(g, p, 40.0, a) - oracle::pck(g, p, 40.0, a)));
  return {"metrics.ape_pcdp_pck", worst <= 1e-9, "max diff " + fmt("%.2e", worst)};
}

inline CheckResult check_tracking_metrics(SplitMix64& rng) {
  TrackSet pred, gt;
  for (int i = 0; i < 40; ++i) {
    std::vector<Vec2> pp, gp;
    std::vector<bool> pv, gv;
    for (int t = 0; t < 25; ++t) {
      const Vec2 x(rng.uniform(0, 256), rng.uniform(0, 256));
      gp.push_back(x);
      pp.push_back(x + Vec2(rng.normal(), rng.normal()) * 5.0);
      gv.push_back(rng.uniform() < 0.8);
      pv.push_back(rng.uniform() < 0.7);
    }
    pred.positions.push_back(pp);
    pred.visible.push_back(pv);
    gt.positions.push_back(gp);
    gt.visible.push_back(gv);
  }
  const TrackingReport r = tracking_metrics(pred, gt);
  const auto o = oracle::tracking(pred, gt);
  const double worst = std::max({std::abs(r.aj - o.aj), std::abs(r.delta_avg - o.delta_avg), std::abs(r.oa - o.oa)});
  return {"metrics.tracking", worst <= 1e-9, "max diff " + fmt("%.2e", worst)};
}

inline CheckResult check_smoothap_gradient(SplitMix64& rng, bool corrupt) {
  double worst = 0.0;
  for (int n = 0; n < 20; ++n) {
    RankingInstance inst = fixture::random_ranking(rng, 6, 1 + static_cast<int>(rng.below(4)), 2 + static_cast<int>(rng.below(6)), 0.1 + rng.uniform());
    LossGrad g = smooth_ap_grad(inst);
    if (corrupt) g.d_query *= 1.01;
    std::vector<double> q(inst.query.data(), inst.query.data() + inst.query.size());
    const auto num = oracle::numeric_gradient(
        [&](const std::vector<double>& x) {
          RankingInstance t = inst;
          for (std::size_t i = 0; i < x.size(); ++i) t.query[i] = x[i];
          return 1.0 - smooth_ap(t);
        },
        q, 1e-6);
    for (std::size_t i = 0; i < num.size(); ++i) {
      if (std::abs(num[i]) > 1e-7 || std::abs(g.d_query[i]) > 1e-7) worst = std::max(worst, rel_err(g.d_query[i], num[i]));
    }
  }
  return {"smoothap.gradient", worst < 1e-4, "max rel err " + fmt("%.2e", worst)};
}

inline CheckResult check_smoothap_limit(SplitMix64& rng) {
  double worst = 0.0;
  for (int n = 0; n < 20; ++n) {
    std::vector<double> pos(3 + rng.below(4)), neg(5 + rng.below(10));
    for (double& s : pos) s = rng.uniform(-1, 1);
    for (double& s : neg) s = rng.uniform(-1, 1);
    worst = std::max(worst, std::abs(detail::smooth_ap_scores(pos, neg, 1e-5, false) - exact_ap(pos, neg)));
  }
  return {"smoothap.exact_limit", worst <= 1e-3, "max diff " + fmt("%.2e", worst)};
}

inline CheckResult check_conv_forward(SplitMix64& rng) {
  const FeatureMap m = fixture::random_feature_map(rng, 20, 16, 4, 5);
  const HeadParams p = fixture::random_head(rng, 5, 2, true, 0.2);
  const FeatureMap out = head_forward(m, p);
  const auto o = oracle::head(m, p);
  double worst = 0.0;
  for (int r = 0; r < m.hf; ++r) {
    for (int c = 0; c < m.wf; ++c) {
      for (int ch = 0; ch < 5; ++ch) worst = std::max(worst, std::abs(out.cell(r, c)[ch] - o[ch][r][c]));
    }
  }
  return {"convhead.forward", worst <= 1e-5, "max err " + fmt("%.2e", worst)};
}

// Loss L = sum(out * probe) for a fixed random probe; dL/dparams compared to
// float32 central differences.
inline CheckResult check_conv_backward(SplitMix64& rng, bool corrupt) {
  const FeatureMap m = fixture::random_feature_map(rng, 12, 12, 4, 3);
  HeadParams p = fixture::random_head(rng, 3, 1, true, 0.3);
  std::vector<float> probe(m.data.size());
  for (float& v : probe) v = static_cast<float>(rng.normal());
  auto loss = [&](const HeadParams& hp) {
    const FeatureMap out = head_forward(m, hp);
    float s = 0.0f;
    for (std::size_t i = 0; i < probe.size(); ++i) s += out.data[i] * probe[i];
    return s;
  };
  const HeadGradients<float> g = head_backward<float>(m, p, probe);
  std::vector<float> flat = p.flatten();
  std::vector<float> analytic = g.d_params;
  if (corrupt) analytic[0] += 0.1f * (1.0f + std::abs(analytic[0]));
  double worst = 0.0;
  const float h = 1e-2f;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    HeadParams t = p;
    std::vector<float> f = flat;
    f[k] = flat[k] + h;
    t.assign_flat(f);
    const float up = loss(t);
    f[k] = flat[k] - h;
    t.assign_flat(f);
    const float down = loss(t);
    const double num = (static_cast<double>(up) - down) / (2.0 * h);
    worst = std::max(worst, std::abs(num - analytic[k]) / std::max(1.0, std::abs(num)));
  }
  return {"convhead.backward", worst <= 1e-3, "max err " + fmt("%.2e", worst)};
}

inline CheckResult check_adamw() {
  std::vector<float> params = {0.5f, -1.0f};
  const std::vector<double> grads = {0.2, -0.4};
  AdamWState s;
  s.lr = 0.1;
  s.weight_decay = 0.01;
  adamw_step<double>(std::span<float>(params), std::span<const double>(grads), s);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * sign(g) (up to eps).
  const double e0 = 0.5 * (1 - 0.1 * 0.01) - 0.1 * 0.2 / (0.2 + 1e-8);
  const double e1 = -1.0 * (1 - 0.1 * 0.01) + 0.1 * 0.4 / (0.4 + 1e-8);
  const double worst = std::max(std::abs(params[0] - e0), std::abs(params[1] - e1));
  return {"adamw.first_step", worst <= 1e-6, "max err " + fmt("%.2e", worst)};
}

inline CheckResult check_pnp(std::uint64_t seed) {
  const fixture::PnpFixture f = fixture::pnp_fixture(seed, 50, 0.3);
  RansacConfig cfg;
  cfg.seed = seed;
  const PoseEstimate est = solve_pnp_ransac(f.corrs, f.intrinsics, cfg);
  const double rot = rotation_error_deg(est.pose.rotation, f.truth.rotation);
  const double trans = (est.pose.translation - f.truth.translation).norm();
  return {"pose.pnp_ransac", est.succeeded(cfg) && rot <= 0.01 && trans <= 1e-4,
          "rot " + fmt("%.1e", rot) + " deg, trans " + fmt("%.1e", trans)};
}

inline CheckResult check_tracking_shift(SplitMix64& rng) {
  const int w = 40, h = 24, frames = 8;
  const FeatureMap big = fixture::random_feature_map(rng, w + frames, h, 1, 16);
  std::vector<FeatureMap> seq;
  for (int t = 0; t < frames; ++t) {
    FeatureMap f = FeatureMap::zeros(w, h, 1, 16);
    // Frame t shows content shifted right by t pixels.
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto src = big.cell(r, c - t + frames);
        std::copy(src.begin(), src.end(), f.cell(r, c).begin());
      }
    }
    seq.push_back(std::move(f));
  }
  double worst = 0.0;
  std::vector<TrackQuery> qs = {{Vec2(10.5, 5.5), 0}, {Vec2(20.5, 12.5), 0}, {Vec2(15.5, 20.5), 0}};
  const auto res = track(seq, qs);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    for (int t = 0; t < frames; ++t) {
      worst = std::max(worst, (res[i].position[t] - (qs[i].point + Vec2(t, 0))).norm());
    }
  }
  return {"tracking.shifted_sequence", worst <= 0.5, "max err " + fmt("%.3f", worst) + " px"};
}

inline CheckResult check_formats(SplitMix64& rng) {
  const FeatureMap m = fixture::random_feature_map(rng, 13, 9, 4, 3);
  const FeatureMap back = decode_feature_map(encode_feature_map(m));
  const HeadParams p = fixture::random_head(rng, 3, 2, true, 0.1);
  const HeadParams pb = decode_head(encode_head(p));
  DepthMap d(5, 4, 0.0);
  for (double& v : d.values) v = static_cast<float>(rng.uniform(0.0, 3.0));
  const DepthMap db = decode_depth_map(encode_depth_map(d));
  const bool ok = back.same_shape(m) && back.data == m.data && pb.flatten() == p.flatten() &&
                  pb.residual == p.residual && db.values == d.values;
  return {"formats.roundtrip", ok, "FTB1, HED1, DPT1"};
}

}  // namespace detail

/// Runs every check, prints one row per check, and returns the results.
inline std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opts, std::ostream& out) {
  SplitMix64 rng(opts.seed);
  const std::vector<std::pair<const char*, std::function<CheckResult()>>> checks = {
      {"geometry.roundtrip", [&] { return detail::check_geometry_roundtrip(rng); }},
      {"geometry.sphere_depth", [&] { return detail::check_sphere_depth(); }},
      {"geometry.gt_identity", [&] { return detail::check_gt_identity(); }},
      {"featstore.bilinear", [&] { return detail::check_bilinear(rng); }},
      {"matching.brute_force", [&] { return detail::check_brute_force(rng); }},
      {"matching.coarse_to_fine", [&] { return detail::check_coarse_to_fine(rng); }},
      {"matching.mutual_nn", [&] { return detail::check_mutual(rng); }},
      {"metrics.ape_pcdp_pck", [&] { return detail::check_metrics(rng); }},
      {"metrics.tracking", [&] { return detail::check_tracking_metrics(rng); }},
      {"smoothap.gradient", [&] { return detail::check_smoothap_gradient(rng, opts.inject_fault == "smoothap-gradient"); }},
      {"smoothap.exact_limit", [&] { return detail::check_smoothap_limit(rng); }},
      {"convhead.forward", [&] { return detail::check_conv_forward(rng); }},
      {"convhead.backward", [&] { return detail::check_conv_backward(rng, opts.inject_fault == "convhead-gradient"); }},
      {"adamw.first_step", [&] { return detail::check_adamw(); }},
      {"pose.pnp_ransac", [&] { return detail::check_pnp(opts.seed); }},
      {"tracking.shifted_sequence", [&] { return detail::check_tracking_shift(rng); }},
      {"formats.roundtrip", [&] { return detail::check_formats(rng); }},
  };
  std::vector<CheckResult> results;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-5s %8s  %s\n", "check", "", "seconds", "detail");
  out << line;
  for (const auto& [name, run] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {name, false, std::string("threw: ") + e.what()};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::snprintf(line, sizeof line, "%-28s %-5s %8.3f  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                  r.detail.c_str());
    out << line;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mveq

#endif  // MVEQ_SELFCHECK_HPP_
