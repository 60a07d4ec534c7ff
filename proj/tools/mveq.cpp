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

// mveq command-line tool. Exit codes: 0 ok, 1 usage, 2 data error,
// 3 check failure.

#include "mveq/mveq.hpp"
#include "mveq/selfcheck.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mveq::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct Globals {
  int threads = 1;
  std::uint64_t seed = 0;
  std::string report;
};

void emit_report(const Globals& g, const json& report) {
  const std::string text = report.dump(2) + "\n";
  if (g.report.empty()) {
    std::cout << text;
  } else {
    mveq::write_file_atomic(g.report, text);
  }
}

/// "" means no head; "zero-init-residual" is the identity head; anything
/// else is a HED1 path.
std::optional<mveq::HeadParams> resolve_head(const std::string& spec, int channels) {
  if (spec.empty()) return std::nullopt;
  if (spec == "zero-init-residual") return mveq::HeadParams::zero_init(channels, 1, true);
  mveq::HeadParams p = mveq::load_head(spec);
  p.validate(channels);
  return p;
}

mveq::FeatureMap apply_head(const mveq::FeatureMap& m, const std::optional<mveq::HeadParams>& head) {
  return head ? mveq::head_forward(m, *head) : m;
}

/// Loads every view of every object, collecting per-view failures into one error.
std::vector<std::vector<mveq::ViewRecord>> load_all_views(const mveq::DatasetManifest& m, bool need_features) {
  std::vector<std::vector<mveq::ViewRecord>> out;
  std::vector<std::string> problems;
  for (const mveq::ObjectEntry& o : m.objects) {
    out.emplace_back();
    for (const mveq::ViewEntry& v : o.views) {
      try {
        out.back().push_back(mveq::load_view(m, v, need_features));
      } catch (const mveq::Error& e) {
        problems.push_back(o.id + "/" + v.id + ": " + e.what());
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "could not load " + std::to_string(problems.size()) + " view(s):";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw mveq::Error(mveq::ErrorKind::kConfiguration, msg);
  }
  return out;
}

int first_channels(const std::vector<std::vector<mveq::ViewRecord>>& objects) {
  for (const auto& o : objects) {
    for (const auto& v : o) {
      if (v.features) return v.features->channels;
    }
  }
  throw mveq::Error(mveq::ErrorKind::kConfiguration, "dataset has no feature maps");
}

// ---------------------------------------------------------------------------

struct GenSynthArgs {
  std::string out;
  std::string scene = "sphere";
  std::string object_id = "synth";
  int views = 42;
  int size = 64;
  double focal = 0.0;
  double distance = 4.0;
  int patch = 4;
  int channels = 33;
  double noise = 0.0;
  double scene_scale = 1.0;
  bool no_features = false;
  int query_views = 0;
};

int run_gen_synth(const Globals& g, const GenSynthArgs& a) {
  mveq::SynthConfig cfg;
  cfg.object_id = a.object_id;
  if (fs::exists(a.scene) && fs::is_regular_file(a.scene)) {
    cfg.scene = mveq::scene_from_json(json::parse(mveq::read_file_bytes(a.scene)));
  } else {
    cfg.scene = mveq::scene_preset(a.scene);
  }
  cfg.n_views = a.views;
  cfg.image_size = a.size;
  cfg.focal = a.focal > 0.0 ? a.focal : 1.2 * a.size;
  cfg.camera_distance = a.distance;
  cfg.oracle_features = !a.no_features;
  cfg.patch = a.patch;
  cfg.channels = a.channels;
  cfg.noise = a.noise;
  cfg.scene_scale = a.scene_scale;
  cfg.seed = g.seed;
  cfg.query_views = a.query_views;
  if (a.query_views < 0 || a.query_views >= a.views) {
    throw mveq::Error(mveq::ErrorKind::kConfiguration, "--query-views must be in [0, views)");
  }
  const mveq::DatasetManifest m = mveq::write_synthetic_dataset(cfg, a.out);
  if (!g.report.empty()) {
    const json config = {{"command", "gen-synth"}, {"scene", a.scene},     {"views", a.views},
                         {"size", a.size},         {"focal", cfg.focal},   {"distance", a.distance},
                         {"patch", a.patch},       {"channels", a.channels}, {"noise", a.noise},
                         {"features", !a.no_features}, {"seed", g.seed}, {"query_views", a.query_views}};
    emit_report(g, mveq::finalize_report({{"views_written", m.objects.front().views.size()}}, config));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EquivArgs {
  std::string manifest;
  int stride = 1;
  int refine_radius = 2;
  std::string head;
};

int run_eval_equivariance(const Globals& g, const EquivArgs& a) {
  const mveq::DatasetManifest m = mveq::load_manifest(a.manifest);
  const auto objects = load_all_views(m, true);
  const auto head = resolve_head(a.head, first_channels(objects));
  mveq::EquivarianceConfig cfg;
  cfg.stride = a.stride;
  cfg.refine_radius = a.refine_radius;
  cfg.threads = g.threads;
  const mveq::EquivarianceResult r = mveq::evaluate_equivariance(objects, cfg, head ? &*head : nullptr);
  json body = mveq::to_json(r.masked);
  body["unmasked"] = mveq::to_json(r.unmasked);
  body["view_pairs"] = r.view_pairs;
  const json config = {{"command", "eval-equivariance"}, {"manifest", a.manifest}, {"stride", a.stride},
                       {"refine_radius", a.refine_radius}, {"head", a.head}};
  emit_report(g, mveq::finalize_report(body, config));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string loss_csv;
  std::string init;
  std::string loss = "smoothap";
  mveq::TrainConfig cfg;
};

int run_train_head(const Globals& g, TrainArgs a) {
  const mveq::DatasetManifest m = mveq::load_manifest(a.manifest);
  const auto objects = load_all_views(m, true);
  a.cfg.seed = g.seed;
  if (a.loss == "smoothap") {
    a.cfg.loss = mveq::LossKind::kSmoothAp;
  } else if (a.loss == "contrastive") {
    a.cfg.loss = mveq::LossKind::kContrastive;
  } else {
    throw mveq::Error(mveq::ErrorKind::kConfiguration, "unknown loss '" + a.loss + "'");
  }
  mveq::HeadParams init;
  if (!a.init.empty()) init = mveq::load_head(a.init);
  const mveq::TrainResult r = mveq::train(objects, a.cfg, init);
  mveq::save_head(a.out, r.params);
  std::ostringstream csv;
  csv << "iteration,loss\n";
  csv.precision(17);
  for (std::size_t i = 0; i < r.losses.size(); ++i) csv << i << ',' << r.losses[i] << '\n';
  mveq::write_file_atomic(a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv, csv.str());
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
  if (!g.report.empty()) {
    const json config = {{"command", "train-head"}, {"manifest", a.manifest}, {"iterations", a.cfg.iterations},
                         {"pixels_per_pair", a.cfg.pixels_per_pair}, {"loss", a.loss}, {"tau", a.cfg.tau},
                         {"temp", a.cfg.temp}, {"lr", a.cfg.lr}, {"weight_decay", a.cfg.weight_decay},
                         {"layers", a.cfg.layers}, {"residual", a.cfg.residual}, {"gt_stride", a.cfg.gt_stride},
                         {"include_self", a.cfg.include_self}, {"positive_radius", a.cfg.positive_radius},
                         {"seed", g.seed}, {"init", a.init}};
    json body = {{"iterations_run", r.losses.size()}, {"warnings", r.warnings}};
    if (!r.losses.empty()) {
      body["first_loss"] = r.losses.front();
      body["final_loss"] = r.losses.back();
    }
    emit_report(g, mveq::finalize_report(body, config));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PoseArgs {
  std::string manifest;
  int stride = 4;
  int iterations = 10000;
  double threshold = 8.0;
  std::string head;
};

int run_eval_pose(const Globals& g, const PoseArgs& a) {
  const mveq::DatasetManifest m = mveq::load_manifest(a.manifest);
  auto objects = load_all_views(m, true);
  const auto head = resolve_head(a.head, first_channels(objects));
  mveq::PoseTaskConfig cfg;
  cfg.stride = a.stride;
  cfg.ransac.iterations = a.iterations;
  cfg.ransac.inlier_threshold = a.threshold;
  cfg.ransac.seed = g.seed;
  cfg.units = m.units;
  cfg.working_resolution = m.working_resolution;

  json frames = json::array();
  std::vector<std::optional<mveq::RigidPose>> est;
  std::vector<mveq::RigidPose> gt;
  json per_object = json::object();
  for (std::size_t o = 0; o < objects.size(); ++o) {
    std::vector<mveq::ViewRecord> refs, queries;
    for (std::size_t v = 0; v < objects[o].size(); ++v) {
      mveq::ViewRecord rec = objects[o][v];
      if (head) rec.features = mveq::head_forward(objects[o][v].features.value(), *head);
      (m.objects[o].views[v].role == "query" ? queries : refs).push_back(std::move(rec));
    }
    if (queries.empty()) continue;
    std::vector<std::string> warnings;
    const mveq::PoseDatabase db = mveq::build_database(refs, a.stride, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << m.objects[o].id << ": " << w << '\n';
    const mveq::PoseTaskResult r = mveq::evaluate_pose_task(queries, db, cfg);
    for (const mveq::PoseFrameResult& f : r.frames) {
      json jf = {{"object", m.objects[o].id}, {"view", f.view_id}, {"correspondences", f.correspondences},
                 {"inliers", f.inliers}, {"success", f.estimate.has_value()}};
      if (f.estimate) {
        jf["rotation_err_deg"] = f.rotation_err_deg;
        jf["translation_err"] = f.translation_err;
      } else {
        jf["failure"] = f.failure;
      }
      frames.push_back(std::move(jf));
      est.push_back(f.estimate);
    }
    for (const auto& q : queries) gt.push_back(q.pose);
  }
  if (gt.empty()) throw mveq::Error(mveq::ErrorKind::kConfiguration, "manifest has no views with role 'query'");
  const mveq::PoseAccuracyReport rep = mveq::pose_accuracy(est, gt, m.units);
  json body = {{"pose_acc", mveq::to_json(rep).at("acc")}, {"n_frames", rep.n_frames}, {"frames", frames}};
  const json config = {{"command", "eval-pose"}, {"manifest", a.manifest}, {"stride", a.stride},
                       {"iterations", a.iterations}, {"threshold", a.threshold}, {"seed", g.seed}, {"head", a.head}};
  emit_report(g, mveq::finalize_report(body, config));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrackArgs {
  std::string frames_dir;
  std::string queries;
  std::string gt;
  mveq::TrackConfig cfg;
  int temporal_window = 0;
  bool calibrate = false;
  int eval_size = 256;
  std::string head;
};

std::vector<mveq::TrackQuery> parse_queries(const json& j) {
  std::vector<mveq::TrackQuery> out;
  for (const json& q : j) {
    out.push_back({mveq::Vec2(q.at("point").at(0).get<double>(), q.at("point").at(1).get<double>()),
                   q.value("frame", 0)});
  }
  return out;
}

/// [[[x, y, visible], ...per frame], ...per point]
mveq::TrackSet parse_tracks(const json& j) {
  mveq::TrackSet t;
  for (const json& point : j) {
    std::vector<mveq::Vec2> pos;
    std::vector<bool> vis;
    for (const json& f : point) {
      pos.emplace_back(f.at(0).get<double>(), f.at(1).get<double>());
      vis.push_back(f.at(2).is_boolean() ? f.at(2).get<bool>() : f.at(2).get<double>() != 0.0);
    }
    t.positions.push_back(std::move(pos));
    t.visible.push_back(std::move(vis));
  }
  t.validate();
  return t;
}

int run_eval_track(const Globals& g, TrackArgs a) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.frames_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ftb") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw mveq::Error(mveq::ErrorKind::kIo, "no .ftb frames in " + a.frames_dir);
  std::vector<mveq::FeatureMap> frames;
  for (const fs::path& p : files) frames.push_back(mveq::load_feature_map(p));
  const auto head = resolve_head(a.head, frames.front().channels);
  for (auto& f : frames) f = apply_head(f, head);

  const auto queries = parse_queries(json::parse(mveq::read_file_bytes(a.queries)));
  const mveq::TrackSet gt = parse_tracks(json::parse(mveq::read_file_bytes(a.gt)));
  if (a.temporal_window > 0) a.cfg.temporal_window = a.temporal_window;
  auto pred = mveq::track(frames, queries, a.cfg);
  json body;
  if (a.calibrate) {
    const double thr = mveq::calibrate_occlusion_threshold(pred, gt);
    for (auto& tr : pred) {
      for (std::size_t t = 0; t < tr.score.size(); ++t) tr.visible[t] = tr.score[t] >= thr;
    }
    body["calibrated_occ_threshold"] = thr;
  }
  const mveq::TrackingReport r =
      mveq::evaluate_tracking(pred, gt, frames.front().img_w, frames.front().img_h, a.eval_size);
  body["tracking"] = mveq::to_json(r);
  body["n_points"] = gt.points();
  body["n_frames"] = gt.frames();
  const json config = {{"command", "eval-track"}, {"frames", a.frames_dir}, {"queries", a.queries}, {"gt", a.gt},
                       {"refine_radius", a.cfg.refine_radius}, {"temperature", a.cfg.temperature},
                       {"occ_threshold", a.cfg.occ_threshold}, {"temporal_window", a.temporal_window},
                       {"calibrate", a.calibrate}, {"eval_size", a.eval_size}, {"head", a.head}};
  emit_report(g, mveq::finalize_report(body, config));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SemcorrArgs {
  std::string pairs;
  std::string features_dir;
  std::string head;
};

int run_eval_semcorr(const Globals& g, const SemcorrArgs& a) {
  const json jp = json::parse(mveq::read_file_bytes(a.pairs));
  std::vector<mveq::KeypointPair> pairs;
  auto kpts = [](const json& arr) {
    std::vector<mveq::Vec2> out;
    for (const json& k : arr) out.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    return out;
  };
  for (const json& p : jp) {
    mveq::KeypointPair kp;
    kp.src_image = p.at("src").get<std::string>();
    kp.dst_image = p.at("dst").get<std::string>();
    kp.src_kpts = kpts(p.at("src_kpts"));
    kp.dst_kpts = kpts(p.at("dst_kpts"));
    if (p.contains("dst_bbox")) {
      const json& b = p.at("dst_bbox");
      kp.dst_bbox = mveq::BoundingBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                      b.at(3).get<double>()};
    }
    pairs.push_back(std::move(kp));
  }
  std::map<std::string, std::unique_ptr<mveq::FeatureMap>> cache;
  std::vector<std::string> load_errors;
  auto lookup = [&](const std::string& id) -> const mveq::FeatureMap* {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second.get();
    std::unique_ptr<mveq::FeatureMap> fm;
    try {
      fm = std::make_unique<mveq::FeatureMap>(mveq::load_feature_map(fs::path(a.features_dir) / (id + ".ftb")));
      const auto head = resolve_head(a.head, fm->channels);
      *fm = apply_head(*fm, head);
    } catch (const mveq::Error& e) {
      load_errors.push_back(id + ": " + e.what());
      fm.reset();
    }
    return cache.emplace(id, std::move(fm)).first->second.get();
  };
  const mveq::SemcorrReport r = mveq::evaluate_semcorr(pairs, lookup);
  json body = {{"pck", mveq::percent_map(r.pck_bbox)},
               {"pck_macro", mveq::percent_map(r.pck_bbox_macro)},
               {"pck_image", mveq::percent_map(r.pck_image)},
               {"keypoints", r.keypoints},
               {"skipped_keypoints", r.skipped_keypoints},
               {"pair_count", r.pairs},
               {"excluded_pairs", r.excluded_pairs},
               {"feature_errors", load_errors}};
  const json config = {{"command", "eval-semcorr"}, {"pairs", a.pairs}, {"features", a.features_dir}, {"head", a.head}};
  emit_report(g, mveq::finalize_report(body, config));
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_selfcheck(const Globals& g, const std::string& fault) {
  mveq::SelfcheckOptions opts;
  opts.seed = g.seed;
  opts.inject_fault = fault;
  const auto results = mveq::run_selfcheck(opts, std::cout);
  json rows = json::array();
  std::size_t failed = 0;
  for (const auto& r : results) {
    rows.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    failed += r.passed ? 0 : 1;
  }
  std::cout << (failed ? std::to_string(failed) + " check(s) FAILED\n" : "all checks passed\n");
  if (!g.report.empty()) {
    mveq::write_file_atomic(g.report, mveq::finalize_report({{"checks", rows}, {"failed", failed}},
                                                            {{"command", "selfcheck"}, {"seed", g.seed}, {"fault", fault}})
                                              .dump(2) + "\n");
  }
  return failed ? kExitCheck : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mveq: multiview feature equivariance toolkit"};
  app.set_version_flag("--version", std::string(mveq::kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--report", g.report, "Write the JSON report here instead of stdout");

  GenSynthArgs gs;
  auto* gen = app.add_subcommand("gen-synth", "Render a synthetic multiview fixture");
  gen->add_option("--out", gs.out, "Output directory")->required();
  gen->add_option("--scene", gs.scene, "Preset (sphere, box, sphere_box) or scene JSON path");
  gen->add_option("--object-id", gs.object_id);
  gen->add_option("--views", gs.views, "Number of Fibonacci-sphere views");
  gen->add_option("--size", gs.size, "Image width and height in pixels")->check(CLI::PositiveNumber);
  gen->add_option("--focal", gs.focal, "Focal length in pixels (default 1.2 * size)");
  gen->add_option("--distance", gs.distance, "Camera distance from the origin");
  gen->add_option("--patch", gs.patch, "Feature patch size")->check(CLI::PositiveNumber);
  gen->add_option("--channels", gs.channels, "Oracle feature channels");
  gen->add_option("--noise", gs.noise, "Gaussian feature noise standard deviation");
  gen->add_option("--scene-scale", gs.scene_scale, "Length scale of the oracle encoding");
  gen->add_flag("--no-features", gs.no_features, "Write depth only");
  gen->add_option("--query-views", gs.query_views, "Mark the last N views as pose queries");

  EquivArgs eq;
  auto* equiv = app.add_subcommand("eval-equivariance", "APE and PCDP over all view pairs");
  equiv->add_option("--manifest", eq.manifest)->required();
  equiv->add_option("--stride", eq.stride, "GT sampling stride")->check(CLI::PositiveNumber);
  equiv->add_option("--refine-radius", eq.refine_radius, "Coarse-to-fine radius in patches")->check(CLI::PositiveNumber);
  equiv->add_option("--head", eq.head, "HED1 checkpoint or zero-init-residual");

  TrainArgs tr;
  auto* train = app.add_subcommand("train-head", "Finetune the conv head");
  train->add_option("--manifest", tr.manifest)->required();
  train->add_option("--out", tr.out, "HED1 checkpoint path")->required();
  train->add_option("--loss-csv", tr.loss_csv, "Per-iteration loss CSV (default <out>.loss.csv)");
  train->add_option("--init", tr.init, "Initial HED1 checkpoint");
  train->add_option("--iterations", tr.cfg.iterations);
  train->add_option("--pixels", tr.cfg.pixels_per_pair, "Sampled correspondences per pair");
  train->add_option("--loss", tr.loss, "smoothap or contrastive");
  train->add_option("--tau", tr.cfg.tau, "Smooth-AP sigmoid temperature");
  train->add_option("--temp", tr.cfg.temp, "Contrastive temperature");
  train->add_flag("--include-self", tr.cfg.include_self, "Count the self term in Smooth-AP ranks");
  train->add_option("--positive-radius", tr.cfg.positive_radius, "Positive neighborhood radius in pixels");
  train->add_option("--lr", tr.cfg.lr);
  train->add_option("--weight-decay", tr.cfg.weight_decay);
  train->add_option("--layers", tr.cfg.layers, "Conv layers (0-3)");
  train->add_flag("!--no-residual", tr.cfg.residual, "Disable the residual branch");
  train->add_option("--gt-stride", tr.cfg.gt_stride)->check(CLI::PositiveNumber);

  PoseArgs po;
  auto* pose = app.add_subcommand("eval-pose", "PnP-RANSAC pose accuracy on query views");
  pose->add_option("--manifest", po.manifest)->required();
  pose->add_option("--stride", po.stride)->check(CLI::PositiveNumber);
  pose->add_option("--iterations", po.iterations, "RANSAC iterations")->check(CLI::PositiveNumber);
  pose->add_option("--threshold", po.threshold, "Inlier threshold at the working resolution");
  pose->add_option("--head", po.head, "HED1 checkpoint or zero-init-residual");

  TrackArgs tk;
  auto* trk = app.add_subcommand("eval-track", "Point tracking over a frame sequence");
  trk->add_option("--frames", tk.frames_dir, "Directory of FTB1 frames (sorted by name)")->required();
  trk->add_option("--queries", tk.queries, "Query JSON")->required();
  trk->add_option("--gt", tk.gt, "Ground-truth track JSON")->required();
  trk->add_option("--refine-radius", tk.cfg.refine_radius)->check(CLI::PositiveNumber);
  trk->add_option("--temperature", tk.cfg.temperature);
  trk->add_option("--occ-threshold", tk.cfg.occ_threshold);
  trk->add_option("--temporal-window", tk.temporal_window, "Search radius around the previous estimate (0: off)");
  trk->add_flag("--calibrate-occlusion", tk.calibrate, "Sweep the occlusion threshold to maximize OA");
  trk->add_option("--eval-size", tk.eval_size)->check(CLI::PositiveNumber);
  trk->add_option("--head", tk.head, "HED1 checkpoint or zero-init-residual");

  SemcorrArgs sc;
  auto* sem = app.add_subcommand("eval-semcorr", "Keypoint transfer PCK");
  sem->add_option("--pairs", sc.pairs, "Pair JSON")->required();
  sem->add_option("--features", sc.features_dir, "Directory of <id>.ftb files")->required();
  sem->add_option("--head", sc.head, "HED1 checkpoint or zero-init-residual");

  std::string fault;
  auto* check = app.add_subcommand("selfcheck", "Run the built-in oracle suite");
  check->add_option("--inject-fault", fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return run_gen_synth(g, gs);
    if (*equiv) return run_eval_equivariance(g, eq);
    if (*train) return run_train_head(g, tr);
    if (*pose) return run_eval_pose(g, po);
    if (*trk) return run_eval_track(g, tk);
    if (*sem) return run_eval_semcorr(g, sc);
    if (*check) return run_selfcheck(g, fault);
  } catch (const mveq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "error [format]: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
