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

// Correspondence finetuning of the conv head.
//
// Each iteration draws one object and an ordered view pair, samples ground
// truth matches, and ranks the true correspondent of every query against the
// other sampled pixels of the second view. Only head parameters receive
// gradients; the stored feature maps stay frozen.

#ifndef MVEQ_TRAIN_HPP_
#define MVEQ_TRAIN_HPP_

#include "mveq/common.hpp"
#include "mveq/convhead.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"
#include "mveq/smoothap.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace mveq {

enum class LossKind { kSmoothAp, kContrastive };

struct TrainConfig {
  int iterations = 10000;
  int pixels_per_pair = 256;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kSmoothAp;
  double tau = 1.0;    // Smooth-AP sigmoid temperature
  double temp = 0.07;  // contrastive temperature
  bool include_self = false;
  double positive_radius = 0.0;  // 0: the single pixel nearest the correspondent
  double lr = 1e-5;
  double weight_decay = 1e-4;
  int layers = 1;
  bool residual = true;
  int gt_stride = 1;
  OcclusionTolerance occlusion;
  int max_retries = 32;

  void validate() const {
    if (iterations < 0) throw Error(ErrorKind::kConfiguration, "iterations must be >= 0");
    if (pixels_per_pair < 2) throw Error(ErrorKind::kConfiguration, "pixels_per_pair must be >= 2");
    if (!(tau > 0.0) || !(temp > 0.0)) throw Error(ErrorKind::kConfiguration, "temperatures must be > 0");
    if (layers < 0 || layers > 3) throw Error(ErrorKind::kConfiguration, "layer count must be 0-3");
    if (positive_radius < 0.0) throw Error(ErrorKind::kConfiguration, "positive_radius must be >= 0");
  }
};

struct TrainResult {
  HeadParams params;
  std::vector<double> losses;  // one per iteration
  std::vector<std::string> warnings;
};

namespace detail {

// Normalized sample of a double-precision feature grid with the data needed
// to backpropagate into the grid.
struct SampledFeature {
  BilinearTaps taps;
  PixelFeature raw;
  PixelFeature unit;
};

inline SampledFeature sample_grid(const FeatureMap& shape, const std::vector<double>& grid, const Vec2& x) {
  SampledFeature s;
  s.taps = bilinear_taps(shape, x);
  s.raw = PixelFeature::Zero(shape.channels);
  for (int t = 0; t < 4; ++t) {
    if (s.taps.weight[t] == 0.0) continue;
    const double* src = grid.data() + static_cast<std::size_t>(s.taps.cell[t]) * shape.channels;
    for (int c = 0; c < shape.channels; ++c) s.raw[c] += s.taps.weight[t] * src[c];
  }
  s.unit = l2_normalize(s.raw);
  return s;
}

// d(unit)/d(raw) = (I - u u^T) / |raw|, then scattered through bilinear taps.
inline void scatter_sample_grad(const SampledFeature& s, const PixelFeature& d_unit, int channels,
                                std::vector<double>& d_grid) {
  const PixelFeature d_raw = (d_unit - s.unit * s.unit.dot(d_unit)) / s.raw.norm();
  for (int t = 0; t < 4; ++t) {
    if (s.taps.weight[t] == 0.0) continue;
    double* dst = d_grid.data() + static_cast<std::size_t>(s.taps.cell[t]) * channels;
    for (int c = 0; c < channels; ++c) dst[c] += s.taps.weight[t] * d_raw[c];
  }
}

inline Vec2 nearest_pixel_center(const Vec2& x, int width, int height) {
  const double col = std::clamp(std::floor(x.x()), 0.0, static_cast<double>(width - 1));
  const double row = std::clamp(std::floor(x.y()), 0.0, static_cast<double>(height - 1));
  return {col + 0.5, row + 0.5};
}

}  // namespace detail

/// Loss and head-parameter gradient for one batch of matches between two views.
struct PairStep {
  double loss = 0.0;
  std::vector<double> d_params;
};

inline PairStep pair_loss_and_grad(const FeatureMap& fa, const FeatureMap& fb, const HeadParams& head,
                                   const std::vector<Correspondence>& batch, const TrainConfig& cfg) {
  const auto acts_a = head_forward_activations<double>({fa.data.begin(), fa.data.end()}, fa.hf, fa.wf, fa.channels, head);
  const auto acts_b = head_forward_activations<double>({fb.data.begin(), fb.data.end()}, fb.hf, fb.wf, fb.channels, head);
  FeatureMap shape_a = fa;
  FeatureMap shape_b = fb;
  shape_a.channels = shape_b.channels = head.out_channels(fa.channels);
  const int ch = shape_a.channels;
  const std::vector<double>& out_a = acts_a.back();
  const std::vector<double>& out_b = acts_b.back();

  // Every pixel of view b the batch touches is sampled once.
  std::map<std::pair<int, int>, std::size_t> slot_of;
  std::vector<detail::SampledFeature> b_samples;
  auto b_slot = [&](const Vec2& center) {
    const auto key = std::pair(static_cast<int>(center.y()), static_cast<int>(center.x()));
    auto [it, inserted] = slot_of.emplace(key, b_samples.size());
    if (inserted) b_samples.push_back(detail::sample_grid(shape_b, out_b, center));
    return it->second;
  };

  const std::size_t n = batch.size();
  std::vector<Vec2> targets(n);
  std::vector<std::vector<std::size_t>> positives(n);
  const double r = cfg.positive_radius;
  const int reach = static_cast<int>(std::ceil(r));
  for (std::size_t k = 0; k < n; ++k) {
    targets[k] = detail::nearest_pixel_center(batch[k].x2, fb.img_w, fb.img_h);
    if (r <= 0.0) {
      positives[k].push_back(b_slot(targets[k]));
      continue;
    }
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        const Vec2 c = targets[k] + Vec2(dx, dy);
        if (c.x() < 0 || c.x() > fb.img_w || c.y() < 0 || c.y() > fb.img_h) continue;
        if ((c - batch[k].x2).norm() <= r || (dx == 0 && dy == 0)) positives[k].push_back(b_slot(c));
      }
    }
  }
  std::vector<std::size_t> target_slot(n);
  for (std::size_t k = 0; k < n; ++k) target_slot[k] = b_slot(targets[k]);

  std::vector<PixelFeature> d_b(b_samples.size(), PixelFeature::Zero(ch));
  std::vector<double> d_out_a(out_a.size(), 0.0);
  double loss_sum = 0.0;
  const double exclusion = std::max(r, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const detail::SampledFeature qa = detail::sample_grid(shape_a, out_a, batch[k].x1);
    RankingInstance inst;
    inst.query = qa.unit;
    inst.tau = cfg.tau;
    inst.include_self = cfg.include_self;
    for (std::size_t s : positives[k]) inst.positives.push_back(b_samples[s].unit);
    std::vector<std::size_t> neg_slots;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == k || (targets[j] - targets[k]).norm() <= exclusion) continue;
      neg_slots.push_back(target_slot[j]);
      inst.negatives.push_back(b_samples[target_slot[j]].unit);
    }
    const LossGrad lg = cfg.loss == LossKind::kSmoothAp ? smooth_ap_grad(inst) : contrastive_loss(inst, cfg.temp);
    loss_sum += lg.loss;
    const double scale = 1.0 / static_cast<double>(n);
    detail::scatter_sample_grad(qa, lg.d_query * scale, ch, d_out_a);
    for (std::size_t p = 0; p < positives[k].size(); ++p) d_b[positives[k][p]] += lg.d_positives[p] * scale;
    for (std::size_t q = 0; q < neg_slots.size(); ++q) d_b[neg_slots[q]] += lg.d_negatives[q] * scale;
  }
  std::vector<double> d_out_b(out_b.size(), 0.0);
  for (std::size_t s = 0; s < b_samples.size(); ++s) detail::scatter_sample_grad(b_samples[s], d_b[s], ch, d_out_b);

  PairStep step;
  step.loss = loss_sum / static_cast<double>(n);
  const auto ga = head_backward_from<double>(acts_a, fa.hf, fa.wf, head, std::move(d_out_a));
  const auto gb = head_backward_from<double>(acts_b, fb.hf, fb.wf, head, std::move(d_out_b));
  step.d_params = ga.d_params;
  for (std::size_t k = 0; k < step.d_params.size(); ++k) step.d_params[k] += gb.d_params[k];
  return step;
}

/// Per-object view lists; every view needs depth and features.
using TrainDataset = std::vector<std::vector<ViewRecord>>;

/// Deterministic finetuning loop. `on_step`, if set, sees the gradient before
/// each optimizer update.
inline TrainResult train(const TrainDataset& objects, const TrainConfig& cfg, HeadParams init = {},
                         const std::function<void(int, std::vector<double>&)>& on_step = {}) {
  cfg.validate();
  TrainResult result;
  std::vector<std::size_t> eligible;
  int channels = -1;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    if (objects[o].size() < 2) {
      result.warnings.push_back("object " + std::to_string(o) + " has fewer than 2 views; skipped");
      continue;
    }
    for (const ViewRecord& v : objects[o]) {
      if (!v.depth || !v.features) {
        throw Error(ErrorKind::kConfiguration, "training view '" + v.id + "' lacks depth or features");
      }
      if (channels < 0) channels = v.features->channels;
      if (v.features->channels != channels) throw Error(ErrorKind::kConfiguration, "feature channel counts differ");
    }
    eligible.push_back(o);
  }
  if (eligible.empty()) throw Error(ErrorKind::kConfiguration, "training needs an object with at least 2 views");

  result.params = init.layers.empty() && cfg.layers > 0 ? HeadParams::zero_init(channels, cfg.layers, cfg.residual)
                                                        : std::move(init);
  result.params.validate(channels);
  AdamWState opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, CorrespondenceSet> gt_cache;
  SplitMix64 rng(cfg.seed);
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<Correspondence>* pool = nullptr;
    std::size_t obj = 0, a = 0, b = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt > cfg.max_retries) {
        throw Error(ErrorKind::kConfiguration, "no view pair with >= 2 correspondences after " +
                                                   std::to_string(cfg.max_retries) + " retries");
      }
      obj = eligible[rng.below(eligible.size())];
      const std::size_t nv = objects[obj].size();
      a = rng.below(nv);
      b = rng.below(nv - 1);
      if (b >= a) ++b;
      auto key = std::tuple(obj, a, b);
      auto found = gt_cache.find(key);
      if (found == gt_cache.end()) {
        found = gt_cache
                    .emplace(key, gt_correspondences(objects[obj][a], objects[obj][b], cfg.gt_stride, cfg.occlusion))
                    .first;
      }
      if (found->second.pairs.size() >= 2) {
        pool = &found->second.pairs;
        break;
      }
    }

    // Partial Fisher-Yates over pair indices.
    const std::size_t take = std::min<std::size_t>(cfg.pixels_per_pair, pool->size());
    std::vector<std::size_t> idx(pool->size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<Correspondence> batch;
    batch.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      batch.push_back((*pool)[idx[i]]);
    }

    PairStep step = pair_loss_and_grad(*objects[obj][a].features, *objects[obj][b].features, result.params, batch, cfg);
    if (on_step) on_step(it, step.d_params);
    for (double g : step.d_params) {
      if (!std::isfinite(g)) throw Error(ErrorKind::kConfiguration, "non-finite gradient at iteration " + std::to_string(it));
    }
    result.losses.push_back(step.loss);
    adamw_step<double>(result.params, step.d_params, opt);
  }
  return result;
}

}  // namespace mveq

#endif  // MVEQ_TRAIN_HPP_
