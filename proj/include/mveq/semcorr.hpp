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

#ifndef MVEQ_SEMCORR_HPP_
#define MVEQ_SEMCORR_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"
#include "mveq/matching.hpp"
#include "mveq/metrics.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mveq {

struct BoundingBox {
  double x0, y0, x1, y1;

  double max_side() const { return std::max(x1 - x0, y1 - y0); }
};

struct KeypointPair {
  std::string src_image;
  std::string dst_image;
  std::vector<Vec2> src_kpts;
  std::vector<Vec2> dst_kpts;
  std::optional<BoundingBox> dst_bbox;
};

/// Best match in `dst` for the feature at each source keypoint; keypoints
/// outside the source image come back as nullopt.
inline std::vector<std::optional<Vec2>> transfer_keypoints(const FeatureMap& src, const FeatureMap& dst,
                                                           const std::vector<Vec2>& kpts,
                                                           const CandidateGrid& grid = CandidateGrid::full()) {
  if (src.channels != dst.channels) throw Error(ErrorKind::kConfiguration, "transfer_keypoints: channel mismatch");
  const DenseFeatures field(dst, grid.stride);
  std::vector<std::optional<Vec2>> out;
  out.reserve(kpts.size());
  for (const Vec2& k : kpts) {
    if (!(k.x() >= 0.0 && k.x() <= src.img_w && k.y() >= 0.0 && k.y() <= src.img_h)) {
      out.emplace_back(std::nullopt);
      continue;
    }
    out.emplace_back(best_match(sample_feature(src, k, true), field, grid).position);
  }
  return out;
}

struct SemcorrReport {
  std::map<double, double> pck_bbox;       // micro average over keypoints (headline)
  std::map<double, double> pck_bbox_macro;  // mean of per-pair PCK
  std::map<double, double> pck_image;      // micro, normalized by min(W, H)
  std::size_t keypoints = 0;
  std::size_t skipped_keypoints = 0;
  std::size_t pairs = 0;
  std::vector<std::string> excluded_pairs;
};

/// PCK over all pairs. Skipped keypoints count as misses. Pairs whose
/// features cannot be resolved are excluded and listed.
inline SemcorrReport evaluate_semcorr(
    const std::vector<KeypointPair>& pairs,
    const std::function<const FeatureMap*(const std::string&)>& features,
    const std::vector<double>& alphas = {kPckAlphas.begin(), kPckAlphas.end()}) {
  SemcorrReport r;
  std::map<double, std::size_t> hits_bbox, hits_image;
  std::map<double, double> macro_sum;
  for (const KeypointPair& p : pairs) {
    const FeatureMap* src = features(p.src_image);
    const FeatureMap* dst = features(p.dst_image);
    if (!src || !dst) {
      r.excluded_pairs.push_back(p.src_image + "->" + p.dst_image + ": missing features");
      continue;
    }
    if (p.src_kpts.size() != p.dst_kpts.size()) {
      r.excluded_pairs.push_back(p.src_image + "->" + p.dst_image + ": keypoint lists differ in length");
      continue;
    }
    const auto pred = transfer_keypoints(*src, *dst, p.src_kpts);
    const double bbox_len = p.dst_bbox && p.dst_bbox->max_side() > 0.0 ? p.dst_bbox->max_side()
                                                                       : std::min(dst->img_w, dst->img_h);
    const double image_len = std::min(dst->img_w, dst->img_h);
    std::vector<Vec2> gt_ok, pred_ok;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (!pred[k]) {
        ++r.skipped_keypoints;
        continue;
      }
      gt_ok.push_back(p.dst_kpts[k]);
      pred_ok.push_back(*pred[k]);
    }
    const double n = static_cast<double>(pred.size());
    for (double a : alphas) {
      const auto count = [&](double len) {
        return static_cast<std::size_t>(std::llround(pck(gt_ok, pred_ok, len, a) * static_cast<double>(gt_ok.size()) / 100.0));
      };
      const std::size_t hb = gt_ok.empty() ? 0 : count(bbox_len);
      const std::size_t hi = gt_ok.empty() ? 0 : count(image_len);
      hits_bbox[a] += hb;
      hits_image[a] += hi;
      macro_sum[a] += n > 0 ? 100.0 * static_cast<double>(hb) / n : 100.0;
    }
    r.keypoints += pred.size();
    ++r.pairs;
  }
  for (double a : alphas) {
    const double n = static_cast<double>(r.keypoints);
    r.pck_bbox[a] = r.keypoints ? 100.0 * static_cast<double>(hits_bbox[a]) / n : 100.0;
    r.pck_image[a] = r.keypoints ? 100.0 * static_cast<double>(hits_image[a]) / n : 100.0;
    r.pck_bbox_macro[a] = r.pairs ? macro_sum[a] / static_cast<double>(r.pairs) : 100.0;
  }
  return r;
}

}  // namespace mveq

#endif  // MVEQ_SEMCORR_HPP_
