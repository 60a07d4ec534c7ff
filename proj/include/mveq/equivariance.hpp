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

#ifndef MVEQ_EQUIVARIANCE_HPP_
#define MVEQ_EQUIVARIANCE_HPP_

#include "mveq/common.hpp"
#include "mveq/convhead.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"
#include "mveq/matching.hpp"
#include "mveq/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace mveq {

struct EquivarianceConfig {
  int stride = 1;  // GT sampling stride in view a
  OcclusionTolerance occlusion;
  int refine_radius = 2;  // patches, for the coarse-to-fine search
  int threads = 1;
};

struct EquivarianceResult {
  EquivarianceReport masked;    // argmax over the target's valid-depth pixels
  EquivarianceReport unmasked;  // argmax over the full frame
  std::size_t view_pairs = 0;
};

namespace detail {

struct PairTotals {
  EquivarianceAccumulator masked;
  EquivarianceAccumulator unmasked;
};

inline PairTotals evaluate_view_pair(const ViewRecord& a, const ViewRecord& b, const FeatureMap& fa,
                                     const FeatureMap& fb, const EquivarianceConfig& cfg) {
  PairTotals t;
  const CorrespondenceSet gt = gt_correspondences(a, b, cfg.stride, cfg.occlusion);
  if (gt.pairs.empty()) return t;
  const CandidateGrid fg = CandidateGrid::from_depth(*b.depth);
  std::vector<MatchResult> masked, unmasked;
  masked.reserve(gt.pairs.size());
  unmasked.reserve(gt.pairs.size());
  for (const Correspondence& c : gt.pairs) {
    const PixelFeature q = sample_feature(fa, c.x1, true);
    masked.push_back(coarse_to_fine_match(q, fb, cfg.refine_radius, fg));
    unmasked.push_back(coarse_to_fine_match(q, fb, cfg.refine_radius));
  }
  t.masked.add(gt, masked);
  t.unmasked.add(gt, unmasked);
  return t;
}

}  // namespace detail

/// APE/PCDP over every ordered view pair of every object. Per-pair totals are
/// merged in pair order, so the result does not depend on the thread count.
inline EquivarianceResult evaluate_equivariance(const std::vector<std::vector<ViewRecord>>& objects,
                                                const EquivarianceConfig& cfg,
                                                const HeadParams* head = nullptr) {
  if (cfg.threads < 1) throw Error(ErrorKind::kConfiguration, "threads must be >= 1");
  struct Job {
    std::size_t obj, a, b;
  };
  std::vector<std::vector<FeatureMap>> feats(objects.size());
  std::vector<Job> jobs;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    for (const ViewRecord& v : objects[o]) {
      if (!v.features || !v.depth) throw Error(ErrorKind::kConfiguration, "view '" + v.id + "' lacks features or depth");
      feats[o].push_back(head && !head->layers.empty() ? head_forward(*v.features, *head) : *v.features);
    }
    for (std::size_t a = 0; a < objects[o].size(); ++a) {
      for (std::size_t b = 0; b < objects[o].size(); ++b) {
        if (a != b) jobs.push_back({o, a, b});
      }
    }
  }

  std::vector<detail::PairTotals> totals(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.threads));
  auto worker = [&](std::size_t w) {
    try {
      for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
        const Job& job = jobs[j];
        totals[j] = detail::evaluate_view_pair(objects[job.obj][job.a], objects[job.obj][job.b],
                                               feats[job.obj][job.a], feats[job.obj][job.b], cfg);
      }
    } catch (...) {
      errors[w] = std::current_exception();
      next = jobs.size();
    }
  };
  if (cfg.threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker, static_cast<std::size_t>(w));
    for (std::thread& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  detail::PairTotals all;
  for (const detail::PairTotals& t : totals) {
    all.masked.merge(t.masked);
    all.unmasked.merge(t.unmasked);
  }
  return {all.masked.report(), all.unmasked.report(), jobs.size()};
}

}  // namespace mveq

#endif  // MVEQ_EQUIVARIANCE_HPP_
