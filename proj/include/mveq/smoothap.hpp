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

// Ranking objectives over one query feature: Smooth-AP with analytic
// gradients, the hard-ranking AP it relaxes, and an InfoNCE baseline.
//
// For a query q with positives P and negatives N, let s_k = f_k . q and
// D_ij = s_j - s_i. Smooth-AP is
//
//   (1/|P|) sum_{i in P} (1 + sum_{j in P, j != i} sig(D_ij / tau))
//                       / (1 + sum_{j in P, j != i} sig(D_ij / tau)
//                            + sum_{j in N} sig(D_ij / tau))
//
// With include_self set, the j = i term (a constant sig(0) = 1/2) is kept in
// both positive sums.

#ifndef MVEQ_SMOOTHAP_HPP_
#define MVEQ_SMOOTHAP_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace mveq {

struct RankingInstance {
  PixelFeature query;
  std::vector<PixelFeature> positives;
  std::vector<PixelFeature> negatives;
  double tau = 1.0;
  bool include_self = false;
};

struct LossGrad {
  double loss = 0.0;
  PixelFeature d_query;
  std::vector<PixelFeature> d_positives;
  std::vector<PixelFeature> d_negatives;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

inline void check_instance(const RankingInstance& inst, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::kConfiguration, "temperature must be > 0");
  if (inst.positives.empty()) throw Error(ErrorKind::kConfiguration, "ranking instance needs at least one positive");
  const auto dim = inst.query.size();
  for (const auto* set : {&inst.positives, &inst.negatives}) {
    for (const PixelFeature& f : *set) {
      if (f.size() != dim) throw Error(ErrorKind::kConfiguration, "feature dims differ within ranking instance");
    }
  }
}

inline std::vector<double> scores(const PixelFeature& q, const std::vector<PixelFeature>& fs) {
  std::vector<double> s(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k) s[k] = fs[k].dot(q);
  return s;
}

// Smooth-AP from similarity scores; fills d(AP)/d(score) when the spans are nonempty.
inline double smooth_ap_scores(std::span<const double> pos, std::span<const double> neg, double tau, bool include_self,
                               std::span<double> d_pos = {}, std::span<double> d_neg = {}) {
  const bool want_grad = !d_pos.empty();
  if (want_grad) {
    std::fill(d_pos.begin(), d_pos.end(), 0.0);
    std::fill(d_neg.begin(), d_neg.end(), 0.0);
  }
  const double np = static_cast<double>(pos.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    double a = include_self ? 1.5 : 1.0;
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (j != i) a += sigmoid((pos[j] - pos[i]) / tau);
    }
    double b = 0.0;
    for (double sn : neg) b += sigmoid((sn - pos[i]) / tau);
    const double denom = a + b;
    total += a / denom;
    if (!want_grad) continue;

    // term = a / (a + b): d/da = b / (a+b)^2, d/db = -a / (a+b)^2.
    const double da = b / (denom * denom) / np;
    const double db = -a / (denom * denom) / np;
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (j == i) continue;
      const double sg = sigmoid((pos[j] - pos[i]) / tau);
      const double g = da * sg * (1.0 - sg) / tau;
      d_pos[j] += g;
      d_pos[i] -= g;
    }
    for (std::size_t j = 0; j < neg.size(); ++j) {
      const double sg = sigmoid((neg[j] - pos[i]) / tau);
      const double g = db * sg * (1.0 - sg) / tau;
      d_neg[j] += g;
      d_pos[i] -= g;
    }
  }
  return total / np;
}

// Chains d(loss)/d(score_k) through s_k = f_k . q.
inline void scatter_score_grads(const RankingInstance& inst, std::span<const double> g_pos, std::span<const double> g_neg,
                                LossGrad& out) {
  out.d_query = PixelFeature::Zero(inst.query.size());
  out.d_positives.resize(inst.positives.size());
  out.d_negatives.resize(inst.negatives.size());
  for (std::size_t k = 0; k < inst.positives.size(); ++k) {
    out.d_query += g_pos[k] * inst.positives[k];
    out.d_positives[k] = g_pos[k] * inst.query;
  }
  for (std::size_t k = 0; k < inst.negatives.size(); ++k) {
    out.d_query += g_neg[k] * inst.negatives[k];
    out.d_negatives[k] = g_neg[k] * inst.query;
  }
}

}  // namespace detail

inline double smooth_ap(const RankingInstance& inst) {
  detail::check_instance(inst, inst.tau);
  const auto pos = detail::scores(inst.query, inst.positives);
  const auto neg = detail::scores(inst.query, inst.negatives);
  return detail::smooth_ap_scores(pos, neg, inst.tau, inst.include_self);
}

/// Loss 1 - smooth_ap with gradients for the query and every ranked feature.
inline LossGrad smooth_ap_grad(const RankingInstance& inst) {
  detail::check_instance(inst, inst.tau);
  const auto pos = detail::scores(inst.query, inst.positives);
  const auto neg = detail::scores(inst.query, inst.negatives);
  std::vector<double> d_pos(pos.size());
  std::vector<double> d_neg(neg.size());
  LossGrad out;
  out.loss = 1.0 - detail::smooth_ap_scores(pos, neg, inst.tau, inst.include_self, d_pos, d_neg);
  for (double& g : d_pos) g = -g;
  for (double& g : d_neg) g = -g;
  detail::scatter_score_grads(inst, d_pos, d_neg, out);
  return out;
}

/// Average precision of the positives under the descending-score ranking.
/// A negative tied with a positive ranks ahead of it.
inline double exact_ap(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    double pos_rank = 1.0;
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (pos[j] > pos[i] || (pos[j] == pos[i] && j < i)) pos_rank += 1.0;
    }
    double neg_above = 0.0;
    for (double sn : neg) neg_above += sn >= pos[i] ? 1.0 : 0.0;
    total += pos_rank / (pos_rank + neg_above);
  }
  return total / static_cast<double>(pos.size());
}

/// Multi-positive InfoNCE: -log(sum_P exp(s/t) / sum_{P+N} exp(s/t)).
inline LossGrad contrastive_loss(const RankingInstance& inst, double temp) {
  detail::check_instance(inst, temp);
  const auto pos = detail::scores(inst.query, inst.positives);
  const auto neg = detail::scores(inst.query, inst.negatives);
  double top = -std::numeric_limits<double>::infinity();
  for (double s : pos) top = std::max(top, s / temp);
  for (double s : neg) top = std::max(top, s / temp);
  double sum_pos = 0.0;
  double sum_all = 0.0;
  std::vector<double> e_pos(pos.size());
  std::vector<double> e_neg(neg.size());
  for (std::size_t k = 0; k < pos.size(); ++k) sum_pos += e_pos[k] = std::exp(pos[k] / temp - top);
  sum_all = sum_pos;
  for (std::size_t k = 0; k < neg.size(); ++k) sum_all += e_neg[k] = std::exp(neg[k] / temp - top);

  LossGrad out;
  out.loss = std::log(sum_all) - std::log(sum_pos);
  std::vector<double> g_pos(pos.size());
  std::vector<double> g_neg(neg.size());
  for (std::size_t k = 0; k < pos.size(); ++k) g_pos[k] = (e_pos[k] / sum_all - e_pos[k] / sum_pos) / temp;
  for (std::size_t k = 0; k < neg.size(); ++k) g_neg[k] = (e_neg[k] / sum_all) / temp;
  detail::scatter_score_grads(inst, g_pos, g_neg, out);
  return out;
}

}  // namespace mveq

#endif  // MVEQ_SMOOTHAP_HPP_
