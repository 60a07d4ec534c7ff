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

// Nearest-neighbor matching over per-pixel feature fields.
//
// Every search uses the same ordering: higher cosine wins, equal cosines go
// to the lexicographically smallest (row, col).

#ifndef MVEQ_MATCHING_HPP_
#define MVEQ_MATCHING_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace mveq {

struct MatchResult {
  Vec2 position{0.0, 0.0};
  double score = -std::numeric_limits<double>::infinity();
  int row = -1;  // pixel indices of the winner
  int col = -1;

  bool found() const { return row >= 0; }
};

/// Search-space control: a pixel stride and an optional validity mask at full
/// image resolution (row-major, nonzero = candidate).
struct CandidateGrid {
  int stride = 1;
  std::optional<std::vector<std::uint8_t>> mask;
  int mask_w = 0;
  int mask_h = 0;

  static CandidateGrid full(int stride = 1) { return {stride, std::nullopt, 0, 0}; }

  static CandidateGrid from_depth(const DepthMap& depth, int stride = 1) {
    CandidateGrid g{stride, std::vector<std::uint8_t>(depth.values.size()), depth.width, depth.height};
    for (std::size_t i = 0; i < depth.values.size(); ++i) (*g.mask)[i] = depth.values[i] > 0.0 ? 1 : 0;
    return g;
  }

  bool allows(int row, int col) const {
    return !mask || (*mask)[static_cast<std::size_t>(row) * mask_w + col] != 0;
  }

  void validate_for(int width, int height) const {
    if (stride < 1) throw Error(ErrorKind::kConfiguration, "candidate stride must be >= 1");
    if (mask && (mask_w != width || mask_h != height ||
                 mask->size() != static_cast<std::size_t>(width) * height)) {
      throw Error(ErrorKind::kConfiguration, "candidate mask dims do not match the target image");
    }
  }
};

namespace detail {

template <typename A, typename B>
double dot_scalar(const A& a, const B& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool better(double score, int row, int col, const MatchResult& cur) {
  if (score != cur.score) return score > cur.score;
  return std::pair(row, col) < std::pair(cur.row, cur.col);
}

inline void offer(MatchResult& cur, double score, int row, int col, const Vec2& pos) {
  if (!cur.found() || better(score, row, col, cur)) cur = {pos, score, row, col};
}

}  // namespace detail

/// Cosine between a unit query and the normalized feature at pixel (row, col).
inline double pixel_score(const PixelFeature& q, const FeatureMap& m, int row, int col) {
  return detail::dot_scalar(q, sample_feature(m, Vec2(col + 0.5, row + 0.5), true));
}

/// Exhaustive argmax of cosine over the candidate grid.
inline MatchResult best_match(const PixelFeature& q, const DenseFeatures& field, const CandidateGrid& grid) {
  grid.validate_for(field.width(), field.height());
  if (grid.stride != field.stride()) throw Error(ErrorKind::kConfiguration, "field stride differs from grid stride");
  if (q.size() != field.channels()) throw Error(ErrorKind::kConfiguration, "query channel count mismatch");
  MatchResult best;
  for (int r = 0; r < field.grid_rows(); ++r) {
    for (int c = 0; c < field.grid_cols(); ++c) {
      const int row = r * field.stride();
      const int col = c * field.stride();
      if (!grid.allows(row, col)) continue;
      const double s = detail::dot_scalar(q, field.feature(r, c));
      if (!best.found() || s > best.score) best = {field.pixel_center(r, c), s, row, col};
    }
  }
  if (!best.found()) throw Error(ErrorKind::kNoCandidates, "candidate grid is empty after masking");
  return best;
}

inline MatchResult best_match(const PixelFeature& q, const FeatureMap& target, const CandidateGrid& grid) {
  return best_match(q, DenseFeatures(target, grid.stride), grid);
}

/// Two-stage argmax at stride 1: patch centers first, then pixels within
/// `refine_radius` patches of the winner. A bound pass then scans every grid
/// block whose cosine upper bound reaches the current best, so the result is
/// always identical to best_match at stride 1.
inline MatchResult coarse_to_fine_match(const PixelFeature& q, const FeatureMap& target, int refine_radius,
                                        const CandidateGrid& grid = CandidateGrid::full()) {
  if (refine_radius < 1) throw Error(ErrorKind::kConfiguration, "refine_radius must be >= 1");
  if (grid.stride != 1) throw Error(ErrorKind::kConfiguration, "coarse_to_fine_match searches at stride 1");
  grid.validate_for(target.img_w, target.img_h);
  if (q.size() != target.channels) throw Error(ErrorKind::kConfiguration, "query channel count mismatch");
  const int p = target.patch;
  const int ncells = target.hf * target.wf;

  std::vector<double> cell_dot(ncells);
  std::vector<double> cell_norm(ncells);
  int win = -1;
  double win_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < ncells; ++k) {
    const auto cell = target.cell(k / target.wf, k % target.wf);
    double d = 0.0;
    double n2 = 0.0;
    for (int c = 0; c < target.channels; ++c) {
      d += q[c] * cell[c];
      n2 += static_cast<double>(cell[c]) * cell[c];
    }
    cell_dot[k] = d;
    cell_norm[k] = std::sqrt(n2);
    const double s = cell_norm[k] > 0.0 ? d / cell_norm[k] : -std::numeric_limits<double>::infinity();
    if (win < 0 || s > win_score) {
      win = k;
      win_score = s;
    }
  }

  const double center_x = (win % target.wf + 0.5) * p;
  const double center_y = (win / target.wf + 0.5) * p;
  const double reach = static_cast<double>(refine_radius) * p;
  const int col_lo = std::max(0, static_cast<int>(std::ceil(center_x - reach - 0.5)));
  const int col_hi = std::min(target.img_w - 1, static_cast<int>(std::floor(center_x + reach - 0.5)));
  const int row_lo = std::max(0, static_cast<int>(std::ceil(center_y - reach - 0.5)));
  const int row_hi = std::min(target.img_h - 1, static_cast<int>(std::floor(center_y + reach - 0.5)));
  auto in_window = [&](int row, int col) { return row >= row_lo && row <= row_hi && col >= col_lo && col <= col_hi; };

  MatchResult best;
  for (int row = row_lo; row <= row_hi; ++row) {
    for (int col = col_lo; col <= col_hi; ++col) {
      if (!grid.allows(row, col)) continue;
      detail::offer(best, pixel_score(q, target, row, col), row, col, Vec2(col + 0.5, row + 0.5));
    }
  }

  // Pixels grouped by the 2x2 cell block they interpolate from.
  auto block_of = [](double g, int n) { return std::min(static_cast<int>(std::floor(g)), std::max(n - 2, 0)); };
  auto block_index = [&](int pix, int n) {
    return block_of(std::clamp((pix + 0.5) / p - 0.5, 0.0, static_cast<double>(n - 1)), n);
  };
  const int bcols = std::max(target.wf - 1, 1);
  const int brows = std::max(target.hf - 1, 1);
  std::vector<std::pair<int, int>> col_span(bcols, {target.img_w, -1});
  std::vector<std::pair<int, int>> row_span(brows, {target.img_h, -1});
  for (int col = 0; col < target.img_w; ++col) {
    auto& s = col_span[block_index(col, target.wf)];
    s = {std::min(s.first, col), std::max(s.second, col)};
  }
  for (int row = 0; row < target.img_h; ++row) {
    auto& s = row_span[block_index(row, target.hf)];
    s = {std::min(s.first, row), std::max(s.second, row)};
  }

  for (int br = 0; br < brows; ++br) {
    for (int bc = 0; bc < bcols; ++bc) {
      const auto [r0, r1] = row_span[br];
      const auto [c0, c1] = col_span[bc];
      if (r1 < r0 || c1 < c0) continue;
      if (r0 >= row_lo && r1 <= row_hi && c0 >= col_lo && c1 <= col_hi) continue;

      // Cosine upper bound over the convex hull of the block's cells.
      std::vector<int> cells;
      for (int i : {br, std::min(br + 1, target.hf - 1)}) {
        for (int j : {bc, std::min(bc + 1, target.wf - 1)}) {
          const int k = i * target.wf + j;
          if (std::find(cells.begin(), cells.end(), k) == cells.end()) cells.push_back(k);
        }
      }
      double max_dot = -std::numeric_limits<double>::infinity();
      double max_norm = 0.0;
      PixelFeature centroid = PixelFeature::Zero(target.channels);
      for (int k : cells) {
        max_dot = std::max(max_dot, cell_dot[k]);
        max_norm = std::max(max_norm, cell_norm[k]);
        const auto cell = target.cell(k / target.wf, k % target.wf);
        for (int c = 0; c < target.channels; ++c) centroid[c] += cell[c];
      }
      centroid /= static_cast<double>(cells.size());
      double spread = 0.0;
      for (int k : cells) {
        const auto cell = target.cell(k / target.wf, k % target.wf);
        double d2 = 0.0;
        for (int c = 0; c < target.channels; ++c) d2 += (cell[c] - centroid[c]) * (cell[c] - centroid[c]);
        spread = std::max(spread, std::sqrt(d2));
      }
      const double min_norm = centroid.norm() - spread;
      double bound = 1.0;
      if (max_dot < 0.0) {
        bound = max_norm > 0.0 ? max_dot / max_norm : 1.0;
      } else if (max_dot == 0.0) {
        bound = 0.0;
      } else if (min_norm > 0.0) {
        bound = std::min(1.0, max_dot / min_norm);
      }
      if (best.found() && bound + 1e-9 < best.score) continue;

      for (int row = r0; row <= r1; ++row) {
        for (int col = c0; col <= c1; ++col) {
          if (in_window(row, col) || !grid.allows(row, col)) continue;
          detail::offer(best, pixel_score(q, target, row, col), row, col, Vec2(col + 0.5, row + 0.5));
        }
      }
    }
  }
  if (!best.found()) throw Error(ErrorKind::kNoCandidates, "candidate grid is empty after masking");
  return best;
}

struct MutualMatches {
  std::size_t count = 0;
  std::vector<std::pair<Vec2, Vec2>> pairs;  // (pixel in a, pixel in b)
};

/// Pixels x of `a` whose best match y in `b` maps back to within `px_tol` of x.
/// The grid stride and mask apply to both maps.
inline MutualMatches mutual_matches(const FeatureMap& a, const FeatureMap& b, const CandidateGrid& grid,
                                    double px_tol = 0.0) {
  if (a.channels != b.channels) throw Error(ErrorKind::kConfiguration, "mutual_matches: channel mismatch");
  const DenseFeatures fa(a, grid.stride);
  const DenseFeatures fb(b, grid.stride);
  MutualMatches out;
  for (int r = 0; r < fa.grid_rows(); ++r) {
    for (int c = 0; c < fa.grid_cols(); ++c) {
      if (!grid.allows(r * grid.stride, c * grid.stride)) continue;
      const PixelFeature qa = fa.feature(r, c);
      const MatchResult fwd = best_match(qa, fb, grid);
      const PixelFeature qb = fb.feature(fwd.row / grid.stride, fwd.col / grid.stride);
      const MatchResult back = best_match(qb, fa, grid);
      const Vec2 x = fa.pixel_center(r, c);
      if ((back.position - x).norm() <= px_tol) {
        ++out.count;
        out.pairs.emplace_back(x, fwd.position);
      }
    }
  }
  return out;
}

/// Softmax-weighted position over the (2 radius + 1)^2 window around
/// `coarse` (pixel indices), clipped to the image.
inline Vec2 refine_softmax(const FeatureMap& target, const PixelFeature& q, int coarse_row, int coarse_col,
                           int radius, double temperature) {
  if (radius < 1) throw Error(ErrorKind::kConfiguration, "refine radius must be >= 1");
  if (!(temperature > 0.0)) throw Error(ErrorKind::kConfiguration, "softmax temperature must be > 0");
  const int r0 = std::max(0, coarse_row - radius);
  const int r1 = std::min(target.img_h - 1, coarse_row + radius);
  const int c0 = std::max(0, coarse_col - radius);
  const int c1 = std::min(target.img_w - 1, coarse_col + radius);
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(r1 - r0 + 1) * (c1 - c0 + 1));
  double top = -std::numeric_limits<double>::infinity();
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col) {
      scores.push_back(pixel_score(q, target, row, col));
      top = std::max(top, scores.back());
    }
  }
  Vec2 acc = Vec2::Zero();
  double wsum = 0.0;
  std::size_t i = 0;
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col, ++i) {
      const double w = std::exp((scores[i] - top) / temperature);
      acc += w * Vec2(col + 0.5, row + 0.5);
      wsum += w;
    }
  }
  return acc / wsum;
}

}  // namespace mveq

#endif  // MVEQ_MATCHING_HPP_
