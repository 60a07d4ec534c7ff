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

#ifndef MVEQ_FEATSTORE_HPP_
#define MVEQ_FEATSTORE_HPP_

#include "mveq/common.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mveq {

/// Per-pixel feature vector. Unit norm whenever it came out of l2_normalize.
using PixelFeature = Eigen::VectorXd;

/// Patch-resolution features for one image, stored [row][col][channel].
struct FeatureMap {
  int hf = 0;
  int wf = 0;
  int channels = 0;
  int patch = 1;
  int img_w = 0;
  int img_h = 0;
  std::vector<float> data;

  static int grid_dim(int pixels, int patch) { return (pixels + patch - 1) / patch; }

  /// Zero-filled map whose grid matches `img_w` x `img_h` at `patch`.
  static FeatureMap zeros(int img_w, int img_h, int patch, int channels) {
    FeatureMap m;
    m.img_w = img_w;
    m.img_h = img_h;
    m.patch = patch;
    m.channels = channels;
    m.hf = grid_dim(img_h, patch);
    m.wf = grid_dim(img_w, patch);
    m.data.assign(static_cast<std::size_t>(m.hf) * m.wf * channels, 0.0f);
    return m;
  }

  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * wf + col) * channels;
  }
  std::span<const float> cell(int row, int col) const {
    return {data.data() + offset(row, col), static_cast<std::size_t>(channels)};
  }
  std::span<float> cell(int row, int col) {
    return {data.data() + offset(row, col), static_cast<std::size_t>(channels)};
  }

  bool same_shape(const FeatureMap& o) const {
    return hf == o.hf && wf == o.wf && channels == o.channels && patch == o.patch && img_w == o.img_w &&
           img_h == o.img_h;
  }

  void validate() const {
    if (patch <= 0 || channels <= 0 || img_w <= 0 || img_h <= 0) {
      throw Error(ErrorKind::kConfiguration, "feature map dims must be positive");
    }
    if (hf != grid_dim(img_h, patch) || wf != grid_dim(img_w, patch)) {
      throw Error(ErrorKind::kConfiguration, "feature grid " + std::to_string(hf) + "x" + std::to_string(wf) +
                                                 " does not match ceil(image / patch)");
    }
    if (data.size() != static_cast<std::size_t>(hf) * wf * channels) {
      throw Error(ErrorKind::kConfiguration, "feature payload size mismatch");
    }
    for (float f : data) {
      if (!std::isfinite(f)) throw Error(ErrorKind::kConfiguration, "non-finite feature value");
    }
  }
};

inline PixelFeature l2_normalize(const PixelFeature& v) {
  const double n = v.norm();
  if (!(n >= 1e-12)) throw Error(ErrorKind::kDegenerateFeature, "cannot normalize a zero-norm feature");
  return v / n;
}

/// The four grid cells (flat cell indices) and weights that bilinear sampling
/// blends at one image location.
struct BilinearTaps {
  std::array<int, 4> cell{};
  std::array<double, 4> weight{};
};

inline BilinearTaps bilinear_taps(const FeatureMap& m, const Vec2& x) {
  // Cell (i, j) is centered on image point ((j + 0.5) p, (i + 0.5) p).
  const double gu = std::clamp(x.x() / m.patch - 0.5, 0.0, static_cast<double>(m.wf - 1));
  const double gv = std::clamp(x.y() / m.patch - 0.5, 0.0, static_cast<double>(m.hf - 1));
  const int c0 = static_cast<int>(std::floor(gu));
  const int r0 = static_cast<int>(std::floor(gv));
  const int c1 = std::min(c0 + 1, m.wf - 1);
  const int r1 = std::min(r0 + 1, m.hf - 1);
  const double fu = gu - c0;
  const double fv = gv - r0;
  BilinearTaps taps;
  taps.cell = {r0 * m.wf + c0, r0 * m.wf + c1, r1 * m.wf + c0, r1 * m.wf + c1};
  taps.weight = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
  return taps;
}

/// Bilinear interpolation on the patch grid at continuous image coords `x`,
/// optionally L2-normalized after interpolation.
inline PixelFeature sample_feature(const FeatureMap& m, const Vec2& x, bool normalize = true) {
  if (!(x.x() >= 0.0 && x.x() <= m.img_w && x.y() >= 0.0 && x.y() <= m.img_h)) {
    throw Error(ErrorKind::kConfiguration, "sample location outside the image");
  }
  const BilinearTaps taps = bilinear_taps(m, x);
  PixelFeature v = PixelFeature::Zero(m.channels);
  for (int t = 0; t < 4; ++t) {
    if (taps.weight[t] == 0.0) continue;
    const float* src = m.data.data() + static_cast<std::size_t>(taps.cell[t]) * m.channels;
    for (int c = 0; c < m.channels; ++c) v[c] += taps.weight[t] * static_cast<double>(src[c]);
  }
  return normalize ? l2_normalize(v) : v;
}

/// Normalized per-pixel features for every pixel center on a stride grid,
/// one column per pixel in row-major grid order.
class DenseFeatures {
 public:
  DenseFeatures() = default;

  explicit DenseFeatures(const FeatureMap& m, int stride = 1)
      : width_(m.img_w), height_(m.img_h), stride_(stride) {
    if (stride < 1) throw Error(ErrorKind::kConfiguration, "stride must be >= 1");
    cols_ = (width_ + stride - 1) / stride;
    rows_ = (height_ + stride - 1) / stride;
    values_.resize(m.channels, static_cast<Eigen::Index>(rows_) * cols_);
    for (int r = 0; r < rows_; ++r) {
      for (int c = 0; c < cols_; ++c) {
        values_.col(static_cast<Eigen::Index>(r) * cols_ + c) = sample_feature(m, pixel_center(r, c), true);
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int stride() const { return stride_; }
  int grid_rows() const { return rows_; }
  int grid_cols() const { return cols_; }
  int channels() const { return static_cast<int>(values_.rows()); }

  /// Image coords of the center of grid pixel (r, c).
  Vec2 pixel_center(int r, int c) const { return {c * stride_ + 0.5, r * stride_ + 0.5}; }

  auto feature(int r, int c) const { return values_.col(static_cast<Eigen::Index>(r) * cols_ + c); }

  const Eigen::MatrixXd& matrix() const { return values_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int stride_ = 1;
  int rows_ = 0;
  int cols_ = 0;
  Eigen::MatrixXd values_;
};

// ---------------------------------------------------------------------------
// FTB1: "FTB1", u32 hf, wf, C, p, img_w, img_h, then hf*wf*C float32
// row-major [row][col][channel], all little-endian.

inline std::string encode_feature_map(const FeatureMap& m) {
  std::string out = "FTB1";
  for (int v : {m.hf, m.wf, m.channels, m.patch, m.img_w, m.img_h}) detail::put_u32(out, static_cast<std::uint32_t>(v));
  out.reserve(out.size() + m.data.size() * 4);
  for (float f : m.data) detail::put_f32(out, f);
  return out;
}

inline FeatureMap decode_feature_map(std::string bytes) {
  detail::ByteReader in(std::move(bytes));
  in.expect_magic("FTB1");
  FeatureMap m;
  m.hf = static_cast<int>(in.u32("hf"));
  m.wf = static_cast<int>(in.u32("wf"));
  m.channels = static_cast<int>(in.u32("C"));
  m.patch = static_cast<int>(in.u32("p"));
  m.img_w = static_cast<int>(in.u32("img_w"));
  m.img_h = static_cast<int>(in.u32("img_h"));
  const std::uint64_t header_end = in.offset();
  if (m.patch <= 0 || m.channels <= 0 || m.img_w <= 0 || m.img_h <= 0) {
    throw FormatError("zero dimension in FTB1 header", header_end);
  }
  if (m.hf != FeatureMap::grid_dim(m.img_h, m.patch) || m.wf != FeatureMap::grid_dim(m.img_w, m.patch)) {
    throw FormatError("FTB1 grid dims disagree with ceil(image / patch)", header_end);
  }
  m.data = in.f32_array(static_cast<std::uint64_t>(m.hf) * m.wf * m.channels, "feature");
  in.expect_end();
  return m;
}

inline void save_feature_map(const std::filesystem::path& path, const FeatureMap& m) {
  write_file_atomic(path, encode_feature_map(m));
}

inline FeatureMap load_feature_map(const std::filesystem::path& path) {
  return decode_feature_map(read_file_bytes(path));
}

}  // namespace mveq

#endif  // MVEQ_FEATSTORE_HPP_
