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

#ifndef MVEQ_COMMON_HPP_
#define MVEQ_COMMON_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mveq {

inline constexpr std::string_view kVersion = "0.3.0";

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ErrorKind {
  kConfiguration,
  kInvalidDepth,
  kBehindCamera,
  kInvalidRotation,
  kFormat,
  kDegenerateFeature,
  kNoCandidates,
  kInsufficientCorrespondences,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kInvalidDepth: return "invalid-depth";
    case ErrorKind::kBehindCamera: return "behind-camera";
    case ErrorKind::kInvalidRotation: return "invalid-rotation";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kDegenerateFeature: return "degenerate-feature";
    case ErrorKind::kNoCandidates: return "no-candidates";
    case ErrorKind::kInsufficientCorrespondences: return "insufficient-correspondences";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

/// Every failure raised by the toolkit carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Format errors additionally report the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::kFormat, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// splitmix64. Integer draws use rejection sampling and doubles take the top
// 53 bits, so the stream is reproducible from any language.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  /// Independent stream for work item `index` derived from `seed`.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mixer(seed ^ (index * 0xD1B54A32D192ED03ULL));
    return SplitMix64(mixer.next());
  }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::kConfiguration, "SplitMix64::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

// Little-endian cursor over an in-memory file image.
class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  void expect_magic(std::string_view magic) {
    if (remaining() < magic.size() || bytes_.compare(pos_, magic.size(), magic) != 0) {
      throw FormatError("bad magic, expected '" + std::string(magic) + "'", pos_);
    }
    pos_ += magic.size();
  }

  std::uint32_t u32(const char* field) {
    if (remaining() < 4) throw FormatError(std::string("truncated header field ") + field, pos_);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  /// Reads `count` float32 values; rejects short payloads and non-finite values.
  std::vector<float> f32_array(std::uint64_t count, const char* what) {
    if (remaining() / 4 < count) {
      throw FormatError(std::string("truncated ") + what + " payload: need " +
                            std::to_string(count * 4) + " bytes, have " +
                            std::to_string(remaining()),
                        pos_);
    }
    std::vector<float> out(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t at = pos_;
      const std::uint32_t bits = u32(what);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      if (!std::isfinite(f)) throw FormatError(std::string("non-finite value in ") + what, at);
      out[i] = f;
    }
    return out;
  }

  void expect_end() const {
    if (remaining() != 0) throw FormatError("trailing bytes after payload", pos_);
  }

 private:
  std::string bytes_;
  std::uint64_t pos_ = 0;
};

}  // namespace detail

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes via a sibling temp file and rename so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace mveq

#endif  // MVEQ_COMMON_HPP_
