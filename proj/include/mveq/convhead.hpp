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

// Stack of 3x3 same-resolution convolutions applied to patch-grid features
// before interpolation, with its exact backward pass and an AdamW optimizer.

#ifndef MVEQ_CONVHEAD_HPP_
#define MVEQ_CONVHEAD_HPP_

#include "mveq/common.hpp"
#include "mveq/featstore.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mveq {

struct ConvLayer {
  int c_out = 0;
  int c_in = 0;
  std::vector<float> weight;  // [c_out][c_in][3][3]
  std::vector<float> bias;    // [c_out]

  static ConvLayer zeros(int c_out, int c_in) {
    return {c_out, c_in, std::vector<float>(static_cast<std::size_t>(c_out) * c_in * 9, 0.0f),
            std::vector<float>(static_cast<std::size_t>(c_out), 0.0f)};
  }

  std::size_t weight_index(int o, int i, int ky, int kx) const {
    return ((static_cast<std::size_t>(o) * c_in + i) * 3 + ky) * 3 + kx;
  }
};

struct HeadParams {
  std::vector<ConvLayer> layers;
  bool residual = true;

  /// All-zero kernels; with the residual branch this is the identity map.
  static HeadParams zero_init(int channels, int n_layers = 1, bool residual = true) {
    HeadParams p;
    p.residual = residual;
    for (int l = 0; l < n_layers; ++l) p.layers.push_back(ConvLayer::zeros(channels, channels));
    return p;
  }

  int in_channels() const { return layers.empty() ? 0 : layers.front().c_in; }
  int out_channels(int input_channels) const { return layers.empty() ? input_channels : layers.back().c_out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const ConvLayer& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Parameters in layer order, weights before bias.
  std::vector<float> flatten() const {
    std::vector<float> out;
    out.reserve(parameter_count());
    for (const ConvLayer& l : layers) {
      out.insert(out.end(), l.weight.begin(), l.weight.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void assign_flat(std::span<const float> flat) {
    if (flat.size() != parameter_count()) throw Error(ErrorKind::kConfiguration, "flat parameter size mismatch");
    std::size_t at = 0;
    for (ConvLayer& l : layers) {
      for (float& w : l.weight) w = flat[at++];
      for (float& b : l.bias) b = flat[at++];
    }
  }

  void validate(int input_channels) const {
    if (layers.size() > 3) throw Error(ErrorKind::kConfiguration, "conv head supports at most 3 layers");
    int c = input_channels;
    for (const ConvLayer& l : layers) {
      if (l.c_in != c) {
        throw Error(ErrorKind::kConfiguration, "conv head channel mismatch: layer expects " + std::to_string(l.c_in) +
                                                   ", got " + std::to_string(c));
      }
      if (residual && l.c_out != l.c_in) throw Error(ErrorKind::kConfiguration, "residual layers need c_out == c_in");
      if (l.weight.size() != static_cast<std::size_t>(l.c_out) * l.c_in * 9 ||
          l.bias.size() != static_cast<std::size_t>(l.c_out)) {
        throw Error(ErrorKind::kConfiguration, "conv layer parameter arrays have the wrong size");
      }
      for (float w : l.weight) {
        if (!std::isfinite(w)) throw Error(ErrorKind::kConfiguration, "non-finite conv weight");
      }
      for (float b : l.bias) {
        if (!std::isfinite(b)) throw Error(ErrorKind::kConfiguration, "non-finite conv bias");
      }
      c = l.c_out;
    }
  }
};

/// Zero-padded stride-1 3x3 cross-correlation over an [h][w][c] tensor.
template <typename T, typename P>
void conv3x3_forward(std::span<const T> in, int h, int w, int c_in, std::span<const P> weight, std::span<const P> bias,
                     int c_out, std::span<T> out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T* dst = out.data() + (static_cast<std::size_t>(y) * w + x) * c_out;
      for (int o = 0; o < c_out; ++o) dst[o] = static_cast<T>(bias[o]);
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const T* src = in.data() + (static_cast<std::size_t>(sy) * w + sx) * c_in;
          for (int o = 0; o < c_out; ++o) {
            const P* wrow = weight.data() + static_cast<std::size_t>(o) * c_in * 9 + ky * 3 + kx;
            T acc = 0;
            for (int i = 0; i < c_in; ++i) acc += static_cast<T>(wrow[i * 9]) * src[i];
            dst[o] += acc;
          }
        }
      }
    }
  }
}

/// Accumulates gradients of conv3x3_forward into d_in, d_weight and d_bias.
template <typename T, typename P>
void conv3x3_backward(std::span<const T> in, int h, int w, int c_in, std::span<const P> weight, int c_out,
                      std::span<const T> d_out, std::span<T> d_in, std::span<T> d_weight, std::span<T> d_bias) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T* g = d_out.data() + (static_cast<std::size_t>(y) * w + x) * c_out;
      for (int o = 0; o < c_out; ++o) d_bias[o] += g[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const std::size_t src_at = (static_cast<std::size_t>(sy) * w + sx) * c_in;
          const T* src = in.data() + src_at;
          T* dsrc = d_in.data() + src_at;
          for (int o = 0; o < c_out; ++o) {
            if (g[o] == T(0)) continue;
            const std::size_t wbase = static_cast<std::size_t>(o) * c_in * 9 + ky * 3 + kx;
            for (int i = 0; i < c_in; ++i) {
              d_weight[wbase + i * 9] += g[o] * src[i];
              dsrc[i] += g[o] * static_cast<T>(weight[wbase + i * 9]);
            }
          }
        }
      }
    }
  }
}

/// Forward pass in scalar type T over an [h][w][c] buffer. Returns every
/// layer input plus the final output (activations.size() == layers + 1).
template <typename T>
std::vector<std::vector<T>> head_forward_activations(std::vector<T> input, int h, int w, int channels,
                                                     const HeadParams& p) {
  p.validate(channels);
  std::vector<std::vector<T>> acts;
  acts.push_back(std::move(input));
  for (const ConvLayer& l : p.layers) {
    const std::vector<T>& in = acts.back();
    std::vector<T> out(static_cast<std::size_t>(h) * w * l.c_out);
    conv3x3_forward<T, float>(in, h, w, l.c_in, l.weight, l.bias, l.c_out, out);
    if (p.residual) {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += in[k];
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

/// Parameter gradients laid out like HeadParams::flatten(), plus the input gradient.
template <typename T>
struct HeadGradients {
  std::vector<T> d_params;
  std::vector<T> d_input;
};

template <typename T>
HeadGradients<T> head_backward_from(const std::vector<std::vector<T>>& acts, int h, int w, const HeadParams& p,
                                    std::vector<T> d_out) {
  HeadGradients<T> out;
  out.d_params.assign(p.parameter_count(), T(0));
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const ConvLayer& l : p.layers) {
    offsets.push_back(at);
    at += l.weight.size() + l.bias.size();
  }
  for (int li = static_cast<int>(p.layers.size()) - 1; li >= 0; --li) {
    const ConvLayer& l = p.layers[li];
    const std::vector<T>& in = acts[li];
    std::vector<T> d_in(in.size(), T(0));
    if (p.residual) d_in = d_out;
    std::span<T> dw(out.d_params.data() + offsets[li], l.weight.size());
    std::span<T> db(out.d_params.data() + offsets[li] + l.weight.size(), l.bias.size());
    conv3x3_backward<T, float>(in, h, w, l.c_in, l.weight, l.c_out, d_out, d_in, dw, db);
    d_out = std::move(d_in);
  }
  out.d_input = std::move(d_out);
  return out;
}

inline FeatureMap head_forward(const FeatureMap& m, const HeadParams& p) {
  auto acts = head_forward_activations<float>(m.data, m.hf, m.wf, m.channels, p);
  FeatureMap out = m;
  out.channels = p.out_channels(m.channels);
  out.data = std::move(acts.back());
  return out;
}

/// Exact gradients of head_forward given the upstream gradient `d_out`.
template <typename T = float>
HeadGradients<T> head_backward(const FeatureMap& m, const HeadParams& p, const std::vector<T>& d_out) {
  std::vector<T> input(m.data.begin(), m.data.end());
  const auto acts = head_forward_activations<T>(std::move(input), m.hf, m.wf, m.channels, p);
  if (d_out.size() != acts.back().size()) throw Error(ErrorKind::kConfiguration, "upstream gradient shape mismatch");
  return head_backward_from<T>(acts, m.hf, m.wf, p, d_out);
}

struct AdamWState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update with decoupled weight decay and bias-corrected moments.
template <typename G>
void adamw_step(std::span<float> params, std::span<const G> grads, AdamWState& s) {
  if (grads.size() != params.size()) throw Error(ErrorKind::kConfiguration, "adamw: gradient size mismatch");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size() || s.v.size() != params.size()) {
    throw Error(ErrorKind::kConfiguration, "adamw: moment size mismatch");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = static_cast<double>(grads[k]);
    double theta = params[k];
    theta -= s.lr * s.weight_decay * theta;
    s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * g;
    s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.m[k] / c1;
    const double v_hat = s.v[k] / c2;
    theta -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    params[k] = static_cast<float>(theta);
  }
}

template <typename G>
void adamw_step(HeadParams& p, std::span<const G> grads, AdamWState& s) {
  std::vector<float> flat = p.flatten();
  adamw_step<G>(std::span<float>(flat), grads, s);
  p.assign_flat(flat);
}

// ---------------------------------------------------------------------------
// HED1: "HED1", u32 layer count, u32 residual flag, then per layer u32 c_out,
// u32 c_in, c_out*c_in*9 float32 weights, c_out float32 bias. Little-endian.

inline std::string encode_head(const HeadParams& p) {
  std::string out = "HED1";
  detail::put_u32(out, static_cast<std::uint32_t>(p.layers.size()));
  detail::put_u32(out, p.residual ? 1u : 0u);
  for (const ConvLayer& l : p.layers) {
    detail::put_u32(out, static_cast<std::uint32_t>(l.c_out));
    detail::put_u32(out, static_cast<std::uint32_t>(l.c_in));
    for (float w : l.weight) detail::put_f32(out, w);
    for (float b : l.bias) detail::put_f32(out, b);
  }
  return out;
}

inline HeadParams decode_head(std::string bytes) {
  detail::ByteReader in(std::move(bytes));
  in.expect_magic("HED1");
  const std::uint32_t n = in.u32("layer count");
  if (n > 3) throw FormatError("HED1 layer count must be 0-3", in.offset() - 4);
  const std::uint32_t flag = in.u32("residual flag");
  if (flag > 1) throw FormatError("HED1 residual flag must be 0 or 1", in.offset() - 4);
  HeadParams p;
  p.residual = flag == 1;
  for (std::uint32_t l = 0; l < n; ++l) {
    ConvLayer layer;
    layer.c_out = static_cast<int>(in.u32("c_out"));
    layer.c_in = static_cast<int>(in.u32("c_in"));
    if (layer.c_out == 0 || layer.c_in == 0) throw FormatError("zero channel count in HED1 layer", in.offset());
    layer.weight = in.f32_array(static_cast<std::uint64_t>(layer.c_out) * layer.c_in * 9, "weight");
    layer.bias = in.f32_array(static_cast<std::uint64_t>(layer.c_out), "bias");
    p.layers.push_back(std::move(layer));
  }
  in.expect_end();
  return p;
}

inline void save_head(const std::filesystem::path& path, const HeadParams& p) { write_file_atomic(path, encode_head(p)); }

inline HeadParams load_head(const std::filesystem::path& path) { return decode_head(read_file_bytes(path)); }

}  // namespace mveq

#endif  // MVEQ_CONVHEAD_HPP_
