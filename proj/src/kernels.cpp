// Copyright 2026 The TinyForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tinyforge/kernels.hpp"

#include <limits>

namespace tinyforge::kernels {
namespace {

inline float dense_unit_f32(const float* in, const float* w, float bias, int n_in, int units,
                            int u) {
  float acc = bias;
  for (int i = 0; i < n_in; ++i) acc += in[i] * w[i * units + u];
  return acc;
}

inline float conv_point_f32(const float* in, const float* w, float bias, const Conv1dShape& s,
                            int t, int f) {
  float acc = bias;
  const float* x = in + t * s.stride * s.in_ch;
  for (int k = 0; k < s.kernel; ++k) {
    for (int c = 0; c < s.in_ch; ++c) {
      acc += x[k * s.in_ch + c] * w[(k * s.in_ch + c) * s.filters + f];
    }
  }
  return acc;
}

inline std::int32_t dense_unit_i8(const std::int8_t* in, const std::int8_t* w, std::int32_t bias,
                                  std::int32_t in_zp, int n_in, int units, int u) {
  std::int32_t acc = bias;
  for (int i = 0; i < n_in; ++i) {
    acc += (static_cast<std::int32_t>(in[i]) - in_zp) * static_cast<std::int32_t>(w[i * units + u]);
  }
  return acc;
}

inline std::int32_t conv_point_i8(const std::int8_t* in, const std::int8_t* w, std::int32_t bias,
                                  std::int32_t in_zp, const Conv1dShape& s, int t, int f) {
  std::int32_t acc = bias;
  const std::int8_t* x = in + t * s.stride * s.in_ch;
  for (int k = 0; k < s.kernel; ++k) {
    for (int c = 0; c < s.in_ch; ++c) {
      acc += (static_cast<std::int32_t>(x[k * s.in_ch + c]) - in_zp) *
             static_cast<std::int32_t>(w[(k * s.in_ch + c) * s.filters + f]);
    }
  }
  return acc;
}

template <typename T>
inline T pool_point(const T* in, const PoolShape& s, int t, int c) {
  T m = in[(t * s.stride) * s.ch + c];
  for (int p = 1; p < s.pool; ++p) m = std::max(m, in[(t * s.stride + p) * s.ch + c]);
  return m;
}

}  // namespace

void dense_f32(Exec exec, std::span<const float> in, std::span<const float> w,
               std::span<const float> b, DenseShape s, bool relu, std::span<float> out) {
  const float* x = in.data();
  const float* wp = w.data();
  if (exec == Exec::kSerial) {
    for (int u = 0; u < s.units; ++u) {
      const float v = dense_unit_f32(x, wp, b[u], s.in, s.units, u);
      out[u] = relu ? std::max(v, 0.0f) : v;
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (int u = 0; u < s.units; ++u) {
    const float v = dense_unit_f32(x, wp, b[u], s.in, s.units, u);
    out[u] = relu ? std::max(v, 0.0f) : v;
  }
}

void conv1d_f32(Exec exec, std::span<const float> in, std::span<const float> w,
                std::span<const float> b, Conv1dShape s, bool relu, std::span<float> out) {
  const int out_len = s.out_len();
  if (exec == Exec::kSerial) {
    for (int t = 0; t < out_len; ++t) {
      for (int f = 0; f < s.filters; ++f) {
        const float v = conv_point_f32(in.data(), w.data(), b[f], s, t, f);
        out[t * s.filters + f] = relu ? std::max(v, 0.0f) : v;
      }
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int t = 0; t < out_len; ++t) {
    for (int f = 0; f < s.filters; ++f) {
      const float v = conv_point_f32(in.data(), w.data(), b[f], s, t, f);
      out[t * s.filters + f] = relu ? std::max(v, 0.0f) : v;
    }
  }
}

void relu_f32(std::span<const float> in, std::span<float> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(in[i], 0.0f);
}

void maxpool1d_f32(Exec exec, std::span<const float> in, PoolShape s, std::span<float> out) {
  const int out_len = s.out_len();
  if (exec == Exec::kSerial) {
    for (int t = 0; t < out_len; ++t) {
      for (int c = 0; c < s.ch; ++c) out[t * s.ch + c] = pool_point(in.data(), s, t, c);
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (int t = 0; t < out_len; ++t) {
    for (int c = 0; c < s.ch; ++c) out[t * s.ch + c] = pool_point(in.data(), s, t, c);
  }
}

void softmax_f32(std::span<const float> in, std::span<float> out) {
  float m = in[0];
  for (std::size_t i = 1; i < in.size(); ++i) m = std::max(m, in[i]);
  float sum = 0.0f;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - m);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = out[i] / sum;
}

float kmeans_distance_f32(std::span<const float> in, std::span<const float> centroids, int k) {
  const std::size_t dim = in.size();
  float best = std::numeric_limits<float>::infinity();
  for (int j = 0; j < k; ++j) {
    float d2 = 0.0f;
    for (std::size_t i = 0; i < dim; ++i) {
      const float d = in[i] - centroids[static_cast<std::size_t>(j) * dim + i];
      d2 += d * d;
    }
    best = std::min(best, d2);
  }
  return std::sqrt(best);
}

void dense_i8(Exec exec, std::span<const std::int8_t> in, std::span<const std::int8_t> w,
              std::span<const std::int32_t> b, DenseShape s, const QuantLayer& q, bool relu,
              std::span<std::int8_t> out) {
  auto unit = [&](int u) {
    const std::int32_t acc = dense_unit_i8(in.data(), w.data(), b[u], q.in_zp, s.in, s.units, u);
    std::int8_t r = requantize(acc, q.multipliers[static_cast<std::size_t>(u)], q.out_zp);
    if (relu && r < q.out_zp) r = static_cast<std::int8_t>(q.out_zp);
    out[u] = r;
  };
  if (exec == Exec::kSerial) {
    for (int u = 0; u < s.units; ++u) unit(u);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int u = 0; u < s.units; ++u) unit(u);
}

void conv1d_i8(Exec exec, std::span<const std::int8_t> in, std::span<const std::int8_t> w,
               std::span<const std::int32_t> b, Conv1dShape s, const QuantLayer& q, bool relu,
               std::span<std::int8_t> out) {
  auto point = [&](int t, int f) {
    const std::int32_t acc = conv_point_i8(in.data(), w.data(), b[f], q.in_zp, s, t, f);
    std::int8_t r = requantize(acc, q.multipliers[static_cast<std::size_t>(f)], q.out_zp);
    if (relu && r < q.out_zp) r = static_cast<std::int8_t>(q.out_zp);
    out[t * s.filters + f] = r;
  };
  const int out_len = s.out_len();
  if (exec == Exec::kSerial) {
    for (int t = 0; t < out_len; ++t) {
      for (int f = 0; f < s.filters; ++f) point(t, f);
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int t = 0; t < out_len; ++t) {
    for (int f = 0; f < s.filters; ++f) point(t, f);
  }
}

void relu_i8(std::span<const std::int8_t> in, std::int32_t zp, std::span<std::int8_t> out) {
  const auto z = static_cast<std::int8_t>(zp);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(in[i], z);
}

void maxpool1d_i8(Exec exec, std::span<const std::int8_t> in, PoolShape s,
                  std::span<std::int8_t> out) {
  const int out_len = s.out_len();
  if (exec == Exec::kSerial) {
    for (int t = 0; t < out_len; ++t) {
      for (int c = 0; c < s.ch; ++c) out[t * s.ch + c] = pool_point(in.data(), s, t, c);
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (int t = 0; t < out_len; ++t) {
    for (int c = 0; c < s.ch; ++c) out[t * s.ch + c] = pool_point(in.data(), s, t, c);
  }
}

void quantize(std::span<const float> in, float scale, std::int32_t zp, std::span<std::int8_t> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = quantize_value(in[i], scale, zp);
}

void dequantize(std::span<const std::int8_t> in, float scale, std::int32_t zp,
                std::span<float> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = dequantize_value(in[i], scale, zp);
}

}  // namespace tinyforge::kernels
