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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

namespace tinyforge::kernels {

/// Every kernel exists in two loop schedules. kSerial is the reference; the
/// OpenMP schedule splits independent output elements across threads and
/// runs the identical per-element arithmetic, so results are bit-identical.
enum class Exec { kSerial, kParallel };

// Fixed-rule scalar helpers shared with the code generator. Rounding is
// std::round (half away from zero) on float, matching C99 roundf.

inline float requant_multiplier(float in_scale, float weight_scale, float out_scale) {
  return static_cast<float>(static_cast<double>(in_scale) * weight_scale / out_scale);
}

inline std::int8_t requantize(std::int32_t acc, float multiplier, std::int32_t out_zp) {
  const float r = std::round(static_cast<float>(acc) * multiplier) + static_cast<float>(out_zp);
  return static_cast<std::int8_t>(std::clamp(r, -128.0f, 127.0f));
}

inline std::int8_t quantize_value(float x, float scale, std::int32_t zp) {
  const float r = std::round(x / scale) + static_cast<float>(zp);
  return static_cast<std::int8_t>(std::clamp(r, -128.0f, 127.0f));
}

inline float dequantize_value(std::int8_t q, float scale, std::int32_t zp) {
  return static_cast<float>(static_cast<std::int32_t>(q) - zp) * scale;
}

struct DenseShape {
  int in = 0;
  int units = 0;
};

struct Conv1dShape {
  int in_len = 0;
  int in_ch = 0;
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  int out_len() const { return (in_len - kernel) / stride + 1; }
};

struct PoolShape {
  int in_len = 0;
  int ch = 0;
  int pool = 1;
  int stride = 1;
  int out_len() const { return (in_len - pool) / stride + 1; }
};

/// Per-layer int8 parameters: input zero point, per-output-channel
/// requantization multipliers, output zero point.
struct QuantLayer {
  std::int32_t in_zp = 0;
  std::span<const float> multipliers;
  std::int32_t out_zp = 0;
};

// Weight layouts: dense [in][units], conv1d [kernel][in_ch][filters].

void dense_f32(Exec exec, std::span<const float> in, std::span<const float> w,
               std::span<const float> b, DenseShape s, bool relu, std::span<float> out);
void conv1d_f32(Exec exec, std::span<const float> in, std::span<const float> w,
                std::span<const float> b, Conv1dShape s, bool relu, std::span<float> out);
void relu_f32(std::span<const float> in, std::span<float> out);
void maxpool1d_f32(Exec exec, std::span<const float> in, PoolShape s, std::span<float> out);
void softmax_f32(std::span<const float> in, std::span<float> out);
float kmeans_distance_f32(std::span<const float> in, std::span<const float> centroids, int k);

void dense_i8(Exec exec, std::span<const std::int8_t> in, std::span<const std::int8_t> w,
              std::span<const std::int32_t> b, DenseShape s, const QuantLayer& q, bool relu,
              std::span<std::int8_t> out);
void conv1d_i8(Exec exec, std::span<const std::int8_t> in, std::span<const std::int8_t> w,
               std::span<const std::int32_t> b, Conv1dShape s, const QuantLayer& q, bool relu,
               std::span<std::int8_t> out);
void relu_i8(std::span<const std::int8_t> in, std::int32_t zp, std::span<std::int8_t> out);
void maxpool1d_i8(Exec exec, std::span<const std::int8_t> in, PoolShape s,
                  std::span<std::int8_t> out);
void quantize(std::span<const float> in, float scale, std::int32_t zp, std::span<std::int8_t> out);
void dequantize(std::span<const std::int8_t> in, float scale, std::int32_t zp,
                std::span<float> out);

}  // namespace tinyforge::kernels
