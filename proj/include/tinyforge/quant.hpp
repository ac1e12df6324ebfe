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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinyforge/ir.hpp"

namespace tinyforge::quant {

struct Range {
  float min = 0.0f;
  float max = 0.0f;
};

struct CalibratedRanges {
  std::map<int, Range> activations;                  // every activation tensor
  std::map<int, std::vector<Range>> weight_channels;  // dense/conv weights, per output channel
};

/// Runs the float interpreter over the representative set and records the
/// running min/max of every activation tensor.
CalibratedRanges calibrate_ranges(const ir::ModelGraph& g,
                                  std::span<const std::vector<float>> representative);

/// Asymmetric per-tensor params. The range is widened to contain zero, then
/// scale = (max - min) / 255 and zero_point = -128 - round(min / scale).
/// A zero-width range gets scale 1 and sets `degenerate`.
ir::QuantParams activation_params(Range r, bool* degenerate = nullptr);

/// Symmetric per-channel params over the last axis: scale_c = max|w_c| / 127,
/// zero point 0. All-zero channels get scale 1.
ir::QuantParams weight_params(std::span<const float> weights, int channels);

/// q(x) = clamp(round(x / scale) + zp, -128, 127), round half away from zero,
/// evaluated in double.
int quantize(double x, double scale, int zero_point);
double dequantize(int q, double scale, int zero_point);

struct QuantizedModel {
  ir::ModelGraph graph;
  std::vector<std::string> warnings;
};

/// Full int8 conversion: i8 activations, i8 per-channel weights, i32 biases
/// with scale input_scale * weight_scale. relu/maxpool/flatten outputs reuse
/// their input's params; softmax and kmeans_distance outputs stay f32.
/// Rejects graphs that are already quantized.
QuantizedModel quantize_graph(const ir::ModelGraph& g, const CalibratedRanges& ranges);

}  // namespace tinyforge::quant
