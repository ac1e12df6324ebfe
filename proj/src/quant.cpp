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

#include "tinyforge/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tinyforge/interp.hpp"

namespace tinyforge::quant {

using ir::DType;
using ir::OpKind;

CalibratedRanges calibrate_ranges(const ir::ModelGraph& g,
                                  std::span<const std::vector<float>> representative) {
  if (representative.empty()) throw Error("calibration needs at least one representative input");
  if (g.activation_dtype() != DType::kF32) throw Error("calibration needs a float graph");
  const interp::Interpreter interp(g);
  CalibratedRanges out;
  interp::RunOptions opts;
  opts.on_tensor = [&](int t, DType, std::span<const std::byte> bytes) {
    const std::span<const float> v(reinterpret_cast<const float*>(bytes.data()),
                                   bytes.size() / sizeof(float));
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    auto [it, inserted] = out.activations.try_emplace(t, Range{*lo, *hi});
    if (!inserted) {
      it->second.min = std::min(it->second.min, *lo);
      it->second.max = std::max(it->second.max, *hi);
    }
  };
  for (const auto& x : representative) interp.run(x, opts);

  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::kDense && n.kind != OpKind::kConv1d) continue;
    const int wid = n.inputs[1];
    const auto& w = g.f32_weights(wid);
    const auto channels = static_cast<std::size_t>(g.tensor(wid).shape.back());
    std::vector<Range> ch(channels, Range{std::numeric_limits<float>::infinity(),
                                          -std::numeric_limits<float>::infinity()});
    for (std::size_t i = 0; i < w.size(); ++i) {
      auto& r = ch[i % channels];
      r.min = std::min(r.min, w[i]);
      r.max = std::max(r.max, w[i]);
    }
    out.weight_channels[wid] = std::move(ch);
  }
  return out;
}

ir::QuantParams activation_params(Range r, bool* degenerate) {
  const double lo = std::min(0.0, static_cast<double>(r.min));
  const double hi = std::max(0.0, static_cast<double>(r.max));
  if (degenerate) *degenerate = false;
  if (hi == lo) {
    if (degenerate) *degenerate = true;
    return ir::QuantParams::per_tensor(1.0f, -128 - static_cast<int>(std::lround(lo)));
  }
  const auto scale = static_cast<float>((hi - lo) / 255.0);
  // min / scale computed as min * 255 / (max - min) keeps exact ties exact.
  const long zp = -128 - std::lround(lo * 255.0 / (hi - lo));
  return ir::QuantParams::per_tensor(scale, static_cast<std::int32_t>(std::clamp(zp, -128L, 127L)));
}

ir::QuantParams weight_params(std::span<const float> weights, int channels) {
  ir::QuantParams q;
  q.granularity = ir::Granularity::kPerChannel;
  std::vector<float> max_abs(static_cast<std::size_t>(channels), 0.0f);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto& m = max_abs[i % static_cast<std::size_t>(channels)];
    m = std::max(m, std::fabs(weights[i]));
  }
  for (float m : max_abs) {
    q.scale.push_back(m > 0.0f ? static_cast<float>(static_cast<double>(m) / 127.0) : 1.0f);
    q.zero_point.push_back(0);
  }
  return q;
}

int quantize(double x, double scale, int zero_point) {
  const double r = std::round(x / scale) + zero_point;
  return static_cast<int>(std::clamp(r, -128.0, 127.0));
}

double dequantize(int q, double scale, int zero_point) { return (q - zero_point) * scale; }

QuantizedModel quantize_graph(const ir::ModelGraph& in, const CalibratedRanges& ranges) {
  const ir::ModelGraph g0 = ir::shape_infer_validate(in);
  if (g0.activation_dtype() != DType::kF32) {
    throw Error("graph is already quantized; int8 graphs cannot be quantized again");
  }
  QuantizedModel out;
  ir::ModelGraph& g = out.graph;
  g = g0;

  auto range_of = [&](int t) {
    const auto it = ranges.activations.find(t);
    if (it == ranges.activations.end()) {
      throw Error("no calibrated range for tensor " + std::to_string(t));
    }
    return it->second;
  };
  auto set_activation = [&](int t) {
    bool degenerate = false;
    auto& spec = g.tensor(t);
    spec.dtype = DType::kI8;
    spec.quant = activation_params(range_of(t), &degenerate);
    if (degenerate) {
      out.warnings.push_back("tensor " + std::to_string(t) +
                             " has a zero-width range; using scale 1");
    }
  };

  set_activation(g.input);
  for (const auto& n : g.nodes) {
    const auto& x = g.tensor(n.inputs[0]);
    switch (n.kind) {
      case OpKind::kDense:
      case OpKind::kConv1d: {
        set_activation(n.output);
        const int wid = n.inputs[1], bid = n.inputs[2];
        const auto& wf = g0.f32_weights(wid);
        const auto& bf = g0.f32_weights(bid);
        const int channels = g.tensor(wid).shape.back();
        auto wq = weight_params(wf, channels);
        if (const auto it = ranges.weight_channels.find(wid); it != ranges.weight_channels.end()) {
          for (std::size_t c = 0; c < it->second.size(); ++c) {
            const float m = std::max(std::fabs(it->second[c].min), std::fabs(it->second[c].max));
            wq.scale[c] = m > 0.0f ? static_cast<float>(static_cast<double>(m) / 127.0) : 1.0f;
          }
        }
        std::vector<std::int8_t> wi(wf.size());
        for (std::size_t i = 0; i < wf.size(); ++i) {
          const auto c = i % static_cast<std::size_t>(channels);
          wi[i] = static_cast<std::int8_t>(quantize(wf[i], wq.scale[c], 0));
        }
        const float in_scale = x.quant->scale[0];
        ir::QuantParams bq;
        bq.granularity = ir::Granularity::kPerChannel;
        std::vector<std::int32_t> bi(bf.size());
        for (std::size_t c = 0; c < bf.size(); ++c) {
          const double s = static_cast<double>(in_scale) * wq.scale[c];
          const double v = std::round(bf[c] / s);
          bi[c] = static_cast<std::int32_t>(std::clamp(
              v, static_cast<double>(std::numeric_limits<std::int32_t>::min()),
              static_cast<double>(std::numeric_limits<std::int32_t>::max())));
          bq.scale.push_back(static_cast<float>(s));
          bq.zero_point.push_back(0);
        }
        auto& wt = g.tensor(wid);
        wt.dtype = DType::kI8;
        wt.quant = std::move(wq);
        g.weights[wid] = std::move(wi);
        auto& bt = g.tensor(bid);
        bt.dtype = DType::kI32;
        bt.quant = std::move(bq);
        g.weights[bid] = std::move(bi);
        break;
      }
      case OpKind::kRelu:
      case OpKind::kMaxPool1d:
      case OpKind::kFlatten: {
        auto& y = g.tensor(n.output);
        y.dtype = DType::kI8;
        y.quant = x.quant;
        break;
      }
      case OpKind::kSoftmax:
      case OpKind::kKmeansDistance:
        break;
    }
  }
  out.graph = ir::shape_infer_validate(g);
  return out;
}

}  // namespace tinyforge::quant
