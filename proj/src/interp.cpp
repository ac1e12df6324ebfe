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

#include "tinyforge/interp.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace tinyforge::interp {

using ir::DType;
using ir::OpKind;

Interpreter::Interpreter(ir::ModelGraph graph)
    : graph_(ir::shape_infer_validate(graph)), plan_(plan_arena(graph_)) {
  layer_quant_.resize(graph_.nodes.size());
  for (const auto& n : graph_.nodes) {
    if (n.kind != OpKind::kDense && n.kind != OpKind::kConv1d) continue;
    const auto& x = graph_.tensor(n.inputs[0]);
    if (x.dtype != DType::kI8) continue;
    const auto& w = graph_.tensor(n.inputs[1]);
    const auto& y = graph_.tensor(n.output);
    auto& lq = layer_quant_[static_cast<std::size_t>(n.id)];
    for (float ws : w.quant->scale) {
      lq.multipliers.push_back(
          kernels::requant_multiplier(x.quant->scale[0], ws, y.quant->scale[0]));
    }
  }
}

std::size_t Interpreter::input_size() const { return graph_.tensor(graph_.input).num_elements(); }
std::size_t Interpreter::output_size() const { return graph_.tensor(graph_.output).num_elements(); }

namespace {

template <typename T>
std::span<T> view(std::vector<std::byte>& arena, std::size_t offset, std::size_t n) {
  return {reinterpret_cast<T*>(arena.data() + offset), n};
}

}  // namespace

std::vector<float> Interpreter::run(std::span<const float> input, const RunOptions& options) const {
  const auto& g = graph_;
  const auto& in_t = g.tensor(g.input);
  if (input.size() != in_t.num_elements()) {
    throw Error("input has " + std::to_string(input.size()) + " values, model expects " +
                std::to_string(in_t.num_elements()));
  }
  // std::vector<std::byte> storage is suitably aligned for float via operator new.
  std::vector<std::byte> arena(plan_.peak_bytes, std::byte{options.arena_fill});
  auto tensor_bytes = [&](int t) {
    return std::span<const std::byte>(arena.data() + plan_.offset(t), g.tensor(t).byte_size());
  };
  auto report = [&](int t) {
    if (options.on_tensor) options.on_tensor(t, g.tensor(t).dtype, tensor_bytes(t));
  };

  const std::size_t in_off = plan_.offset(g.input);
  if (in_t.dtype == DType::kI8) {
    if (!in_t.quant) throw Error("int8 input tensor has no quantization params");
    kernels::quantize(input, in_t.quant->scale[0], in_t.quant->zero_point[0],
                      view<std::int8_t>(arena, in_off, input.size()));
  } else {
    std::copy(input.begin(), input.end(), view<float>(arena, in_off, input.size()).begin());
  }
  report(g.input);

  std::vector<float> scratch;
  for (const auto& n : g.nodes) {
    if (options.on_node_begin) options.on_node_begin(n, arena);
    const auto& x = g.tensor(n.inputs[0]);
    const auto& y = g.tensor(n.output);
    const std::size_t xo = plan_.offset(x.id), yo = plan_.offset(y.id);
    const std::size_t xn = x.num_elements(), yn = y.num_elements();
    const bool relu = n.fused_activation == ir::Activation::kRelu;
    const bool q8 = x.dtype == DType::kI8;
    switch (n.kind) {
      case OpKind::kDense: {
        const kernels::DenseShape s{x.shape[0], n.attrs.units};
        if (q8) {
          const kernels::QuantLayer q{x.quant->zero_point[0],
                                      layer_quant_[static_cast<std::size_t>(n.id)].multipliers,
                                      y.quant->zero_point[0]};
          kernels::dense_i8(options.exec, view<std::int8_t>(arena, xo, xn),
                            g.i8_weights(n.inputs[1]), g.i32_weights(n.inputs[2]), s, q, relu,
                            view<std::int8_t>(arena, yo, yn));
        } else {
          kernels::dense_f32(options.exec, view<float>(arena, xo, xn), g.f32_weights(n.inputs[1]),
                             g.f32_weights(n.inputs[2]), s, relu, view<float>(arena, yo, yn));
        }
        break;
      }
      case OpKind::kConv1d: {
        const kernels::Conv1dShape s{x.shape[0], x.shape[1], n.attrs.filters,
                                     n.attrs.kernel_size, n.attrs.stride};
        if (q8) {
          const kernels::QuantLayer q{x.quant->zero_point[0],
                                      layer_quant_[static_cast<std::size_t>(n.id)].multipliers,
                                      y.quant->zero_point[0]};
          kernels::conv1d_i8(options.exec, view<std::int8_t>(arena, xo, xn),
                             g.i8_weights(n.inputs[1]), g.i32_weights(n.inputs[2]), s, q, relu,
                             view<std::int8_t>(arena, yo, yn));
        } else {
          kernels::conv1d_f32(options.exec, view<float>(arena, xo, xn),
                              g.f32_weights(n.inputs[1]), g.f32_weights(n.inputs[2]), s, relu,
                              view<float>(arena, yo, yn));
        }
        break;
      }
      case OpKind::kRelu:
        if (q8) {
          kernels::relu_i8(view<std::int8_t>(arena, xo, xn), y.quant->zero_point[0],
                           view<std::int8_t>(arena, yo, yn));
        } else {
          kernels::relu_f32(view<float>(arena, xo, xn), view<float>(arena, yo, yn));
        }
        break;
      case OpKind::kMaxPool1d: {
        const kernels::PoolShape s{x.shape[0], x.shape[1], n.attrs.pool, n.attrs.stride};
        if (q8) {
          kernels::maxpool1d_i8(options.exec, view<std::int8_t>(arena, xo, xn), s,
                                view<std::int8_t>(arena, yo, yn));
        } else {
          kernels::maxpool1d_f32(options.exec, view<float>(arena, xo, xn), s,
                                 view<float>(arena, yo, yn));
        }
        break;
      }
      case OpKind::kFlatten:
        std::memcpy(arena.data() + yo, arena.data() + xo, x.byte_size());
        break;
      case OpKind::kSoftmax:
      case OpKind::kKmeansDistance: {
        std::span<const float> fin;
        if (q8) {
          scratch.resize(xn);
          kernels::dequantize(view<std::int8_t>(arena, xo, xn), x.quant->scale[0],
                              x.quant->zero_point[0], scratch);
          fin = scratch;
        } else {
          fin = view<float>(arena, xo, xn);
        }
        if (n.kind == OpKind::kSoftmax) {
          kernels::softmax_f32(fin, view<float>(arena, yo, yn));
        } else {
          view<float>(arena, yo, 1)[0] =
              kernels::kmeans_distance_f32(fin, g.f32_weights(n.inputs[1]), n.attrs.k);
        }
        break;
      }
    }
    report(n.output);
  }

  const auto& out_t = g.tensor(g.output);
  std::vector<float> out(out_t.num_elements());
  if (out_t.dtype == DType::kI8) {
    kernels::dequantize(view<std::int8_t>(arena, plan_.offset(out_t.id), out.size()),
                        out_t.quant->scale[0], out_t.quant->zero_point[0], out);
  } else {
    const auto src = view<float>(arena, plan_.offset(out_t.id), out.size());
    std::copy(src.begin(), src.end(), out.begin());
  }
  return out;
}

std::vector<float> run_graph(const ir::ModelGraph& g, std::span<const float> input,
                             const RunOptions& options) {
  return Interpreter(g).run(input, options);
}

int predict_class(const Interpreter& interp, std::span<const float> input) {
  const auto out = interp.run(input);
  return static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
}

std::vector<TraceEntry> collect_trace(const Interpreter& interp, std::span<const float> input) {
  std::vector<TraceEntry> entries;
  RunOptions opts;
  opts.on_tensor = [&](int t, DType dtype, std::span<const std::byte> bytes) {
    entries.push_back({t, dtype, {bytes.begin(), bytes.end()}});
  };
  interp.run(input, opts);
  return entries;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 4 > b.size()) throw ParseError("unexpected end of file at byte " + std::to_string(at));
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint32_t dtype_code(DType t) {
  switch (t) {
    case DType::kF32: return 0;
    case DType::kI8: return 1;
    case DType::kI32: return 2;
  }
  return 0;
}

// The host is required to be little-endian for the raw copies below.
static_assert(std::endian::native == std::endian::little);

}  // namespace

std::vector<std::uint8_t> encode_trace(std::span<const TraceEntry> entries) {
  std::vector<std::uint8_t> out;
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.tensor));
    put_u32(out, dtype_code(e.dtype));
    put_u32(out, static_cast<std::uint32_t>(e.length()));
    for (std::byte b : e.bytes) out.push_back(static_cast<std::uint8_t>(b));
  }
  return out;
}

std::vector<TraceEntry> decode_trace(std::span<const std::uint8_t> bytes) {
  std::vector<TraceEntry> entries;
  std::size_t at = 0;
  while (at < bytes.size()) {
    TraceEntry e;
    e.tensor = static_cast<int>(get_u32(bytes, at));
    const std::uint32_t code = get_u32(bytes, at + 4);
    if (code > 2) throw ParseError("trace byte " + std::to_string(at + 4) + ": bad dtype code");
    e.dtype = code == 0 ? DType::kF32 : code == 1 ? DType::kI8 : DType::kI32;
    const std::size_t n = std::size_t{get_u32(bytes, at + 8)} * ir::dtype_size(e.dtype);
    at += 12;
    if (at + n > bytes.size()) throw ParseError("trace byte " + std::to_string(at) + ": truncated data");
    for (std::size_t i = 0; i < n; ++i) e.bytes.push_back(std::byte{bytes[at + i]});
    at += n;
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<std::uint8_t> encode_fvf(const FeatureVectors& fv) {
  std::vector<std::uint8_t> out;
  put_u32(out, static_cast<std::uint32_t>(fv.vectors.size()));
  put_u32(out, fv.len);
  for (const auto& v : fv.vectors) {
    if (v.size() != fv.len) throw Error("feature vector length mismatch");
    for (float x : v) put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  return out;
}

FeatureVectors decode_fvf(std::span<const std::uint8_t> bytes) {
  FeatureVectors fv;
  const std::uint32_t count = get_u32(bytes, 0);
  fv.len = get_u32(bytes, 4);
  const std::size_t want = 8 + std::size_t{4} * count * fv.len;
  if (bytes.size() != want) {
    throw ParseError("feature vector file has " + std::to_string(bytes.size()) +
                     " bytes, header implies " + std::to_string(want));
  }
  std::size_t at = 8;
  fv.vectors.resize(count);
  for (auto& v : fv.vectors) {
    v.resize(fv.len);
    for (auto& x : v) {
      x = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
  }
  return fv;
}

}  // namespace tinyforge::interp
