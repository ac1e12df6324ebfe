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

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "tinyforge/arena.hpp"
#include "tinyforge/ir.hpp"
#include "tinyforge/kernels.hpp"

namespace tinyforge::interp {

struct RunOptions {
  kernels::Exec exec = kernels::Exec::kParallel;
  // Byte written over the whole arena before execution.
  std::uint8_t arena_fill = 0;
  // Called after each activation tensor is written (the input included),
  // with its raw bytes.
  std::function<void(int tensor, ir::DType dtype, std::span<const std::byte> bytes)> on_tensor;
  // Called before each node executes, with the whole arena.
  std::function<void(const ir::OpNode& node, std::span<const std::byte> arena)> on_node_begin;
};

/// Reference interpreter. Activations live in one arena laid out by
/// plan_arena, exactly as in generated code. Float input is quantized with
/// the input tensor's params for int8 graphs; softmax, kmeans distance and
/// the returned output are always float.
class Interpreter {
 public:
  explicit Interpreter(ir::ModelGraph graph);

  const ir::ModelGraph& graph() const { return graph_; }
  const ArenaPlan& plan() const { return plan_; }
  std::size_t input_size() const;
  std::size_t output_size() const;

  std::vector<float> run(std::span<const float> input, const RunOptions& options = {}) const;

 private:
  struct LayerQuant {
    std::vector<float> multipliers;
  };

  ir::ModelGraph graph_;
  ArenaPlan plan_;
  std::vector<LayerQuant> layer_quant_;  // indexed by node id
};

std::vector<float> run_graph(const ir::ModelGraph& g, std::span<const float> input,
                             const RunOptions& options = {});

/// argmax over the output of each row.
int predict_class(const Interpreter& interp, std::span<const float> input);

// Trace dump: per tensor a little-endian header {u32 tensor_id, u32 dtype,
// u32 len} followed by len elements (dtype codes: 0 f32, 1 i8, 2 i32).
struct TraceEntry {
  int tensor = -1;
  ir::DType dtype = ir::DType::kF32;
  std::vector<std::byte> bytes;

  std::size_t length() const { return bytes.size() / ir::dtype_size(dtype); }
  bool operator==(const TraceEntry&) const = default;
};

std::vector<TraceEntry> collect_trace(const Interpreter& interp, std::span<const float> input);
std::vector<std::uint8_t> encode_trace(std::span<const TraceEntry> entries);
std::vector<TraceEntry> decode_trace(std::span<const std::uint8_t> bytes);

// Feature vector file: u32 count, u32 len, then count*len float32, all
// little-endian.
struct FeatureVectors {
  std::uint32_t len = 0;
  std::vector<std::vector<float>> vectors;
};

std::vector<std::uint8_t> encode_fvf(const FeatureVectors& fv);
FeatureVectors decode_fvf(std::span<const std::uint8_t> bytes);

}  // namespace tinyforge::interp
