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

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tinyforge/common.hpp"

namespace tinyforge::ir {

// i32 only appears on quantized bias constants.
enum class DType { kF32, kI8, kI32 };
enum class Granularity { kPerTensor, kPerChannel };
enum class OpKind { kDense, kConv1d, kRelu, kSoftmax, kMaxPool1d, kFlatten, kKmeansDistance };
enum class Activation { kNone, kRelu };

inline constexpr int kNumOpKinds = 7;

std::string to_string(DType t);
std::string to_string(OpKind k);
std::string to_string(Activation a);
DType dtype_from_string(const std::string& s);
OpKind op_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);
std::size_t dtype_size(DType t);

/// Affine quantization, real = scale * (q - zero_point). Per-channel params
/// index the last axis of the tensor.
struct QuantParams {
  std::vector<float> scale;
  std::vector<std::int32_t> zero_point;
  Granularity granularity = Granularity::kPerTensor;

  static QuantParams per_tensor(float scale, std::int32_t zero_point) {
    return {{scale}, {zero_point}, Granularity::kPerTensor};
  }
  bool operator==(const QuantParams&) const = default;
};

struct TensorSpec {
  int id = -1;
  std::string name;
  std::vector<int> shape;  // empty until shape inference
  DType dtype = DType::kF32;
  std::optional<QuantParams> quant;

  std::size_t num_elements() const;
  std::size_t byte_size() const { return num_elements() * dtype_size(dtype); }
  bool operator==(const TensorSpec&) const = default;
};

struct OpAttrs {
  int units = 0;        // dense
  int filters = 0;      // conv1d
  int kernel_size = 0;  // conv1d
  int stride = 1;       // conv1d, maxpool1d
  int pool = 0;         // maxpool1d
  int k = 0;            // kmeans_distance
  bool operator==(const OpAttrs&) const = default;
};

/// inputs[0] is the activation; dense and conv1d take (weights, bias) as
/// inputs[1..2], kmeans_distance takes centroids as inputs[1].
struct OpNode {
  int id = -1;
  OpKind kind = OpKind::kDense;
  OpAttrs attrs;
  std::vector<int> inputs;
  int output = -1;
  Activation fused_activation = Activation::kNone;
  bool operator==(const OpNode&) const = default;
};

using Constant = std::variant<std::vector<float>, std::vector<std::int8_t>,
                              std::vector<std::int32_t>>;

std::size_t constant_size(const Constant& c);
DType constant_dtype(const Constant& c);

struct ModelGraph {
  std::vector<TensorSpec> tensors;  // tensors[i].id == i
  std::vector<OpNode> nodes;        // topological order
  std::map<int, Constant> weights;
  int input = -1;
  int output = -1;

  const TensorSpec& tensor(int id) const { return tensors.at(static_cast<std::size_t>(id)); }
  TensorSpec& tensor(int id) { return tensors.at(static_cast<std::size_t>(id)); }
  bool is_weight(int id) const { return weights.count(id) != 0; }
  const std::vector<float>& f32_weights(int id) const;
  const std::vector<std::int8_t>& i8_weights(int id) const;
  const std::vector<std::int32_t>& i32_weights(int id) const;

  /// "f32" when every activation tensor is float, "i8" otherwise.
  DType activation_dtype() const;
  std::size_t weight_bytes() const;
  std::vector<OpKind> used_kinds() const;

  bool operator==(const ModelGraph&) const = default;
};

/// Fills in activation shapes and checks every structural invariant: ids,
/// topological order, single producer per tensor, weights referenced once,
/// no dangling tensors, attribute ranges, shapes and quantization params.
/// Errors name the offending node.
ModelGraph shape_infer_validate(const ModelGraph& g);

/// Folds relu nodes into a directly preceding dense/conv1d whose output has
/// no other consumer. Tensor ids are compacted afterwards.
ModelGraph fuse_activations(const ModelGraph& g);

/// Incremental construction of float graphs; weights are laid out as
/// dense [in, units], conv1d [kernel, in_channels, filters],
/// kmeans centroids [k, dim].
class GraphBuilder {
 public:
  explicit GraphBuilder(std::vector<int> input_shape);

  int input() const { return input_; }
  int dense(int x, int units, std::vector<float> weights, std::vector<float> bias,
            Activation act = Activation::kNone);
  int conv1d(int x, int filters, int kernel_size, int stride,
             std::vector<float> weights, std::vector<float> bias,
             Activation act = Activation::kNone);
  int relu(int x);
  int softmax(int x);
  int maxpool1d(int x, int pool, int stride);
  int flatten(int x);
  int kmeans_distance(int x, int k, std::vector<float> centroids);

  /// Current inferred shape of an activation tensor.
  std::vector<int> shape(int x) const;

  /// Marks `out` as the graph output and validates.
  ModelGraph finish(int out);

 private:
  int add_tensor(std::vector<int> shape, const std::string& name);
  int add_node(OpKind kind, OpAttrs attrs, std::vector<int> inputs,
               Activation act);

  ModelGraph g_;
  int input_ = -1;
};

// Model file: JSON envelope with base64 little-endian weight blobs and a
// CRC32 over the canonical body.
inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const ModelGraph& g);
/// Any input either yields a validated graph or throws a tinyforge::Error.
ModelGraph deserialize_model(std::string_view text);
void save_model(const ModelGraph& g, const std::string& path);
ModelGraph load_model(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace tinyforge::ir
