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

#include "tinyforge/ir.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace tinyforge::ir {

std::string to_string(DType t) {
  switch (t) {
    case DType::kF32: return "f32";
    case DType::kI8: return "i8";
    case DType::kI32: return "i32";
  }
  return "?";
}

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::kDense: return "dense";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kMaxPool1d: return "maxpool1d";
    case OpKind::kFlatten: return "flatten";
    case OpKind::kKmeansDistance: return "kmeans_distance";
  }
  return "?";
}

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "none"; }

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::kF32;
  if (s == "i8") return DType::kI8;
  if (s == "i32") return DType::kI32;
  throw ValidationError("unknown dtype '" + s + "'");
}

OpKind op_kind_from_string(const std::string& s) {
  for (int i = 0; i < kNumOpKinds; ++i) {
    if (to_string(static_cast<OpKind>(i)) == s) return static_cast<OpKind>(i);
  }
  throw ValidationError("unknown op kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu") return Activation::kRelu;
  throw ValidationError("unknown activation '" + s + "'");
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kI8: return 1;
    case DType::kI32: return 4;
  }
  return 0;
}

std::size_t TensorSpec::num_elements() const {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(std::max(d, 0));
  return n;
}

std::size_t constant_size(const Constant& c) {
  return std::visit([](const auto& v) { return v.size(); }, c);
}

DType constant_dtype(const Constant& c) {
  if (std::holds_alternative<std::vector<float>>(c)) return DType::kF32;
  if (std::holds_alternative<std::vector<std::int8_t>>(c)) return DType::kI8;
  return DType::kI32;
}

const std::vector<float>& ModelGraph::f32_weights(int id) const {
  return std::get<std::vector<float>>(weights.at(id));
}
const std::vector<std::int8_t>& ModelGraph::i8_weights(int id) const {
  return std::get<std::vector<std::int8_t>>(weights.at(id));
}
const std::vector<std::int32_t>& ModelGraph::i32_weights(int id) const {
  return std::get<std::vector<std::int32_t>>(weights.at(id));
}

DType ModelGraph::activation_dtype() const {
  for (const auto& t : tensors) {
    if (!is_weight(t.id) && t.dtype == DType::kI8) return DType::kI8;
  }
  return DType::kF32;
}

std::size_t ModelGraph::weight_bytes() const {
  std::size_t total = 0;
  for (const auto& [id, c] : weights) total += constant_size(c) * dtype_size(constant_dtype(c));
  return total;
}

std::vector<OpKind> ModelGraph::used_kinds() const {
  std::set<OpKind> kinds;
  for (const auto& n : nodes) {
    kinds.insert(n.kind);
    if (n.fused_activation == Activation::kRelu) kinds.insert(OpKind::kRelu);
  }
  return {kinds.begin(), kinds.end()};
}

namespace {

[[noreturn]] void node_error(const OpNode& n, const std::string& what) {
  throw ValidationError("node " + std::to_string(n.id) + " (" + to_string(n.kind) +
                        "): " + what);
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void expect_shape(const OpNode& n, const TensorSpec& t, const std::vector<int>& want,
                  const char* role) {
  if (t.shape != want) {
    node_error(n, std::string(role) + " tensor " + std::to_string(t.id) + " has shape " +
                      shape_str(t.shape) + ", expected " + shape_str(want));
  }
}

void check_quant(const TensorSpec& t, std::size_t channels) {
  if (t.dtype == DType::kF32) return;
  if (!t.quant) {
    throw ValidationError("tensor " + std::to_string(t.id) + " is " + to_string(t.dtype) +
                          " but carries no quantization params");
  }
  const auto& q = *t.quant;
  const std::size_t want = q.granularity == Granularity::kPerTensor ? 1 : channels;
  if (q.scale.size() != want || q.zero_point.size() != want) {
    throw ValidationError("tensor " + std::to_string(t.id) +
                          ": quantization param count does not match channels");
  }
  for (std::size_t i = 0; i < want; ++i) {
    if (!(q.scale[i] > 0.0f) || !std::isfinite(q.scale[i])) {
      throw ValidationError("tensor " + std::to_string(t.id) + ": scale must be > 0");
    }
    if (q.zero_point[i] < -128 || q.zero_point[i] > 127) {
      throw ValidationError("tensor " + std::to_string(t.id) + ": zero point out of int8 range");
    }
    if (q.granularity == Granularity::kPerChannel && q.zero_point[i] != 0 &&
        t.dtype == DType::kI8) {
      throw ValidationError("tensor " + std::to_string(t.id) +
                            ": per-channel weights must have zero point 0");
    }
  }
}

}  // namespace

ModelGraph shape_infer_validate(const ModelGraph& in) {
  ModelGraph g = in;
  const int num_tensors = static_cast<int>(g.tensors.size());
  auto valid_id = [&](int id) { return id >= 0 && id < num_tensors; };
  for (int i = 0; i < num_tensors; ++i) {
    if (g.tensors[static_cast<std::size_t>(i)].id != i) {
      throw ValidationError("tensor at index " + std::to_string(i) + " has id " +
                            std::to_string(g.tensors[static_cast<std::size_t>(i)].id));
    }
  }
  if (!valid_id(g.input)) throw ValidationError("graph input tensor does not exist");
  if (!valid_id(g.output)) throw ValidationError("graph output tensor does not exist");
  if (g.is_weight(g.input)) throw ValidationError("graph input cannot be a weight");
  if (g.nodes.empty()) throw ValidationError("graph has no nodes");

  for (const auto& [id, c] : g.weights) {
    if (!valid_id(id)) throw ValidationError("weight for unknown tensor " + std::to_string(id));
    const auto& t = g.tensor(id);
    if (t.shape.empty()) throw ValidationError("weight tensor " + std::to_string(id) + " has no shape");
    for (int d : t.shape) {
      if (d < 1) throw ValidationError("weight tensor " + std::to_string(id) + " has a non-positive dim");
    }
    if (constant_dtype(c) != t.dtype) {
      throw ValidationError("weight tensor " + std::to_string(id) + " dtype mismatch");
    }
    if (constant_size(c) != t.num_elements()) {
      throw ValidationError("weight tensor " + std::to_string(id) + " holds " +
                            std::to_string(constant_size(c)) + " values, shape needs " +
                            std::to_string(t.num_elements()));
    }
  }

  const auto& in_t = g.tensor(g.input);
  if (in_t.shape.empty()) throw ValidationError("graph input has no shape");
  for (int d : in_t.shape) {
    if (d < 1) throw ValidationError("graph input has a non-positive dim");
  }
  if (in_t.shape.size() > 2) throw ValidationError("graph input must be rank 1 or 2");
  check_quant(in_t, 1);

  std::vector<int> produced_by(static_cast<std::size_t>(num_tensors), -1);
  std::vector<int> weight_uses(static_cast<std::size_t>(num_tensors), 0);
  std::vector<int> consumers(static_cast<std::size_t>(num_tensors), 0);
  std::vector<char> available(static_cast<std::size_t>(num_tensors), 0);
  available[static_cast<std::size_t>(g.input)] = 1;

  for (std::size_t ni = 0; ni < g.nodes.size(); ++ni) {
    auto& n = g.nodes[ni];
    if (n.id != static_cast<int>(ni)) {
      throw ValidationError("node at position " + std::to_string(ni) + " has id " +
                            std::to_string(n.id));
    }
    std::size_t want_inputs = 1;
    if (n.kind == OpKind::kDense || n.kind == OpKind::kConv1d) want_inputs = 3;
    if (n.kind == OpKind::kKmeansDistance) want_inputs = 2;
    if (n.inputs.size() != want_inputs) {
      node_error(n, "expects " + std::to_string(want_inputs) + " inputs, got " +
                        std::to_string(n.inputs.size()));
    }
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const int t = n.inputs[i];
      if (!valid_id(t)) node_error(n, "input tensor " + std::to_string(t) + " does not exist");
      const bool wants_weight = i > 0;
      if (wants_weight != g.is_weight(t)) {
        node_error(n, "input " + std::to_string(i) + " (tensor " + std::to_string(t) + ") " +
                          (wants_weight ? "must be a weight" : "cannot be a weight"));
      }
      if (wants_weight) {
        weight_uses[static_cast<std::size_t>(t)]++;
      } else {
        if (!available[static_cast<std::size_t>(t)]) {
          node_error(n, "input tensor " + std::to_string(t) +
                            " is not produced earlier (cycle or bad order)");
        }
        consumers[static_cast<std::size_t>(t)]++;
      }
    }
    if (!valid_id(n.output)) node_error(n, "output tensor does not exist");
    if (g.is_weight(n.output) || n.output == g.input ||
        produced_by[static_cast<std::size_t>(n.output)] >= 0) {
      node_error(n, "output tensor " + std::to_string(n.output) + " already defined");
    }
    produced_by[static_cast<std::size_t>(n.output)] = n.id;
    available[static_cast<std::size_t>(n.output)] = 1;
    if (n.fused_activation != Activation::kNone && n.kind != OpKind::kDense &&
        n.kind != OpKind::kConv1d) {
      node_error(n, "only dense and conv1d can carry a fused activation");
    }

    const auto& x = g.tensor(n.inputs[0]);
    auto& out = g.tensor(n.output);
    std::vector<int> out_shape;
    switch (n.kind) {
      case OpKind::kDense: {
        if (n.attrs.units < 1) node_error(n, "units must be >= 1");
        if (x.shape.size() != 1) node_error(n, "input must be rank 1, got " + shape_str(x.shape));
        expect_shape(n, g.tensor(n.inputs[1]), {x.shape[0], n.attrs.units}, "weight");
        expect_shape(n, g.tensor(n.inputs[2]), {n.attrs.units}, "bias");
        out_shape = {n.attrs.units};
        break;
      }
      case OpKind::kConv1d: {
        const auto& a = n.attrs;
        if (a.filters < 1 || a.kernel_size < 1 || a.stride < 1) {
          node_error(n, "filters, kernel_size and stride must be >= 1");
        }
        if (x.shape.size() != 2) node_error(n, "input must be [len, channels]");
        if (x.shape[0] < a.kernel_size) node_error(n, "input length shorter than kernel");
        expect_shape(n, g.tensor(n.inputs[1]), {a.kernel_size, x.shape[1], a.filters}, "weight");
        expect_shape(n, g.tensor(n.inputs[2]), {a.filters}, "bias");
        out_shape = {(x.shape[0] - a.kernel_size) / a.stride + 1, a.filters};
        break;
      }
      case OpKind::kRelu:
        out_shape = x.shape;
        break;
      case OpKind::kSoftmax:
        if (x.shape.size() != 1) node_error(n, "input must be rank 1");
        out_shape = x.shape;
        break;
      case OpKind::kMaxPool1d: {
        const auto& a = n.attrs;
        if (a.pool < 1 || a.stride < 1) node_error(n, "pool and stride must be >= 1");
        if (x.shape.size() != 2) node_error(n, "input must be [len, channels]");
        if (x.shape[0] < a.pool) node_error(n, "input length shorter than pool");
        out_shape = {(x.shape[0] - a.pool) / a.stride + 1, x.shape[1]};
        break;
      }
      case OpKind::kFlatten:
        out_shape = {static_cast<int>(x.num_elements())};
        break;
      case OpKind::kKmeansDistance: {
        if (n.attrs.k < 1) node_error(n, "k must be >= 1");
        if (x.shape.size() != 1) node_error(n, "input must be rank 1");
        expect_shape(n, g.tensor(n.inputs[1]), {n.attrs.k, x.shape[0]}, "centroid");
        out_shape = {1};
        break;
      }
    }
    if (!out.shape.empty() && out.shape != out_shape) {
      node_error(n, "declared output shape " + shape_str(out.shape) + " but inferred " +
                        shape_str(out_shape));
    }
    out.shape = out_shape;

    // Quantization consistency.
    check_quant(out, 1);
    if (n.kind == OpKind::kDense || n.kind == OpKind::kConv1d) {
      const auto& w = g.tensor(n.inputs[1]);
      const auto& b = g.tensor(n.inputs[2]);
      const auto channels = static_cast<std::size_t>(w.shape.back());
      if (x.dtype == DType::kI8) {
        if (w.dtype != DType::kI8 || b.dtype != DType::kI32 || out.dtype != DType::kI8) {
          node_error(n, "int8 layers need i8 weights, i32 bias and i8 output");
        }
        check_quant(w, channels);
      } else if (w.dtype != DType::kF32 || b.dtype != DType::kF32 || out.dtype != DType::kF32) {
        node_error(n, "float layers need f32 weights, bias and output");
      }
    } else if (n.kind == OpKind::kSoftmax || n.kind == OpKind::kKmeansDistance) {
      if (out.dtype != DType::kF32) node_error(n, "output must be f32");
      if (n.kind == OpKind::kKmeansDistance && g.tensor(n.inputs[1]).dtype != DType::kF32) {
        node_error(n, "centroids must be f32");
      }
    } else if (out.dtype != x.dtype) {
      node_error(n, "output dtype must match input dtype");
    }
  }

  for (int t = 0; t < num_tensors; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    if (g.is_weight(t)) {
      if (weight_uses[ut] != 1) {
        throw ValidationError("weight tensor " + std::to_string(t) + " referenced " +
                              std::to_string(weight_uses[ut]) + " times (expected once)");
      }
      continue;
    }
    if (t != g.input && produced_by[ut] < 0) {
      throw ValidationError("tensor " + std::to_string(t) + " is never produced");
    }
    if (t != g.output && consumers[ut] == 0) {
      throw ValidationError("tensor " + std::to_string(t) + " is dangling (never consumed)");
    }
  }
  if (produced_by[static_cast<std::size_t>(g.output)] < 0) {
    throw ValidationError("graph output is not produced by any node");
  }
  if (consumers[static_cast<std::size_t>(g.output)] != 0) {
    throw ValidationError("graph output is consumed by another node");
  }
  return g;
}

namespace {

/// Drops unreferenced tensors and renumbers the rest in their current order.
ModelGraph compact(const ModelGraph& g) {
  std::vector<char> used(g.tensors.size(), 0);
  used[static_cast<std::size_t>(g.input)] = 1;
  for (const auto& n : g.nodes) {
    for (int t : n.inputs) used[static_cast<std::size_t>(t)] = 1;
    used[static_cast<std::size_t>(n.output)] = 1;
  }
  std::vector<int> remap(g.tensors.size(), -1);
  ModelGraph out;
  for (const auto& t : g.tensors) {
    if (!used[static_cast<std::size_t>(t.id)]) continue;
    remap[static_cast<std::size_t>(t.id)] = static_cast<int>(out.tensors.size());
    TensorSpec copy = t;
    copy.id = static_cast<int>(out.tensors.size());
    out.tensors.push_back(std::move(copy));
  }
  auto r = [&](int t) { return remap[static_cast<std::size_t>(t)]; };
  for (auto n : g.nodes) {
    for (int& t : n.inputs) t = r(t);
    n.output = r(n.output);
    n.id = static_cast<int>(out.nodes.size());
    out.nodes.push_back(std::move(n));
  }
  for (const auto& [id, c] : g.weights) {
    if (r(id) >= 0) out.weights.emplace(r(id), c);
  }
  out.input = r(g.input);
  out.output = r(g.output);
  return out;
}

}  // namespace

ModelGraph fuse_activations(const ModelGraph& in) {
  ModelGraph g = in;
  std::vector<int> consumer_count(g.tensors.size(), 0);
  std::vector<int> producer(g.tensors.size(), -1);
  for (const auto& n : g.nodes) {
    for (int t : n.inputs) consumer_count[static_cast<std::size_t>(t)]++;
    producer[static_cast<std::size_t>(n.output)] = n.id;
  }
  std::vector<char> drop(g.nodes.size(), 0);
  bool changed = false;
  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::kRelu) continue;
    const int x = n.inputs[0];
    const int p = producer[static_cast<std::size_t>(x)];
    if (p < 0 || consumer_count[static_cast<std::size_t>(x)] != 1 || x == g.output) continue;
    auto& prod = g.nodes[static_cast<std::size_t>(p)];
    if ((prod.kind != OpKind::kDense && prod.kind != OpKind::kConv1d) ||
        prod.fused_activation != Activation::kNone) {
      continue;
    }
    prod.fused_activation = Activation::kRelu;
    prod.output = n.output;
    drop[static_cast<std::size_t>(n.id)] = 1;
    changed = true;
  }
  if (!changed) return in;
  std::vector<OpNode> kept;
  for (const auto& n : g.nodes) {
    if (!drop[static_cast<std::size_t>(n.id)]) kept.push_back(n);
  }
  g.nodes = std::move(kept);
  return shape_infer_validate(compact(g));
}

GraphBuilder::GraphBuilder(std::vector<int> input_shape) {
  input_ = add_tensor(std::move(input_shape), "input");
  g_.input = input_;
}

int GraphBuilder::add_tensor(std::vector<int> shape, const std::string& name) {
  TensorSpec t;
  t.id = static_cast<int>(g_.tensors.size());
  t.name = name;
  t.shape = std::move(shape);
  g_.tensors.push_back(std::move(t));
  return g_.tensors.back().id;
}

int GraphBuilder::add_node(OpKind kind, OpAttrs attrs, std::vector<int> inputs,
                           Activation act) {
  OpNode n;
  n.id = static_cast<int>(g_.nodes.size());
  n.kind = kind;
  n.attrs = attrs;
  n.inputs = std::move(inputs);
  n.fused_activation = act;
  n.output = add_tensor({}, to_string(kind) + "_" + std::to_string(n.id));
  g_.nodes.push_back(n);
  // Infer eagerly so shape() works mid-build; finish() validates again.
  TensorSpec& out = g_.tensors.back();
  const auto& x = g_.tensor(g_.nodes.back().inputs[0]);
  switch (kind) {
    case OpKind::kDense: out.shape = {attrs.units}; break;
    case OpKind::kConv1d:
      out.shape = {(x.shape.at(0) - attrs.kernel_size) / attrs.stride + 1, attrs.filters};
      break;
    case OpKind::kMaxPool1d:
      out.shape = {(x.shape.at(0) - attrs.pool) / attrs.stride + 1, x.shape.at(1)};
      break;
    case OpKind::kFlatten: out.shape = {static_cast<int>(x.num_elements())}; break;
    case OpKind::kKmeansDistance: out.shape = {1}; break;
    default: out.shape = x.shape; break;
  }
  return n.output;
}

int GraphBuilder::dense(int x, int units, std::vector<float> weights,
                        std::vector<float> bias, Activation act) {
  const int in = g_.tensor(x).shape.at(0);
  const int w = add_tensor({in, units}, "dense_w");
  const int b = add_tensor({units}, "dense_b");
  g_.weights[w] = std::move(weights);
  g_.weights[b] = std::move(bias);
  OpAttrs a;
  a.units = units;
  return add_node(OpKind::kDense, a, {x, w, b}, act);
}

int GraphBuilder::conv1d(int x, int filters, int kernel_size, int stride,
                         std::vector<float> weights, std::vector<float> bias,
                         Activation act) {
  const int ch = g_.tensor(x).shape.at(1);
  const int w = add_tensor({kernel_size, ch, filters}, "conv1d_w");
  const int b = add_tensor({filters}, "conv1d_b");
  g_.weights[w] = std::move(weights);
  g_.weights[b] = std::move(bias);
  OpAttrs a;
  a.filters = filters;
  a.kernel_size = kernel_size;
  a.stride = stride;
  return add_node(OpKind::kConv1d, a, {x, w, b}, act);
}

int GraphBuilder::relu(int x) { return add_node(OpKind::kRelu, {}, {x}, Activation::kNone); }
int GraphBuilder::softmax(int x) { return add_node(OpKind::kSoftmax, {}, {x}, Activation::kNone); }
int GraphBuilder::flatten(int x) { return add_node(OpKind::kFlatten, {}, {x}, Activation::kNone); }

int GraphBuilder::maxpool1d(int x, int pool, int stride) {
  OpAttrs a;
  a.pool = pool;
  a.stride = stride;
  return add_node(OpKind::kMaxPool1d, a, {x}, Activation::kNone);
}

int GraphBuilder::kmeans_distance(int x, int k, std::vector<float> centroids) {
  const int dim = g_.tensor(x).shape.at(0);
  const int c = add_tensor({k, dim}, "centroids");
  g_.weights[c] = std::move(centroids);
  OpAttrs a;
  a.k = k;
  return add_node(OpKind::kKmeansDistance, a, {x, c}, Activation::kNone);
}

std::vector<int> GraphBuilder::shape(int x) const { return g_.tensor(x).shape; }

ModelGraph GraphBuilder::finish(int out) {
  g_.output = out;
  return shape_infer_validate(g_);
}

}  // namespace tinyforge::ir
