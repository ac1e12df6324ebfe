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

#include "tinyforge/codegen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include "tinyforge/kernels.hpp"
#include "tinyforge/project.hpp"

namespace tinyforge::codegen {

using ir::DType;
using ir::OpKind;

bool is_c_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

void CodegenOptions::validate() const {
  if (!is_c_identifier(symbol_prefix)) {
    throw ValidationError("symbol prefix '" + symbol_prefix + "' is not a C identifier");
  }
}

namespace {

std::string hex_float(float v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", static_cast<double>(v));
  return std::string(buf) + "f";
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

int dtype_code(DType t) { return t == DType::kF32 ? 0 : t == DType::kI8 ? 1 : 2; }

const char* ctype(DType t) {
  switch (t) {
    case DType::kF32: return "float";
    case DType::kI8: return "int8_t";
    case DType::kI32: return "int32_t";
  }
  return "float";
}

// Kernel routine a node needs, keyed by op kind and the dtype of its input.
std::string kernel_for(const ir::ModelGraph& g, const ir::OpNode& n) {
  const bool q8 = g.tensor(n.inputs[0]).dtype == DType::kI8;
  const std::string sfx = q8 ? "_i8" : "_f32";
  switch (n.kind) {
    case OpKind::kDense: return "dense" + sfx;
    case OpKind::kConv1d: return "conv1d" + sfx;
    case OpKind::kRelu: return "relu" + sfx;
    case OpKind::kMaxPool1d: return "maxpool1d" + sfx;
    case OpKind::kSoftmax: return "softmax" + sfx;
    case OpKind::kKmeansDistance: return "kmeans_distance" + sfx;
    case OpKind::kFlatten: return "flatten";
  }
  throw Error("code generation does not support op kind " +
              std::to_string(static_cast<int>(n.kind)) + " (node " + std::to_string(n.id) + ")");
}

const char* kRequantize = R"(static int8_t requantize(int32_t acc, float m, int32_t zp) {
  float r = roundf((float)acc * m) + (float)zp;
  if (r < -128.0f) r = -128.0f;
  if (r > 127.0f) r = 127.0f;
  return (int8_t)r;
}
)";

const char* kQuantizeInput = R"(static void quantize_input(const float *x, int n, float s, int32_t zp, int8_t *y) {
  int i;
  for (i = 0; i < n; ++i) {
    float r = roundf(x[i] / s) + (float)zp;
    if (r < -128.0f) r = -128.0f;
    if (r > 127.0f) r = 127.0f;
    y[i] = (int8_t)r;
  }
}
)";

const char* kDequantize = R"(static float dequant(int8_t q, float s, int32_t zp) {
  return (float)((int32_t)q - zp) * s;
}
)";

const char* kCopyFloats = R"(static void copy_f32(const float *x, int n, float *y) {
  int i;
  for (i = 0; i < n; ++i) y[i] = x[i];
}
)";

const char* kDequantizeOutput = R"(static void dequantize_output(const int8_t *x, int n, float s, int32_t zp, float *y) {
  int i;
  for (i = 0; i < n; ++i) y[i] = dequant(x[i], s, zp);
}
)";

std::string kernel_text(const std::string& name) {
  if (name == "dense_f32") {
    return R"(static void dense_f32(const float *x, const float *w, const float *b,
                      int n_in, int units, int relu, float *y) {
  int u, i;
  for (u = 0; u < units; ++u) {
    float acc = b[u];
    for (i = 0; i < n_in; ++i) acc += x[i] * w[i * units + u];
    if (relu && acc < 0.0f) acc = 0.0f;
    y[u] = acc;
  }
}
)";
  }
  if (name == "dense_i8") {
    return R"(static void dense_i8(const int8_t *x, const int8_t *w, const int32_t *b,
                     int n_in, int units, int32_t in_zp, const float *mult,
                     int32_t out_zp, int relu, int8_t *y) {
  int u, i;
  for (u = 0; u < units; ++u) {
    int32_t acc = b[u];
    int8_t r;
    for (i = 0; i < n_in; ++i) acc += ((int32_t)x[i] - in_zp) * (int32_t)w[i * units + u];
    r = requantize(acc, mult[u], out_zp);
    if (relu && r < out_zp) r = (int8_t)out_zp;
    y[u] = r;
  }
}
)";
  }
  if (name == "conv1d_f32") {
    return R"(static void conv1d_f32(const float *in, const float *w, const float *b,
                       int out_len, int in_ch, int filters, int kernel, int stride,
                       int relu, float *y) {
  int t, f, k, c;
  for (t = 0; t < out_len; ++t) {
    const float *x = in + t * stride * in_ch;
    for (f = 0; f < filters; ++f) {
      float acc = b[f];
      for (k = 0; k < kernel; ++k) {
        for (c = 0; c < in_ch; ++c) acc += x[k * in_ch + c] * w[(k * in_ch + c) * filters + f];
      }
      if (relu && acc < 0.0f) acc = 0.0f;
      y[t * filters + f] = acc;
    }
  }
}
)";
  }
  if (name == "conv1d_i8") {
    return R"(static void conv1d_i8(const int8_t *in, const int8_t *w, const int32_t *b,
                      int out_len, int in_ch, int filters, int kernel, int stride,
                      int32_t in_zp, const float *mult, int32_t out_zp, int relu,
                      int8_t *y) {
  int t, f, k, c;
  for (t = 0; t < out_len; ++t) {
    const int8_t *x = in + t * stride * in_ch;
    for (f = 0; f < filters; ++f) {
      int32_t acc = b[f];
      int8_t r;
      for (k = 0; k < kernel; ++k) {
        for (c = 0; c < in_ch; ++c) {
          acc += ((int32_t)x[k * in_ch + c] - in_zp) * (int32_t)w[(k * in_ch + c) * filters + f];
        }
      }
      r = requantize(acc, mult[f], out_zp);
      if (relu && r < out_zp) r = (int8_t)out_zp;
      y[t * filters + f] = r;
    }
  }
}
)";
  }
  if (name == "relu_f32") {
    return R"(static void relu_f32(const float *x, int n, float *y) {
  int i;
  for (i = 0; i < n; ++i) y[i] = x[i] < 0.0f ? 0.0f : x[i];
}
)";
  }
  if (name == "relu_i8") {
    return R"(static void relu_i8(const int8_t *x, int n, int32_t zp, int8_t *y) {
  int i;
  const int8_t z = (int8_t)zp;
  for (i = 0; i < n; ++i) {
    int8_t v = x[i];
    if (v < z) v = z;
    y[i] = v;
  }
}
)";
  }
  if (name == "maxpool1d_f32" || name == "maxpool1d_i8") {
    const std::string t = name == "maxpool1d_f32" ? "float" : "int8_t";
    return "static void " + name + "(const " + t + " *x, int out_len, int ch, int pool,\n"
           "                          int stride, " + t + " *y) {\n"
           "  int o, c, p;\n"
           "  for (o = 0; o < out_len; ++o) {\n"
           "    for (c = 0; c < ch; ++c) {\n"
           "      " + t + " m = x[(o * stride) * ch + c];\n"
           "      for (p = 1; p < pool; ++p) {\n"
           "        " + t + " v = x[(o * stride + p) * ch + c];\n"
           "        if (m < v) m = v;\n"
           "      }\n"
           "      y[o * ch + c] = m;\n"
           "    }\n"
           "  }\n"
           "}\n";
  }
  if (name == "softmax_f32") {
    return R"(static void softmax_f32(const float *x, int n, float *y) {
  int i;
  float m = x[0], sum = 0.0f;
  for (i = 1; i < n; ++i) if (m < x[i]) m = x[i];
  for (i = 0; i < n; ++i) {
    y[i] = expf(x[i] - m);
    sum += y[i];
  }
  for (i = 0; i < n; ++i) y[i] = y[i] / sum;
}
)";
  }
  if (name == "softmax_i8") {
    return R"(static void softmax_i8(const int8_t *x, int n, float s, int32_t zp, float *y) {
  int i;
  float m = dequant(x[0], s, zp), sum = 0.0f;
  for (i = 1; i < n; ++i) {
    float v = dequant(x[i], s, zp);
    if (m < v) m = v;
  }
  for (i = 0; i < n; ++i) {
    y[i] = expf(dequant(x[i], s, zp) - m);
    sum += y[i];
  }
  for (i = 0; i < n; ++i) y[i] = y[i] / sum;
}
)";
  }
  if (name == "kmeans_distance_f32" || name == "kmeans_distance_i8") {
    const bool q8 = name == "kmeans_distance_i8";
    const std::string in_t = q8 ? "int8_t" : "float";
    const std::string params = q8 ? ", float s, int32_t zp" : "";
    const std::string load = q8 ? "dequant(x[i], s, zp)" : "x[i]";
    return "static void " + name + "(const " + in_t + " *x, int dim, const float *c, int k" +
           params + ", float *y) {\n"
           "  int j, i;\n"
           "  float best = INFINITY;\n"
           "  for (j = 0; j < k; ++j) {\n"
           "    float d2 = 0.0f;\n"
           "    for (i = 0; i < dim; ++i) {\n"
           "      float d = " + load + " - c[j * dim + i];\n"
           "      d2 += d * d;\n"
           "    }\n"
           "    if (d2 < best) best = d2;\n"
           "  }\n"
           "  y[0] = sqrtf(best);\n"
           "}\n";
  }
  if (name == "flatten") {
    return R"(static void flatten(const uint8_t *x, int bytes, uint8_t *y) {
  int i;
  for (i = 0; i < bytes; ++i) y[i] = x[i];
}
)";
  }
  throw Error("no kernel text for " + name);
}

template <typename T>
void emit_array(std::ostringstream& os, const char* type, const std::string& name,
                const std::vector<T>& v) {
  os << "static const " << type << " " << name << "[" << std::max<std::size_t>(v.size(), 1)
     << "] = {";
  if (v.empty()) os << "0";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i % 12 == 0) os << "\n  ";
    if constexpr (std::is_same_v<T, float>) {
      os << hex_float(v[i]);
    } else {
      os << static_cast<long>(v[i]);
    }
    if (i + 1 < v.size()) os << ", ";
  }
  os << "\n};\n";
}

std::string arena_ptr(const interp::ArenaPlan& plan, int tensor, DType t, bool is_const) {
  std::ostringstream os;
  os << "(" << (is_const ? "const " : "") << ctype(t) << " *)(arena.bytes + " << plan.offset(tensor)
     << ")";
  return os.str();
}

}  // namespace

std::vector<std::string> kernel_names(const ir::ModelGraph& g) {
  std::set<std::string> names;
  for (const auto& n : g.nodes) names.insert(kernel_for(g, n));
  return {names.begin(), names.end()};
}

GeneratedSource emit_c(const ir::ModelGraph& in, const interp::ArenaPlan& plan,
                       const CodegenOptions& opts) {
  opts.validate();
  const ir::ModelGraph g = ir::shape_infer_validate(in);
  for (const auto& t : g.tensors) {
    if (g.is_weight(t.id)) continue;
    if (!plan.offsets.count(t.id)) {
      throw ValidationError("arena plan has no offset for tensor " + std::to_string(t.id));
    }
    if (plan.offset(t.id) + t.byte_size() > plan.peak_bytes) {
      throw ValidationError("arena plan places tensor " + std::to_string(t.id) +
                            " beyond peak_bytes");
    }
  }
  const auto kernels = kernel_names(g);  // throws on unsupported kinds
  const std::string p = opts.symbol_prefix;
  const std::string P = upper(p);
  const auto& in_t = g.tensor(g.input);
  const auto& out_t = g.tensor(g.output);
  const std::size_t in_len = in_t.num_elements(), out_len = out_t.num_elements();

  GeneratedSource src;
  src.header_name = p + ".h";
  src.source_name = p + ".c";

  std::ostringstream h;
  h << "/* Generated by tinyforge. Do not edit.\n"
    << " *\n"
    << " * ABI:\n"
    << " *   void " << p << "_init(void);\n"
    << " *       Clears the arena. Call once before the first invoke.\n"
    << " *   float *" << p << "_input(void);\n"
    << " *       Buffer of " << P << "_INPUT_LEN floats; fill it before invoking.\n"
    << " *   const float *" << p << "_invoke(size_t *out_len);\n"
    << " *       Runs the model; returns " << P << "_OUTPUT_LEN floats and stores\n"
    << " *       that length in *out_len when out_len is not NULL.\n"
    << " * All state is static: one caller at a time.\n"
    << " */\n"
    << "#ifndef " << P << "_MODEL_H\n"
    << "#define " << P << "_MODEL_H\n\n"
    << "#include <stddef.h>\n\n"
    << "#define " << P << "_INPUT_LEN " << in_len << "\n"
    << "#define " << P << "_OUTPUT_LEN " << out_len << "\n"
    << "#define " << P << "_ARENA_BYTES " << plan.peak_bytes << "\n\n"
    << "#ifdef __cplusplus\nextern \"C\" {\n#endif\n\n"
    << "void " << p << "_init(void);\n"
    << "float *" << p << "_input(void);\n"
    << "const float *" << p << "_invoke(size_t *out_len);\n";
  if (opts.emit_trace_hooks) {
    h << "\n/* Called after each activation tensor is written; dtype 0 = float,\n"
      << " * 1 = int8. Pass NULL to disable. */\n"
      << "typedef void (*" << p << "_trace_fn)(int tensor_id, int dtype, const void *data,\n"
      << "                                   size_t len, void *user);\n"
      << "void " << p << "_set_trace(" << p << "_trace_fn fn, void *user);\n";
  }
  h << "\n#ifdef __cplusplus\n}\n#endif\n\n#endif\n";
  src.header = h.str();

  const bool q8 = in_t.dtype == DType::kI8 || std::any_of(g.tensors.begin(), g.tensors.end(), [&](const ir::TensorSpec& t) {
    return !g.is_weight(t.id) && t.dtype == DType::kI8;
  });
  const bool needs_dequant = std::any_of(kernels.begin(), kernels.end(), [](const std::string& k) {
    return k == "softmax_i8" || k == "kmeans_distance_i8";
  }) || out_t.dtype == DType::kI8;
  const bool needs_requant = std::any_of(kernels.begin(), kernels.end(), [](const std::string& k) {
    return k == "dense_i8" || k == "conv1d_i8";
  });
  const bool needs_math = q8 || std::any_of(kernels.begin(), kernels.end(), [](const std::string& k) {
    return k.rfind("softmax", 0) == 0 || k.rfind("kmeans", 0) == 0;
  });

  std::ostringstream c;
  c << "/* Generated by tinyforge. Do not edit. */\n"
    << "#include <stdint.h>\n"
    << "#include <stddef.h>\n";
  if (needs_math) c << "#include <math.h>\n";
  c << "\n#include \"" << src.header_name << "\"\n\n";

  // Weights.
  for (const auto& n : g.nodes) {
    for (std::size_t i = 1; i < n.inputs.size(); ++i) {
      const int id = n.inputs[i];
      const std::string name = "w" + std::to_string(id);
      const auto& w = g.weights.at(id);
      std::visit([&](const auto& v) { emit_array(c, ctype(ir::constant_dtype(w)), name, v); }, w);
    }
  }
  // Requantization multipliers per dense/conv node.
  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::kDense && n.kind != OpKind::kConv1d) continue;
    const auto& x = g.tensor(n.inputs[0]);
    if (x.dtype != DType::kI8) continue;
    const auto& y = g.tensor(n.output);
    std::vector<float> m;
    for (float ws : g.tensor(n.inputs[1]).quant->scale) {
      m.push_back(kernels::requant_multiplier(x.quant->scale[0], ws, y.quant->scale[0]));
    }
    emit_array(c, "float", "mult" + std::to_string(n.id), m);
  }

  c << "\nstatic union {\n"
    << "  uint8_t bytes[" << plan.peak_bytes << "];\n"
    << "  float align_f;\n"
    << "  int32_t align_i;\n"
    << "} arena;\n"
    << "static float input_buf[" << in_len << "];\n"
    << "static float output_buf[" << out_len << "];\n";
  if (opts.emit_trace_hooks) {
    c << "static " << p << "_trace_fn trace_fn;\n"
      << "static void *trace_user;\n\n"
      << "void " << p << "_set_trace(" << p << "_trace_fn fn, void *user) {\n"
      << "  trace_fn = fn;\n"
      << "  trace_user = user;\n"
      << "}\n\n"
      << "static void trace(int id, int dtype, size_t offset, size_t len) {\n"
      << "  if (trace_fn) trace_fn(id, dtype, arena.bytes + offset, len, trace_user);\n"
      << "}\n";
  }
  c << "\n";

  if (needs_requant) c << kRequantize << "\n";
  if (in_t.dtype == DType::kI8) c << kQuantizeInput << "\n";
  if (in_t.dtype == DType::kF32 || out_t.dtype == DType::kF32) c << kCopyFloats << "\n";
  if (needs_dequant) c << kDequantize << "\n";
  if (out_t.dtype == DType::kI8) c << kDequantizeOutput << "\n";
  for (const auto& k : kernels) c << kernel_text(k) << "\n";

  c << "void " << p << "_init(void) {\n"
    << "  size_t i;\n"
    << "  for (i = 0; i < sizeof arena.bytes; ++i) arena.bytes[i] = 0;\n"
    << "}\n\n"
    << "float *" << p << "_input(void) { return input_buf; }\n\n"
    << "const float *" << p << "_invoke(size_t *out_len) {\n";

  auto trace_line = [&](int t) {
    if (!opts.emit_trace_hooks) return;
    const auto& s = g.tensor(t);
    c << "  trace(" << t << ", " << dtype_code(s.dtype) << ", " << plan.offset(t) << ", "
      << s.num_elements() << ");\n";
  };

  if (in_t.dtype == DType::kI8) {
    c << "  quantize_input(input_buf, " << in_len << ", " << hex_float(in_t.quant->scale[0]) << ", "
      << in_t.quant->zero_point[0] << ", " << arena_ptr(plan, g.input, DType::kI8, false)
      << ");\n";
  } else {
    c << "  copy_f32(input_buf, " << in_len << ", " << arena_ptr(plan, g.input, DType::kF32, false)
      << ");\n";
  }
  trace_line(g.input);

  for (const auto& n : g.nodes) {
    const auto& x = g.tensor(n.inputs[0]);
    const auto& y = g.tensor(n.output);
    const std::string k = kernel_for(g, n);
    const std::string xp = arena_ptr(plan, x.id, x.dtype, true);
    const std::string yp = arena_ptr(plan, y.id, y.dtype, false);
    const int relu = n.fused_activation == ir::Activation::kRelu ? 1 : 0;
    c << "  " << k << "(";
    switch (n.kind) {
      case OpKind::kDense:
        c << xp << ", w" << n.inputs[1] << ", w" << n.inputs[2] << ", " << x.shape[0] << ", "
          << n.attrs.units << ", ";
        if (x.dtype == DType::kI8) {
          c << x.quant->zero_point[0] << ", mult" << n.id << ", " << y.quant->zero_point[0]
            << ", ";
        }
        c << relu << ", " << yp;
        break;
      case OpKind::kConv1d:
        c << xp << ", w" << n.inputs[1] << ", w" << n.inputs[2] << ", " << y.shape[0] << ", "
          << x.shape[1] << ", " << n.attrs.filters << ", " << n.attrs.kernel_size << ", "
          << n.attrs.stride << ", ";
        if (x.dtype == DType::kI8) {
          c << x.quant->zero_point[0] << ", mult" << n.id << ", " << y.quant->zero_point[0]
            << ", ";
        }
        c << relu << ", " << yp;
        break;
      case OpKind::kRelu:
        c << xp << ", " << x.num_elements() << ", ";
        if (x.dtype == DType::kI8) c << y.quant->zero_point[0] << ", ";
        c << yp;
        break;
      case OpKind::kMaxPool1d:
        c << xp << ", " << y.shape[0] << ", " << x.shape[1] << ", " << n.attrs.pool << ", "
          << n.attrs.stride << ", " << yp;
        break;
      case OpKind::kSoftmax:
        c << xp << ", " << x.num_elements() << ", ";
        if (x.dtype == DType::kI8) {
          c << hex_float(x.quant->scale[0]) << ", " << x.quant->zero_point[0] << ", ";
        }
        c << yp;
        break;
      case OpKind::kKmeansDistance:
        c << xp << ", " << x.num_elements() << ", w" << n.inputs[1] << ", " << n.attrs.k << ", ";
        if (x.dtype == DType::kI8) {
          c << hex_float(x.quant->scale[0]) << ", " << x.quant->zero_point[0] << ", ";
        }
        c << yp;
        break;
      case OpKind::kFlatten:
        c << "arena.bytes + " << plan.offset(x.id) << ", " << x.byte_size() << ", arena.bytes + "
          << plan.offset(y.id);
        break;
    }
    c << ");\n";
    trace_line(y.id);
  }

  if (out_t.dtype == DType::kI8) {
    c << "  dequantize_output(" << arena_ptr(plan, out_t.id, DType::kI8, true) << ", " << out_len
      << ", " << hex_float(out_t.quant->scale[0]) << ", " << out_t.quant->zero_point[0]
      << ", output_buf);\n";
  } else {
    c << "  copy_f32(" << arena_ptr(plan, out_t.id, DType::kF32, true) << ", " << out_len
      << ", output_buf);\n";
  }
  c << "  if (out_len) *out_len = " << out_len << ";\n"
    << "  return output_buf;\n"
    << "}\n";
  src.source = c.str();
  return src;
}

std::vector<std::filesystem::path> write_c(const GeneratedSource& src,
                                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto h = dir / src.header_name;
  const auto c = dir / src.source_name;
  project::write_text(h, src.header);
  project::write_text(c, src.source);
  return {c, h};
}

}  // namespace tinyforge::codegen
