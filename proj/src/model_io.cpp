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

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tinyforge/ir.hpp"

namespace tinyforge::ir {
namespace {

using nlohmann::json;

constexpr const char* kFormatName = "tinyforge-model";
// Caps allocations driven by untrusted files.
constexpr std::size_t kMaxElements = std::size_t{1} << 28;

template <typename T>
std::vector<std::uint8_t> to_le_bytes(const std::vector<T>& v) {
  std::vector<std::uint8_t> out;
  out.reserve(v.size() * sizeof(T));
  for (T x : v) {
    std::uint32_t bits = 0;
    if constexpr (std::is_same_v<T, float>) {
      bits = std::bit_cast<std::uint32_t>(x);
    } else {
      bits = static_cast<std::uint32_t>(static_cast<std::make_unsigned_t<T>>(x));
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

template <typename T>
std::vector<T> from_le_bytes(const std::vector<std::uint8_t>& b) {
  std::vector<T> out(b.size() / sizeof(T));
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint32_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint32_t>(b[k * sizeof(T) + i]) << (8 * i);
    }
    if constexpr (std::is_same_v<T, float>) {
      out[k] = std::bit_cast<float>(bits);
    } else {
      out[k] = static_cast<T>(static_cast<std::make_unsigned_t<T>>(bits));
    }
  }
  return out;
}

json quant_to_json(const QuantParams& q) {
  json scales = json::array();
  // Scales travel as raw float bits so the round trip is exact.
  for (float s : q.scale) scales.push_back(std::bit_cast<std::uint32_t>(s));
  return {{"scale_bits", scales},
          {"zero_point", q.zero_point},
          {"granularity", q.granularity == Granularity::kPerTensor ? "per_tensor" : "per_channel"}};
}

QuantParams quant_from_json(const json& j) {
  QuantParams q;
  for (const auto& s : j.at("scale_bits")) q.scale.push_back(std::bit_cast<float>(s.get<std::uint32_t>()));
  q.zero_point = j.at("zero_point").get<std::vector<std::int32_t>>();
  const auto g = j.at("granularity").get<std::string>();
  if (g == "per_tensor") {
    q.granularity = Granularity::kPerTensor;
  } else if (g == "per_channel") {
    q.granularity = Granularity::kPerChannel;
  } else {
    throw ValidationError("unknown granularity '" + g + "'");
  }
  return q;
}

json body_to_json(const ModelGraph& g) {
  json tensors = json::array();
  for (const auto& t : g.tensors) {
    json jt = {{"id", t.id}, {"name", t.name}, {"shape", t.shape}, {"dtype", to_string(t.dtype)}};
    if (t.quant) jt["quant"] = quant_to_json(*t.quant);
    tensors.push_back(std::move(jt));
  }
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id},
                     {"kind", to_string(n.kind)},
                     {"attrs",
                      {{"units", n.attrs.units},
                       {"filters", n.attrs.filters},
                       {"kernel_size", n.attrs.kernel_size},
                       {"stride", n.attrs.stride},
                       {"pool", n.attrs.pool},
                       {"k", n.attrs.k}}},
                     {"inputs", n.inputs},
                     {"output", n.output},
                     {"fused_activation", to_string(n.fused_activation)}});
  }
  json weights = json::object();
  for (const auto& [id, c] : g.weights) {
    std::vector<std::uint8_t> bytes = std::visit([](const auto& v) { return to_le_bytes(v); }, c);
    weights[std::to_string(id)] = base64_encode(bytes);
  }
  return {{"format", kFormatName},
          {"version", kModelFormatVersion},
          {"input", g.input},
          {"output", g.output},
          {"tensors", tensors},
          {"nodes", nodes},
          {"weights", weights}};
}

std::uint32_t crc_of(const std::string& s) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

ModelGraph body_from_json(const json& j) {
  ModelGraph g;
  g.input = j.at("input").get<int>();
  g.output = j.at("output").get<int>();
  for (const auto& jt : j.at("tensors")) {
    TensorSpec t;
    t.id = jt.at("id").get<int>();
    t.name = jt.at("name").get<std::string>();
    t.shape = jt.at("shape").get<std::vector<int>>();
    std::size_t n = 1;
    for (int d : t.shape) {
      if (d < 1 || n > kMaxElements / static_cast<std::size_t>(d)) {
        throw ValidationError("tensor " + std::to_string(t.id) + " has an invalid shape");
      }
      n *= static_cast<std::size_t>(d);
    }
    t.dtype = dtype_from_string(jt.at("dtype").get<std::string>());
    if (jt.contains("quant")) t.quant = quant_from_json(jt.at("quant"));
    g.tensors.push_back(std::move(t));
  }
  for (const auto& jn : j.at("nodes")) {
    OpNode n;
    n.id = jn.at("id").get<int>();
    n.kind = op_kind_from_string(jn.at("kind").get<std::string>());
    const auto& a = jn.at("attrs");
    n.attrs.units = a.at("units").get<int>();
    n.attrs.filters = a.at("filters").get<int>();
    n.attrs.kernel_size = a.at("kernel_size").get<int>();
    n.attrs.stride = a.at("stride").get<int>();
    n.attrs.pool = a.at("pool").get<int>();
    n.attrs.k = a.at("k").get<int>();
    n.inputs = jn.at("inputs").get<std::vector<int>>();
    n.output = jn.at("output").get<int>();
    n.fused_activation = activation_from_string(jn.at("fused_activation").get<std::string>());
    g.nodes.push_back(std::move(n));
  }
  for (const auto& [key, blob] : j.at("weights").items()) {
    std::size_t pos = 0;
    int id = -1;
    try {
      id = std::stoi(key, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != key.size() || id < 0 || id >= static_cast<int>(g.tensors.size())) {
      throw ValidationError("weight key '" + key + "' is not a tensor id");
    }
    const auto bytes = base64_decode(blob.get<std::string>());
    const auto& t = g.tensor(id);
    if (bytes.size() != t.num_elements() * dtype_size(t.dtype)) {
      throw ValidationError("weight blob for tensor " + key + " has " +
                            std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(t.num_elements() * dtype_size(t.dtype)));
    }
    switch (t.dtype) {
      case DType::kF32: g.weights[id] = from_le_bytes<float>(bytes); break;
      case DType::kI8: g.weights[id] = from_le_bytes<std::int8_t>(bytes); break;
      case DType::kI32: g.weights[id] = from_le_bytes<std::int32_t>(bytes); break;
    }
  }
  return g;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ValidationError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ValidationError("invalid base64 data");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string serialize_model(const ModelGraph& g) {
  const ModelGraph checked = shape_infer_validate(g);
  json j = body_to_json(checked);
  j["crc32"] = crc_of(j.dump());
  return j.dump(1) + "\n";
}

ModelGraph deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ChecksumError(std::string("model file is truncated or corrupt: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("crc32")) {
      throw ChecksumError("model file has no crc32 field");
    }
    if (j.value("format", std::string()) != kFormatName) {
      throw ValidationError("not a tinyforge model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ValidationError("model format version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kModelFormatVersion) + ")");
    }
    const auto stored = j.at("crc32").get<std::uint32_t>();
    j.erase("crc32");
    if (crc_of(j.dump()) != stored) throw ChecksumError("model file checksum mismatch");
    return shape_infer_validate(body_from_json(j));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const ModelGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << serialize_model(g);
}

ModelGraph load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace tinyforge::ir
