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

#include <filesystem>
#include <string>
#include <vector>

#include "tinyforge/arena.hpp"
#include "tinyforge/ir.hpp"

namespace tinyforge::codegen {

struct CodegenOptions {
  std::string symbol_prefix = "tinyforge";
  // Adds <prefix>_set_trace(), which reports every activation tensor after
  // it is written.
  bool emit_trace_hooks = false;

  /// Throws ValidationError unless the prefix is a C identifier.
  void validate() const;
};

struct GeneratedSource {
  std::string header_name;  // <prefix>.h
  std::string source_name;  // <prefix>.c
  std::string header;
  std::string source;
};

bool is_c_identifier(const std::string& s);

/// C99 source for one model: static const weights, one static arena of
/// plan.peak_bytes laid out by `plan`, a straight sequence of kernel calls,
/// and definitions for only the kernels the graph uses. The element type of
/// every tensor comes from the graph (float or int8). Deterministic: the
/// same graph and options always give the same text.
GeneratedSource emit_c(const ir::ModelGraph& g, const interp::ArenaPlan& plan,
                       const CodegenOptions& opts);

/// Emits both files into `dir`; nothing is written when generation fails.
std::vector<std::filesystem::path> write_c(const GeneratedSource& src,
                                           const std::filesystem::path& dir);

/// Kernel routine names emitted for a graph, e.g. "dense_i8".
std::vector<std::string> kernel_names(const ir::ModelGraph& g);

}  // namespace tinyforge::codegen
