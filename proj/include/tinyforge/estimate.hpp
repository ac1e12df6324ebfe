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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinyforge/arena.hpp"
#include "tinyforge/dsp.hpp"
#include "tinyforge/ir.hpp"

namespace tinyforge::estimate {

/// Parametric cost model of one target. Cycle constants are uncalibrated
/// defaults and carry no accuracy claim against real silicon.
struct DeviceProfile {
  std::string name;
  double clock_hz = 64e6;
  double cycles_per_mac_f32 = 8.0;
  double cycles_per_mac_i8 = 2.0;
  double cycles_per_fft_butterfly = 10.0;
  double cycles_per_elementwise = 1.0;
  std::map<ir::OpKind, std::int64_t> kernel_code_bytes;  // every op kind
  std::int64_t interpreter_scaffold_bytes = 0;
  std::int64_t generated_scaffold_bytes = 0;
  // RAM the interpreter keeps per activation tensor (tensor metadata) and
  // for its own bookkeeping.
  std::int64_t interpreter_ram_per_tensor_bytes = 0;
  std::int64_t interpreter_ram_scaffold_bytes = 0;
  std::int64_t flash_capacity_bytes = 0;
  std::int64_t ram_capacity_bytes = 0;

  /// Throws ValidationError when a constant is not positive.
  void validate() const;
  std::int64_t all_kernels_code_bytes() const;
};

void to_json(nlohmann::json& j, const DeviceProfile& p);
void from_json(const nlohmann::json& j, DeviceProfile& p);

/// nano33, esp-eye and pico.
std::vector<DeviceProfile> builtin_profiles();
/// Directory searched for <name>.json: TINYFORGE_PROFILE_DIR when set, else
/// the profiles/ directory of the source tree.
std::filesystem::path profile_dir();
/// File in profile_dir() first, then the built-ins.
DeviceProfile load_profile(const std::string& name);
std::vector<std::string> profile_names();

struct MacCount {
  std::vector<std::int64_t> per_node_macs;
  std::vector<std::int64_t> per_node_elementwise;
  std::int64_t total_macs = 0;
  std::int64_t elementwise = 0;
};

/// dense: in*units; conv1d: out_len*filters*kernel*in_ch; kmeans_distance:
/// k*dim. relu, softmax and maxpool count one elementwise op per output
/// element; flatten is free.
MacCount count_macs(const ir::ModelGraph& g);

enum class Mode { kGenerated, kInterpreterBaseline };
std::string to_string(Mode m);

struct Footprint {
  std::int64_t flash_bytes = 0;
  std::int64_t ram_bytes = 0;
  std::int64_t scaffold_ram_bytes = 0;  // RAM beyond arena and io buffers
};

struct FlashRamReport {
  Footprint generated;
  Footprint interpreter_baseline;
  const Footprint& get(Mode m) const {
    return m == Mode::kGenerated ? generated : interpreter_baseline;
  }
};

/// Float input buffer plus float output buffer, the same for both modes.
std::int64_t io_buffer_bytes(const ir::ModelGraph& g);

/// generated: flash = weights + code of used kernels + generated scaffold,
/// ram = arena peak + io buffers. interpreter_baseline: flash = weights +
/// code of every kernel + interpreter scaffold, ram = arena peak + io
/// buffers + per-tensor metadata + interpreter RAM scaffold.
FlashRamReport flash_ram_report(const ir::ModelGraph& g, const interp::ArenaPlan& plan,
                                const DeviceProfile& profile);

struct ResourceEstimate {
  double dsp_latency_ms = 0.0;
  double nn_latency_ms = 0.0;
  double total_latency_ms = 0.0;
  std::int64_t dsp_ram_bytes = 0;
  std::int64_t nn_ram_bytes = 0;
  std::int64_t ram_bytes = 0;
  std::int64_t flash_bytes = 0;
};

void to_json(nlohmann::json& j, const ResourceEstimate& e);

struct DspCost {
  std::int64_t frames = 0;
  std::int64_t butterflies = 0;       // per window
  std::int64_t filterbank_macs = 0;   // mel weights and DCT
  std::int64_t ram_bytes = 0;
};

/// Raw blocks have no FFT; their cost is one copy per feature value.
DspCost dsp_cost(const dsp::DspConfig& cfg, int sample_rate_hz, int channels);

double dsp_latency_ms(const DspCost& c, const DeviceProfile& p);
double nn_latency_ms(const MacCount& m, ir::DType dtype, const DeviceProfile& p);

ResourceEstimate estimate(const ir::ModelGraph& g, const dsp::DspConfig& cfg, int sample_rate_hz,
                          int channels, const DeviceProfile& profile,
                          Mode mode = Mode::kGenerated);

struct Constraints {
  std::optional<std::int64_t> ram_bytes;
  std::optional<std::int64_t> flash_bytes;
  std::optional<double> latency_ms;
  bool empty() const { return !ram_bytes && !flash_bytes && !latency_ms; }
};

/// Parses "ram=256k", "flash=1M", "latency=300" (ms). Sizes use k = 1024.
void parse_constraint(const std::string& text, Constraints& into);

struct Violation {
  std::string resource;  // "ram", "flash" or "latency"
  double value = 0.0;
  double limit = 0.0;
  double margin() const { return value - limit; }
};

struct FitReport {
  bool fits = true;
  std::vector<Violation> violations;
};

/// Capacities of the profile plus optional tighter constraints, all
/// inclusive.
FitReport fits_device(const ResourceEstimate& est, const DeviceProfile& profile,
                      const Constraints& constraints = {});

}  // namespace tinyforge::estimate
