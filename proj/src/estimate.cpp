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

#include "tinyforge/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "tinyforge/project.hpp"

#ifndef TINYFORGE_DEFAULT_PROFILE_DIR
#define TINYFORGE_DEFAULT_PROFILE_DIR "profiles"
#endif

namespace tinyforge::estimate {

using ir::OpKind;

namespace {

const std::vector<OpKind>& all_kinds() {
  static const std::vector<OpKind> kinds = {OpKind::kDense,     OpKind::kConv1d,
                                            OpKind::kRelu,      OpKind::kSoftmax,
                                            OpKind::kMaxPool1d, OpKind::kFlatten,
                                            OpKind::kKmeansDistance};
  return kinds;
}

// Rough Cortex-M code sizes for the portable C kernels at -Os.
std::map<OpKind, std::int64_t> default_kernel_code() {
  return {{OpKind::kDense, 1400},   {OpKind::kConv1d, 2600},    {OpKind::kRelu, 180},
          {OpKind::kSoftmax, 700},  {OpKind::kMaxPool1d, 520},  {OpKind::kFlatten, 120},
          {OpKind::kKmeansDistance, 640}};
}

DeviceProfile make_profile(std::string name, double clock_hz, std::int64_t flash,
                           std::int64_t ram) {
  DeviceProfile p;
  p.name = std::move(name);
  p.clock_hz = clock_hz;
  p.kernel_code_bytes = default_kernel_code();
  p.interpreter_scaffold_bytes = 36 * 1024;
  p.generated_scaffold_bytes = 2 * 1024;
  p.interpreter_ram_per_tensor_bytes = 96;
  p.interpreter_ram_scaffold_bytes = 4 * 1024;
  p.flash_capacity_bytes = flash;
  p.ram_capacity_bytes = ram;
  return p;
}

}  // namespace

void DeviceProfile::validate() const {
  auto positive = [&](double v, const char* what) {
    if (!(v > 0.0)) throw ValidationError("profile '" + name + "': " + what + " must be > 0");
  };
  if (name.empty()) throw ValidationError("profile has no name");
  positive(clock_hz, "clock_hz");
  positive(cycles_per_mac_f32, "cycles_per_mac_f32");
  positive(cycles_per_mac_i8, "cycles_per_mac_i8");
  positive(cycles_per_fft_butterfly, "cycles_per_fft_butterfly");
  positive(cycles_per_elementwise, "cycles_per_elementwise");
  positive(static_cast<double>(interpreter_scaffold_bytes), "interpreter_scaffold_bytes");
  positive(static_cast<double>(generated_scaffold_bytes), "generated_scaffold_bytes");
  positive(static_cast<double>(interpreter_ram_per_tensor_bytes), "interpreter_ram_per_tensor_bytes");
  positive(static_cast<double>(interpreter_ram_scaffold_bytes), "interpreter_ram_scaffold_bytes");
  positive(static_cast<double>(flash_capacity_bytes), "flash_capacity_bytes");
  positive(static_cast<double>(ram_capacity_bytes), "ram_capacity_bytes");
  for (OpKind k : all_kinds()) {
    const auto it = kernel_code_bytes.find(k);
    if (it == kernel_code_bytes.end()) {
      throw ValidationError("profile '" + name + "': no code size for kernel " + ir::to_string(k));
    }
    positive(static_cast<double>(it->second), "kernel code size");
  }
}

std::int64_t DeviceProfile::all_kernels_code_bytes() const {
  std::int64_t s = 0;
  for (const auto& [k, v] : kernel_code_bytes) s += v;
  return s;
}

void to_json(nlohmann::json& j, const DeviceProfile& p) {
  nlohmann::json code = nlohmann::json::object();
  for (const auto& [k, v] : p.kernel_code_bytes) code[ir::to_string(k)] = v;
  j = {{"name", p.name},
       {"clock_hz", p.clock_hz},
       {"cycles_per_mac_f32", p.cycles_per_mac_f32},
       {"cycles_per_mac_i8", p.cycles_per_mac_i8},
       {"cycles_per_fft_butterfly", p.cycles_per_fft_butterfly},
       {"cycles_per_elementwise", p.cycles_per_elementwise},
       {"kernel_code_bytes", code},
       {"interpreter_scaffold_bytes", p.interpreter_scaffold_bytes},
       {"generated_scaffold_bytes", p.generated_scaffold_bytes},
       {"interpreter_ram_per_tensor_bytes", p.interpreter_ram_per_tensor_bytes},
       {"interpreter_ram_scaffold_bytes", p.interpreter_ram_scaffold_bytes},
       {"flash_capacity_bytes", p.flash_capacity_bytes},
       {"ram_capacity_bytes", p.ram_capacity_bytes}};
}

void from_json(const nlohmann::json& j, DeviceProfile& p) {
  // Missing fields keep the defaults of a fresh profile.
  DeviceProfile d = make_profile("", 64e6, 1, 1);
  p = d;
  p.name = j.at("name").get<std::string>();
  p.clock_hz = j.value("clock_hz", d.clock_hz);
  p.cycles_per_mac_f32 = j.value("cycles_per_mac_f32", d.cycles_per_mac_f32);
  p.cycles_per_mac_i8 = j.value("cycles_per_mac_i8", d.cycles_per_mac_i8);
  p.cycles_per_fft_butterfly = j.value("cycles_per_fft_butterfly", d.cycles_per_fft_butterfly);
  p.cycles_per_elementwise = j.value("cycles_per_elementwise", d.cycles_per_elementwise);
  if (j.contains("kernel_code_bytes")) {
    for (const auto& [k, v] : j.at("kernel_code_bytes").items()) {
      p.kernel_code_bytes[ir::op_kind_from_string(k)] = v.get<std::int64_t>();
    }
  }
  p.interpreter_scaffold_bytes = j.value("interpreter_scaffold_bytes", d.interpreter_scaffold_bytes);
  p.generated_scaffold_bytes = j.value("generated_scaffold_bytes", d.generated_scaffold_bytes);
  p.interpreter_ram_per_tensor_bytes =
      j.value("interpreter_ram_per_tensor_bytes", d.interpreter_ram_per_tensor_bytes);
  p.interpreter_ram_scaffold_bytes =
      j.value("interpreter_ram_scaffold_bytes", d.interpreter_ram_scaffold_bytes);
  p.flash_capacity_bytes = j.at("flash_capacity_bytes").get<std::int64_t>();
  p.ram_capacity_bytes = j.at("ram_capacity_bytes").get<std::int64_t>();
  p.validate();
}

std::vector<DeviceProfile> builtin_profiles() {
  return {make_profile("nano33", 64e6, 1024 * 1024, 256 * 1024),
          make_profile("esp-eye", 160e6, 4 * 1024 * 1024, 8 * 1024 * 1024),
          make_profile("pico", 133e6, 16 * 1024 * 1024, 264 * 1024)};
}

std::filesystem::path profile_dir() {
  if (const char* env = std::getenv("TINYFORGE_PROFILE_DIR"); env && *env) return env;
  return TINYFORGE_DEFAULT_PROFILE_DIR;
}

DeviceProfile load_profile(const std::string& name) {
  const auto path = profile_dir() / (name + ".json");
  if (std::filesystem::exists(path)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(project::read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("profile " + path.string() + ": " + e.what());
    }
    try {
      return j.get<DeviceProfile>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("profile " + path.string() + ": " + e.what());
    }
  }
  for (auto& p : builtin_profiles()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const auto& n : profile_names()) known += (known.empty() ? "" : ", ") + n;
  throw Error("unknown device profile '" + name + "' (known: " + known + ")");
}

std::vector<std::string> profile_names() {
  std::set<std::string> names;
  for (const auto& p : builtin_profiles()) names.insert(p.name);
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(profile_dir(), ec)) {
    if (e.path().extension() == ".json") names.insert(e.path().stem().string());
  }
  return {names.begin(), names.end()};
}

MacCount count_macs(const ir::ModelGraph& g) {
  MacCount m;
  for (const auto& n : g.nodes) {
    const auto& x = g.tensor(n.inputs[0]);
    const auto& y = g.tensor(n.output);
    std::int64_t macs = 0, elem = 0;
    switch (n.kind) {
      case OpKind::kDense:
        macs = std::int64_t{x.shape[0]} * n.attrs.units;
        break;
      case OpKind::kConv1d:
        macs = std::int64_t{y.shape[0]} * n.attrs.filters * n.attrs.kernel_size * x.shape[1];
        break;
      case OpKind::kKmeansDistance:
        macs = std::int64_t{n.attrs.k} * static_cast<std::int64_t>(x.num_elements());
        break;
      case OpKind::kRelu:
      case OpKind::kSoftmax:
      case OpKind::kMaxPool1d:
        elem = static_cast<std::int64_t>(y.num_elements());
        break;
      case OpKind::kFlatten:
        break;
    }
    m.per_node_macs.push_back(macs);
    m.per_node_elementwise.push_back(elem);
    m.total_macs += macs;
    m.elementwise += elem;
  }
  return m;
}

std::string to_string(Mode m) {
  return m == Mode::kGenerated ? "generated" : "interpreter_baseline";
}

std::int64_t io_buffer_bytes(const ir::ModelGraph& g) {
  return 4 * static_cast<std::int64_t>(g.tensor(g.input).num_elements() +
                                       g.tensor(g.output).num_elements());
}

FlashRamReport flash_ram_report(const ir::ModelGraph& g, const interp::ArenaPlan& plan,
                                const DeviceProfile& profile) {
  const auto weights = static_cast<std::int64_t>(g.weight_bytes());
  const auto peak = static_cast<std::int64_t>(plan.peak_bytes);
  const std::int64_t io = io_buffer_bytes(g);
  FlashRamReport r;
  std::int64_t used_code = 0;
  for (OpKind k : g.used_kinds()) used_code += profile.kernel_code_bytes.at(k);
  r.generated.flash_bytes = weights + used_code + profile.generated_scaffold_bytes;
  r.generated.ram_bytes = peak + io;
  r.generated.scaffold_ram_bytes = 0;
  r.interpreter_baseline.flash_bytes =
      weights + profile.all_kernels_code_bytes() + profile.interpreter_scaffold_bytes;
  r.interpreter_baseline.scaffold_ram_bytes =
      profile.interpreter_ram_per_tensor_bytes * static_cast<std::int64_t>(g.tensors.size()) +
      profile.interpreter_ram_scaffold_bytes;
  r.interpreter_baseline.ram_bytes = peak + io + r.interpreter_baseline.scaffold_ram_bytes;
  return r;
}

void to_json(nlohmann::json& j, const ResourceEstimate& e) {
  j = {{"dsp_latency_ms", e.dsp_latency_ms}, {"nn_latency_ms", e.nn_latency_ms},
       {"total_latency_ms", e.total_latency_ms}, {"dsp_ram_bytes", e.dsp_ram_bytes},
       {"nn_ram_bytes", e.nn_ram_bytes},         {"ram_bytes", e.ram_bytes},
       {"flash_bytes", e.flash_bytes}};
}

DspCost dsp_cost(const dsp::DspConfig& cfg, int sample_rate_hz, int channels) {
  DspCost c;
  const auto [rows, cols] = dsp::feature_shape(cfg, sample_rate_hz, channels);
  const auto feature_bytes = static_cast<std::int64_t>(rows * cols * 4);
  if (cfg.block == dsp::Block::kRaw) {
    c.frames = 1;
    c.filterbank_macs = 0;
    c.butterflies = 0;
    c.ram_bytes = feature_bytes;
    return c;
  }
  const int fft = cfg.resolved_fft_size(sample_rate_hz);
  c.frames = static_cast<std::int64_t>(rows);
  const auto log2n = static_cast<std::int64_t>(std::lround(std::log2(fft)));
  c.butterflies = c.frames * (fft / 2) * log2n;
  std::int64_t per_frame = std::int64_t{fft / 2 + 1} * cfg.num_mel_filters;
  if (cfg.block == dsp::Block::kMfcc) per_frame += std::int64_t{cfg.num_mel_filters} * cfg.num_cepstral_coeffs;
  c.filterbank_macs = c.frames * per_frame;
  c.ram_bytes = std::int64_t{fft} * 4 * 2 + feature_bytes;
  return c;
}

double dsp_latency_ms(const DspCost& c, const DeviceProfile& p) {
  return static_cast<double>(c.butterflies) * p.cycles_per_fft_butterfly / p.clock_hz * 1000.0 +
         static_cast<double>(c.filterbank_macs) * p.cycles_per_mac_f32 / p.clock_hz * 1000.0;
}

double nn_latency_ms(const MacCount& m, ir::DType dtype, const DeviceProfile& p) {
  const double cpm = dtype == ir::DType::kI8 ? p.cycles_per_mac_i8 : p.cycles_per_mac_f32;
  return static_cast<double>(m.total_macs) * cpm / p.clock_hz * 1000.0 +
         static_cast<double>(m.elementwise) * p.cycles_per_elementwise / p.clock_hz * 1000.0;
}

ResourceEstimate estimate(const ir::ModelGraph& g, const dsp::DspConfig& cfg, int sample_rate_hz,
                          int channels, const DeviceProfile& profile, Mode mode) {
  const ir::ModelGraph v = ir::shape_infer_validate(g);
  const auto plan = interp::plan_arena(v);
  const auto mem = flash_ram_report(v, plan, profile).get(mode);
  const auto dc = dsp_cost(cfg, sample_rate_hz, channels);
  ResourceEstimate e;
  e.dsp_latency_ms = dsp_latency_ms(dc, profile);
  e.nn_latency_ms = nn_latency_ms(count_macs(v), v.activation_dtype(), profile);
  e.total_latency_ms = e.dsp_latency_ms + e.nn_latency_ms;
  e.dsp_ram_bytes = dc.ram_bytes;
  e.nn_ram_bytes = mem.ram_bytes;
  e.ram_bytes = e.dsp_ram_bytes + e.nn_ram_bytes;
  e.flash_bytes = mem.flash_bytes;
  return e;
}

void parse_constraint(const std::string& text, Constraints& into) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw Error("constraint '" + text + "' must look like ram=256k, flash=1M or latency=300");
  }
  const std::string key = text.substr(0, eq);
  std::string val = text.substr(eq + 1);
  double mult = 1.0;
  auto lower_back = [&] {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(val.back())));
  };
  // Accepts 256k, 256kb, 1M, 1MB.
  if (val.size() > 1 && lower_back() == 'b') {
    val.pop_back();
    const char c = lower_back();
    if (c != 'k' && c != 'm') val.push_back('b');
  }
  if (!val.empty()) {
    const char suffix = lower_back();
    if (suffix == 'k') mult = 1024.0;
    if (suffix == 'm') mult = 1024.0 * 1024.0;
    if (suffix == 'k' || suffix == 'm') val.pop_back();
  }
  double number = 0.0;
  try {
    std::size_t used = 0;
    number = std::stod(val, &used);
    if (used != val.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error("constraint '" + text + "': '" + text.substr(eq + 1) + "' is not a number");
  }
  if (!(number >= 0.0)) throw Error("constraint '" + text + "' must be non-negative");
  if (key == "ram") {
    into.ram_bytes = static_cast<std::int64_t>(std::llround(number * mult));
  } else if (key == "flash") {
    into.flash_bytes = static_cast<std::int64_t>(std::llround(number * mult));
  } else if (key == "latency") {
    if (mult != 1.0) throw Error("latency constraint is in milliseconds, without a suffix");
    into.latency_ms = number;
  } else {
    throw Error("unknown constraint '" + key + "' (expected ram, flash or latency)");
  }
}

FitReport fits_device(const ResourceEstimate& est, const DeviceProfile& profile,
                      const Constraints& constraints) {
  FitReport r;
  auto check = [&](const char* what, double value, double limit) {
    if (value > limit) {
      r.fits = false;
      r.violations.push_back({what, value, limit});
    }
  };
  const auto ram_limit = std::min(profile.ram_capacity_bytes,
                                  constraints.ram_bytes.value_or(profile.ram_capacity_bytes));
  const auto flash_limit = std::min(profile.flash_capacity_bytes,
                                    constraints.flash_bytes.value_or(profile.flash_capacity_bytes));
  check("ram", static_cast<double>(est.ram_bytes), static_cast<double>(ram_limit));
  check("flash", static_cast<double>(est.flash_bytes), static_cast<double>(flash_limit));
  if (constraints.latency_ms) check("latency", est.total_latency_ms, *constraints.latency_ms);
  return r;
}

}  // namespace tinyforge::estimate
