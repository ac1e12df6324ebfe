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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinyforge/dsp.hpp"
#include "tinyforge/estimate.hpp"
#include "tinyforge/project.hpp"
#include "tinyforge/trainer.hpp"

namespace tinyforge::tuner {

struct TrialConfig {
  dsp::DspConfig dsp;
  std::string descriptor;
  ir::DType dtype = ir::DType::kF32;

  /// "MFE (0.02, 0.01, 40) | 2x conv1d (32 to 64) | i8"
  std::string label() const;
};

struct SearchSpace {
  std::vector<dsp::DspConfig> dsp_choices;
  std::vector<std::string> model_templates;
  std::vector<ir::DType> dtypes = {ir::DType::kF32, ir::DType::kI8};

  std::size_t size() const { return dsp_choices.size() * model_templates.size() * dtypes.size(); }
  /// Cross-product element `index` (dsp slowest, dtype fastest).
  TrialConfig at(std::size_t index) const;
  void validate() const;
};

/// The eight keyword-spotting preprocessing rows of the published tuner
/// table and their seven model families. The 2D MobileNetV2 row is replaced
/// by a wide conv1d stack of similar RAM appetite.
SearchSpace default_audio_space();
/// Small MLP space for time-series projects.
SearchSpace default_timeseries_space();

struct SampleResult {
  std::vector<TrialConfig> configs;
  std::vector<std::string> warnings;
};

/// Uniform i.i.d. draws over the cross-product, duplicates redrawn (at most
/// 100 draws per requested config). When n covers the whole space every
/// config is returned once, in a seeded order, with a warning if n exceeds it.
SampleResult sample_configs(const SearchSpace& space, int n, std::uint64_t seed);

enum class TrialStatus { kFiltered, kTrained, kFailed };
std::string to_string(TrialStatus s);

/// Shape of the data a trial's graph is instantiated for.
struct TrialContext {
  int sample_rate_hz = 16000;
  int channels = 1;
  int num_classes = 2;
  trainer::DataKind data_kind = trainer::DataKind::kAudio;
};

struct Trial {
  int id = 0;
  TrialConfig config;
  TrialStatus status = TrialStatus::kFiltered;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  trainer::EvalReport eval;
  estimate::ResourceEstimate estimate;
  std::vector<estimate::Violation> violations;
  std::string error;
};

/// Untrained graph for a config; int8 configs are quantized with ranges
/// from a few random inputs so the estimate sees int8 sizes and costs.
ir::ModelGraph instantiate(const TrialConfig& cfg, const TrialContext& ctx, std::uint64_t seed);

struct FilterResult {
  std::vector<Trial> kept;
  std::vector<Trial> filtered;  // with violations, or an error when the graph is invalid
};

/// Estimates every config without training and drops those violating the
/// profile capacities or the constraints. Trial ids follow input order.
FilterResult heuristic_filter(const std::vector<TrialConfig>& configs, const TrialContext& ctx,
                              const estimate::DeviceProfile& profile,
                              const estimate::Constraints& constraints,
                              std::uint64_t batch_seed);

/// DSP, training, int8 conversion when asked, test-split evaluation and
/// estimate for each trial, OpenMP-parallel across trials. Per-trial seeds
/// are mix_seed(batch_seed, trial id). Failures are recorded per trial;
/// throws only when every trial fails.
std::vector<Trial> run_trials(std::vector<Trial> kept, const project::Dataset& ds,
                              const TrialContext& ctx, const estimate::DeviceProfile& profile,
                              const trainer::TrainConfig& train_cfg, std::uint64_t batch_seed);

enum class Objective { kAccuracy, kLatency, kRam, kFlash };
Objective objective_from_string(const std::string& s);
std::string to_string(Objective o);

/// Trained trials only: accuracy descending, resources ascending; ties go to
/// the lower total latency, then the lower trial id.
std::vector<Trial> rank_trials(const std::vector<Trial>& trials, Objective objective);

nlohmann::json trial_to_json(const Trial& t);
nlohmann::json tuner_report_json(const std::vector<Trial>& ranked,
                                 const std::vector<Trial>& others, const std::string& profile,
                                 const estimate::Constraints& constraints, std::uint64_t seed,
                                 Objective objective);
/// Table with DSP, model, accuracy and dsp/nn/total latency and RAM plus
/// flash. Displayed totals are the sums of the displayed parts.
std::string tuner_report_markdown(const std::vector<Trial>& ranked);

}  // namespace tinyforge::tuner
