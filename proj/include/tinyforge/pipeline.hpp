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

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinyforge/dsp.hpp"
#include "tinyforge/estimate.hpp"
#include "tinyforge/project.hpp"
#include "tinyforge/trainer.hpp"

namespace tinyforge::pipeline {

/// Project-level settings (project.json) plus the impulse (impulse.json).
struct ProjectConfig {
  std::vector<std::string> classes;
  std::uint64_t seed = 1;
  trainer::DataKind data_kind = trainer::DataKind::kAudio;
  std::string profile = "nano33";
  estimate::Constraints constraints;
  double test_fraction = 0.2;
  int csv_sample_rate_hz = 100;

  dsp::DspConfig dsp;
  std::string model_template;

  /// Classes non-empty and unique, profile resolvable, template parseable.
  void validate() const;
};

ProjectConfig default_config(trainer::DataKind kind);

nlohmann::json project_json(const ProjectConfig& c);
nlohmann::json impulse_json(const ProjectConfig& c);
/// Throws Error naming the missing file when the project is not initialized.
ProjectConfig load_config(const project::ProjectFiles& files);
void save_config(const project::ProjectFiles& files, const ProjectConfig& c);

nlohmann::json to_json(const estimate::Constraints& c);
estimate::Constraints constraints_from_json(const nlohmann::json& j);

/// Single sample rate and channel count shared by the dataset.
struct SignalShape {
  int sample_rate_hz = 0;
  int channels = 0;
};
SignalShape signal_shape(const project::Dataset& ds);

/// DSP features of one split with class indices as labels.
trainer::LabeledFeatures split_features(const project::Dataset& ds, const dsp::DspConfig& cfg,
                                        project::Split split);

/// Feature artifacts written by the dsp stage.
struct FeatureSet {
  dsp::DspConfig dsp;
  std::vector<std::string> classes;
  SignalShape shape;
  std::size_t rows = 0;
  std::size_t cols = 0;
  trainer::LabeledFeatures train;
  trainer::LabeledFeatures test;
};

void save_features(const project::ProjectFiles& files, const FeatureSet& fs);
/// Throws when the artifacts are missing or were made with a different DSP
/// config than `expected`.
FeatureSet load_features(const project::ProjectFiles& files, const dsp::DspConfig& expected);

}  // namespace tinyforge::pipeline
