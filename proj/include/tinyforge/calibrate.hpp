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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tinyforge/dsp.hpp"
#include "tinyforge/ir.hpp"
#include "tinyforge/project.hpp"

namespace tinyforge::calibrate {

struct PostProcessConfig {
  int averaging_window_frames = 1;
  double threshold = 0.5;
  int suppression_frames = 0;

  void validate() const;
  auto operator<=>(const PostProcessConfig&) const = default;
};

void to_json(nlohmann::json& j, const PostProcessConfig& c);

/// Ground truth event. Samples are [start_sample, end_sample); frames are the
/// inclusive range of decision frames whose hop start falls inside it.
struct Interval {
  int cls = 0;
  std::int64_t start_sample = 0;
  std::int64_t end_sample = 0;
  int start_frame = 0;
  int end_frame = 0;
};

/// Audio stream cut into decision frames: frame f is the model window that
/// starts at sample f * hop_samples.
struct LabeledStream {
  int sample_rate_hz = 0;
  int window_samples = 0;
  int hop_samples = 0;
  std::vector<double> signal;
  std::vector<std::vector<float>> features;  // one flattened feature matrix per frame
  std::vector<Interval> events;              // sorted, non-overlapping

  int num_frames() const { return static_cast<int>(features.size()); }
};

struct StreamOptions {
  double duration_s = 60.0;
  double event_rate_per_min = 2.0;
  // White-noise bed level in dBFS; when empty the bed is tiled from the
  // background class.
  std::optional<double> noise_db = -30.0;
  std::string background_label;
  std::string positive_label;
  double hop_s = 0.25;
  std::uint64_t seed = 1;
  // Set to skip feature extraction (tests that only need the timeline).
  bool compute_features = true;
};

/// Places randomly chosen positive samples at uniform positions (Poisson
/// count with mean rate * duration) over the noise bed. An overlapping
/// placement is redrawn up to 100 times before giving up.
LabeledStream synth_stream(const project::Dataset& ds, const dsp::DspConfig& cfg,
                           const StreamOptions& opts);

struct Detection {
  int cls = 0;
  int frame = 0;
  bool operator==(const Detection&) const = default;
};

/// Trailing moving average over full windows (the first eligible frame is
/// window - 1). Fires when the average reaches the threshold from below
/// (>=, and the frame before was below or not yet eligible); after firing
/// the next suppression_frames frames cannot fire.
std::vector<Detection> apply_postprocess(std::span<const double> positive_prob,
                                         const PostProcessConfig& cfg, int cls = 0);
/// Convenience overload over per-frame class distributions.
std::vector<Detection> apply_postprocess(const std::vector<std::vector<float>>& probs,
                                         int positive_class, const PostProcessConfig& cfg);

struct Score {
  double far = 0.0;
  double frr = 0.0;
  int hits = 0;
  int false_accepts = 0;
};

/// An interval is hit when a detection lands in [start - tol, end + tol].
/// Detections outside every such range are false accepts. FRR = missed /
/// intervals (0 without intervals); FAR = false accepts / (frames / window),
/// capped at 1.
Score score_far_frr(std::span<const Detection> detections, std::span<const Interval> truth,
                    int total_frames, int averaging_window_frames, int tolerance_frames);

struct CalibrationResult {
  PostProcessConfig config;
  double far = 0.0;
  double frr = 0.0;
};

bool dominates(const CalibrationResult& a, const CalibrationResult& b);
/// Non-dominated subset, one config per distinct (far, frr), sorted by far
/// then frr.
std::vector<CalibrationResult> pareto_front(std::vector<CalibrationResult> results);

struct GeneBounds {
  int window_min = 1, window_max = 10;
  double threshold_min = 0.05, threshold_max = 0.95;
  int suppression_min = 0, suppression_max = 20;
  // Optional grids; values are snapped to min + k * step.
  std::optional<double> threshold_step;
  std::optional<int> window_step;
  std::optional<int> suppression_step;

  void validate() const;
  bool degenerate() const;
  PostProcessConfig clamp(PostProcessConfig c) const;
  /// Every grid point; requires steps for all three genes or a degenerate
  /// gene.
  std::vector<PostProcessConfig> grid() const;
};

struct GaParams {
  int population = 24;
  int generations = 30;
  double crossover_rate = 0.9;
  double mutation_rate = 0.2;
  std::uint64_t seed = 1;
  std::vector<PostProcessConfig> initial;  // seeded individuals

  void validate() const;
};

void to_json(nlohmann::json& j, const GaParams& p);

using Evaluator = std::function<std::pair<double, double>(const PostProcessConfig&)>;

struct GaResult {
  std::vector<CalibrationResult> front;      // sorted by far
  std::vector<CalibrationResult> evaluated;  // every distinct config, in first-seen order
};

/// NSGA-style search: binary tournament on (rank, crowding), uniform
/// crossover, clamped Gaussian / integer-step mutation and rank-plus-crowding
/// survival. An archive of every evaluation supplies the returned front, so
/// no evaluated non-dominated config is ever lost.
GaResult ga_search(const Evaluator& eval, const GeneBounds& bounds, const GaParams& params);

/// Evaluator over a frozen probability stream.
Evaluator stream_evaluator(std::vector<double> positive_prob, std::vector<Interval> truth,
                           int tolerance_frames, int positive_class = 0);

/// Runs the model on every frame of the stream.
std::vector<std::vector<float>> stream_probabilities(const ir::ModelGraph& g,
                                                     const LabeledStream& stream);

nlohmann::json calibration_report(const GaResult& r, const GaParams& params,
                                  const GeneBounds& bounds, int tolerance_frames);

}  // namespace tinyforge::calibrate
