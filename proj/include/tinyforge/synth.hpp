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
#include <string>
#include <vector>

#include "tinyforge/project.hpp"

namespace tinyforge::synth {

/// Tone dataset: each class is a sinusoid whose frequency is drawn from its
/// own band (centres log-spaced between 300 Hz and 3 kHz, +-10% jitter),
/// with a weaker second harmonic, a random amplitude and white noise.
struct ToneDatasetOptions {
  std::vector<std::string> classes = {"low", "mid", "high"};
  int per_class = 30;
  int sample_rate_hz = 16000;
  double duration_s = 1.0;
  double noise_std = 0.05;
  std::uint64_t seed = 7;
};

/// Centre frequency of class `index` out of `count`.
double tone_band_centre(int index, int count);

/// One sample, already passed through PCM16 encoding so it equals what
/// ingesting the WAV file gives back.
project::Sample make_tone(double freq_hz, double amplitude, const ToneDatasetOptions& opts,
                          std::uint64_t seed, const std::string& label);

/// Every sample starts in the train split. WAV bytes are in `wav`, aligned
/// with `dataset.samples`.
struct ToneDataset {
  project::Dataset dataset;
  std::vector<std::vector<std::uint8_t>> wav;
};

ToneDataset make_tone_dataset(const ToneDatasetOptions& opts);

}  // namespace tinyforge::synth
