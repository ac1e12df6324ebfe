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

#include "tinyforge/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace tinyforge::synth {

double tone_band_centre(int index, int count) {
  if (count <= 1) return 1000.0;
  return 300.0 * std::pow(10.0, static_cast<double>(index) / (count - 1));
}

namespace {

std::vector<double> tone_signal(double freq_hz, double amplitude, const ToneDatasetOptions& opts,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, opts.noise_std);
  const auto n = static_cast<std::size_t>(std::lround(opts.duration_s * opts.sample_rate_hz));
  const double p1 = phase(rng), p2 = phase(rng);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / opts.sample_rate_hz;
    x[i] = amplitude * (std::sin(2.0 * std::numbers::pi * freq_hz * t + p1) +
                        0.3 * std::sin(4.0 * std::numbers::pi * freq_hz * t + p2)) +
           noise(rng);
  }
  return x;
}

}  // namespace

project::Sample make_tone(double freq_hz, double amplitude, const ToneDatasetOptions& opts,
                          std::uint64_t seed, const std::string& label) {
  const auto wav = project::encode_wav_pcm16(tone_signal(freq_hz, amplitude, opts, seed),
                                             opts.sample_rate_hz);
  return project::parse_sample(wav, project::SampleFormat::kWav, label, project::Split::kTrain);
}

ToneDataset make_tone_dataset(const ToneDatasetOptions& opts) {
  if (opts.classes.size() < 2) throw Error("tone dataset needs at least 2 classes");
  if (opts.per_class < 2) throw Error("tone dataset needs at least 2 samples per class");
  ToneDataset out;
  out.dataset.classes = opts.classes;
  const int k = static_cast<int>(opts.classes.size());
  for (int c = 0; c < k; ++c) {
    std::mt19937_64 rng(mix_seed(opts.seed, static_cast<std::uint64_t>(c)));
    std::uniform_real_distribution<double> jitter(0.9, 1.1), amp(0.2, 0.6);
    for (int i = 0; i < opts.per_class; ++i) {
      const double f = tone_band_centre(c, k) * jitter(rng);
      const double a = amp(rng);
      const std::uint64_t s = rng();
      const auto wav =
          project::encode_wav_pcm16(tone_signal(f, a, opts, s), opts.sample_rate_hz);
      out.dataset.samples.push_back(project::parse_sample(
          wav, project::SampleFormat::kWav, opts.classes[static_cast<std::size_t>(c)],
          project::Split::kTrain));
      out.wav.push_back(wav);
    }
  }
  return out;
}

}  // namespace tinyforge::synth
