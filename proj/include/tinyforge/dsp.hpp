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

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinyforge/common.hpp"
#include "tinyforge/project.hpp"

namespace tinyforge::dsp {

enum class Block { kRaw, kMfe, kMfcc };

std::string to_string(Block block);
Block block_from_string(const std::string& s);

struct DspConfig {
  Block block = Block::kMfe;
  double frame_length_s = 0.02;
  double frame_stride_s = 0.01;
  // 0 selects the next power of two >= frame samples.
  int fft_size = 0;
  int num_mel_filters = 40;
  int num_cepstral_coeffs = 13;
  double low_freq_hz = 0.0;
  // 0 selects the Nyquist frequency.
  double high_freq_hz = 0.0;
  double noise_floor_db = -52.0;
  double window_size_s = 1.0;
  bool apply_window = true;

  int frame_samples(int sample_rate_hz) const;
  int stride_samples(int sample_rate_hz) const;
  int window_samples(int sample_rate_hz) const;
  int resolved_fft_size(int sample_rate_hz) const;
  double resolved_high_freq(int sample_rate_hz) const;

  /// Throws ValidationError when an invariant does not hold at this rate.
  void validate(int sample_rate_hz) const;

  /// "MFE (0.02, 0.01, 40)" style label used in reports.
  std::string describe() const;
};

void to_json(nlohmann::json& j, const DspConfig& c);
void from_json(const nlohmann::json& j, DspConfig& c);

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  std::span<const double> row(std::size_t r) const {
    return std::span(values).subspan(r * cols, cols);
  }
  std::vector<float> as_float() const {
    return {values.begin(), values.end()};
  }
};

/// 1 + floor((window - frame) / stride), or 0 when the window is shorter
/// than one frame.
std::size_t frame_count(std::size_t window_samples, std::size_t frame_samples,
                        std::size_t stride_samples);

/// Contiguous, unpadded frames. Throws when the signal is shorter than a frame.
std::vector<std::vector<double>> frame_signal(std::span<const double> x,
                                              const DspConfig& cfg,
                                              int sample_rate_hz);

/// Hann window 0.5 - 0.5 cos(2 pi n / (N - 1)).
std::vector<double> hann_window(std::size_t n);

bool is_power_of_two(std::size_t n);

/// In-place iterative radix-2 complex FFT (forward, no scaling).
void fft_inplace(std::span<std::complex<double>> data);

/// Spectrum X_0..X_{N/2} of a real sequence of power-of-two length N,
/// computed with one N/2-point complex FFT plus a split step.
std::vector<std::complex<double>> real_fft(std::span<const double> x);

/// One-sided power spectrum p_k = |X_k|^2 / fft_size, k = 0..fft_size/2.
/// The frame is windowed (optionally) and zero-padded to fft_size.
///
/// With the window disabled, Parseval reads
///   sum_n x_n^2 = p_0 + p_{N/2} + 2 * sum_{k=1}^{N/2-1} p_k.
std::vector<double> fft_power_spectrum(std::span<const double> frame,
                                       int fft_size, bool apply_window = true);

/// mel(f) = 2595 log10(1 + f / 700)
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filter weights, [num_mel_filters x (fft_size/2 + 1)].
/// Throws when a filter half-width is narrower than one FFT bin.
std::vector<std::vector<double>> mel_filter_weights(const DspConfig& cfg,
                                                    int sample_rate_hz);

/// Log mel energies in dB, each floored at noise_floor_db.
std::vector<double> mel_filterbank(std::span<const double> power,
                                   const DspConfig& cfg, int sample_rate_hz);

/// Orthonormal DCT-II of `log_mel`, truncated to the first `num_coeffs`.
std::vector<double> mfcc(std::span<const double> log_mel, int num_coeffs);

/// Inverse of the orthonormal DCT-II (DCT-III), output length `n`.
std::vector<double> inverse_dct(std::span<const double> coeffs, std::size_t n);

/// Runs one DSP block over a sample. Only the first window_size_s seconds
/// are used; shorter samples are zero-padded to the window.
FeatureMatrix dsp_process(const project::Sample& sample, const DspConfig& cfg);

/// Output shape for a given input shape, without computing features.
std::pair<std::size_t, std::size_t> feature_shape(const DspConfig& cfg,
                                                  int sample_rate_hz,
                                                  int channels);

/// Processes many samples; OpenMP-parallel over samples.
std::vector<FeatureMatrix> dsp_process_batch(
    std::span<const project::Sample> samples, const DspConfig& cfg);

/// Row-major CSV export.
std::string features_to_csv(const FeatureMatrix& m);

}  // namespace tinyforge::dsp
