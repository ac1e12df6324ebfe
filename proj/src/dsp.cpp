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

#include "tinyforge/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace tinyforge::dsp {

std::string to_string(Block block) {
  switch (block) {
    case Block::kRaw: return "raw";
    case Block::kMfe: return "mfe";
    case Block::kMfcc: return "mfcc";
  }
  return "?";
}

Block block_from_string(const std::string& s) {
  if (s == "raw") return Block::kRaw;
  if (s == "mfe") return Block::kMfe;
  if (s == "mfcc") return Block::kMfcc;
  throw Error("unknown dsp block '" + s + "'");
}

int DspConfig::frame_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(frame_length_s * sample_rate_hz));
}

int DspConfig::stride_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(frame_stride_s * sample_rate_hz));
}

int DspConfig::window_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(window_size_s * sample_rate_hz));
}

int DspConfig::resolved_fft_size(int sample_rate_hz) const {
  if (fft_size > 0) return fft_size;
  int n = 1;
  while (n < frame_samples(sample_rate_hz)) n <<= 1;
  return n;
}

double DspConfig::resolved_high_freq(int sample_rate_hz) const {
  return high_freq_hz > 0.0 ? high_freq_hz : sample_rate_hz / 2.0;
}

void DspConfig::validate(int sample_rate_hz) const {
  auto fail = [](const std::string& m) { throw ValidationError("dsp config: " + m); };
  if (sample_rate_hz <= 0) fail("sample rate must be positive");
  if (!(window_size_s > 0)) fail("window_size_s must be > 0");
  if (block == Block::kRaw) return;
  if (!(frame_length_s > 0) || !(frame_stride_s > 0)) {
    fail("frame length and stride must be > 0");
  }
  if (frame_samples(sample_rate_hz) < 1 || stride_samples(sample_rate_hz) < 1) {
    fail("frame or stride shorter than one sample");
  }
  const int n_fft = resolved_fft_size(sample_rate_hz);
  if (!is_power_of_two(static_cast<std::size_t>(n_fft))) {
    fail("fft_size " + std::to_string(n_fft) + " is not a power of two");
  }
  if (frame_samples(sample_rate_hz) > n_fft) {
    fail("frame of " + std::to_string(frame_samples(sample_rate_hz)) +
         " samples exceeds fft_size " + std::to_string(n_fft));
  }
  if (frame_samples(sample_rate_hz) > window_samples(sample_rate_hz)) {
    fail("frame longer than the analysis window");
  }
  if (num_mel_filters < 2) fail("num_mel_filters must be >= 2");
  if (block == Block::kMfcc &&
      (num_cepstral_coeffs < 1 || num_cepstral_coeffs > num_mel_filters)) {
    fail("num_cepstral_coeffs must lie in [1, num_mel_filters]");
  }
  const double high = resolved_high_freq(sample_rate_hz);
  if (!(low_freq_hz >= 0.0 && low_freq_hz < high && high <= sample_rate_hz / 2.0)) {
    fail("need 0 <= low_freq_hz < high_freq_hz <= sample_rate / 2");
  }
}

std::string DspConfig::describe() const {
  std::ostringstream out;
  if (block == Block::kRaw) return "Raw";
  out << (block == Block::kMfe ? "MFE" : "MFCC") << " (" << frame_length_s
      << ", " << frame_stride_s << ", " << num_mel_filters << ")";
  return out.str();
}

void to_json(nlohmann::json& j, const DspConfig& c) {
  j = nlohmann::json{{"block", to_string(c.block)},
                     {"frame_length_s", c.frame_length_s},
                     {"frame_stride_s", c.frame_stride_s},
                     {"fft_size", c.fft_size},
                     {"num_mel_filters", c.num_mel_filters},
                     {"num_cepstral_coeffs", c.num_cepstral_coeffs},
                     {"low_freq_hz", c.low_freq_hz},
                     {"high_freq_hz", c.high_freq_hz},
                     {"noise_floor_db", c.noise_floor_db},
                     {"window_size_s", c.window_size_s},
                     {"apply_window", c.apply_window}};
}

void from_json(const nlohmann::json& j, DspConfig& c) {
  DspConfig d;
  c.block = block_from_string(j.value("block", to_string(d.block)));
  c.frame_length_s = j.value("frame_length_s", d.frame_length_s);
  c.frame_stride_s = j.value("frame_stride_s", d.frame_stride_s);
  c.fft_size = j.value("fft_size", d.fft_size);
  c.num_mel_filters = j.value("num_mel_filters", d.num_mel_filters);
  c.num_cepstral_coeffs = j.value("num_cepstral_coeffs", d.num_cepstral_coeffs);
  c.low_freq_hz = j.value("low_freq_hz", d.low_freq_hz);
  c.high_freq_hz = j.value("high_freq_hz", d.high_freq_hz);
  c.noise_floor_db = j.value("noise_floor_db", d.noise_floor_db);
  c.window_size_s = j.value("window_size_s", d.window_size_s);
  c.apply_window = j.value("apply_window", d.apply_window);
}

std::size_t frame_count(std::size_t window_samples, std::size_t frame_samples,
                        std::size_t stride_samples) {
  if (frame_samples == 0 || stride_samples == 0 || window_samples < frame_samples) {
    return 0;
  }
  return 1 + (window_samples - frame_samples) / stride_samples;
}

std::vector<std::vector<double>> frame_signal(std::span<const double> x,
                                              const DspConfig& cfg,
                                              int sample_rate_hz) {
  const auto frame = static_cast<std::size_t>(cfg.frame_samples(sample_rate_hz));
  const auto stride = static_cast<std::size_t>(cfg.stride_samples(sample_rate_hz));
  if (frame == 0 || stride == 0) throw Error("frame and stride must be >= 1 sample");
  if (x.size() < frame) {
    throw Error("signal of " + std::to_string(x.size()) +
                " samples is shorter than one frame (" + std::to_string(frame) + ")");
  }
  const std::size_t n = frame_count(x.size(), frame, stride);
  std::vector<std::vector<double>> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto begin = x.begin() + static_cast<std::ptrdiff_t>(i * stride);
    frames.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(frame));
  }
  return frames;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  }
  return w;
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> a) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw Error("fft length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t k = 0; k < len / 2; ++k) {
      // Twiddles from the closed form, not by repeated multiplication, to
      // keep the error at O(eps log n).
      const std::complex<double> w(std::cos(ang * static_cast<double>(k)),
                                   std::sin(ang * static_cast<double>(k)));
      for (std::size_t i = 0; i < n; i += len) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<std::complex<double>> real_fft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw Error("fft length must be a power of two");
  if (n == 1) return {std::complex<double>(x[0], 0.0)};
  const std::size_t half = n / 2;
  std::vector<std::complex<double>> z(half);
  for (std::size_t i = 0; i < half; ++i) z[i] = {x[2 * i], x[2 * i + 1]};
  fft_inplace(z);
  std::vector<std::complex<double>> out(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    const auto zk = z[k % half];
    const auto zc = std::conj(z[(half - k) % half]);
    const auto even = 0.5 * (zk + zc);
    const auto odd = std::complex<double>(0.0, -0.5) * (zk - zc);
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    out[k] = even + std::complex<double>(std::cos(ang), std::sin(ang)) * odd;
  }
  return out;
}

std::vector<double> fft_power_spectrum(std::span<const double> frame,
                                       int fft_size, bool apply_window) {
  if (fft_size <= 0 || !is_power_of_two(static_cast<std::size_t>(fft_size))) {
    throw Error("fft_size " + std::to_string(fft_size) + " is not a power of two");
  }
  const auto n = static_cast<std::size_t>(fft_size);
  if (frame.size() > n) throw Error("frame longer than fft_size");
  std::vector<double> buf(n, 0.0);
  std::copy(frame.begin(), frame.end(), buf.begin());
  if (apply_window) {
    const auto w = hann_window(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] *= w[i];
  }
  const auto spec = real_fft(buf);
  std::vector<double> power(n / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    power[k] = std::norm(spec[k]) / static_cast<double>(n);
  }
  return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filter_weights(const DspConfig& cfg,
                                                    int sample_rate_hz) {
  const int n_fft = cfg.resolved_fft_size(sample_rate_hz);
  const std::size_t bins = static_cast<std::size_t>(n_fft) / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate_hz) / n_fft;
  const int m = cfg.num_mel_filters;
  const double mel_lo = hz_to_mel(cfg.low_freq_hz);
  const double mel_hi = hz_to_mel(cfg.resolved_high_freq(sample_rate_hz));
  std::vector<double> edges(static_cast<std::size_t>(m) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (m + 1));
  }
  std::vector<std::vector<double>> w(static_cast<std::size_t>(m),
                                     std::vector<double>(bins, 0.0));
  for (int f = 0; f < m; ++f) {
    const double left = edges[f], center = edges[f + 1], right = edges[f + 2];
    if (center - left < bin_hz || right - center < bin_hz) {
      throw ValidationError("mel filter " + std::to_string(f) +
                            " spans less than one FFT bin; use fewer filters "
                            "or a larger fft_size");
    }
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * bin_hz;
      if (hz > left && hz < center) {
        w[f][k] = (hz - left) / (center - left);
      } else if (hz >= center && hz < right) {
        w[f][k] = (right - hz) / (right - center);
      }
    }
  }
  return w;
}

namespace {

std::vector<double> apply_filterbank(std::span<const double> power,
                                     const std::vector<std::vector<double>>& w,
                                     double noise_floor_db) {
  const double floor = std::pow(10.0, noise_floor_db / 10.0);
  std::vector<double> out(w.size());
  for (std::size_t f = 0; f < w.size(); ++f) {
    double e = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) e += w[f][k] * power[k];
    out[f] = 10.0 * std::log10(std::max(e, floor));
  }
  return out;
}

}  // namespace

std::vector<double> mel_filterbank(std::span<const double> power,
                                   const DspConfig& cfg, int sample_rate_hz) {
  const auto w = mel_filter_weights(cfg, sample_rate_hz);
  if (power.size() != w.front().size()) {
    throw Error("power spectrum length does not match fft_size");
  }
  return apply_filterbank(power, w, cfg.noise_floor_db);
}

std::vector<double> mfcc(std::span<const double> log_mel, int num_coeffs) {
  const std::size_t n = log_mel.size();
  if (num_coeffs < 1 || static_cast<std::size_t>(num_coeffs) > n) {
    throw Error("num_cepstral_coeffs must lie in [1, number of filters]");
  }
  std::vector<double> out(static_cast<std::size_t>(num_coeffs));
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += log_mel[i] * std::cos(std::numbers::pi * static_cast<double>(k) *
                                   (2.0 * static_cast<double>(i) + 1.0) /
                                   (2.0 * static_cast<double>(n)));
    }
    out[k] = scale * acc;
  }
  return out;
}

std::vector<double> inverse_dct(std::span<const double> coeffs, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
      acc += scale * coeffs[k] *
             std::cos(std::numbers::pi * static_cast<double>(k) *
                      (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n)));
    }
    out[i] = acc;
  }
  return out;
}

std::pair<std::size_t, std::size_t> feature_shape(const DspConfig& cfg,
                                                  int sample_rate_hz,
                                                  int channels) {
  const auto window = static_cast<std::size_t>(cfg.window_samples(sample_rate_hz));
  if (cfg.block == Block::kRaw) {
    return {1, window * static_cast<std::size_t>(channels)};
  }
  const std::size_t rows =
      frame_count(window, static_cast<std::size_t>(cfg.frame_samples(sample_rate_hz)),
                  static_cast<std::size_t>(cfg.stride_samples(sample_rate_hz)));
  const auto cols = static_cast<std::size_t>(
      cfg.block == Block::kMfe ? cfg.num_mel_filters : cfg.num_cepstral_coeffs);
  return {rows, cols};
}

FeatureMatrix dsp_process(const project::Sample& sample, const DspConfig& cfg) {
  const int sr = sample.sample_rate_hz;
  cfg.validate(sr);
  const auto window = static_cast<std::size_t>(cfg.window_samples(sr));
  const auto ch = static_cast<std::size_t>(sample.channels);

  // Fit the sample to exactly one analysis window.
  std::vector<double> signal(window * ch, 0.0);
  std::copy_n(sample.data.begin(), std::min(sample.data.size(), signal.size()),
              signal.begin());

  FeatureMatrix out;
  if (cfg.block == Block::kRaw) {
    out.rows = 1;
    out.cols = signal.size();
    out.values = std::move(signal);
    return out;
  }
  if (sample.channels != 1) {
    throw Error("the " + to_string(cfg.block) + " block needs a single-channel sample");
  }
  const int n_fft = cfg.resolved_fft_size(sr);
  const auto weights = mel_filter_weights(cfg, sr);
  const auto frames = frame_signal(signal, cfg, sr);
  out.rows = frames.size();
  out.cols = static_cast<std::size_t>(
      cfg.block == Block::kMfe ? cfg.num_mel_filters : cfg.num_cepstral_coeffs);
  out.values.reserve(out.rows * out.cols);
  for (const auto& frame : frames) {
    const auto power = fft_power_spectrum(frame, n_fft, cfg.apply_window);
    auto mel = apply_filterbank(power, weights, cfg.noise_floor_db);
    if (cfg.block == Block::kMfcc) mel = mfcc(mel, cfg.num_cepstral_coeffs);
    out.values.insert(out.values.end(), mel.begin(), mel.end());
  }
  return out;
}

std::vector<FeatureMatrix> dsp_process_batch(
    std::span<const project::Sample> samples, const DspConfig& cfg) {
  std::vector<FeatureMatrix> out(samples.size());
  std::vector<std::string> errors(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = dsp_process(samples[static_cast<std::size_t>(i)], cfg);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      throw Error("sample '" + samples[i].id + "': " + errors[i]);
    }
  }
  return out;
}

std::string features_to_csv(const FeatureMatrix& m) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out << ',';
      out << m.values[r * m.cols + c];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace tinyforge::dsp
