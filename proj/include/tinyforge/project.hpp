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
#include <span>
#include <string>
#include <vector>

#include "tinyforge/common.hpp"

namespace tinyforge::project {

enum class Split { kTrain, kTest };
enum class SampleFormat { kCsv, kWav, kJson };

std::string to_string(Split split);
Split split_from_string(const std::string& s);
std::string to_string(SampleFormat format);
SampleFormat format_from_string(const std::string& s);

struct Sample {
  std::string id;
  std::string label;
  Split split = Split::kTrain;
  int sample_rate_hz = 0;
  int channels = 0;
  // Row-major [num_frames x channels].
  std::vector<double> data;
  std::map<std::string, std::string> metadata;

  std::size_t num_frames() const {
    return channels > 0 ? data.size() / static_cast<std::size_t>(channels) : 0;
  }
  double duration_s() const {
    return static_cast<double>(num_frames()) / sample_rate_hz;
  }
  /// Single channel view; throws for multi-channel samples.
  std::span<const double> mono() const;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> classes;

  /// Checks the dataset invariants; throws ValidationError.
  void validate() const;
  int class_index(const std::string& label) const;
};

struct IngestOptions {
  // CSV files carry no rate; this one is used for them.
  int csv_sample_rate_hz = 100;
};

/// Parses the raw bytes of a sample file. The id is a prefix of the SHA-256
/// of `bytes`, so identical content always yields the same id.
Sample parse_sample(std::span<const std::uint8_t> bytes, SampleFormat format,
                    const std::string& label, Split split,
                    const IngestOptions& options = {});

Sample ingest(const std::filesystem::path& path, SampleFormat format,
              const std::string& label, Split split,
              const IngestOptions& options = {});

/// Deduces the format from a file extension (.csv, .wav, .json). Image and
/// CBOR extensions raise UnsupportedFormatError.
SampleFormat format_from_extension(const std::filesystem::path& path);

std::string content_id(std::span<const std::uint8_t> bytes);

/// PCM16 mono/any-rate WAV encoder, used by the synthetic data generators.
std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples,
                                           int sample_rate_hz);

/// Stratified split: per class, round(test_fraction * n) samples (clamped to
/// [1, n-1]) go to the test split. Deterministic for a fixed seed and
/// independent of input sample order.
Dataset split_dataset(const Dataset& ds, double test_fraction,
                      std::uint64_t seed);

struct ClassStats {
  std::string label;
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + test; }
};

struct DatasetStats {
  std::vector<ClassStats> per_class;
  std::size_t total_samples = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  double total_duration_s = 0.0;

  std::size_t count(const std::string& label) const;
};

DatasetStats dataset_stats(const Dataset& ds);

// Project directory persistence.

struct ProjectFiles {
  std::filesystem::path root;

  std::filesystem::path project_json() const { return root / "project.json"; }
  std::filesystem::path impulse_json() const { return root / "impulse.json"; }
  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path artifacts_dir() const { return root / "artifacts"; }
  std::filesystem::path deploy_dir() const { return root / "deploy"; }
  std::filesystem::path reports_dir() const { return root / "reports"; }
};

/// Stores the original file bytes under dataset/<split>/<label>/<id>.<ext>.
std::filesystem::path store_sample_file(const ProjectFiles& files,
                                        const Sample& sample,
                                        std::span<const std::uint8_t> bytes,
                                        SampleFormat format);

/// Loads every sample under dataset/. Classes come from `classes`; labels
/// not listed there are appended in sorted order.
Dataset load_dataset(const ProjectFiles& files,
                     const std::vector<std::string>& classes,
                     const IngestOptions& options = {});

/// Moves stored files so their directory matches each sample's split.
void apply_split_on_disk(const ProjectFiles& files, const Dataset& ds);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tinyforge::project
