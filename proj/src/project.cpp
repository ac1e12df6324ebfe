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

#include "tinyforge/project.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tinyforge::project {
namespace fs = std::filesystem;

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw Error("unknown split '" + s + "' (expected train or test)");
}

std::string to_string(SampleFormat format) {
  switch (format) {
    case SampleFormat::kCsv: return "csv";
    case SampleFormat::kWav: return "wav";
    case SampleFormat::kJson: return "json";
  }
  return "?";
}

SampleFormat format_from_string(const std::string& s) {
  if (s == "csv") return SampleFormat::kCsv;
  if (s == "wav") return SampleFormat::kWav;
  if (s == "json") return SampleFormat::kJson;
  if (s == "cbor" || s == "jpg" || s == "jpeg" || s == "png") {
    throw UnsupportedFormatError("format '" + s +
                                 "' is unsupported in this artifact");
  }
  throw UnsupportedFormatError("unknown sample format '" + s + "'");
}

SampleFormat format_from_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  if (!ext.empty() && ext[0] == '.') ext.erase(0, 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return format_from_string(ext);
}

std::span<const double> Sample::mono() const {
  if (channels != 1) {
    throw Error("sample '" + id + "' has " + std::to_string(channels) +
                " channels; a single channel is required");
  }
  return data;
}

std::string content_id(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  std::ostringstream out;
  for (int i = 0; i < 8; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0')
        << static_cast<int>(digest[i]);
  }
  return out.str();
}

namespace {

void check_finite(const Sample& s) {
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    if (!std::isfinite(s.data[i])) {
      throw ParseError("non-finite value at element " + std::to_string(i));
    }
  }
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool is_time_column(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return name == "t" || name == "time" || name == "timestamp";
}

void parse_csv(std::string_view text, Sample& s, int sample_rate_hz) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  std::vector<bool> keep;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (keep.empty()) {
      width = cells.size();
      for (const auto& name : cells) keep.push_back(!is_time_column(name));
      s.channels = static_cast<int>(std::count(keep.begin(), keep.end(), true));
      if (s.channels == 0) {
        throw ParseError("csv line 1: no data columns besides time");
      }
      continue;
    }
    if (cells.size() != width) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " columns, got " +
                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (!keep[c]) continue;
      const std::string& cell = cells[c];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw ParseError("csv line " + std::to_string(line_no) + ", column " +
                         std::to_string(c + 1) + ": not a number '" + cell +
                         "'");
      }
      s.data.push_back(v);
    }
  }
  if (keep.empty()) throw ParseError("csv line 1: missing header");
  if (s.data.empty()) throw ParseError("csv: header but no data rows");
  s.sample_rate_hz = sample_rate_hz;
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void parse_wav(std::span<const std::uint8_t> b, Sample& s) {
  auto fail = [](std::size_t at, const std::string& what) {
    throw ParseError("wav byte " + std::to_string(at) + ": " + what);
  };
  if (b.size() < 12) fail(0, "file shorter than RIFF header");
  if (std::memcmp(b.data(), "RIFF", 4) != 0) fail(0, "missing RIFF tag");
  if (std::memcmp(b.data() + 8, "WAVE", 4) != 0) fail(8, "missing WAVE tag");

  std::size_t at = 12;
  bool have_fmt = false;
  int bits = 0;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + size > b.size()) fail(at, "chunk extends past end of file");
    if (std::memcmp(b.data() + at, "fmt ", 4) == 0) {
      if (size < 16) fail(at, "fmt chunk too small");
      const std::uint16_t audio_format = read_u16(b, body);
      const std::uint16_t channels = read_u16(b, body + 2);
      s.sample_rate_hz = static_cast<int>(read_u32(b, body + 4));
      bits = read_u16(b, body + 14);
      if (audio_format != 1) fail(body, "only PCM (format 1) is supported");
      if (bits != 16) fail(body + 14, "only 16-bit PCM is supported");
      if (channels != 1) {
        throw UnsupportedFormatError("wav with " + std::to_string(channels) +
                                     " channels is unsupported; mono only");
      }
      if (s.sample_rate_hz <= 0) fail(body + 4, "sample rate must be positive");
      s.channels = 1;
      have_fmt = true;
    } else if (std::memcmp(b.data() + at, "data", 4) == 0) {
      if (!have_fmt) fail(at, "data chunk before fmt chunk");
      if (size % 2 != 0) fail(at + 4, "odd data size for 16-bit PCM");
      s.data.reserve(size / 2);
      for (std::size_t i = 0; i < size; i += 2) {
        const auto v = static_cast<std::int16_t>(read_u16(b, body + i));
        s.data.push_back(static_cast<double>(v) / 32768.0);
      }
      if (s.data.empty()) fail(at, "empty data chunk");
      return;
    }
    at = body + size + (size & 1u);
  }
  fail(at, "no data chunk");
}

void parse_json(std::span<const std::uint8_t> b, Sample& s) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(b.begin(), b.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("json byte ") + std::to_string(e.byte) +
                     ": " + e.what());
  }
  try {
    s.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    s.channels = j.at("channels").get<int>();
    const auto& rows = j.at("data");
    if (!rows.is_array()) throw ParseError("json: 'data' must be an array");
    std::size_t row_no = 0;
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != static_cast<std::size_t>(s.channels)) {
        throw ParseError("json: data row " + std::to_string(row_no) +
                         " must hold " + std::to_string(s.channels) +
                         " values");
      }
      for (const auto& v : row) s.data.push_back(v.get<double>());
      ++row_no;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("json: ") + e.what());
  }
  if (s.sample_rate_hz <= 0) throw ParseError("json: sample_rate_hz must be > 0");
  if (s.channels <= 0) throw ParseError("json: channels must be > 0");
  if (s.data.empty()) throw ParseError("json: no data rows");
}

}  // namespace

Sample parse_sample(std::span<const std::uint8_t> bytes, SampleFormat format,
                    const std::string& label, Split split,
                    const IngestOptions& options) {
  Sample s;
  s.label = label;
  s.split = split;
  s.id = content_id(bytes);
  switch (format) {
    case SampleFormat::kCsv:
      parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                 bytes.size()),
                s, options.csv_sample_rate_hz);
      break;
    case SampleFormat::kWav:
      parse_wav(bytes, s);
      break;
    case SampleFormat::kJson:
      parse_json(bytes, s);
      break;
  }
  check_finite(s);
  s.metadata["format"] = to_string(format);
  return s;
}

Sample ingest(const fs::path& path, SampleFormat format,
              const std::string& label, Split split,
              const IngestOptions& options) {
  if (!fs::exists(path)) throw Error("no such file: " + path.string());
  const auto bytes = read_file(path);
  Sample s = parse_sample(bytes, format, label, split, options);
  s.metadata["source"] = path.filename().string();
  return s;
}

std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples,
                                           int sample_rate_hz) {
  std::vector<std::uint8_t> out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(sample_rate_hz));
  put32(static_cast<std::uint32_t>(sample_rate_hz) * 2);
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (double x : samples) {
    const double scaled = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

void Dataset::validate() const {
  if (classes.empty()) throw ValidationError("dataset has no classes");
  std::set<std::string> seen_classes(classes.begin(), classes.end());
  if (seen_classes.size() != classes.size()) {
    throw ValidationError("duplicate class names");
  }
  std::set<std::string> ids;
  std::set<std::string> with_train;
  for (const auto& s : samples) {
    if (!seen_classes.count(s.label)) {
      throw ValidationError("sample '" + s.id + "' has unknown label '" +
                            s.label + "'");
    }
    if (!ids.insert(s.id).second) {
      throw ValidationError("duplicate sample id '" + s.id + "'");
    }
    if (s.channels < 1 || s.num_frames() < 1) {
      throw ValidationError("sample '" + s.id + "' is empty");
    }
    if (s.split == Split::kTrain) with_train.insert(s.label);
  }
  for (const auto& c : classes) {
    if (!with_train.count(c)) {
      throw ValidationError("class '" + c + "' has no training samples");
    }
  }
}

int Dataset::class_index(const std::string& label) const {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw Error("unknown class '" + label + "'");
  return static_cast<int>(it - classes.begin());
}

Dataset split_dataset(const Dataset& ds, double test_fraction,
                      std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error("test_fraction must lie in (0, 1)");
  }
  Dataset out = ds;
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    by_class[out.samples[i].label].push_back(i);
  }
  std::uint64_t class_no = 0;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      throw Error("class '" + label + "' has " + std::to_string(idx.size()) +
                  " sample(s); at least 2 are needed to split");
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return out.samples[a].id < out.samples[b].id;
    });
    std::mt19937_64 rng(mix_seed(seed, class_no++));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<long>(idx.size());
    const long n_test =
        std::clamp(std::lround(test_fraction * static_cast<double>(n)), 1L, n - 1);
    for (long k = 0; k < n; ++k) {
      out.samples[idx[k]].split = k < n_test ? Split::kTest : Split::kTrain;
    }
  }
  return out;
}

std::size_t DatasetStats::count(const std::string& label) const {
  for (const auto& c : per_class) {
    if (c.label == label) return c.total();
  }
  return 0;
}

DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  for (const auto& c : ds.classes) st.per_class.push_back({c, 0, 0});
  for (const auto& s : ds.samples) {
    auto it = std::find_if(st.per_class.begin(), st.per_class.end(),
                           [&](const ClassStats& c) { return c.label == s.label; });
    if (it == st.per_class.end()) {
      st.per_class.push_back({s.label, 0, 0});
      it = std::prev(st.per_class.end());
    }
    (s.split == Split::kTrain ? it->train : it->test)++;
    (s.split == Split::kTrain ? st.train_samples : st.test_samples)++;
    st.total_duration_s += s.duration_s();
  }
  st.total_samples = ds.samples.size();
  return st;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                             text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

fs::path store_sample_file(const ProjectFiles& files, const Sample& sample,
                           std::span<const std::uint8_t> bytes,
                           SampleFormat format) {
  const fs::path path = files.dataset_dir() / to_string(sample.split) /
                        sample.label / (sample.id + "." + to_string(format));
  write_file(path, bytes);
  return path;
}

Dataset load_dataset(const ProjectFiles& files,
                     const std::vector<std::string>& classes,
                     const IngestOptions& options) {
  Dataset ds;
  ds.classes = classes;
  std::set<std::string> extra;
  std::vector<fs::path> paths;
  if (fs::exists(files.dataset_dir())) {
    for (const auto& entry : fs::recursive_directory_iterator(files.dataset_dir())) {
      if (entry.is_regular_file()) paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    const std::string label = p.parent_path().filename().string();
    const Split split = split_from_string(p.parent_path().parent_path().filename().string());
    Sample s = ingest(p, format_from_extension(p), label, split, options);
    if (std::find(classes.begin(), classes.end(), label) == classes.end()) {
      extra.insert(label);
    }
    ds.samples.push_back(std::move(s));
  }
  ds.classes.insert(ds.classes.end(), extra.begin(), extra.end());
  return ds;
}

void apply_split_on_disk(const ProjectFiles& files, const Dataset& ds) {
  for (const auto& s : ds.samples) {
    const std::string ext = s.metadata.count("format") ? s.metadata.at("format") : "wav";
    const std::string name = s.id + "." + ext;
    const fs::path want = files.dataset_dir() / to_string(s.split) / s.label / name;
    if (fs::exists(want)) continue;
    const Split other = s.split == Split::kTrain ? Split::kTest : Split::kTrain;
    const fs::path have = files.dataset_dir() / to_string(other) / s.label / name;
    if (!fs::exists(have)) throw Error("stored sample missing: " + have.string());
    fs::create_directories(want.parent_path());
    fs::rename(have, want);
  }
}

}  // namespace tinyforge::project
