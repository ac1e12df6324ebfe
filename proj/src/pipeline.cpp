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

#include "tinyforge/pipeline.hpp"

#include <algorithm>
#include <set>

#include "tinyforge/interp.hpp"

namespace tinyforge::pipeline {

using nlohmann::json;

void ProjectConfig::validate() const {
  if (classes.empty()) throw ValidationError("project has no classes; ingest samples first");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (c.empty()) throw ValidationError("empty class name");
    if (!seen.insert(c).second) throw ValidationError("duplicate class '" + c + "'");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie in (0, 1)");
  }
  estimate::load_profile(profile);
  if (!model_template.empty()) trainer::parse_descriptor(model_template);
}

ProjectConfig default_config(trainer::DataKind kind) {
  ProjectConfig c;
  c.data_kind = kind;
  c.model_template = trainer::default_descriptor(kind);
  if (kind == trainer::DataKind::kTimeseries) {
    c.dsp.block = dsp::Block::kRaw;
    c.dsp.window_size_s = 2.0;
  }
  return c;
}

json to_json(const estimate::Constraints& c) {
  json j = json::object();
  j["ram_bytes"] = c.ram_bytes ? json(*c.ram_bytes) : json(nullptr);
  j["flash_bytes"] = c.flash_bytes ? json(*c.flash_bytes) : json(nullptr);
  j["latency_ms"] = c.latency_ms ? json(*c.latency_ms) : json(nullptr);
  return j;
}

estimate::Constraints constraints_from_json(const json& j) {
  estimate::Constraints c;
  if (j.contains("ram_bytes") && !j["ram_bytes"].is_null()) c.ram_bytes = j["ram_bytes"].get<std::int64_t>();
  if (j.contains("flash_bytes") && !j["flash_bytes"].is_null()) c.flash_bytes = j["flash_bytes"].get<std::int64_t>();
  if (j.contains("latency_ms") && !j["latency_ms"].is_null()) c.latency_ms = j["latency_ms"].get<double>();
  return c;
}

json project_json(const ProjectConfig& c) {
  return {{"classes", c.classes},
          {"seed", c.seed},
          {"data_kind", trainer::to_string(c.data_kind)},
          {"profile", c.profile},
          {"constraints", to_json(c.constraints)},
          {"test_fraction", c.test_fraction},
          {"csv_sample_rate_hz", c.csv_sample_rate_hz}};
}

json impulse_json(const ProjectConfig& c) {
  return {{"dsp", c.dsp}, {"model_template", c.model_template}};
}

namespace {

json read_json(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) throw Error("missing " + p.string() + "; " + hint);
  try {
    return json::parse(project::read_text(p));
  } catch (const json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

}  // namespace

ProjectConfig load_config(const project::ProjectFiles& files) {
  const json pj = read_json(files.project_json(), "run 'tinyforge init' first");
  const json ij = read_json(files.impulse_json(), "run 'tinyforge init' first");
  ProjectConfig c;
  try {
    c.classes = pj.value("classes", std::vector<std::string>{});
    c.seed = pj.value("seed", std::uint64_t{1});
    c.data_kind = trainer::data_kind_from_string(pj.value("data_kind", std::string("audio")));
    c.profile = pj.value("profile", std::string("nano33"));
    if (pj.contains("constraints")) c.constraints = constraints_from_json(pj["constraints"]);
    c.test_fraction = pj.value("test_fraction", 0.2);
    c.csv_sample_rate_hz = pj.value("csv_sample_rate_hz", 100);
    c.dsp = ij.at("dsp").get<dsp::DspConfig>();
    c.model_template = ij.value("model_template", std::string());
  } catch (const json::exception& e) {
    throw ParseError("project config: " + std::string(e.what()));
  }
  return c;
}

void save_config(const project::ProjectFiles& files, const ProjectConfig& c) {
  project::write_text(files.project_json(), project_json(c).dump(2) + "\n");
  project::write_text(files.impulse_json(), impulse_json(c).dump(2) + "\n");
}

SignalShape signal_shape(const project::Dataset& ds) {
  SignalShape s;
  for (const auto& x : ds.samples) {
    if (s.sample_rate_hz == 0) {
      s.sample_rate_hz = x.sample_rate_hz;
      s.channels = x.channels;
    } else if (x.sample_rate_hz != s.sample_rate_hz || x.channels != s.channels) {
      throw ValidationError("sample " + x.id + " has " + std::to_string(x.sample_rate_hz) + " Hz x " +
                            std::to_string(x.channels) + " ch; the dataset uses " +
                            std::to_string(s.sample_rate_hz) + " Hz x " +
                            std::to_string(s.channels) + " ch");
    }
  }
  if (s.sample_rate_hz == 0) throw Error("dataset is empty; ingest samples first");
  return s;
}

trainer::LabeledFeatures split_features(const project::Dataset& ds, const dsp::DspConfig& cfg,
                                        project::Split split) {
  std::vector<project::Sample> picked;
  trainer::LabeledFeatures lf;
  for (const auto& s : ds.samples) {
    if (s.split != split) continue;
    picked.push_back(s);
    lf.y.push_back(ds.class_index(s.label));
  }
  for (const auto& m : dsp::dsp_process_batch(picked, cfg)) lf.x.push_back(m.as_float());
  return lf;
}

namespace {

void save_fvf(const std::filesystem::path& p, const trainer::LabeledFeatures& lf, std::size_t len) {
  interp::FeatureVectors fv;
  fv.len = static_cast<std::uint32_t>(len);
  fv.vectors = lf.x;
  project::write_file(p, interp::encode_fvf(fv));
}

}  // namespace

void save_features(const project::ProjectFiles& files, const FeatureSet& fs) {
  const auto dir = files.artifacts_dir();
  std::filesystem::create_directories(dir);
  save_fvf(dir / "features_train.fvf", fs.train, fs.rows * fs.cols);
  save_fvf(dir / "features_test.fvf", fs.test, fs.rows * fs.cols);
  const json meta = {{"dsp", fs.dsp},
                     {"classes", fs.classes},
                     {"sample_rate_hz", fs.shape.sample_rate_hz},
                     {"channels", fs.shape.channels},
                     {"rows", fs.rows},
                     {"cols", fs.cols},
                     {"train_labels", fs.train.y},
                     {"test_labels", fs.test.y}};
  project::write_text(dir / "features.json", meta.dump(2) + "\n");
}

FeatureSet load_features(const project::ProjectFiles& files, const dsp::DspConfig& expected) {
  const auto dir = files.artifacts_dir();
  const json meta = read_json(dir / "features.json", "run 'tinyforge dsp' first");
  FeatureSet fs;
  try {
    fs.dsp = meta.at("dsp").get<dsp::DspConfig>();
    fs.classes = meta.at("classes").get<std::vector<std::string>>();
    fs.shape.sample_rate_hz = meta.at("sample_rate_hz").get<int>();
    fs.shape.channels = meta.at("channels").get<int>();
    fs.rows = meta.at("rows").get<std::size_t>();
    fs.cols = meta.at("cols").get<std::size_t>();
    fs.train.y = meta.at("train_labels").get<std::vector<int>>();
    fs.test.y = meta.at("test_labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError("features.json: " + std::string(e.what()));
  }
  if (json(fs.dsp) != json(expected)) {
    throw Error("artifacts/features.json was computed with a different DSP config; rerun 'tinyforge dsp'");
  }
  for (auto [name, lf] : {std::pair{"features_train.fvf", &fs.train}, {"features_test.fvf", &fs.test}}) {
    const auto p = dir / name;
    if (!std::filesystem::exists(p)) throw Error("missing " + p.string() + "; run 'tinyforge dsp' first");
    auto fv = interp::decode_fvf(project::read_file(p));
    if (fv.vectors.size() != lf->y.size() || (fv.len != fs.rows * fs.cols && !fv.vectors.empty())) {
      throw Error(p.string() + " does not match features.json; rerun 'tinyforge dsp'");
    }
    lf->x = std::move(fv.vectors);
  }
  return fs;
}

}  // namespace tinyforge::pipeline
