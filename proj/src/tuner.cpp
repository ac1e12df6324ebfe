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

#include "tinyforge/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tinyforge/interp.hpp"
#include "tinyforge/quant.hpp"

namespace tinyforge::tuner {

using ir::DType;

std::string TrialConfig::label() const {
  return dsp.describe() + " | " + descriptor + " | " + ir::to_string(dtype);
}

TrialConfig SearchSpace::at(std::size_t index) const {
  if (index >= size()) throw Error("search space index out of range");
  const std::size_t nd = dtypes.size(), nm = model_templates.size();
  TrialConfig c;
  c.dtype = dtypes[index % nd];
  c.descriptor = model_templates[(index / nd) % nm];
  c.dsp = dsp_choices[index / (nd * nm)];
  return c;
}

void SearchSpace::validate() const {
  if (dsp_choices.empty() || model_templates.empty() || dtypes.empty()) {
    throw ValidationError("search space must have at least one DSP, model and dtype choice");
  }
  for (const auto& d : model_templates) trainer::parse_descriptor(d);
  for (auto t : dtypes) {
    if (t == DType::kI32) throw ValidationError("i32 is not a model dtype");
  }
}

namespace {

dsp::DspConfig row(dsp::Block block, double frame, double stride, int filters) {
  dsp::DspConfig c;
  c.block = block;
  c.frame_length_s = frame;
  c.frame_stride_s = stride;
  c.num_mel_filters = filters;
  c.num_cepstral_coeffs = 13;
  c.window_size_s = 1.0;
  return c;
}

}  // namespace

SearchSpace default_audio_space() {
  using dsp::Block;
  SearchSpace s;
  s.dsp_choices = {row(Block::kMfe, 0.02, 0.01, 40),   row(Block::kMfcc, 0.02, 0.01, 40),
                   row(Block::kMfcc, 0.02, 0.01, 32),  row(Block::kMfe, 0.02, 0.01, 32),
                   row(Block::kMfe, 0.02, 0.02, 32),   row(Block::kMfcc, 0.05, 0.025, 40),
                   row(Block::kMfe, 0.05, 0.025, 32),  row(Block::kMfe, 0.032, 0.016, 32)};
  s.model_templates = {"2x conv1d (1024 to 2048, no pool)", "4x conv1d (32 to 256)",
                       "4x conv1d (16 to 128)",             "3x conv1d (32 to 128)",
                       "2x conv1d (32 to 64)",              "3x conv1d (16 to 64)",
                       "2x conv1d (16 to 32)"};
  return s;
}

SearchSpace default_timeseries_space() {
  using dsp::Block;
  SearchSpace s;
  dsp::DspConfig raw;
  raw.block = Block::kRaw;
  raw.window_size_s = 1.0;
  s.dsp_choices = {raw};
  s.model_templates = {"mlp (20, 10)", "mlp (40, 20)", "mlp (16)", "mlp (64, 32, 16)"};
  return s;
}

SampleResult sample_configs(const SearchSpace& space, int n, std::uint64_t seed) {
  if (n < 1) throw Error("number of trials must be >= 1");
  space.validate();
  SampleResult r;
  const std::size_t size = space.size();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  if (static_cast<std::size_t>(n) >= size) {
    picked.resize(size);
    std::iota(picked.begin(), picked.end(), 0);
    std::shuffle(picked.begin(), picked.end(), rng);
    if (static_cast<std::size_t>(n) > size) {
      r.warnings.push_back("requested " + std::to_string(n) + " trials but the search space has " +
                           std::to_string(size) + " distinct configs; returning all of them");
    }
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, size - 1);
    std::set<std::size_t> seen;
    const long budget = 100L * n;
    for (long draws = 0; draws < budget && picked.size() < static_cast<std::size_t>(n); ++draws) {
      const std::size_t i = dist(rng);
      if (seen.insert(i).second) picked.push_back(i);
    }
    if (picked.size() < static_cast<std::size_t>(n)) {
      r.warnings.push_back("only " + std::to_string(picked.size()) +
                           " distinct configs found within the redraw budget");
    }
  }
  for (std::size_t i : picked) r.configs.push_back(space.at(i));
  return r;
}

std::string to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::kFiltered: return "filtered";
    case TrialStatus::kTrained: return "trained";
    case TrialStatus::kFailed: return "failed";
  }
  return "?";
}

ir::ModelGraph instantiate(const TrialConfig& cfg, const TrialContext& ctx, std::uint64_t seed) {
  cfg.dsp.validate(ctx.sample_rate_hz);
  const auto [rows, cols] = dsp::feature_shape(cfg.dsp, ctx.sample_rate_hz, ctx.channels);
  ir::ModelGraph g =
      trainer::init_preset(ctx.data_kind, static_cast<int>(rows), static_cast<int>(cols),
                           ctx.num_classes, seed, cfg.descriptor);
  if (cfg.dtype == DType::kI8) {
    // Structure only: unit ranges give int8 sizes without running the model.
    quant::CalibratedRanges ranges;
    for (const auto& t : g.tensors) {
      if (!g.is_weight(t.id)) ranges.activations[t.id] = {-1.0f, 1.0f};
    }
    g = quant::quantize_graph(g, ranges).graph;
  }
  return g;
}

FilterResult heuristic_filter(const std::vector<TrialConfig>& configs, const TrialContext& ctx,
                              const estimate::DeviceProfile& profile,
                              const estimate::Constraints& constraints,
                              std::uint64_t batch_seed) {
  FilterResult r;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    Trial t;
    t.id = static_cast<int>(i);
    t.config = configs[i];
    t.seed = mix_seed(batch_seed, i);
    try {
      const auto g = instantiate(t.config, ctx, t.seed);
      t.estimate = estimate::estimate(g, t.config.dsp, ctx.sample_rate_hz, ctx.channels, profile);
      const auto fit = estimate::fits_device(t.estimate, profile, constraints);
      t.violations = fit.violations;
      if (fit.fits) {
        r.kept.push_back(std::move(t));
      } else {
        t.status = TrialStatus::kFiltered;
        r.filtered.push_back(std::move(t));
      }
    } catch (const Error& e) {
      t.status = TrialStatus::kFiltered;
      t.error = e.what();
      r.filtered.push_back(std::move(t));
    }
  }
  return r;
}

namespace {

trainer::LabeledFeatures features_for(const std::vector<dsp::FeatureMatrix>& fm,
                                      const std::vector<int>& labels) {
  trainer::LabeledFeatures lf;
  for (std::size_t i = 0; i < fm.size(); ++i) {
    lf.x.push_back(fm[i].as_float());
    lf.y.push_back(labels[i]);
  }
  return lf;
}

}  // namespace

std::vector<Trial> run_trials(std::vector<Trial> kept, const project::Dataset& ds,
                              const TrialContext& ctx, const estimate::DeviceProfile& profile,
                              const trainer::TrainConfig& train_cfg, std::uint64_t batch_seed) {
  std::vector<project::Sample> train_s, test_s;
  std::vector<int> train_y, test_y;
  for (const auto& s : ds.samples) {
    const int y = ds.class_index(s.label);
    if (s.split == project::Split::kTrain) {
      train_s.push_back(s);
      train_y.push_back(y);
    } else {
      test_s.push_back(s);
      test_y.push_back(y);
    }
  }
  if (train_s.empty() || test_s.empty()) {
    throw Error("tuning needs both train and test samples; run split first");
  }

  // Features once per distinct DSP config, shared read-only by the trials.
  std::map<std::string, std::size_t> dsp_index;
  std::vector<std::pair<trainer::LabeledFeatures, trainer::LabeledFeatures>> feats;
  std::vector<std::string> dsp_errors;
  std::vector<std::size_t> trial_dsp(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::string key = nlohmann::json(kept[i].config.dsp).dump();
    auto [it, inserted] = dsp_index.try_emplace(key, feats.size());
    if (inserted) {
      try {
        feats.emplace_back(features_for(dsp::dsp_process_batch(train_s, kept[i].config.dsp), train_y),
                           features_for(dsp::dsp_process_batch(test_s, kept[i].config.dsp), test_y));
        dsp_errors.emplace_back();
      } catch (const Error& e) {
        feats.emplace_back();
        dsp_errors.emplace_back(e.what());
      }
    }
    trial_dsp[i] = it->second;
  }

  const auto n = static_cast<long>(kept.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    Trial& t = kept[static_cast<std::size_t>(i)];
    t.seed = mix_seed(batch_seed, static_cast<std::uint64_t>(t.id));
    try {
      const std::size_t d = trial_dsp[static_cast<std::size_t>(i)];
      if (!dsp_errors[d].empty()) throw Error(dsp_errors[d]);
      const auto& [tr, te] = feats[d];
      TrialConfig f32cfg = t.config;
      f32cfg.dtype = DType::kF32;
      const auto init = instantiate(f32cfg, ctx, t.seed);
      trainer::TrainConfig cfg = train_cfg;
      cfg.seed = t.seed;
      auto model = trainer::train(init, tr, cfg).model;
      if (t.config.dtype == DType::kI8) {
        const std::size_t m = std::min<std::size_t>(tr.size(), 64);
        const std::vector<std::vector<float>> rep(tr.x.begin(), tr.x.begin() + static_cast<long>(m));
        model = quant::quantize_graph(model, quant::calibrate_ranges(model, rep)).graph;
      }
      t.eval = trainer::evaluate(model, te, ctx.num_classes);
      t.accuracy = t.eval.accuracy;
      t.estimate =
          estimate::estimate(model, t.config.dsp, ctx.sample_rate_hz, ctx.channels, profile);
      t.status = TrialStatus::kTrained;
    } catch (const std::exception& e) {
      t.status = TrialStatus::kFailed;
      t.error = e.what();
    }
  }

  std::sort(kept.begin(), kept.end(), [](const Trial& a, const Trial& b) { return a.id < b.id; });
  const bool any = std::any_of(kept.begin(), kept.end(),
                               [](const Trial& t) { return t.status == TrialStatus::kTrained; });
  if (!kept.empty() && !any) {
    throw Error("every trial failed; first error: " + kept.front().error);
  }
  return kept;
}

Objective objective_from_string(const std::string& s) {
  if (s == "accuracy") return Objective::kAccuracy;
  if (s == "latency") return Objective::kLatency;
  if (s == "ram") return Objective::kRam;
  if (s == "flash") return Objective::kFlash;
  throw Error("unknown objective '" + s + "' (expected accuracy, latency, ram or flash)");
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kAccuracy: return "accuracy";
    case Objective::kLatency: return "latency";
    case Objective::kRam: return "ram";
    case Objective::kFlash: return "flash";
  }
  return "?";
}

std::vector<Trial> rank_trials(const std::vector<Trial>& trials, Objective objective) {
  std::vector<Trial> out;
  for (const auto& t : trials) {
    if (t.status == TrialStatus::kTrained) out.push_back(t);
  }
  if (out.empty()) throw Error("no trained trials to rank");
  auto key = [&](const Trial& t) -> double {
    switch (objective) {
      case Objective::kAccuracy: return -t.accuracy;
      case Objective::kLatency: return t.estimate.total_latency_ms;
      case Objective::kRam: return static_cast<double>(t.estimate.ram_bytes);
      case Objective::kFlash: return static_cast<double>(t.estimate.flash_bytes);
    }
    return 0.0;
  };
  std::stable_sort(out.begin(), out.end(), [&](const Trial& a, const Trial& b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka < kb;
    if (a.estimate.total_latency_ms != b.estimate.total_latency_ms) {
      return a.estimate.total_latency_ms < b.estimate.total_latency_ms;
    }
    return a.id < b.id;
  });
  return out;
}

nlohmann::json trial_to_json(const Trial& t) {
  nlohmann::json j = {{"trial_id", t.id},
                      {"dsp", t.config.dsp},
                      {"dsp_label", t.config.dsp.describe()},
                      {"model", t.config.descriptor},
                      {"dtype", ir::to_string(t.config.dtype)},
                      {"status", to_string(t.status)},
                      {"seed", t.seed},
                      {"estimate", t.estimate}};
  if (t.status == TrialStatus::kTrained) {
    j["accuracy"] = t.accuracy;
    j["confusion"] = t.eval.confusion;
    j["per_class_f1"] = t.eval.per_class_f1;
  }
  if (!t.violations.empty()) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : t.violations) {
      v.push_back({{"resource", x.resource}, {"value", x.value}, {"limit", x.limit},
                   {"margin", x.margin()}});
    }
    j["violations"] = v;
  }
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

nlohmann::json tuner_report_json(const std::vector<Trial>& ranked,
                                 const std::vector<Trial>& others, const std::string& profile,
                                 const estimate::Constraints& constraints, std::uint64_t seed,
                                 Objective objective) {
  nlohmann::json c = nlohmann::json::object();
  if (constraints.ram_bytes) c["ram_bytes"] = *constraints.ram_bytes;
  if (constraints.flash_bytes) c["flash_bytes"] = *constraints.flash_bytes;
  if (constraints.latency_ms) c["latency_ms"] = *constraints.latency_ms;
  nlohmann::json r = {{"profile", profile},
                      {"seed", seed},
                      {"objective", to_string(objective)},
                      {"constraints", c},
                      {"ranked", nlohmann::json::array()},
                      {"other_trials", nlohmann::json::array()}};
  for (const auto& t : ranked) r["ranked"].push_back(trial_to_json(t));
  for (const auto& t : others) r["other_trials"].push_back(trial_to_json(t));
  return r;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double round_to(double v, int digits) {
  const double s = std::pow(10.0, digits);
  return std::round(v * s) / s;
}

}  // namespace

std::string tuner_report_markdown(const std::vector<Trial>& ranked) {
  std::ostringstream os;
  os << "| Trial | Preprocessing | Model | Dtype | Acc. | Latency DSP (ms) | Latency NN (ms) "
        "| Latency total (ms) | RAM DSP (kB) | RAM NN (kB) | RAM total (kB) | Flash (kB) |\n"
     << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& t : ranked) {
    const auto& e = t.estimate;
    const double ld = round_to(e.dsp_latency_ms, 3), ln = round_to(e.nn_latency_ms, 3);
    const double rd = round_to(static_cast<double>(e.dsp_ram_bytes) / 1024.0, 1);
    const double rn = round_to(static_cast<double>(e.nn_ram_bytes) / 1024.0, 1);
    os << "| " << t.id << " | " << t.config.dsp.describe() << " | " << t.config.descriptor << " | "
       << ir::to_string(t.config.dtype) << " | " << fixed(100.0 * t.accuracy, 1) << "% | "
       << fixed(ld, 3) << " | " << fixed(ln, 3) << " | " << fixed(ld + ln, 3) << " | "
       << fixed(rd, 1) << " | " << fixed(rn, 1) << " | " << fixed(rd + rn, 1) << " | "
       << fixed(static_cast<double>(e.flash_bytes) / 1024.0, 1) << " |\n";
  }
  return os.str();
}

}  // namespace tinyforge::tuner
