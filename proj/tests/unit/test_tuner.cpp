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

#include <doctest.h>

#include <map>
#include <regex>
#include <set>

#include "test_support.hpp"
#include "tinyforge/synth.hpp"
#include "tinyforge/tuner.hpp"

using namespace tinyforge;
using namespace tinyforge::tuner;

namespace {

// Preprocessing rows of the published keyword-spotting tuner table, with
// the displayed DSP/inference/total latency and RAM columns.
struct TableRow {
  const char* dsp;
  int lat_dsp, lat_nn, lat_total, ram_dsp, ram_nn, ram_total;
};
const TableRow kTable[] = {
    {"MFE (0.02, 0.01, 40)", 332, 2420, 2752, 25, 468, 493},
    {"MFCC (0.02, 0.01, 40)", 770, 437, 1207, 30, 35, 65},
    {"MFCC (0.02, 0.01, 32)", 579, 197, 776, 26, 20, 46},
    {"MFE (0.02, 0.01, 32)", 319, 174, 493, 21, 31, 52},
    {"MFE (0.02, 0.02, 32)", 163, 109, 272, 14, 17, 31},
    {"MFCC (0.05, 0.025, 40)", 327, 48, 375, 19, 10, 29},
    {"MFE (0.05, 0.025, 32)", 161, 67, 228, 15, 14, 29},
    {"MFE (0.032, 0.016, 32)", 217, 91, 308, 16, 19, 35},
};

Trial trained(int id, double acc, double latency, std::int64_t ram = 1000, std::int64_t flash = 1000) {
  Trial t;
  t.id = id;
  t.status = TrialStatus::kTrained;
  t.accuracy = acc;
  t.estimate.total_latency_ms = latency;
  t.estimate.ram_bytes = ram;
  t.estimate.flash_bytes = flash;
  return t;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == '|') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  for (auto& s : cells) {
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    while (!s.empty() && s.back() == ' ') s.pop_back();
  }
  return {cells.begin() + 1, cells.end()};
}

}  // namespace

TEST_CASE("default audio space covers the eight table rows and seven model families") {
  const auto s = default_audio_space();
  REQUIRE(s.dsp_choices.size() == 8);
  CHECK(s.model_templates.size() == 7);
  CHECK(s.size() == 112);
  for (std::size_t i = 0; i < 8; ++i) CHECK(s.dsp_choices[i].describe() == kTable[i].dsp);
  // The table's totals are the sums of its parts; the markdown report keeps that.
  for (const auto& r : kTable) {
    CHECK(r.lat_dsp + r.lat_nn == r.lat_total);
    CHECK(r.ram_dsp + r.ram_nn == r.ram_total);
  }
  for (const auto& d : s.model_templates) CHECK_NOTHROW(trainer::parse_descriptor(d));
  // Cross-product order: dtype fastest, then model, then DSP.
  std::set<std::string> labels;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = s.at(i);
    CHECK(c.dtype == s.dtypes[i % 2]);
    CHECK(c.descriptor == s.model_templates[(i / 2) % 7]);
    CHECK(c.dsp.describe() == s.dsp_choices[i / 14].describe());
    labels.insert(c.label());
  }
  CHECK(labels.size() == 112);
  CHECK_THROWS_AS(s.at(112), Error);
  CHECK(s.at(3).label() == "MFE (0.02, 0.01, 40) | 4x conv1d (32 to 256) | i8");
  CHECK_NOTHROW(default_timeseries_space().validate());
}

TEST_CASE("sampling is seeded, distinct and warns when the space is exhausted") {
  const auto s = default_audio_space();
  const auto a = sample_configs(s, 8, 42), b = sample_configs(s, 8, 42), c = sample_configs(s, 8, 43);
  REQUIRE(a.configs.size() == 8);
  std::vector<std::string> la, lb, lc;
  for (const auto& x : a.configs) la.push_back(x.label());
  for (const auto& x : b.configs) lb.push_back(x.label());
  for (const auto& x : c.configs) lc.push_back(x.label());
  CHECK(la == lb);
  CHECK(la != lc);
  CHECK(std::set<std::string>(la.begin(), la.end()).size() == 8);
  CHECK(a.warnings.empty());

  const auto all = sample_configs(s, 112, 1);
  CHECK(all.configs.size() == 112);
  CHECK(all.warnings.empty());
  const auto over = sample_configs(s, 500, 1);
  CHECK(over.configs.size() == 112);
  REQUIRE(over.warnings.size() == 1);
  CHECK(over.warnings[0].find("112") != std::string::npos);
  std::set<std::string> uniq;
  for (const auto& x : over.configs) uniq.insert(x.label());
  CHECK(uniq.size() == 112);
  CHECK_THROWS_AS(sample_configs(s, 0, 1), Error);
}

TEST_CASE("single draws are close to uniform") {
  const auto s = default_audio_space();
  std::map<std::string, int> counts;
  const int draws = 11200;
  for (int seed = 0; seed < draws; ++seed) counts[sample_configs(s, 1, static_cast<std::uint64_t>(seed)).configs[0].label()]++;
  CHECK(counts.size() == 112);
  // Expected 100 per config, sd about 10.
  for (const auto& [k, v] : counts) CHECK_MESSAGE((v >= 55 && v <= 145), k << " drawn " << v);
}

TEST_CASE("heuristic filter keeps exactly the configs whose estimate fits") {
  const auto space = default_audio_space();
  std::vector<TrialConfig> configs;
  for (std::size_t i = 0; i < space.size(); ++i) configs.push_back(space.at(i));
  TrialContext ctx;
  ctx.num_classes = 4;
  const auto p = estimate::load_profile("nano33");
  estimate::Constraints cons;
  estimate::parse_constraint("ram=256k", cons);
  const auto r = heuristic_filter(configs, ctx, p, cons, 9);
  CHECK(r.kept.size() + r.filtered.size() == configs.size());
  std::set<int> ids;
  for (const auto& t : r.kept) ids.insert(t.id);
  for (const auto& t : r.filtered) ids.insert(t.id);
  CHECK(ids.size() == configs.size());
  for (std::size_t i = 1; i < r.kept.size(); ++i) CHECK(r.kept[i - 1].id < r.kept[i].id);

  auto independent_fit = [&](const Trial& t) {
    const auto g = instantiate(t.config, ctx, mix_seed(9, static_cast<std::uint64_t>(t.id)));
    const auto e = estimate::estimate(g, t.config.dsp, ctx.sample_rate_hz, ctx.channels, p);
    return e.ram_bytes <= 256 * 1024 && e.ram_bytes <= p.ram_capacity_bytes && e.flash_bytes <= p.flash_capacity_bytes;
  };
  for (const auto& t : r.kept) {
    CHECK(t.config.label() == configs[static_cast<std::size_t>(t.id)].label());
    CHECK(t.estimate.ram_bytes <= 256 * 1024);
    CHECK(independent_fit(t));
    CHECK(t.violations.empty());
  }
  int proxy_filtered = 0;
  for (const auto& t : r.filtered) {
    CHECK_FALSE(independent_fit(t));
    CHECK_FALSE(t.violations.empty());
    for (const auto& v : t.violations) CHECK(v.margin() > 0);
    proxy_filtered += t.config.descriptor == space.model_templates[0];
  }
  // The wide conv stack stands in for the table's RAM-hungry row.
  CHECK(proxy_filtered == 16);
  CHECK(r.kept.size() > 40);
}

TEST_CASE("invalid configs are filtered with an error, not thrown") {
  TrialConfig bad;
  bad.descriptor = "2x conv1d (16 to 32)";
  bad.dsp.frame_length_s = 2.0;  // longer than the window
  TrialConfig good;
  good.descriptor = "2x conv1d (16 to 32)";
  good.dsp = default_audio_space().dsp_choices[7];
  const auto r = heuristic_filter({bad, good}, TrialContext{}, estimate::load_profile("nano33"), {}, 1);
  REQUIRE(r.filtered.size() == 1);
  CHECK(r.filtered[0].id == 0);
  CHECK_FALSE(r.filtered[0].error.empty());
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0].id == 1);
}

TEST_CASE("ranking order and tie breaks") {
  std::vector<Trial> ts = {trained(0, 0.9, 50), trained(1, 0.95, 80), trained(2, 0.9, 40), trained(3, 0.9, 40),
                           trained(4, 0.5, 1, 10, 10)};
  Trial f;
  f.id = 5;
  f.status = TrialStatus::kFiltered;
  f.accuracy = 1.0;
  Trial x;
  x.id = 6;
  x.status = TrialStatus::kFailed;
  ts.push_back(f);
  ts.push_back(x);
  auto ids = [](const std::vector<Trial>& v) {
    std::vector<int> out;
    for (const auto& t : v) out.push_back(t.id);
    return out;
  };
  CHECK(ids(rank_trials(ts, Objective::kAccuracy)) == std::vector<int>{1, 2, 3, 0, 4});
  CHECK(ids(rank_trials(ts, Objective::kLatency)) == std::vector<int>{4, 2, 3, 0, 1});
  CHECK(ids(rank_trials(ts, Objective::kRam)).front() == 4);
  // Equal RAM: lower latency, then lower id.
  CHECK(ids(rank_trials(ts, Objective::kFlash)) == std::vector<int>{4, 2, 3, 0, 1});
  CHECK_THROWS_AS(rank_trials({f, x}, Objective::kAccuracy), Error);
  CHECK(objective_from_string("ram") == Objective::kRam);
  CHECK_THROWS_AS(objective_from_string("speed"), Error);

  // Order independence.
  std::vector<Trial> rev(ts.rbegin(), ts.rend());
  CHECK(ids(rank_trials(rev, Objective::kAccuracy)) == ids(rank_trials(ts, Objective::kAccuracy)));
}

TEST_CASE("markdown totals are sums of the displayed parts") {
  tf_test::Rng rng(3);
  std::vector<Trial> ts;
  for (int i = 0; i < 200; ++i) {
    auto t = trained(i, rng.uniform(0, 1), 0);
    t.config.descriptor = "2x conv1d (16 to 32)";
    // Values chosen near rounding boundaries.
    t.estimate.dsp_latency_ms = std::floor(rng.uniform(0, 400)) + 0.0005 * rng.integer(0, 2);
    t.estimate.nn_latency_ms = std::floor(rng.uniform(0, 400)) + 0.0005 * rng.integer(0, 2) + rng.uniform(0, 1e-3);
    t.estimate.dsp_ram_bytes = rng.integer(0, 60000);
    t.estimate.nn_ram_bytes = rng.integer(0, 60000);
    t.estimate.flash_bytes = rng.integer(0, 900000);
    ts.push_back(t);
  }
  const auto md = tuner_report_markdown(ts);
  std::istringstream in(md);
  std::string line;
  std::getline(in, line);
  const auto header = split_cells(line);
  REQUIRE(header.size() == 12);
  CHECK(header[7] == "Latency total (ms)");
  CHECK(header[10] == "RAM total (kB)");
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto c = split_cells(line);
    REQUIRE(c.size() == 12);
    // Compare in integer units of the last displayed digit.
    auto units = [](const std::string& s, int digits) { return std::llround(std::stod(s) * std::pow(10.0, digits)); };
    CHECK(units(c[5], 3) + units(c[6], 3) == units(c[7], 3));
    CHECK(units(c[8], 1) + units(c[9], 1) == units(c[10], 1));
    CHECK(c[5].size() - c[5].find('.') == 4);
    CHECK(c[4].back() == '%');
    ++rows;
  }
  CHECK(rows == 200);
}

TEST_CASE("run_trials: seeded, isolated failures, deterministic") {
  synth::ToneDatasetOptions o;
  o.per_class = 8;
  o.duration_s = 0.5;
  auto ds = project::split_dataset(synth::make_tone_dataset(o).dataset, 0.25, 4);
  TrialContext ctx;
  ctx.num_classes = 3;
  TrialConfig a;
  a.descriptor = "2x conv1d (16 to 32)";
  a.dsp = default_audio_space().dsp_choices[6];
  a.dsp.window_size_s = 0.5;
  TrialConfig b = a;
  b.dtype = ir::DType::kI8;
  TrialConfig bad = a;
  bad.descriptor = "mlp (8)";  // a timeseries head on audio features still trains
  bad.dsp.num_mel_filters = 100000;
  std::vector<Trial> kept;
  for (const auto& c : {a, b, bad}) {
    Trial t;
    t.id = static_cast<int>(kept.size());
    t.config = c;
    kept.push_back(t);
  }
  trainer::TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 0.01;
  const auto p = estimate::load_profile("nano33");
  const auto r1 = run_trials(kept, ds, ctx, p, tc, 77);
  const auto r2 = run_trials(kept, ds, ctx, p, tc, 77);
  REQUIRE(r1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r1[i].id == static_cast<int>(i));
    CHECK(r1[i].seed == mix_seed(77, i));
    CHECK(r1[i].status == r2[i].status);
    CHECK(r1[i].accuracy == r2[i].accuracy);
  }
  CHECK(r1[0].status == TrialStatus::kTrained);
  CHECK(r1[1].status == TrialStatus::kTrained);
  CHECK(r1[2].status == TrialStatus::kFailed);
  CHECK_FALSE(r1[2].error.empty());
  CHECK(r1[1].estimate.flash_bytes < r1[0].estimate.flash_bytes);
  CHECK(r1[0].eval.confusion.size() == 3);

  std::vector<Trial> only_bad = {kept[2]};
  CHECK_THROWS_AS(run_trials(only_bad, ds, ctx, p, tc, 77), Error);
  auto unsplit = synth::make_tone_dataset(o).dataset;
  CHECK_THROWS_AS(run_trials(kept, unsplit, ctx, p, tc, 77), Error);

  const auto ranked = rank_trials(r1, Objective::kAccuracy);
  const auto j = tuner_report_json(ranked, {r1[2]}, "nano33", {}, 77, Objective::kAccuracy);
  CHECK(j["ranked"].size() == 2);
  CHECK(j["other_trials"][0]["status"] == "failed");
  CHECK(j["ranked"][0].contains("accuracy"));
  CHECK(j["ranked"][0]["estimate"].contains("ram_bytes"));
}
