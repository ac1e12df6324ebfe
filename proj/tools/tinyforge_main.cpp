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

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tinyforge/calibrate.hpp"
#include "tinyforge/codegen.hpp"
#include "tinyforge/estimate.hpp"
#include "tinyforge/interp.hpp"
#include "tinyforge/pipeline.hpp"
#include "tinyforge/project.hpp"
#include "tinyforge/quant.hpp"
#include "tinyforge/synth.hpp"
#include "tinyforge/trainer.hpp"
#include "tinyforge/tuner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tinyforge;

namespace {

struct Globals {
  std::string project = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  bool json_out = false;
};

// One command per project directory at a time.
class ProjectLock {
 public:
  explicit ProjectLock(const fs::path& root) : path_(root / ".tinyforge.lock") {
    fs::create_directories(root);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw Error("project is locked by another command (" + path_.string() +
                  "); remove the file if no command is running");
    }
  }
  ~ProjectLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  ProjectLock(const ProjectLock&) = delete;
  ProjectLock& operator=(const ProjectLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string kb(std::int64_t bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f kB", static_cast<double>(bytes) / 1024.0);
  return buf;
}

std::string ms(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f ms", v);
  return buf;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

class Runner {
 public:
  explicit Runner(Globals g) : g_(std::move(g)), files_{fs::path(g_.project)} {}

  const project::ProjectFiles& files() const { return files_; }

  pipeline::ProjectConfig config() const {
    auto c = pipeline::load_config(files_);
    if (g_.seed) c.seed = *g_.seed;
    if (g_.profile) c.profile = *g_.profile;
    return c;
  }

  project::Dataset dataset(const pipeline::ProjectConfig& c) const {
    project::IngestOptions opts;
    opts.csv_sample_rate_hz = c.csv_sample_rate_hz;
    auto ds = project::load_dataset(files_, c.classes, opts);
    if (ds.samples.empty()) throw Error("dataset is empty; run 'tinyforge ingest' first");
    return ds;
  }

  fs::path model_path(const std::string& dtype) const {
    return files_.artifacts_dir() / ("model." + dtype + ".json");
  }

  ir::ModelGraph load_model(const std::string& dtype) const {
    const auto p = model_path(dtype);
    if (!fs::exists(p)) {
      throw Error("missing " + p.string() + "; run 'tinyforge " +
                  std::string(dtype == "i8" ? "quantize" : "train") + "' first");
    }
    return ir::load_model(p.string());
  }

  // Machine output goes to stdout as one JSON document; human output is
  // plain text. The two never share a stream.
  void emit(const std::string& command, json result, const std::string& text) const {
    if (g_.json_out) {
      json j = {{"command", command}, {"status", "ok"}};
      j["result"] = std::move(result);
      std::cout << j.dump() << "\n";
    } else {
      std::cout << text;
    }
  }

  void warn(const std::string& msg) const { std::cerr << "warning: " << msg << "\n"; }

  const Globals& globals() const { return g_; }

 private:
  Globals g_;
  project::ProjectFiles files_;
};

// --- init -------------------------------------------------------------------

struct InitArgs {
  std::string kind = "audio";
  bool demo = false;
  int per_class = 30;
  bool force = false;
};

void cmd_init(const Runner& r, const InitArgs& a) {
  const auto& f = r.files();
  const bool exists = fs::exists(f.project_json());
  pipeline::ProjectConfig c = pipeline::default_config(trainer::data_kind_from_string(a.kind));
  if (r.globals().seed) c.seed = *r.globals().seed;
  if (r.globals().profile) c.profile = *r.globals().profile;
  estimate::load_profile(c.profile);
  for (const auto& d : {f.dataset_dir(), f.artifacts_dir(), f.deploy_dir(), f.reports_dir()}) {
    fs::create_directories(d);
  }
  if (!exists || a.force) pipeline::save_config(f, c);
  int written = 0;
  if (a.demo) {
    if (a.kind != "audio") throw Error("--demo generates audio; use --kind audio");
    synth::ToneDatasetOptions o;
    o.per_class = a.per_class;
    o.seed = c.seed;
    const auto td = synth::make_tone_dataset(o);
    std::map<std::string, int> counter;
    for (std::size_t i = 0; i < td.wav.size(); ++i) {
      const auto& label = td.dataset.samples[i].label;
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d.wav", label.c_str(), counter[label]++);
      project::write_file(f.root / "incoming" / label / name, td.wav[i]);
      ++written;
    }
  }
  std::ostringstream os;
  os << (exists && !a.force ? "project already initialized at " : "initialized project at ")
     << f.root.string() << "\n";
  if (a.demo) {
    os << "wrote " << written << " demo WAV files under " << (f.root / "incoming").string()
       << "\nnext: tinyforge -C " << f.root.string() << " ingest " << (f.root / "incoming").string()
       << "\n";
  }
  r.emit("init",
         {{"root", f.root.string()}, {"created", !exists || a.force}, {"demo_files", written}},
         os.str());
}

// --- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> paths;
  std::string label;
  std::string split = "train";
};

void cmd_ingest(const Runner& r, const IngestArgs& a) {
  auto c = r.config();
  const auto split = project::split_from_string(a.split);
  std::vector<std::pair<fs::path, std::string>> todo;  // (file, label)
  for (const auto& p : a.paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      for (const auto& q : found) {
        todo.emplace_back(q, a.label.empty() ? q.parent_path().filename().string() : a.label);
      }
    } else if (fs::exists(p)) {
      const fs::path q(p);
      todo.emplace_back(q, a.label.empty() ? q.parent_path().filename().string() : a.label);
    } else {
      throw Error("no such file or directory: " + p);
    }
  }
  project::IngestOptions opts;
  opts.csv_sample_rate_hz = c.csv_sample_rate_hz;
  int added = 0, skipped = 0;
  std::set<std::string> new_labels;
  for (const auto& [path, label] : todo) {
    if (label.empty()) throw Error("cannot infer a label for " + path.string() + "; pass --label");
    const auto format = project::format_from_extension(path);
    const auto bytes = project::read_file(path);
    project::Sample s;
    try {
      s = project::parse_sample(bytes, format, label, split, opts);
    } catch (const Error& e) {
      throw Error(path.string() + ": " + e.what());
    }
    const std::string name = s.id + "." + project::to_string(format);
    bool present = false;
    for (const char* sp : {"train", "test"}) {
      if (fs::exists(r.files().dataset_dir() / sp / label / name)) present = true;
    }
    if (present) {
      ++skipped;
      continue;
    }
    project::store_sample_file(r.files(), s, bytes, format);
    ++added;
    if (std::find(c.classes.begin(), c.classes.end(), label) == c.classes.end()) {
      new_labels.insert(label);
    }
  }
  if (!new_labels.empty()) {
    auto stored = pipeline::load_config(r.files());
    stored.classes.insert(stored.classes.end(), new_labels.begin(), new_labels.end());
    pipeline::save_config(r.files(), stored);
    c.classes = stored.classes;
  }
  std::ostringstream os;
  os << "ingested " << added << " sample(s), " << skipped << " already present\n";
  r.emit("ingest", {{"added", added}, {"skipped", skipped}, {"classes", c.classes}}, os.str());
}

// --- split / stats ----------------------------------------------------------

void cmd_split(const Runner& r, std::optional<double> fraction) {
  auto c = r.config();
  if (fraction) {
    auto stored = pipeline::load_config(r.files());
    stored.test_fraction = *fraction;
    stored.validate();
    pipeline::save_config(r.files(), stored);
    c.test_fraction = *fraction;
  }
  const auto ds = project::split_dataset(r.dataset(c), c.test_fraction, c.seed);
  project::apply_split_on_disk(r.files(), ds);
  const auto st = project::dataset_stats(ds);
  std::ostringstream os;
  os << "split " << st.total_samples << " samples: " << st.train_samples << " train, "
     << st.test_samples << " test (test fraction " << c.test_fraction << ", seed " << c.seed
     << ")\n";
  r.emit("split",
         {{"train", st.train_samples}, {"test", st.test_samples}, {"test_fraction", c.test_fraction},
          {"seed", c.seed}},
         os.str());
}

void cmd_stats(const Runner& r) {
  const auto c = r.config();
  const auto st = project::dataset_stats(r.dataset(c));
  std::ostringstream os;
  os << "class            train   test  total\n";
  json rows = json::array();
  for (const auto& pc : st.per_class) {
    char line[128];
    std::snprintf(line, sizeof line, "%-15s %6zu %6zu %6zu\n", pc.label.c_str(), pc.train, pc.test,
                  pc.total());
    os << line;
    rows.push_back({{"label", pc.label}, {"train", pc.train}, {"test", pc.test}, {"total", pc.total()}});
  }
  char tail[160];
  std::snprintf(tail, sizeof tail, "total           %6zu %6zu %6zu   (%.2f s of signal)\n",
                st.train_samples, st.test_samples, st.total_samples, st.total_duration_s);
  os << tail;
  r.emit("stats",
         {{"per_class", rows}, {"total_samples", st.total_samples}, {"train_samples", st.train_samples},
          {"test_samples", st.test_samples}, {"total_duration_s", st.total_duration_s}},
         os.str());
}

// --- dsp --------------------------------------------------------------------

struct DspArgs {
  std::optional<std::string> block;
  std::optional<double> frame_length, frame_stride, window_size, low_freq, high_freq, noise_floor;
  std::optional<int> filters, coeffs, fft_size;
};

void cmd_dsp(const Runner& r, const DspArgs& a) {
  auto c = r.config();
  auto& d = c.dsp;
  const bool changed = a.block || a.frame_length || a.frame_stride || a.window_size || a.low_freq ||
                       a.high_freq || a.noise_floor || a.filters || a.coeffs || a.fft_size;
  if (a.block) d.block = dsp::block_from_string(*a.block);
  if (a.frame_length) d.frame_length_s = *a.frame_length;
  if (a.frame_stride) d.frame_stride_s = *a.frame_stride;
  if (a.window_size) d.window_size_s = *a.window_size;
  if (a.low_freq) d.low_freq_hz = *a.low_freq;
  if (a.high_freq) d.high_freq_hz = *a.high_freq;
  if (a.noise_floor) d.noise_floor_db = *a.noise_floor;
  if (a.filters) d.num_mel_filters = *a.filters;
  if (a.coeffs) d.num_cepstral_coeffs = *a.coeffs;
  if (a.fft_size) d.fft_size = *a.fft_size;
  const auto ds = r.dataset(c);
  pipeline::FeatureSet fs;
  fs.shape = pipeline::signal_shape(ds);
  d.validate(fs.shape.sample_rate_hz);
  if (changed) {
    auto stored = pipeline::load_config(r.files());
    stored.dsp = d;
    pipeline::save_config(r.files(), stored);
  }
  fs.dsp = d;
  fs.classes = ds.classes;
  std::tie(fs.rows, fs.cols) = dsp::feature_shape(d, fs.shape.sample_rate_hz, fs.shape.channels);
  fs.train = pipeline::split_features(ds, d, project::Split::kTrain);
  fs.test = pipeline::split_features(ds, d, project::Split::kTest);
  pipeline::save_features(r.files(), fs);
  std::ostringstream os;
  os << d.describe() << ": " << fs.rows << " x " << fs.cols << " features per sample, "
     << fs.train.size() << " train / " << fs.test.size() << " test vectors written to "
     << r.files().artifacts_dir().string() << "\n";
  r.emit("dsp",
         {{"dsp", d}, {"rows", fs.rows}, {"cols", fs.cols}, {"train", fs.train.size()},
          {"test", fs.test.size()}},
         os.str());
}

// --- train / eval / quantize ------------------------------------------------

struct TrainArgs {
  int epochs = 30;
  int batch_size = 16;
  std::optional<double> lr;
  double val_fraction = 0.2;
  std::optional<std::string> model_template;
};

json eval_json(const trainer::EvalReport& e) {
  return {{"accuracy", e.accuracy}, {"confusion", e.confusion}, {"per_class_f1", e.per_class_f1}};
}

std::string confusion_text(const trainer::EvalReport& e, const std::vector<std::string>& classes) {
  std::ostringstream os;
  os << "confusion (rows = true class):\n";
  for (std::size_t i = 0; i < e.confusion.size(); ++i) {
    char head[48];
    std::snprintf(head, sizeof head, "  %-12s", i < classes.size() ? classes[i].c_str() : "?");
    os << head;
    for (int v : e.confusion[i]) {
      char cell[16];
      std::snprintf(cell, sizeof cell, " %5d", v);
      os << cell;
    }
    os << "\n";
  }
  os << "accuracy " << pct(e.accuracy) << "\n";
  return os.str();
}

void cmd_train(const Runner& r, const TrainArgs& a) {
  auto c = r.config();
  if (a.model_template) {
    trainer::parse_descriptor(*a.model_template);
    auto stored = pipeline::load_config(r.files());
    stored.model_template = *a.model_template;
    pipeline::save_config(r.files(), stored);
    c.model_template = *a.model_template;
  }
  const auto fs = pipeline::load_features(r.files(), c.dsp);
  if (fs.train.size() == 0) throw Error("no training vectors; run 'tinyforge split' and 'tinyforge dsp'");
  const int k = static_cast<int>(fs.classes.size());
  const auto init = trainer::init_preset(c.data_kind, static_cast<int>(fs.rows),
                                         static_cast<int>(fs.cols), k, c.seed, c.model_template);
  trainer::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.validation_fraction = a.val_fraction;
  tc.seed = c.seed;
  const auto res = trainer::train(init, fs.train, tc);
  ir::save_model(res.model, r.model_path("f32").string());
  json hist = json::array();
  for (const auto& h : res.history) {
    hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss},
                    {"val_accuracy", h.val_accuracy}});
  }
  json report = {{"model_template", c.model_template.empty()
                                        ? trainer::default_descriptor(c.data_kind)
                                        : c.model_template},
                 {"epochs", a.epochs},
                 {"batch_size", a.batch_size},
                 {"learning_rate", res.learning_rate},
                 {"learning_rate_found", !a.lr.has_value()},
                 {"best_epoch", res.best_epoch},
                 {"history", hist},
                 {"seed", c.seed}};
  std::ostringstream os;
  os << "trained " << report["model_template"].get<std::string>() << " for " << a.epochs
     << " epochs at lr " << res.learning_rate << "; best epoch " << res.best_epoch;
  if (!res.history.empty()) {
    const auto& best = res.history[static_cast<std::size_t>(std::max(0, res.best_epoch - 1))];
    os << " (val acc " << pct(best.val_accuracy) << ")";
  }
  if (fs.test.size() > 0) {
    const auto e = trainer::evaluate(res.model, fs.test, k);
    report["test"] = eval_json(e);
    os << ", test acc " << pct(e.accuracy);
  }
  os << "\nmodel written to " << r.model_path("f32").string() << "\n";
  project::write_text(r.files().reports_dir() / "train.json", report.dump(2) + "\n");
  r.emit("train", report, os.str());
}

void cmd_eval(const Runner& r, const std::string& dtype) {
  const auto c = r.config();
  const auto fs = pipeline::load_features(r.files(), c.dsp);
  if (fs.test.size() == 0) throw Error("the test split is empty; run 'tinyforge split' then 'tinyforge dsp'");
  const auto g = r.load_model(dtype);
  const auto e = trainer::evaluate(g, fs.test, static_cast<int>(fs.classes.size()));
  json report = eval_json(e);
  report["dtype"] = dtype;
  report["classes"] = fs.classes;
  project::write_text(r.files().reports_dir() / ("eval_" + dtype + ".json"), report.dump(2) + "\n");
  r.emit("eval", report, confusion_text(e, fs.classes));
}

void cmd_quantize(const Runner& r, int calib) {
  const auto c = r.config();
  const auto fs = pipeline::load_features(r.files(), c.dsp);
  const auto g = r.load_model("f32");
  if (calib < 1) throw Error("--calibration-samples must be >= 1");
  const std::size_t m = std::min<std::size_t>(fs.train.size(), static_cast<std::size_t>(calib));
  if (m == 0) throw Error("no training vectors for calibration; run 'tinyforge dsp'");
  const std::vector<std::vector<float>> rep(fs.train.x.begin(),
                                            fs.train.x.begin() + static_cast<long>(m));
  const auto q = quant::quantize_graph(g, quant::calibrate_ranges(g, rep));
  ir::save_model(q.graph, r.model_path("i8").string());
  for (const auto& w : q.warnings) r.warn(w);
  json res = {{"calibration_samples", m}, {"warnings", q.warnings},
              {"weight_bytes_f32", g.weight_bytes()}, {"weight_bytes_i8", q.graph.weight_bytes()}};
  std::ostringstream os;
  os << "quantized with " << m << " calibration vectors; weights " << kb(static_cast<std::int64_t>(g.weight_bytes()))
     << " -> " << kb(static_cast<std::int64_t>(q.graph.weight_bytes()));
  if (fs.test.size() > 0) {
    const int k = static_cast<int>(fs.classes.size());
    const auto ef = trainer::evaluate(g, fs.test, k);
    const auto eq = trainer::evaluate(q.graph, fs.test, k);
    res["test_accuracy_f32"] = ef.accuracy;
    res["test_accuracy_i8"] = eq.accuracy;
    os << "; test acc f32 " << pct(ef.accuracy) << ", i8 " << pct(eq.accuracy);
  }
  os << "\nmodel written to " << r.model_path("i8").string() << "\n";
  r.emit("quantize", res, os.str());
}

// --- build / estimate -------------------------------------------------------

struct BuildArgs {
  std::string dtype = "i8";
  std::string prefix = "model";
  bool trace_hooks = false;
};

void cmd_build(const Runner& r, const BuildArgs& a) {
  r.config();
  const auto g = r.load_model(a.dtype);
  codegen::CodegenOptions o;
  o.symbol_prefix = a.prefix;
  o.emit_trace_hooks = a.trace_hooks;
  const auto plan = interp::plan_arena(g);
  const auto src = codegen::emit_c(g, plan, o);
  const auto written = codegen::write_c(src, r.files().deploy_dir());
  const auto kernels = codegen::kernel_names(g);
  std::ostringstream os;
  os << "wrote";
  std::vector<std::string> paths;
  for (const auto& p : written) {
    os << " " << p.string();
    paths.push_back(p.string());
  }
  os << "\narena " << plan.peak_bytes << " bytes, kernels:";
  for (const auto& k : kernels) os << " " << k;
  os << "\n";
  r.emit("build",
         {{"files", paths}, {"arena_bytes", plan.peak_bytes}, {"kernels", kernels}, {"dtype", a.dtype},
          {"prefix", a.prefix}},
         os.str());
}

estimate::Constraints merged_constraints(const pipeline::ProjectConfig& c,
                                         const std::vector<std::string>& extra) {
  auto out = c.constraints;
  for (const auto& s : extra) estimate::parse_constraint(s, out);
  return out;
}

json violations_json(const std::vector<estimate::Violation>& v) {
  json a = json::array();
  for (const auto& x : v) {
    a.push_back({{"resource", x.resource}, {"value", x.value}, {"limit", x.limit}, {"margin", x.margin()}});
  }
  return a;
}

void cmd_estimate(const Runner& r, const std::string& dtype, const std::vector<std::string>& cons) {
  const auto c = r.config();
  const auto profile = estimate::load_profile(c.profile);
  const auto g = r.load_model(dtype);
  const auto fs = pipeline::load_features(r.files(), c.dsp);
  const auto constraints = merged_constraints(c, cons);
  const auto est = estimate::estimate(g, c.dsp, fs.shape.sample_rate_hz, fs.shape.channels, profile);
  const auto base = estimate::estimate(g, c.dsp, fs.shape.sample_rate_hz, fs.shape.channels, profile,
                                       estimate::Mode::kInterpreterBaseline);
  const auto fit = estimate::fits_device(est, profile, constraints);
  std::ostringstream os;
  os << "profile " << profile.name << " (" << profile.clock_hz / 1e6 << " MHz, "
     << kb(profile.ram_capacity_bytes) << " RAM, " << kb(profile.flash_capacity_bytes) << " flash), "
     << dtype << " model\n"
     << "latency " << ms(est.total_latency_ms) << " (dsp " << ms(est.dsp_latency_ms) << " + nn "
     << ms(est.nn_latency_ms) << ")\n"
     << "ram     " << kb(est.ram_bytes) << " (dsp " << kb(est.dsp_ram_bytes) << " + nn "
     << kb(est.nn_ram_bytes) << ")\n"
     << "flash   " << kb(est.flash_bytes) << "\n"
     << "interpreter baseline: ram " << kb(base.ram_bytes) << ", flash " << kb(base.flash_bytes) << "\n"
     << "verdict: " << (fit.fits ? "fits" : "does not fit") << "\n";
  for (const auto& v : fit.violations) {
    os << "  " << v.resource << " " << v.value << " > " << v.limit << " (over by " << v.margin() << ")\n";
  }
  r.emit("estimate",
         {{"profile", profile.name}, {"dtype", dtype}, {"generated", est},
          {"interpreter_baseline", base}, {"fits", fit.fits},
          {"violations", violations_json(fit.violations)}},
         os.str());
}

// --- tune -------------------------------------------------------------------

struct TuneArgs {
  int trials = 8;
  std::vector<std::string> constraints;
  std::string objective = "accuracy";
  int epochs = 15;
  std::optional<int> select;
};

void select_trial(const Runner& r, int id) {
  const auto p = r.files().reports_dir() / "tuner.json";
  if (!fs::exists(p)) throw Error("missing " + p.string() + "; run 'tinyforge tune' first");
  const json rep = json::parse(project::read_text(p));
  for (const auto& t : rep.at("ranked")) {
    if (t.at("trial_id").get<int>() != id) continue;
    auto stored = pipeline::load_config(r.files());
    stored.dsp = t.at("dsp").get<dsp::DspConfig>();
    stored.model_template = t.at("model").get<std::string>();
    pipeline::save_config(r.files(), stored);
    return;
  }
  throw Error("trial " + std::to_string(id) + " is not among the ranked trials in " + p.string());
}

void cmd_tune(const Runner& r, const TuneArgs& a, bool trials_given) {
  const auto c = r.config();
  if (a.select && !trials_given && fs::exists(r.files().reports_dir() / "tuner.json")) {
    select_trial(r, *a.select);
    r.emit("tune", {{"selected", *a.select}},
           "trial " + std::to_string(*a.select) + " written to impulse.json\n");
    return;
  }
  if (a.trials < 1) throw Error("--trials must be >= 1");
  const auto profile = estimate::load_profile(c.profile);
  const auto constraints = merged_constraints(c, a.constraints);
  const auto objective = tuner::objective_from_string(a.objective);
  const auto ds = r.dataset(c);
  const auto shape = pipeline::signal_shape(ds);
  tuner::TrialContext ctx{shape.sample_rate_hz, shape.channels, static_cast<int>(ds.classes.size()),
                          c.data_kind};
  const auto space = c.data_kind == trainer::DataKind::kAudio ? tuner::default_audio_space()
                                                              : tuner::default_timeseries_space();
  const auto sampled = tuner::sample_configs(space, a.trials, c.seed);
  for (const auto& w : sampled.warnings) r.warn(w);
  auto filt = tuner::heuristic_filter(sampled.configs, ctx, profile, constraints, c.seed);
  trainer::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.seed = c.seed;
  std::vector<tuner::Trial> done;
  if (!filt.kept.empty()) done = tuner::run_trials(filt.kept, ds, ctx, profile, tc, c.seed);
  std::vector<tuner::Trial> others = filt.filtered;
  std::vector<tuner::Trial> trained;
  for (auto& t : done) {
    if (t.status == tuner::TrialStatus::kTrained) {
      // The trained graph has the filter's shapes, but check again anyway.
      const auto fit = estimate::fits_device(t.estimate, profile, constraints);
      if (!fit.fits) {
        t.status = tuner::TrialStatus::kFiltered;
        t.violations = fit.violations;
        others.push_back(t);
        continue;
      }
      trained.push_back(t);
    } else {
      others.push_back(t);
    }
  }
  std::sort(others.begin(), others.end(),
            [](const tuner::Trial& x, const tuner::Trial& y) { return x.id < y.id; });
  if (trained.empty()) {
    throw Error("no trial fits " + profile.name + " under the given constraints (" +
                std::to_string(filt.filtered.size()) + " filtered, " +
                std::to_string(others.size() - filt.filtered.size()) + " failed)");
  }
  const auto ranked = tuner::rank_trials(trained, objective);
  const auto report = tuner::tuner_report_json(ranked, others, profile.name, constraints, c.seed, objective);
  const auto md = tuner::tuner_report_markdown(ranked);
  project::write_text(r.files().reports_dir() / "tuner.json", report.dump(2) + "\n");
  project::write_text(r.files().reports_dir() / "tuner.md", md);
  std::ostringstream os;
  os << md << "\n" << ranked.size() << " trained, " << filt.filtered.size() << " filtered by the estimator, "
     << (others.size() - filt.filtered.size()) << " failed; reports in "
     << r.files().reports_dir().string() << "\n";
  json res = report;
  if (a.select) {
    select_trial(r, *a.select);
    os << "trial " << *a.select << " written to impulse.json\n";
    res["selected"] = *a.select;
  }
  r.emit("tune", res, os.str());
}

// --- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  std::string dtype = "f32";
  std::optional<std::string> positive;
  std::optional<std::string> background;
  double duration = 60.0;
  double rate = 2.0;
  double noise_db = -30.0;
  double hop = 0.25;
  int tolerance = 4;
  int population = 24;
  int generations = 30;
};

void cmd_calibrate(const Runner& r, const CalibrateArgs& a) {
  const auto c = r.config();
  const auto g = r.load_model(a.dtype);
  const auto ds = r.dataset(c);
  const std::string positive = a.positive.value_or(ds.classes.front());
  const int cls = ds.class_index(positive);
  calibrate::StreamOptions so;
  so.duration_s = a.duration;
  so.event_rate_per_min = a.rate;
  so.positive_label = positive;
  so.hop_s = a.hop;
  so.seed = c.seed;
  if (a.background) {
    so.background_label = *a.background;
    so.noise_db.reset();
  } else {
    so.noise_db = a.noise_db;
  }
  const auto stream = calibrate::synth_stream(ds, c.dsp, so);
  const auto probs = calibrate::stream_probabilities(g, stream);
  std::vector<double> p;
  for (const auto& row : probs) p.push_back(row.at(static_cast<std::size_t>(cls)));
  calibrate::GaParams gp;
  gp.population = a.population;
  gp.generations = a.generations;
  gp.seed = c.seed;
  const calibrate::GeneBounds bounds;
  const auto res = calibrate::ga_search(calibrate::stream_evaluator(p, stream.events, a.tolerance, cls),
                                        bounds, gp);
  json report = calibrate::calibration_report(res, gp, bounds, a.tolerance);
  report["positive_label"] = positive;
  report["dtype"] = a.dtype;
  report["stream"] = {{"duration_s", a.duration}, {"event_rate_per_min", a.rate},
                      {"frames", stream.num_frames()}, {"events", stream.events.size()},
                      {"hop_s", a.hop}, {"seed", c.seed}};
  if (a.background) report["stream"]["background_label"] = *a.background;
  else report["stream"]["noise_db"] = a.noise_db;
  project::write_text(r.files().reports_dir() / "calibration.json", report.dump(2) + "\n");
  std::ostringstream os;
  os << "stream: " << stream.num_frames() << " frames, " << stream.events.size() << " '" << positive
     << "' events; " << res.evaluated.size() << " configs evaluated\n"
     << "window  threshold  suppression     FAR     FRR\n";
  for (const auto& f : res.front) {
    char line[128];
    std::snprintf(line, sizeof line, "%6d  %9.3f  %11d  %6.3f  %6.3f\n", f.config.averaging_window_frames,
                  f.config.threshold, f.config.suppression_frames, f.far, f.frr);
    os << line;
  }
  r.emit("calibrate", report, os.str());
}

// --- run --------------------------------------------------------------------

struct RunArgs {
  std::string dtype = "f32";
  std::string model;
  std::string input;
  std::string output;
  std::string trace;
  int trace_index = 0;
};

void cmd_run(const Runner& r, const RunArgs& a) {
  const auto g = a.model.empty() ? r.load_model(a.dtype) : ir::load_model(a.model);
  const interp::Interpreter in(g);
  const auto fv = interp::decode_fvf(project::read_file(a.input));
  if (!fv.vectors.empty() && fv.len != in.input_size()) {
    throw Error(a.input + ": vectors have " + std::to_string(fv.len) + " values, the model takes " +
                std::to_string(in.input_size()));
  }
  interp::FeatureVectors out;
  out.len = static_cast<std::uint32_t>(in.output_size());
  for (const auto& v : fv.vectors) out.vectors.push_back(in.run(v));
  project::write_file(a.output, interp::encode_fvf(out));
  if (!a.trace.empty()) {
    if (a.trace_index < 0 || static_cast<std::size_t>(a.trace_index) >= fv.vectors.size()) {
      throw Error("--trace-index " + std::to_string(a.trace_index) + " is out of range");
    }
    project::write_file(a.trace, interp::encode_trace(interp::collect_trace(
                                     in, fv.vectors[static_cast<std::size_t>(a.trace_index)])));
  }
  std::ostringstream os;
  os << "ran " << fv.vectors.size() << " vector(s) through the " << ir::to_string(g.activation_dtype())
     << " model; outputs in " << a.output << "\n";
  r.emit("run", {{"vectors", fv.vectors.size()}, {"output", a.output}, {"trace", a.trace}}, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyforge: dataset to microcontroller C, with a resource-aware tuner"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-C,--project", g.project, "Project directory")->capture_default_str();
  std::uint64_t seed_v = 0;
  auto* seed_opt = app.add_option("--seed", seed_v, "Seed override for this command");
  std::string profile_v;
  auto* profile_opt = app.add_option("--profile", profile_v, "Device profile (nano33, esp-eye, pico, or a file in $TINYFORGE_PROFILE_DIR)");
  app.add_flag("--json", g.json_out, "Print one JSON document on stdout instead of text");

  InitArgs init_a;
  auto* init = app.add_subcommand("init", "Create the project skeleton");
  init->add_option("--kind", init_a.kind, "audio or timeseries")
      ->check(CLI::IsMember({"audio", "timeseries"}))->capture_default_str();
  init->add_flag("--demo", init_a.demo, "Also write a synthetic 3-class tone dataset to incoming/");
  init->add_option("--per-class", init_a.per_class, "Demo samples per class")->capture_default_str();
  init->add_flag("--force", init_a.force, "Overwrite an existing project.json and impulse.json");

  IngestArgs ingest_a;
  auto* ingest = app.add_subcommand("ingest", "Import WAV/CSV/JSON files or directories");
  ingest->add_option("paths", ingest_a.paths, "Files or directories")->required();
  ingest->add_option("--label", ingest_a.label, "Label (default: parent directory name)");
  ingest->add_option("--split", ingest_a.split, "train or test")
      ->check(CLI::IsMember({"train", "test"}))->capture_default_str();

  double split_fraction = 0.2;
  auto* split = app.add_subcommand("split", "Stratified train/test split");
  auto* split_opt = split->add_option("--test-fraction", split_fraction, "Fraction of each class held out");

  auto* stats = app.add_subcommand("stats", "Per-class counts and duration");

  DspArgs dsp_a;
  auto* dspc = app.add_subcommand("dsp", "Compute features; flags update impulse.json");
  dspc->add_option("--block", dsp_a.block, "raw, mfe or mfcc");
  dspc->add_option("--frame-length", dsp_a.frame_length, "Frame length (s)");
  dspc->add_option("--frame-stride", dsp_a.frame_stride, "Frame stride (s)");
  dspc->add_option("--window-size", dsp_a.window_size, "Analysis window (s)");
  dspc->add_option("--filters", dsp_a.filters, "Mel filters");
  dspc->add_option("--coeffs", dsp_a.coeffs, "Cepstral coefficients (mfcc)");
  dspc->add_option("--fft-size", dsp_a.fft_size, "FFT size (0 = next power of two)");
  dspc->add_option("--low-freq", dsp_a.low_freq, "Lowest filter edge (Hz)");
  dspc->add_option("--high-freq", dsp_a.high_freq, "Highest filter edge (Hz, 0 = Nyquist)");
  dspc->add_option("--noise-floor", dsp_a.noise_floor, "Noise floor (dB)");

  TrainArgs train_a;
  auto* train = app.add_subcommand("train", "Train the float model");
  train->add_option("--epochs", train_a.epochs)->capture_default_str();
  train->add_option("--batch-size", train_a.batch_size)->capture_default_str();
  train->add_option("--lr", train_a.lr, "Learning rate (found automatically when omitted)");
  train->add_option("--val-fraction", train_a.val_fraction)->capture_default_str();
  train->add_option("--model", train_a.model_template, "Architecture, e.g. \"2x conv1d (8 to 16)\" or \"mlp (20, 10)\"");

  std::string eval_dtype = "f32";
  auto* eval = app.add_subcommand("eval", "Confusion matrix on the test split");
  eval->add_option("--dtype", eval_dtype, "f32 or i8")->check(CLI::IsMember({"f32", "i8"}))->capture_default_str();

  int calib = 64;
  auto* quantize = app.add_subcommand("quantize", "Full int8 conversion");
  quantize->add_option("--calibration-samples", calib, "Training vectors used for ranges")->capture_default_str();

  BuildArgs build_a;
  auto* build = app.add_subcommand("build", "Generate C into deploy/");
  build->add_option("--dtype", build_a.dtype, "f32 or i8")->check(CLI::IsMember({"f32", "i8"}))->capture_default_str();
  build->add_option("--prefix", build_a.prefix, "Symbol and file prefix")->capture_default_str();
  build->add_flag("--trace-hooks", build_a.trace_hooks, "Emit <prefix>_set_trace()");

  std::string est_dtype = "i8";
  std::vector<std::string> est_cons;
  auto* est = app.add_subcommand("estimate", "Latency, RAM and flash on a device profile");
  est->add_option("--dtype", est_dtype, "f32 or i8")->check(CLI::IsMember({"f32", "i8"}))->capture_default_str();
  est->add_option("--constraint", est_cons, "ram=256k, flash=1M or latency=100 (repeatable)");

  TuneArgs tune_a;
  auto* tune = app.add_subcommand("tune", "Random search over DSP and model configs");
  auto* trials_opt = tune->add_option("--trials", tune_a.trials, "Configs to sample")->capture_default_str();
  tune->add_option("--constraint", tune_a.constraints, "ram=256k, flash=1M or latency=100 (repeatable)");
  tune->add_option("--objective", tune_a.objective, "accuracy, latency, ram or flash")->capture_default_str();
  tune->add_option("--epochs", tune_a.epochs, "Training epochs per trial")->capture_default_str();
  tune->add_option("--select", tune_a.select, "Write this trial's config into impulse.json");

  CalibrateArgs cal_a;
  auto* cal = app.add_subcommand("calibrate", "Search post-processing settings on a synthetic stream");
  cal->add_option("--dtype", cal_a.dtype, "f32 or i8")->check(CLI::IsMember({"f32", "i8"}))->capture_default_str();
  cal->add_option("--positive", cal_a.positive, "Event class (default: first class)");
  cal->add_option("--background", cal_a.background, "Tile the bed from this class instead of white noise");
  cal->add_option("--duration", cal_a.duration, "Stream length (s)")->capture_default_str();
  cal->add_option("--rate", cal_a.rate, "Events per minute")->capture_default_str();
  cal->add_option("--noise-db", cal_a.noise_db, "White-noise bed level (dBFS)")->capture_default_str();
  cal->add_option("--hop", cal_a.hop, "Decision hop (s)")->capture_default_str();
  cal->add_option("--tolerance", cal_a.tolerance, "Detection tolerance (frames)")->capture_default_str();
  cal->add_option("--population", cal_a.population)->capture_default_str();
  cal->add_option("--generations", cal_a.generations)->capture_default_str();

  RunArgs run_a;
  auto* run = app.add_subcommand("run", "Run the interpreter over a feature vector file");
  run->add_option("--dtype", run_a.dtype, "f32 or i8")->check(CLI::IsMember({"f32", "i8"}))->capture_default_str();
  run->add_option("--model", run_a.model, "Model file (default: artifacts/model.<dtype>.json)");
  run->add_option("--input", run_a.input, "Input .fvf")->required();
  run->add_option("--output", run_a.output, "Output .fvf")->required();
  run->add_option("--trace", run_a.trace, "Also dump every tensor of one vector to this file");
  run->add_option("--trace-index", run_a.trace_index, "Vector to trace")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) g.seed = seed_v;
  if (*profile_opt) g.profile = profile_v;

  // Domain errors: message on stderr, plus an error document on stdout
  // under --json.
  auto fail = [&](const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    if (g.json_out) {
      const auto subs = app.get_subcommands();
      const std::string name = subs.empty() ? "" : subs.front()->get_name();
      std::cout << json{{"command", name}, {"status", "error"}, {"error", msg}}.dump() << "\n";
    }
    return 1;
  };
  try {
    Runner r(g);
    if (!*init && !fs::is_directory(r.files().root)) {
      throw Error("project directory " + r.files().root.string() + " does not exist; run 'tinyforge init' first");
    }
    ProjectLock lock(r.files().root);
    if (*init) cmd_init(r, init_a);
    else if (*ingest) cmd_ingest(r, ingest_a);
    else if (*split) cmd_split(r, *split_opt ? std::optional<double>(split_fraction) : std::nullopt);
    else if (*stats) cmd_stats(r);
    else if (*dspc) cmd_dsp(r, dsp_a);
    else if (*train) cmd_train(r, train_a);
    else if (*eval) cmd_eval(r, eval_dtype);
    else if (*quantize) cmd_quantize(r, calib);
    else if (*build) cmd_build(r, build_a);
    else if (*est) cmd_estimate(r, est_dtype, est_cons);
    else if (*tune) cmd_tune(r, tune_a, trials_opt->count() > 0);
    else if (*cal) cmd_calibrate(r, cal_a);
    else if (*run) cmd_run(r, run_a);
  } catch (const tinyforge::Error& e) {
    return fail(e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(std::string("malformed JSON: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(e.what());
  }
  return 0;
}
