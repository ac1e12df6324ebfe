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

#include "tinyforge/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "tinyforge/interp.hpp"

namespace tinyforge::calibrate {

void PostProcessConfig::validate() const {
  if (averaging_window_frames < 1) throw ValidationError("averaging window must be >= 1 frame");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must lie in (0, 1)");
  if (suppression_frames < 0) throw ValidationError("suppression must be >= 0 frames");
}

void to_json(nlohmann::json& j, const PostProcessConfig& c) {
  j = {{"averaging_window_frames", c.averaging_window_frames},
       {"threshold", c.threshold},
       {"suppression_frames", c.suppression_frames}};
}

LabeledStream synth_stream(const project::Dataset& ds, const dsp::DspConfig& cfg,
                           const StreamOptions& opts) {
  if (!(opts.duration_s > 0.0)) throw Error("stream duration must be > 0");
  if (opts.event_rate_per_min < 0.0) throw Error("event rate must be >= 0");
  if (!(opts.hop_s > 0.0)) throw Error("hop must be > 0");
  std::vector<const project::Sample*> positives, background;
  for (const auto& s : ds.samples) {
    if (s.label == opts.positive_label) positives.push_back(&s);
    if (!opts.background_label.empty() && s.label == opts.background_label) background.push_back(&s);
  }
  int rate = 0;
  for (const auto* s : positives) {
    if (rate == 0) rate = s->sample_rate_hz;
    if (s->sample_rate_hz != rate) throw Error("positive samples mix sample rates");
  }
  if (rate == 0) {
    for (const auto& s : ds.samples) {
      rate = s.sample_rate_hz;
      break;
    }
  }
  if (rate == 0) throw Error("dataset is empty");
  if (opts.event_rate_per_min > 0.0 && positives.empty()) {
    throw Error("no samples with positive label '" + opts.positive_label + "'");
  }
  if (!opts.noise_db && background.empty()) {
    throw Error("stream needs a noise level or a background class with samples");
  }
  cfg.validate(rate);

  LabeledStream st;
  st.sample_rate_hz = rate;
  st.window_samples = cfg.window_samples(rate);
  st.hop_samples = std::max(1, static_cast<int>(std::lround(opts.hop_s * rate)));
  const auto n = static_cast<std::int64_t>(std::llround(opts.duration_s * rate));
  st.signal.assign(static_cast<std::size_t>(n), 0.0);

  std::mt19937_64 rng(opts.seed);
  if (opts.noise_db) {
    std::normal_distribution<double> noise(0.0, std::pow(10.0, *opts.noise_db / 20.0));
    for (auto& v : st.signal) v = noise(rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, background.size() - 1);
    std::size_t at = 0;
    while (at < st.signal.size()) {
      const auto src = background[pick(rng)]->mono();
      if (src.empty()) throw Error("background sample is empty");
      for (std::size_t i = 0; i < src.size() && at < st.signal.size(); ++i) st.signal[at++] = src[i];
    }
  }

  const double mean_events = opts.event_rate_per_min * opts.duration_s / 60.0;
  const int count = mean_events > 0.0 ? std::poisson_distribution<int>(mean_events)(rng) : 0;
  for (int e = 0; e < count; ++e) {
    const auto* s = positives[std::uniform_int_distribution<std::size_t>(0, positives.size() - 1)(rng)];
    const auto src = s->mono();
    const auto len = std::min<std::int64_t>(static_cast<std::int64_t>(src.size()), n);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const std::int64_t start = std::uniform_int_distribution<std::int64_t>(0, n - len)(rng);
      const bool clash = std::any_of(st.events.begin(), st.events.end(), [&](const Interval& iv) {
        return start < iv.end_sample && iv.start_sample < start + len;
      });
      if (clash) continue;
      Interval iv;
      iv.cls = ds.class_index(s->label);
      iv.start_sample = start;
      iv.end_sample = start + len;
      for (std::int64_t i = 0; i < len; ++i) st.signal[static_cast<std::size_t>(start + i)] += src[static_cast<std::size_t>(i)];
      st.events.push_back(iv);
      placed = true;
    }
    if (!placed) {
      throw Error("could not place event " + std::to_string(e + 1) + " of " + std::to_string(count) +
                  " without overlap; lower the event rate or lengthen the stream");
    }
  }
  std::sort(st.events.begin(), st.events.end(),
            [](const Interval& a, const Interval& b) { return a.start_sample < b.start_sample; });

  const std::int64_t frames =
      n >= st.window_samples ? (n - st.window_samples) / st.hop_samples + 1 : 0;
  const std::int64_t hop = st.hop_samples;
  for (auto& iv : st.events) {
    const std::int64_t first = (iv.start_sample + hop - 1) / hop;
    const std::int64_t last = std::max(first, (iv.end_sample + hop - 1) / hop - 1);
    iv.start_frame = static_cast<int>(std::min(first, std::max<std::int64_t>(frames - 1, 0)));
    iv.end_frame = static_cast<int>(std::min(last, std::max<std::int64_t>(frames - 1, 0)));
  }

  if (opts.compute_features) {
    st.features.resize(static_cast<std::size_t>(frames));
    const auto nf = static_cast<long>(frames);
#pragma omp parallel for schedule(static)
    for (long f = 0; f < nf; ++f) {
      project::Sample w;
      w.sample_rate_hz = rate;
      w.channels = 1;
      const auto begin = st.signal.begin() + f * st.hop_samples;
      w.data.assign(begin, begin + st.window_samples);
      st.features[static_cast<std::size_t>(f)] = dsp::dsp_process(w, cfg).as_float();
    }
  } else {
    st.features.assign(static_cast<std::size_t>(frames), {});
  }
  return st;
}

std::vector<Detection> apply_postprocess(std::span<const double> p, const PostProcessConfig& cfg,
                                         int cls) {
  cfg.validate();
  std::vector<Detection> out;
  const int w = cfg.averaging_window_frames;
  const int n = static_cast<int>(p.size());
  double sum = 0.0;
  bool prev_above = false;
  int blocked_until = -1;  // last frame that cannot fire
  for (int t = 0; t < n; ++t) {
    sum += p[static_cast<std::size_t>(t)];
    if (t >= w) sum -= p[static_cast<std::size_t>(t - w)];
    if (t < w - 1) continue;
    // Recompute exactly every window to keep long streams drift-free.
    double exact = 0.0;
    for (int i = t - w + 1; i <= t; ++i) exact += p[static_cast<std::size_t>(i)];
    sum = exact;
    const double avg = exact / w;
    const bool above = avg >= cfg.threshold;
    if (above && !prev_above && t > blocked_until) {
      out.push_back({cls, t});
      blocked_until = t + cfg.suppression_frames;
    }
    prev_above = above;
  }
  return out;
}

std::vector<Detection> apply_postprocess(const std::vector<std::vector<float>>& probs,
                                         int positive_class, const PostProcessConfig& cfg) {
  std::vector<double> p;
  p.reserve(probs.size());
  for (const auto& row : probs) p.push_back(row.at(static_cast<std::size_t>(positive_class)));
  return apply_postprocess(p, cfg, positive_class);
}

Score score_far_frr(std::span<const Detection> detections, std::span<const Interval> truth,
                    int total_frames, int averaging_window_frames, int tolerance_frames) {
  Score s;
  std::vector<char> hit(truth.size(), 0);
  for (const auto& d : detections) {
    bool matched = false;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (d.frame >= truth[i].start_frame - tolerance_frames &&
          d.frame <= truth[i].end_frame + tolerance_frames) {
        hit[i] = 1;
        matched = true;
      }
    }
    if (!matched) ++s.false_accepts;
  }
  s.hits = static_cast<int>(std::count(hit.begin(), hit.end(), 1));
  s.frr = truth.empty() ? 0.0
                        : static_cast<double>(truth.size() - static_cast<std::size_t>(s.hits)) /
                              static_cast<double>(truth.size());
  const double windows =
      static_cast<double>(total_frames) / static_cast<double>(std::max(1, averaging_window_frames));
  if (s.false_accepts == 0) {
    s.far = 0.0;
  } else {
    s.far = windows > 0.0 ? std::min(1.0, s.false_accepts / windows) : 1.0;
  }
  return s;
}

bool dominates(const CalibrationResult& a, const CalibrationResult& b) {
  return a.far <= b.far && a.frr <= b.frr && (a.far < b.far || a.frr < b.frr);
}

std::vector<CalibrationResult> pareto_front(std::vector<CalibrationResult> results) {
  std::vector<CalibrationResult> front;
  for (const auto& r : results) {
    const bool beaten = std::any_of(results.begin(), results.end(),
                                    [&](const CalibrationResult& o) { return dominates(o, r); });
    if (beaten) continue;
    const bool dup = std::any_of(front.begin(), front.end(), [&](const CalibrationResult& o) {
      return o.far == r.far && o.frr == r.frr;
    });
    if (!dup) front.push_back(r);
  }
  std::sort(front.begin(), front.end(), [](const CalibrationResult& a, const CalibrationResult& b) {
    return a.far != b.far ? a.far < b.far : a.frr < b.frr;
  });
  return front;
}

void GeneBounds::validate() const {
  if (window_min < 1 || window_max < window_min) throw ValidationError("bad window bounds");
  if (!(threshold_min > 0.0 && threshold_max < 1.0 && threshold_min <= threshold_max)) {
    throw ValidationError("threshold bounds must satisfy 0 < min <= max < 1");
  }
  if (suppression_min < 0 || suppression_max < suppression_min) {
    throw ValidationError("bad suppression bounds");
  }
  if (threshold_step && !(*threshold_step > 0.0)) throw ValidationError("threshold step must be > 0");
  if (window_step && *window_step < 1) throw ValidationError("window step must be >= 1");
  if (suppression_step && *suppression_step < 1) throw ValidationError("suppression step must be >= 1");
}

bool GeneBounds::degenerate() const {
  return window_min == window_max && threshold_min == threshold_max &&
         suppression_min == suppression_max;
}

namespace {

int snap_int(int v, int lo, int hi, std::optional<int> step) {
  v = std::clamp(v, lo, hi);
  if (step) {
    const int k = static_cast<int>(std::lround(static_cast<double>(v - lo) / *step));
    v = lo + k * *step;
    while (v > hi) v -= *step;
  }
  return v;
}

double snap_real(double v, double lo, double hi, std::optional<double> step) {
  v = std::clamp(v, lo, hi);
  if (step) {
    auto k = std::llround((v - lo) / *step);
    while (k > 0 && lo + static_cast<double>(k) * *step > hi + 1e-12) --k;
    v = lo + static_cast<double>(k) * *step;
  }
  return v;
}

}  // namespace

PostProcessConfig GeneBounds::clamp(PostProcessConfig c) const {
  c.averaging_window_frames =
      snap_int(c.averaging_window_frames, window_min, window_max, window_step);
  c.threshold = snap_real(c.threshold, threshold_min, threshold_max, threshold_step);
  c.suppression_frames =
      snap_int(c.suppression_frames, suppression_min, suppression_max, suppression_step);
  return c;
}

std::vector<PostProcessConfig> GeneBounds::grid() const {
  validate();
  std::vector<int> windows, supps;
  std::vector<double> thresholds;
  if (window_min != window_max && !window_step) throw Error("grid needs a window step");
  if (suppression_min != suppression_max && !suppression_step) {
    throw Error("grid needs a suppression step");
  }
  if (threshold_min != threshold_max && !threshold_step) throw Error("grid needs a threshold step");
  for (int w = window_min; w <= window_max; w += window_step.value_or(1)) windows.push_back(w);
  for (int s = suppression_min; s <= suppression_max; s += suppression_step.value_or(1)) supps.push_back(s);
  for (long long k = 0;; ++k) {
    const double t = threshold_min + static_cast<double>(k) * threshold_step.value_or(1.0);
    if (t > threshold_max + 1e-12) break;
    thresholds.push_back(t);
    if (!threshold_step) break;
  }
  std::vector<PostProcessConfig> out;
  for (int w : windows) {
    for (double t : thresholds) {
      for (int s : supps) out.push_back({w, t, s});
    }
  }
  return out;
}

void GaParams::validate() const {
  if (population < 4) throw ValidationError("population must be >= 4");
  if (generations < 0) throw ValidationError("generations must be >= 0");
  if (crossover_rate < 0.0 || crossover_rate > 1.0) throw ValidationError("crossover rate must lie in [0, 1]");
  if (mutation_rate < 0.0 || mutation_rate > 1.0) throw ValidationError("mutation rate must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const GaParams& p) {
  j = {{"population", p.population},     {"generations", p.generations},
       {"crossover_rate", p.crossover_rate}, {"mutation_rate", p.mutation_rate},
       {"seed", p.seed},                 {"initial", p.initial}};
}

namespace {

struct Ranked {
  std::vector<int> rank;
  std::vector<double> crowding;
};

// Fast non-dominated sort plus crowding distance per front.
Ranked rank_population(const std::vector<CalibrationResult>& pop) {
  const std::size_t n = pop.size();
  Ranked r;
  r.rank.assign(n, 0);
  r.crowding.assign(n, 0.0);
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts(1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(pop[i], pop[j])) dominated[i].push_back(j);
      else if (dominates(pop[j], pop[i])) ++count[i];
    }
    if (count[i] == 0) fronts[0].push_back(i);
  }
  for (std::size_t f = 0; f < fronts.size() && !fronts[f].empty(); ++f) {
    std::vector<std::size_t> next;
    for (std::size_t i : fronts[f]) {
      r.rank[i] = static_cast<int>(f);
      for (std::size_t j : dominated[i]) {
        if (--count[j] == 0) next.push_back(j);
      }
    }
    if (!next.empty()) fronts.push_back(std::move(next));
  }
  for (const auto& front : fronts) {
    if (front.empty()) continue;
    for (int obj = 0; obj < 2; ++obj) {
      auto val = [&](std::size_t i) { return obj == 0 ? pop[i].far : pop[i].frr; };
      std::vector<std::size_t> order = front;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return val(a) < val(b); });
      const double span = val(order.back()) - val(order.front());
      r.crowding[order.front()] = std::numeric_limits<double>::infinity();
      r.crowding[order.back()] = std::numeric_limits<double>::infinity();
      if (span <= 0.0) continue;
      for (std::size_t k = 1; k + 1 < order.size(); ++k) {
        r.crowding[order[k]] += (val(order[k + 1]) - val(order[k - 1])) / span;
      }
    }
  }
  return r;
}

bool better(const Ranked& r, std::size_t a, std::size_t b) {
  if (r.rank[a] != r.rank[b]) return r.rank[a] < r.rank[b];
  return r.crowding[a] > r.crowding[b];
}

}  // namespace

GaResult ga_search(const Evaluator& eval, const GeneBounds& bounds, const GaParams& params) {
  bounds.validate();
  params.validate();
  std::map<PostProcessConfig, std::pair<double, double>> cache;
  GaResult result;

  auto evaluate_all = [&](const std::vector<PostProcessConfig>& configs) {
    std::vector<PostProcessConfig> fresh;
    for (const auto& c : configs) {
      if (!cache.count(c) &&
          std::find(fresh.begin(), fresh.end(), c) == fresh.end()) {
        fresh.push_back(c);
      }
    }
    std::vector<std::pair<double, double>> scores(fresh.size());
    const auto n = static_cast<long>(fresh.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) scores[static_cast<std::size_t>(i)] = eval(fresh[static_cast<std::size_t>(i)]);
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      cache.emplace(fresh[i], scores[i]);
      result.evaluated.push_back({fresh[i], scores[i].first, scores[i].second});
    }
    std::vector<CalibrationResult> out;
    for (const auto& c : configs) {
      const auto& s = cache.at(c);
      out.push_back({c, s.first, s.second});
    }
    return out;
  };

  if (bounds.degenerate()) {
    evaluate_all({bounds.clamp({bounds.window_min, bounds.threshold_min, bounds.suppression_min})});
    result.front = pareto_front(result.evaluated);
    return result;
  }

  std::mt19937_64 rng(params.seed);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform_real = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  std::vector<PostProcessConfig> pop;
  for (const auto& c : params.initial) {
    if (static_cast<int>(pop.size()) < params.population) pop.push_back(bounds.clamp(c));
  }
  while (static_cast<int>(pop.size()) < params.population) {
    pop.push_back(bounds.clamp({uniform_int(bounds.window_min, bounds.window_max),
                                uniform_real(bounds.threshold_min, bounds.threshold_max),
                                uniform_int(bounds.suppression_min, bounds.suppression_max)}));
  }
  auto scored = evaluate_all(pop);

  auto int_step = [&](int v, int lo, int hi, std::optional<int> step) {
    const int unit = step.value_or(1);
    const double sigma = std::max(1.0, 0.15 * (hi - lo) / unit);
    int delta = static_cast<int>(std::lround(std::normal_distribution<double>(0.0, sigma)(rng)));
    if (delta == 0) delta = coin(0.5) ? 1 : -1;
    return v + delta * unit;
  };

  for (int gen = 0; gen < params.generations; ++gen) {
    const Ranked rk = rank_population(scored);
    auto tournament = [&]() {
      const auto n = scored.size();
      const auto a = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      const auto b = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      return better(rk, b, a) ? b : a;
    };
    std::vector<PostProcessConfig> children;
    while (static_cast<int>(children.size()) < params.population) {
      PostProcessConfig c1 = scored[tournament()].config;
      PostProcessConfig c2 = scored[tournament()].config;
      if (coin(params.crossover_rate)) {
        if (coin(0.5)) std::swap(c1.averaging_window_frames, c2.averaging_window_frames);
        if (coin(0.5)) std::swap(c1.threshold, c2.threshold);
        if (coin(0.5)) std::swap(c1.suppression_frames, c2.suppression_frames);
      }
      for (auto* c : {&c1, &c2}) {
        if (coin(params.mutation_rate)) {
          c->averaging_window_frames = int_step(c->averaging_window_frames, bounds.window_min,
                                                bounds.window_max, bounds.window_step);
        }
        if (coin(params.mutation_rate)) {
          const double range = bounds.threshold_max - bounds.threshold_min;
          double sigma = 0.1 * range;
          if (bounds.threshold_step) sigma = std::max(sigma, *bounds.threshold_step);
          c->threshold += std::normal_distribution<double>(0.0, sigma)(rng);
        }
        if (coin(params.mutation_rate)) {
          c->suppression_frames = int_step(c->suppression_frames, bounds.suppression_min,
                                           bounds.suppression_max, bounds.suppression_step);
        }
        *c = bounds.clamp(*c);
        if (static_cast<int>(children.size()) < params.population) children.push_back(*c);
      }
    }
    auto child_scores = evaluate_all(children);

    std::vector<CalibrationResult> merged = scored;
    merged.insert(merged.end(), child_scores.begin(), child_scores.end());
    const Ranked mr = rank_population(merged);
    std::vector<std::size_t> order(merged.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return better(mr, a, b); });
    std::vector<CalibrationResult> next;
    for (std::size_t i = 0; i < static_cast<std::size_t>(params.population); ++i) {
      next.push_back(merged[order[i]]);
    }
    scored = std::move(next);
  }
  result.front = pareto_front(result.evaluated);
  return result;
}

Evaluator stream_evaluator(std::vector<double> positive_prob, std::vector<Interval> truth,
                           int tolerance_frames, int positive_class) {
  return [p = std::move(positive_prob), t = std::move(truth), tolerance_frames,
          positive_class](const PostProcessConfig& c) {
    const auto det = apply_postprocess(p, c, positive_class);
    const auto s = score_far_frr(det, t, static_cast<int>(p.size()), c.averaging_window_frames,
                                 tolerance_frames);
    return std::make_pair(s.far, s.frr);
  };
}

std::vector<std::vector<float>> stream_probabilities(const ir::ModelGraph& g,
                                                     const LabeledStream& stream) {
  const interp::Interpreter interp(g);
  std::vector<std::vector<float>> out(stream.features.size());
  const auto n = static_cast<long>(out.size());
  interp::RunOptions opts;
  opts.exec = kernels::Exec::kSerial;
#pragma omp parallel for schedule(static)
  for (long f = 0; f < n; ++f) {
    out[static_cast<std::size_t>(f)] = interp.run(stream.features[static_cast<std::size_t>(f)], opts);
  }
  return out;
}

nlohmann::json calibration_report(const GaResult& r, const GaParams& params,
                                  const GeneBounds& bounds, int tolerance_frames) {
  auto rows = [](const std::vector<CalibrationResult>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) a.push_back({{"config", c.config}, {"far", c.far}, {"frr", c.frr}});
    return a;
  };
  nlohmann::json b = {{"window_min", bounds.window_min},
                      {"window_max", bounds.window_max},
                      {"threshold_min", bounds.threshold_min},
                      {"threshold_max", bounds.threshold_max},
                      {"suppression_min", bounds.suppression_min},
                      {"suppression_max", bounds.suppression_max}};
  if (bounds.threshold_step) b["threshold_step"] = *bounds.threshold_step;
  if (bounds.window_step) b["window_step"] = *bounds.window_step;
  if (bounds.suppression_step) b["suppression_step"] = *bounds.suppression_step;
  return {{"ga_params", params},
          {"bounds", b},
          {"tolerance_frames", tolerance_frames},
          {"evaluated", rows(r.evaluated)},
          {"front", rows(r.front)}};
}

}  // namespace tinyforge::calibrate
