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

#include "tinyforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include "tinyforge/interp.hpp"

namespace tinyforge::trainer {

using ir::OpKind;

std::string to_string(DataKind k) { return k == DataKind::kAudio ? "audio" : "timeseries"; }

DataKind data_kind_from_string(const std::string& s) {
  if (s == "audio") return DataKind::kAudio;
  if (s == "timeseries") return DataKind::kTimeseries;
  throw Error("unknown data kind '" + s + "' (expected audio or timeseries)");
}

Architecture parse_descriptor(const std::string& descriptor) {
  static const std::regex conv(R"(\s*(\d+)x\s*conv1d\s*\(\s*(\d+)\s*to\s*(\d+)\s*(,\s*no pool\s*)?\)\s*)");
  static const std::regex mlp(R"(\s*mlp\s*\(([\d\s,]*)\)\s*)");
  std::smatch m;
  Architecture a;
  if (std::regex_match(descriptor, m, conv)) {
    a.kind = Architecture::Kind::kConvStack;
    const int n = std::stoi(m[1]);
    const double lo = std::stod(m[2]), hi = std::stod(m[3]);
    if (n < 1 || lo < 1 || hi < lo) throw Error("bad conv1d descriptor '" + descriptor + "'");
    for (int i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
      a.widths.push_back(static_cast<int>(std::lround(lo * std::pow(hi / lo, t))));
    }
    a.pool = !m[4].matched;
    return a;
  }
  if (std::regex_match(descriptor, m, mlp)) {
    a.kind = Architecture::Kind::kMlp;
    std::stringstream ss(m[1].str());
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.find_first_not_of(" \t") == std::string::npos) continue;
      const int w = std::stoi(item);
      if (w < 1) throw Error("bad mlp width in '" + descriptor + "'");
      a.widths.push_back(w);
    }
    return a;
  }
  throw Error("unrecognized model descriptor '" + descriptor + "'");
}

std::string default_descriptor(DataKind kind) {
  return kind == DataKind::kAudio ? "2x conv1d (8 to 16)" : "mlp (20, 10)";
}

namespace {

std::vector<float> glorot(std::mt19937_64& rng, std::size_t n, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<float> w(n);
  for (auto& v : w) v = static_cast<float>(dist(rng));
  return w;
}

}  // namespace

ir::ModelGraph init_preset(DataKind kind, int rows, int cols, int num_classes, std::uint64_t seed,
                           const std::string& descriptor) {
  if (num_classes < 2) throw Error("a classifier needs at least 2 classes");
  if (rows < 1 || cols < 1) throw Error("feature shape must be positive");
  const Architecture arch =
      parse_descriptor(descriptor.empty() ? default_descriptor(kind) : descriptor);
  std::mt19937_64 rng(seed);
  ir::GraphBuilder b({rows, cols});
  int x = b.input();
  if (arch.kind == Architecture::Kind::kConvStack) {
    constexpr int kKernel = 3;
    for (int width : arch.widths) {
      const auto s = b.shape(x);
      if (s[0] < kKernel) throw Error("input of " + std::to_string(rows) + " frames is too short for this conv stack");
      x = b.conv1d(x, width, kKernel, 1,
                   glorot(rng, static_cast<std::size_t>(kKernel * s[1] * width), kKernel * s[1],
                          kKernel * width),
                   std::vector<float>(static_cast<std::size_t>(width), 0.0f));
      x = b.relu(x);
      if (arch.pool && b.shape(x)[0] >= 2 * kKernel) x = b.maxpool1d(x, 2, 2);
    }
  }
  x = b.flatten(x);
  if (arch.kind == Architecture::Kind::kMlp) {
    for (int width : arch.widths) {
      const int in = b.shape(x)[0];
      x = b.dense(x, width, glorot(rng, static_cast<std::size_t>(in * width), in, width),
                  std::vector<float>(static_cast<std::size_t>(width), 0.0f));
      x = b.relu(x);
    }
  }
  const int in = b.shape(x)[0];
  // Classifier bias starts at the log prior, uniform until data is seen.
  const auto prior_bias = static_cast<float>(std::log(1.0 / num_classes));
  x = b.dense(x, num_classes, glorot(rng, static_cast<std::size_t>(in * num_classes), in, num_classes),
              std::vector<float>(static_cast<std::size_t>(num_classes), prior_bias));
  x = b.softmax(x);
  return b.finish(x);
}

Network::Network(const ir::ModelGraph& g) : template_(ir::shape_infer_validate(g)) {
  const auto& nodes = template_.nodes;
  if (nodes.empty() || nodes.back().kind != OpKind::kSoftmax) {
    throw Error("trainable graphs must end in softmax");
  }
  int prev = template_.input;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.inputs[0] != prev) throw Error("trainable graphs must be a single chain");
    prev = n.output;
    if (n.kind == OpKind::kSoftmax) {
      if (i + 1 != nodes.size()) throw Error("softmax must be the last node");
      break;
    }
    if (n.kind == OpKind::kKmeansDistance) throw Error("kmeans_distance is not trainable");
    Layer l;
    l.kind = n.kind;
    l.attrs = n.attrs;
    l.relu = n.fused_activation == ir::Activation::kRelu;
    l.in_shape = template_.tensor(n.inputs[0]).shape;
    l.out_shape = template_.tensor(n.output).shape;
    if (n.kind == OpKind::kDense || n.kind == OpKind::kConv1d) {
      const auto& w = template_.f32_weights(n.inputs[1]);
      const auto& b = template_.f32_weights(n.inputs[2]);
      l.w.assign(w.begin(), w.end());
      l.b.assign(b.begin(), b.end());
      l.gw.assign(l.w.size(), 0.0);
      l.gb.assign(l.b.size(), 0.0);
    }
    layers_.push_back(std::move(l));
  }
  input_shape_ = template_.tensor(template_.input).shape;
  input_size_ = template_.tensor(template_.input).num_elements();
  const auto ch = static_cast<std::size_t>(input_shape_.back());
  mean_.assign(ch, 0.0);
  inv_std_.assign(ch, 1.0);
}

void Network::set_standardization(std::vector<double> mean, std::vector<double> inv_std) {
  if (mean.size() != mean_.size() || inv_std.size() != inv_std_.size()) {
    throw Error("standardization size does not match input channels");
  }
  mean_ = std::move(mean);
  inv_std_ = std::move(inv_std);
}

void Network::fit_standardization(const LabeledFeatures& data) {
  // Folding needs the first weighted layer to see the input element-wise.
  for (const auto& l : layers_) {
    if (l.kind == OpKind::kFlatten) continue;
    if (l.kind != OpKind::kDense && l.kind != OpKind::kConv1d) return;
    break;
  }
  const std::size_t ch = mean_.size();
  std::vector<double> sum(ch, 0.0), sq(ch, 0.0);
  std::size_t count = 0;
  for (const auto& x : data.x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[i % ch] += x[i];
      sq[i % ch] += static_cast<double>(x[i]) * x[i];
    }
    count += x.size() / ch;
  }
  if (count == 0) return;
  std::vector<double> mean(ch), inv(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    mean[c] = sum[c] / static_cast<double>(count);
    const double var = std::max(0.0, sq[c] / static_cast<double>(count) - mean[c] * mean[c]);
    inv[c] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  set_standardization(std::move(mean), std::move(inv));
}

std::vector<std::vector<double>> Network::forward_all(std::span<const double> raw) const {
  if (raw.size() != input_size_) {
    throw Error("input has " + std::to_string(raw.size()) + " values, network expects " +
                std::to_string(input_size_));
  }
  std::vector<std::vector<double>> acts;
  acts.reserve(layers_.size() + 1);
  const std::size_t ch = mean_.size();
  std::vector<double> x0(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) x0[i] = (raw[i] - mean_[i % ch]) * inv_std_[i % ch];
  acts.push_back(std::move(x0));
  for (const auto& l : layers_) {
    const auto& in = acts.back();
    std::vector<double> out;
    switch (l.kind) {
      case OpKind::kDense: {
        const int n_in = l.in_shape[0], units = l.attrs.units;
        out.assign(static_cast<std::size_t>(units), 0.0);
        for (int u = 0; u < units; ++u) {
          double acc = l.b[static_cast<std::size_t>(u)];
          for (int i = 0; i < n_in; ++i) acc += in[static_cast<std::size_t>(i)] * l.w[static_cast<std::size_t>(i * units + u)];
          out[static_cast<std::size_t>(u)] = l.relu ? std::max(acc, 0.0) : acc;
        }
        break;
      }
      case OpKind::kConv1d: {
        const int ch_in = l.in_shape[1], F = l.attrs.filters, K = l.attrs.kernel_size,
                  S = l.attrs.stride, T = l.out_shape[0];
        out.assign(static_cast<std::size_t>(T * F), 0.0);
        for (int t = 0; t < T; ++t) {
          for (int f = 0; f < F; ++f) {
            double acc = l.b[static_cast<std::size_t>(f)];
            for (int k = 0; k < K; ++k) {
              for (int c = 0; c < ch_in; ++c) {
                acc += in[static_cast<std::size_t>((t * S + k) * ch_in + c)] *
                       l.w[static_cast<std::size_t>((k * ch_in + c) * F + f)];
              }
            }
            out[static_cast<std::size_t>(t * F + f)] = l.relu ? std::max(acc, 0.0) : acc;
          }
        }
        break;
      }
      case OpKind::kRelu:
        out = in;
        for (auto& v : out) v = std::max(v, 0.0);
        break;
      case OpKind::kMaxPool1d: {
        const int ch_in = l.in_shape[1], P = l.attrs.pool, S = l.attrs.stride, T = l.out_shape[0];
        out.assign(static_cast<std::size_t>(T * ch_in), 0.0);
        for (int t = 0; t < T; ++t) {
          for (int c = 0; c < ch_in; ++c) {
            double m = in[static_cast<std::size_t>((t * S) * ch_in + c)];
            for (int p = 1; p < P; ++p) m = std::max(m, in[static_cast<std::size_t>((t * S + p) * ch_in + c)]);
            out[static_cast<std::size_t>(t * ch_in + c)] = m;
          }
        }
        break;
      }
      case OpKind::kFlatten:
        out = in;
        break;
      default:
        throw Error("unsupported layer in training");
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

namespace {

std::vector<double> softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - m);
  for (auto& v : p) v /= sum;
  return p;
}

double cross_entropy(const std::vector<double>& p, int label) {
  return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
}

}  // namespace

std::vector<double> Network::forward(std::span<const double> x) const {
  return softmax(forward_all(x).back());
}

double Network::loss(std::span<const double> x, int label) const {
  return cross_entropy(forward(x), label);
}

int Network::predict(std::span<const double> x) const {
  const auto p = forward(x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double Network::accumulate_gradients(std::span<const double> x, int label,
                                     std::vector<double>* input_grad) {
  const auto acts = forward_all(x);
  const auto p = softmax(acts.back());
  if (label < 0 || static_cast<std::size_t>(label) >= p.size()) throw Error("label out of range");
  std::vector<double> d = p;
  d[static_cast<std::size_t>(label)] -= 1.0;

  for (std::size_t li = layers_.size(); li-- > 0;) {
    auto& l = layers_[li];
    const auto& in = acts[li];
    const auto& out = acts[li + 1];
    if (l.relu) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (out[i] <= 0.0) d[i] = 0.0;
      }
    }
    std::vector<double> din(in.size(), 0.0);
    switch (l.kind) {
      case OpKind::kDense: {
        const int n_in = l.in_shape[0], units = l.attrs.units;
        for (int u = 0; u < units; ++u) l.gb[static_cast<std::size_t>(u)] += d[static_cast<std::size_t>(u)];
        for (int i = 0; i < n_in; ++i) {
          double acc = 0.0;
          for (int u = 0; u < units; ++u) {
            const auto wi = static_cast<std::size_t>(i * units + u);
            l.gw[wi] += in[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(u)];
            acc += l.w[wi] * d[static_cast<std::size_t>(u)];
          }
          din[static_cast<std::size_t>(i)] = acc;
        }
        break;
      }
      case OpKind::kConv1d: {
        const int ch_in = l.in_shape[1], F = l.attrs.filters, K = l.attrs.kernel_size,
                  S = l.attrs.stride, T = l.out_shape[0];
        for (int t = 0; t < T; ++t) {
          for (int f = 0; f < F; ++f) {
            const double g = d[static_cast<std::size_t>(t * F + f)];
            if (g == 0.0) continue;
            l.gb[static_cast<std::size_t>(f)] += g;
            for (int k = 0; k < K; ++k) {
              for (int c = 0; c < ch_in; ++c) {
                const auto xi = static_cast<std::size_t>((t * S + k) * ch_in + c);
                const auto wi = static_cast<std::size_t>((k * ch_in + c) * F + f);
                l.gw[wi] += in[xi] * g;
                din[xi] += l.w[wi] * g;
              }
            }
          }
        }
        break;
      }
      case OpKind::kRelu:
        for (std::size_t i = 0; i < din.size(); ++i) din[i] = in[i] > 0.0 ? d[i] : 0.0;
        break;
      case OpKind::kMaxPool1d: {
        const int ch_in = l.in_shape[1], P = l.attrs.pool, S = l.attrs.stride, T = l.out_shape[0];
        for (int t = 0; t < T; ++t) {
          for (int c = 0; c < ch_in; ++c) {
            auto best = static_cast<std::size_t>((t * S) * ch_in + c);
            for (int p = 1; p < P; ++p) {
              const auto idx = static_cast<std::size_t>((t * S + p) * ch_in + c);
              if (in[idx] > in[best]) best = idx;
            }
            din[best] += d[static_cast<std::size_t>(t * ch_in + c)];
          }
        }
        break;
      }
      case OpKind::kFlatten:
        din = d;
        break;
      default:
        throw Error("unsupported layer in training");
    }
    d = std::move(din);
  }
  if (input_grad) {
    const std::size_t ch = mean_.size();
    input_grad->resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) (*input_grad)[i] = d[i] * inv_std_[i % ch];
  }
  return cross_entropy(p, label);
}

void Network::zero_gradients() {
  for (auto& l : layers_) {
    std::fill(l.gw.begin(), l.gw.end(), 0.0);
    std::fill(l.gb.begin(), l.gb.end(), 0.0);
  }
}

void Network::sgd_step(double learning_rate, double batch_size) {
  const double step = learning_rate / batch_size;
  for (auto& l : layers_) {
    for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] -= step * l.gw[i];
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] -= step * l.gb[i];
  }
}

ir::ModelGraph Network::export_graph() const {
  ir::ModelGraph g = template_;
  const std::size_t ch = mean_.size();
  bool folded = false;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const auto& n = g.nodes[li];
    if (l.kind != OpKind::kDense && l.kind != OpKind::kConv1d) continue;
    std::vector<double> w = l.w, b = l.b;
    if (!folded) {
      // First weighted layer: absorb (x - mean) * inv_std.
      const std::size_t out_ch = l.kind == OpKind::kDense ? static_cast<std::size_t>(l.attrs.units)
                                                           : static_cast<std::size_t>(l.attrs.filters);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t in_index = i / out_ch;  // row of [in][out] or [k*ch_in + c][f]
        const std::size_t c = in_index % ch;
        b[i % out_ch] -= w[i] * mean_[c] * inv_std_[c];
        w[i] *= inv_std_[c];
      }
      folded = true;
    }
    g.weights[n.inputs[1]] = std::vector<float>(w.begin(), w.end());
    g.weights[n.inputs[2]] = std::vector<float>(b.begin(), b.end());
  }
  return g;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
    throw Error("validation_fraction must lie in (0, 0.5)");
  }
  if (learning_rate && !(*learning_rate > 0.0)) throw Error("learning_rate must be > 0");
}

std::vector<double> lr_candidates() {
  std::vector<double> out;
  for (int i = 0; i <= 10; ++i) out.push_back(std::pow(10.0, -5.0 + 0.5 * i));
  return out;
}

LrFindResult lr_find(double initial_loss, const std::function<double(double)>& loss_after) {
  LrFindResult r;
  r.initial_loss = initial_loss;
  const auto grid = lr_candidates();
  std::optional<std::size_t> first_divergent;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double loss = loss_after(grid[i]);
    r.sweep.emplace_back(grid[i], loss);
    if (!std::isfinite(loss) || loss > 4.0 * initial_loss) {
      first_divergent = i;
      break;
    }
  }
  if (!first_divergent) {
    r.learning_rate = grid.back();
  } else if (*first_divergent == 0) {
    throw TrainingError(
        "learning-rate search: every candidate diverged; inspect the data for outliers or "
        "unscaled features");
  } else {
    r.learning_rate = grid[*first_divergent] / 10.0;
  }
  return r;
}

namespace {

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

LrFindResult lr_find(const ir::ModelGraph& g, const LabeledFeatures& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw Error("learning-rate search needs at least one batch");
  Network base(g);
  base.fit_standardization(data);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xF1));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  order.resize(std::min(order.size(), 10 * bs));
  std::vector<std::vector<double>> xs;
  for (std::size_t i : order) xs.push_back(to_double(data.x[i]));

  auto mean_loss = [&](const Network& net) {
    double s = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) s += net.loss(xs[i], data.y[order[i]]);
    return s / static_cast<double>(order.size());
  };
  auto loss_after = [&](double lr) {
    // A blown-up step can kill every relu and settle back at chance loss, so
    // the peak batch loss counts as well as the final one.
    Network net = base;
    double peak = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      net.zero_gradients();
      double batch = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const double l = net.accumulate_gradients(xs[i], data.y[order[i]]);
        if (!std::isfinite(l)) return std::numeric_limits<double>::infinity();
        batch += l;
      }
      peak = std::max(peak, batch / static_cast<double>(end - start));
      net.sgd_step(lr, static_cast<double>(end - start));
    }
    return std::max(peak, mean_loss(net));
  };
  return lr_find(mean_loss(base), loss_after);
}

std::pair<LabeledFeatures, LabeledFeatures> split_validation(const LabeledFeatures& data,
                                                             double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.y[i]].push_back(i);
  std::vector<char> is_val(data.size(), 0);
  for (auto& [label, idx] : by_class) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(label) + 0x5A));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<long>(idx.size());
    const long n_val = std::clamp(std::lround(fraction * static_cast<double>(n)), 0L, n - 1);
    for (long k = 0; k < n_val; ++k) is_val[idx[static_cast<std::size_t>(k)]] = 1;
  }
  LabeledFeatures tr, va;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& dst = is_val[i] ? va : tr;
    dst.x.push_back(data.x[i]);
    dst.y.push_back(data.y[i]);
  }
  return {std::move(tr), std::move(va)};
}

TrainResult train(const ir::ModelGraph& g, const LabeledFeatures& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw Error("no training data");
  const auto num_classes = static_cast<int>(g.tensor(g.output).num_elements());
  for (int y : data.y) {
    if (y < 0 || y >= num_classes) {
      throw Error("label " + std::to_string(y) + " does not fit a model with " +
                  std::to_string(num_classes) + " outputs");
    }
  }
  auto [tr, va] = split_validation(data, cfg.validation_fraction, cfg.seed);
  if (va.size() == 0) va = tr;

  Network net(g);
  net.fit_standardization(tr);
  TrainResult result;
  result.learning_rate = cfg.learning_rate ? *cfg.learning_rate : lr_find(g, tr, cfg).learning_rate;

  std::vector<std::vector<double>> xtr, xva;
  for (const auto& x : tr.x) xtr.push_back(to_double(x));
  for (const auto& x : va.x) xva.push_back(to_double(x));

  BestCheckpoint<Network> best;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xE0));
  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      net.zero_gradients();
      for (std::size_t i = start; i < end; ++i) {
        const double l = net.accumulate_gradients(xtr[order[i]], tr.y[order[i]]);
        if (!std::isfinite(l)) {
          throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) +
                              " (learning rate " + std::to_string(result.learning_rate) +
                              "); lower the learning rate or check the features");
        }
        total += l;
      }
      net.sgd_step(result.learning_rate, static_cast<double>(end - start));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(order.size());
    int correct = 0;
    for (std::size_t i = 0; i < xva.size(); ++i) {
      const auto p = net.forward(xva[i]);
      rec.val_loss += cross_entropy(p, va.y[i]);
      if (std::max_element(p.begin(), p.end()) - p.begin() == va.y[i]) ++correct;
    }
    rec.val_loss /= static_cast<double>(xva.size());
    rec.val_accuracy = static_cast<double>(correct) / static_cast<double>(xva.size());
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingError("validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    // Equal accuracy: prefer the lower validation loss.
    const bool tie_better = best.has_value() && rec.val_accuracy == best.metric() &&
                            rec.val_loss < best_val_loss;
    if (tie_better) {
      best = BestCheckpoint<Network>();
    }
    if (best.offer(epoch, rec.val_accuracy, net)) best_val_loss = rec.val_loss;
  }
  result.best_epoch = best.epoch();
  result.model = best.snapshot().export_graph();
  return result;
}

EvalReport report_from_confusion(std::vector<std::vector<int>> confusion) {
  EvalReport r;
  const std::size_t k = confusion.size();
  long total = 0, correct = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) total += confusion[i][j];
    correct += confusion[i][i];
  }
  r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    long tp = confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += confusion[o][c];
      fn += confusion[c][o];
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rc = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.per_class_f1.push_back(p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0);
  }
  r.confusion = std::move(confusion);
  return r;
}

EvalReport evaluate(const ir::ModelGraph& g, const LabeledFeatures& data, int num_classes) {
  const interp::Interpreter interp(g);
  std::vector<std::vector<int>> confusion(static_cast<std::size_t>(num_classes),
                                          std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int pred = interp::predict_class(interp, data.x[i]);
    confusion[static_cast<std::size_t>(data.y[i])][static_cast<std::size_t>(pred)]++;
  }
  return report_from_confusion(std::move(confusion));
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

KMeansResult kmeans_fit(std::span<const std::vector<double>> pts, int k, std::uint64_t seed) {
  if (k < 1) throw Error("k must be >= 1");
  if (static_cast<std::size_t>(k) > pts.size()) {
    throw Error("k = " + std::to_string(k) + " exceeds the number of points (" +
                std::to_string(pts.size()) + ")");
  }
  const std::size_t n = pts.size();
  std::mt19937_64 rng(seed);
  KMeansResult r;
  // k-means++ seeding.
  r.centroids.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (r.centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centroids) d2[i] = std::min(d2[i], sq_dist(pts[i], c));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> dist(d2.begin(), d2.end());
      pick = dist(rng);
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    r.centroids.push_back(pts[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < r.centroids.size(); ++c) {
        const double d = sq_dist(pts[i], r.centroids[c]);
        if (d < best) {
          best = d;
          assign[i] = static_cast<int>(c);
        }
      }
      wcss += best;
    }
    r.wcss_history.push_back(wcss);
    r.iterations = iter + 1;

    const std::size_t dim = pts[0].size();
    std::vector<std::vector<double>> next(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      counts[c]++;
      for (std::size_t j = 0; j < dim; ++j) next[c][j] += pts[i][j];
    }
    for (std::size_t c = 0; c < next.size(); ++c) {
      if (counts[c] == 0) {
        // Re-seed from the point farthest from its current centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(pts[i], r.centroids[static_cast<std::size_t>(assign[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next[c] = pts[far];
        assign[far] = static_cast<int>(c);
        continue;
      }
      for (auto& v : next[c]) v /= static_cast<double>(counts[c]);
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < next.size(); ++c) {
      shift = std::max(shift, std::sqrt(sq_dist(next[c], r.centroids[c])));
    }
    r.centroids = std::move(next);
    if (shift < 1e-6) break;
  }
  return r;
}

double kmeans_score(std::span<const double> x, const std::vector<std::vector<double>>& centroids) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : centroids) best = std::min(best, sq_dist(x, c));
  return std::sqrt(best);
}

ir::ModelGraph anomaly_graph(const std::vector<std::vector<double>>& centroids) {
  if (centroids.empty()) throw Error("no centroids");
  const auto dim = static_cast<int>(centroids[0].size());
  std::vector<float> flat;
  for (const auto& c : centroids) flat.insert(flat.end(), c.begin(), c.end());
  ir::GraphBuilder b({dim});
  const int out = b.kmeans_distance(b.input(), static_cast<int>(centroids.size()), std::move(flat));
  return b.finish(out);
}

}  // namespace tinyforge::trainer
