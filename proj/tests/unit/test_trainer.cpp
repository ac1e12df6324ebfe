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

#include <set>

#include "grad_check.hpp"
#include "test_support.hpp"
#include "tinyforge/interp.hpp"
#include "tinyforge/trainer.hpp"

using namespace tinyforge;
using namespace tinyforge::trainer;
using tf_test::Rng;
using tf_test::check_gradients;
using tf_test::conv_net;
using tf_test::GradCheck;

namespace {

LabeledFeatures blobs(Rng& rng, int n, double sep) {
  LabeledFeatures d;
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    const double cx = y ? sep : -sep, cy = y ? -sep : sep;
    d.x.push_back({static_cast<float>(cx + rng.normal(0.5)), static_cast<float>(cy + rng.normal(0.5))});
    d.y.push_back(y);
  }
  return d;
}

}  // namespace

TEST_CASE("gradient check: dense, conv1d, relu, maxpool, flatten, softmax+cross-entropy") {
  Rng rng(41);
  GradCheck total;
  for (int t = 0; t < 40; ++t) {
    const bool fused = t % 2 == 0;
    const auto g = conv_net(rng, rng.integer(8, 14), rng.integer(1, 3), fused);
    Network net(g);
    if (t % 4 == 1) {
      // Non-trivial standardization must be differentiated through as well.
      const auto ch = static_cast<std::size_t>(g.tensor(g.input).shape.back());
      net.set_standardization(rng.doubles(ch, -0.5, 0.5), rng.doubles(ch, 0.5, 2.0));
    }
    const auto x = rng.doubles(net.input_size());
    const auto r = check_gradients(net, x, rng.integer(0, 2));
    total.worst = std::max(total.worst, r.worst);
    total.checked += r.checked;
  }
  for (int t = 0; t < 40; ++t) {
    tf_test::GraphGenOptions o;
    o.allow_kmeans = false;
    auto g = tf_test::random_graph(rng, o);
    if (g.nodes.back().kind != ir::OpKind::kSoftmax) continue;
    Network net(g);
    const int classes = g.tensor(g.output).shape[0];
    const auto r = check_gradients(net, rng.doubles(net.input_size()), rng.integer(0, classes - 1));
    total.worst = std::max(total.worst, r.worst);
    total.checked += r.checked;
  }
  MESSAGE("gradient entries checked: " << total.checked << ", worst relative error " << total.worst);
  CHECK(total.checked > 1000);
  CHECK(total.worst <= 1e-4);
}

TEST_CASE("lr_find on a quadratic matches the 2/lambda stability bound") {
  // Scalar least squares y = w x, loss mean((w x - y)^2) / 2, gradient
  // lambda (w - w*) with lambda = mean(x^2). Gradient descent diverges for
  // lr > 2 / lambda.
  Rng rng(5);
  for (int t = 0; t < 40; ++t) {
    const double scale = std::pow(10.0, rng.uniform(-0.5, 2.5));
    std::vector<double> xs(20);
    for (auto& v : xs) v = rng.normal(scale);
    double lambda = 0;
    for (double v : xs) lambda += v * v / static_cast<double>(xs.size());
    const double w_star = 1.5, w0 = 0.0;
    auto loss_at = [&](double w) { return 0.5 * lambda * (w - w_star) * (w - w_star); };
    auto loss_after = [&](double lr) {
      double w = w0;
      for (int step = 0; step < 10; ++step) w -= lr * lambda * (w - w_star);
      return loss_at(w);
    };
    const double bound = 2.0 / lambda;
    const auto grid = lr_candidates();
    if (bound >= grid.back() || bound <= grid[1]) continue;
    const auto r = lr_find(loss_at(w0), loss_after);
    const double first_diverging = r.learning_rate * 10.0;
    // 10 steps must grow the loss 4x: |1 - lr lambda|^20 > 4, i.e. at most
    // 7.2% past the analytic bound. The first diverging grid point is
    // therefore within one half-decade step above it.
    CHECK(first_diverging > bound);
    CHECK(first_diverging <= bound * 1.072 * std::sqrt(10.0));
    CHECK(r.learning_rate < bound);
  }
}

TEST_CASE("lr_find rules") {
  SUBCASE("flat loss returns the largest candidate") {
    CHECK(lr_find(1.0, [](double) { return 1.0; }).learning_rate == lr_candidates().back());
  }
  SUBCASE("every candidate diverges") {
    CHECK_THROWS_AS(lr_find(1.0, [](double) { return NAN; }), TrainingError);
  }
  SUBCASE("NaN counts as divergence") {
    const auto r = lr_find(1.0, [](double lr) { return lr > 2e-3 ? NAN : 0.5; });
    CHECK(r.learning_rate == doctest::Approx(std::pow(10.0, -3.5)));
  }
  SUBCASE("candidate grid") {
    const auto g = lr_candidates();
    REQUIRE(g.size() == 11);
    CHECK(g.front() == doctest::Approx(1e-5));
    CHECK(g.back() == doctest::Approx(1.0));
  }
  SUBCASE("deterministic on a real graph") {
    Rng rng(9);
    const auto d = blobs(rng, 60, 2.0);
    const auto g = init_preset(DataKind::kTimeseries, 1, 2, 2, 3, "mlp (8)");
    TrainConfig cfg;
    cfg.seed = 77;
    const auto a = lr_find(g, d, cfg), b = lr_find(g, d, cfg);
    CHECK(a.learning_rate == b.learning_rate);
    CHECK(a.sweep == b.sweep);
  }
}

TEST_CASE("init presets") {
  SUBCASE("audio 99x13, 3 classes") {
    const auto g = init_preset(DataKind::kAudio, 99, 13, 3, 1);
    REQUIRE(g.nodes.size() >= 3);
    CHECK(g.nodes.back().kind == ir::OpKind::kSoftmax);
    const auto& cls = g.nodes[g.nodes.size() - 2];
    CHECK(cls.kind == ir::OpKind::kDense);
    CHECK(cls.attrs.units == 3);
    for (float b : g.f32_weights(cls.inputs[2])) CHECK(b == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-6));
    bool has_conv = false;
    for (const auto& n : g.nodes) has_conv |= n.kind == ir::OpKind::kConv1d;
    CHECK(has_conv);
  }
  SUBCASE("timeseries 1x300, 2 classes") {
    const auto g = init_preset(DataKind::kTimeseries, 1, 300, 2, 1);
    int dense = 0;
    for (const auto& n : g.nodes) {
      CHECK(n.kind != ir::OpKind::kConv1d);
      dense += n.kind == ir::OpKind::kDense;
    }
    CHECK(dense >= 2);
    CHECK(g.tensor(g.output).shape == std::vector<int>{2});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(init_preset(DataKind::kAudio, 99, 13, 1, 1), Error);
    CHECK_THROWS_AS(init_preset(DataKind::kAudio, 2, 13, 3, 1), Error);
  }
  SUBCASE("glorot bounds") {
    const auto g = init_preset(DataKind::kTimeseries, 1, 50, 4, 2, "mlp (30)");
    const auto& w = g.f32_weights(g.nodes[1].inputs[1]);
    const double lim = std::sqrt(6.0 / (50 + 30));
    for (float v : w) CHECK(std::abs(v) <= lim);
  }
}

TEST_CASE("architecture descriptors") {
  auto a = parse_descriptor("2x conv1d (32 to 64)");
  CHECK(a.kind == Architecture::Kind::kConvStack);
  CHECK(a.widths == std::vector<int>{32, 64});
  CHECK(a.pool);
  a = parse_descriptor("4x conv1d (16 to 128)");
  CHECK(a.widths == std::vector<int>{16, 32, 64, 128});
  a = parse_descriptor("3x conv1d (8 to 8, no pool)");
  CHECK(a.widths == std::vector<int>{8, 8, 8});
  CHECK_FALSE(a.pool);
  a = parse_descriptor("mlp (20, 10)");
  CHECK(a.kind == Architecture::Kind::kMlp);
  CHECK(a.widths == std::vector<int>{20, 10});
  CHECK(parse_descriptor("mlp ()").widths.empty());
  CHECK_THROWS_AS(parse_descriptor("transformer"), Error);
  CHECK_THROWS_AS(parse_descriptor("2x conv1d (64 to 32)"), Error);
}

TEST_CASE("best checkpoint keeps the peak, ties keep the earlier epoch") {
  BestCheckpoint<int> c;
  const std::vector<double> acc = {0.5, 0.7, 0.9, 0.8, 0.9, 0.6};
  for (std::size_t e = 0; e < acc.size(); ++e) c.offer(static_cast<int>(e + 1), acc[e], static_cast<int>(100 + e));
  CHECK(c.epoch() == 3);
  CHECK(c.snapshot() == 102);
  CHECK(c.metric() == 0.9);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.validation_fraction = 0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  Rng rng(1);
  const auto d = blobs(rng, 20, 2.0);
  TrainConfig z;
  z.epochs = 0;
  CHECK_THROWS_AS(train(init_preset(DataKind::kTimeseries, 1, 2, 2, 1), d, z), Error);
}

TEST_CASE("separable blobs: logistic-regression oracle and the MLP both reach 95%") {
  Rng rng(12);
  const auto d = blobs(rng, 200, 1.5);
  // Oracle: batch gradient descent on logistic regression.
  double w0 = 0, w1 = 0, b = 0;
  for (int it = 0; it < 500; ++it) {
    double g0 = 0, g1 = 0, gb = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double z = w0 * d.x[i][0] + w1 * d.x[i][1] + b;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double e = p - d.y[i];
      g0 += e * d.x[i][0];
      g1 += e * d.x[i][1];
      gb += e;
    }
    const double n = static_cast<double>(d.size());
    w0 -= 0.5 * g0 / n;
    w1 -= 0.5 * g1 / n;
    b -= 0.5 * gb / n;
  }
  int right = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    right += ((w0 * d.x[i][0] + w1 * d.x[i][1] + b) > 0) == (d.y[i] == 1);
  }
  const double oracle_acc = right / static_cast<double>(d.size());
  REQUIRE(oracle_acc >= 0.95);

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 3;
  const auto r = train(init_preset(DataKind::kTimeseries, 1, 2, 2, 3, "mlp (8)"), d, cfg);
  const auto rep = evaluate(r.model, d, 2);
  MESSAGE("oracle " << oracle_acc << ", mlp " << rep.accuracy << ", lr " << r.learning_rate);
  CHECK(rep.accuracy >= 0.95);
  CHECK(r.history.size() == 50);
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_epoch <= 50);
  double best = 0;
  for (const auto& h : r.history) best = std::max(best, h.val_accuracy);
  CHECK(r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_accuracy == best);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  Rng rng(15);
  const auto d = blobs(rng, 80, 1.0);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 21;
  const auto g = init_preset(DataKind::kTimeseries, 1, 2, 2, 4, "mlp (6)");
  const auto a = train(g, d, cfg), b = train(g, d, cfg);
  CHECK(a.model == b.model);
  CHECK(a.learning_rate == b.learning_rate);
  CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("exported graph folds the input standardization") {
  Rng rng(16);
  for (int t = 0; t < 20; ++t) {
    const auto g = conv_net(rng, 10, 2, t % 2 == 0);
    Network net(g);
    net.set_standardization({0.3, -1.2}, {2.0, 0.25});
    const auto ex = net.export_graph();
    for (int k = 0; k < 5; ++k) {
      const auto x = rng.floats(net.input_size(), -2, 2);
      const auto p = net.forward(std::vector<double>(x.begin(), x.end()));
      const auto q = interp::run_graph(ex, x);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-5);
    }
  }
}

TEST_CASE("validation split is stratified and disjoint") {
  LabeledFeatures d;
  for (int i = 0; i < 30; ++i) {
    d.x.push_back({static_cast<float>(i)});
    d.y.push_back(i < 20 ? 0 : 1);
  }
  const auto [tr, va] = split_validation(d, 0.2, 5);
  CHECK(tr.size() + va.size() == 30);
  CHECK(std::count(va.y.begin(), va.y.end(), 0) == 4);
  CHECK(std::count(va.y.begin(), va.y.end(), 1) == 2);
  std::set<float> seen;
  for (const auto& x : tr.x) seen.insert(x[0]);
  for (const auto& x : va.x) CHECK(seen.insert(x[0]).second);
}

TEST_CASE("evaluation report") {
  SUBCASE("confusion [[8,2],[1,9]]") {
    const auto r = report_from_confusion({{8, 2}, {1, 9}});
    CHECK(r.accuracy == doctest::Approx(0.85));
    const double p = 8.0 / 9.0, rc = 8.0 / 10.0;
    CHECK(r.per_class_f1[0] == doctest::Approx(2 * p * rc / (p + rc)).epsilon(1e-12));
    CHECK(r.per_class_f1[0] == doctest::Approx(0.842).epsilon(1e-3));
    const double p1 = 9.0 / 11.0, r1 = 9.0 / 10.0;
    CHECK(r.per_class_f1[1] == doctest::Approx(2 * p1 * r1 / (p1 + r1)).epsilon(1e-12));
  }
  SUBCASE("perfect and all wrong") {
    const auto a = report_from_confusion({{5, 0}, {0, 7}});
    CHECK(a.accuracy == 1.0);
    CHECK(a.per_class_f1 == std::vector<double>{1.0, 1.0});
    const auto b = report_from_confusion({{0, 5}, {7, 0}});
    CHECK(b.accuracy == 0.0);
    CHECK(b.per_class_f1 == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("evaluate on a graph: row sums equal class counts") {
    Rng rng(3);
    const auto g = init_preset(DataKind::kTimeseries, 1, 2, 3, 3, "mlp (5)");
    LabeledFeatures d;
    for (int i = 0; i < 31; ++i) {
      d.x.push_back(rng.floats(2));
      d.y.push_back(i % 3);
    }
    const auto r = evaluate(g, d, 3);
    int trace = 0, total = 0;
    for (int c = 0; c < 3; ++c) {
      int row = 0;
      for (int v : r.confusion[static_cast<std::size_t>(c)]) row += v;
      CHECK(row == std::count(d.y.begin(), d.y.end(), c));
      trace += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
      total += row;
    }
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(trace) / total));
  }
}

TEST_CASE("k-means") {
  Rng rng(18);
  std::vector<std::vector<double>> pts;
  std::vector<double> ma(2, 0.0), mb(2, 0.0);
  for (int i = 0; i < 200; ++i) {
    const bool a = i % 2 == 0;
    std::vector<double> p = {(a ? -5.0 : 5.0) + rng.normal(0.5), (a ? 2.0 : -3.0) + rng.normal(0.5)};
    auto& m = a ? ma : mb;
    m[0] += p[0] / 100.0;
    m[1] += p[1] / 100.0;
    pts.push_back(p);
  }
  const auto r = kmeans_fit(pts, 2, 7);
  REQUIRE(r.centroids.size() == 2);
  auto near = [](const std::vector<double>& c, const std::vector<double>& m) {
    return std::hypot(c[0] - m[0], c[1] - m[1]) <= 0.1;
  };
  CHECK(((near(r.centroids[0], ma) && near(r.centroids[1], mb)) ||
         (near(r.centroids[1], ma) && near(r.centroids[0], mb))));
  for (std::size_t i = 1; i < r.wcss_history.size(); ++i) CHECK(r.wcss_history[i] <= r.wcss_history[i - 1] + 1e-9);
  CHECK(r.iterations <= 100);
  CHECK(kmeans_score(r.centroids[0], r.centroids) == 0.0);
  for (int t = 0; t < 200; ++t) {
    const auto x = rng.doubles(2, -10, 10), y = rng.doubles(2, -10, 10);
    const double sx = kmeans_score(x, r.centroids), sy = kmeans_score(y, r.centroids);
    CHECK(sx >= 0.0);
    CHECK(std::abs(sx - sy) <= std::hypot(x[0] - y[0], x[1] - y[1]) + 1e-12);
  }
  CHECK_THROWS_AS(kmeans_fit(pts, 201, 1), Error);
  CHECK(kmeans_fit(pts, 2, 7).centroids == r.centroids);

  // Duplicated points force empty clusters; the fit must still return k.
  std::vector<std::vector<double>> dup(10, std::vector<double>{1.0, 1.0});
  dup.push_back({2.0, 2.0});
  const auto d = kmeans_fit(dup, 3, 1);
  CHECK(d.centroids.size() == 3);

  const auto ag = anomaly_graph(r.centroids);
  const std::vector<float> probe = {1.0f, 1.0f};
  CHECK(interp::run_graph(ag, probe)[0] == doctest::Approx(kmeans_score(std::vector<double>{1.0, 1.0}, r.centroids)).epsilon(1e-5));
}
