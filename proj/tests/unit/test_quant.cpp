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

#include "test_support.hpp"
#include "tinyforge/interp.hpp"
#include "tinyforge/quant.hpp"

using namespace tinyforge;
using namespace tinyforge::quant;
using tf_test::Rng;

TEST_CASE("activation params examples") {
  const auto a = activation_params({-1.0f, 1.0f});
  CHECK(a.scale[0] == doctest::Approx(2.0 / 255.0).epsilon(1e-7));
  CHECK(a.scale[0] == doctest::Approx(0.0078431).epsilon(1e-4));
  CHECK(a.zero_point[0] == 0);
  const auto b = activation_params({0.0f, 2.55f});
  CHECK(b.scale[0] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(b.zero_point[0] == -128);
  // Range not containing zero gets widened.
  const auto c = activation_params({1.0f, 2.0f});
  CHECK(c.scale[0] == doctest::Approx(2.0 / 255.0).epsilon(1e-6));
  CHECK(c.zero_point[0] == -128);
  bool degenerate = false;
  const auto d = activation_params({0.0f, 0.0f}, &degenerate);
  CHECK(degenerate);
  CHECK(d.scale[0] == 1.0f);
  CHECK(d.zero_point[0] == -128);
}

TEST_CASE("weight params: symmetric per output channel") {
  // [in=2, units=2]; channel 0 holds {0.635, -0.1}, channel 1 {0.2, -0.254}.
  const std::vector<float> w = {0.635f, 0.2f, -0.1f, -0.254f};
  const auto p = weight_params(w, 2);
  CHECK(p.granularity == ir::Granularity::kPerChannel);
  REQUIRE(p.scale.size() == 2);
  CHECK(p.scale[0] == doctest::Approx(0.005).epsilon(1e-6));
  CHECK(p.scale[1] == doctest::Approx(0.002).epsilon(1e-6));
  CHECK(p.zero_point == std::vector<std::int32_t>{0, 0});
  const auto z = weight_params(std::vector<float>{0.0f, 0.0f}, 2);
  CHECK(z.scale == std::vector<float>{1.0f, 1.0f});
}

TEST_CASE("quantize rounds half away from zero and saturates") {
  CHECK(quantize(0.5, 1.0, 0) == 1);
  CHECK(quantize(-0.5, 1.0, 0) == -1);
  CHECK(quantize(2.5, 1.0, 0) == 3);
  CHECK(quantize(1e6, 1.0, 0) == 127);
  CHECK(quantize(-1e6, 1.0, 0) == -128);
  CHECK(dequantize(-128, 0.01, -128) == 0.0);
}

TEST_CASE("round trip error is at most half a step inside the range") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    double lo = rng.uniform(-10, 5), hi = lo + rng.uniform(1e-3, 10);
    const auto p = activation_params({static_cast<float>(lo), static_cast<float>(hi)});
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    const double s = p.scale[0];
    const int zp = p.zero_point[0];
    for (int k = 0; k < 200; ++k) {
      const double x = rng.uniform(lo, hi);
      CHECK(std::abs(x - dequantize(quantize(x, s, zp), s, zp)) <= s / 2 + 1e-6 * s + 1e-9);
    }
  }
}

TEST_CASE("calibration examples") {
  SUBCASE("relu output minimum is non-negative, running max") {
    ir::GraphBuilder b({1});
    int x = b.dense(b.input(), 1, {1.0f}, {0.0f});
    x = b.relu(x);
    const auto g = b.finish(x);
    const std::vector<std::vector<float>> rep = {{1.0f}, {3.0f}, {-2.0f}};
    const auto r = calibrate_ranges(g, rep);
    CHECK(r.activations.at(g.output).min >= 0.0f);
    CHECK(r.activations.at(g.output).max == 3.0f);
    CHECK(r.activations.at(g.input).min == -2.0f);
  }
  SUBCASE("softmax output within [0,1]") {
    Rng rng(3);
    ir::GraphBuilder b({5});
    const auto g = b.finish(b.softmax(b.dense(b.input(), 4, rng.floats(20), rng.floats(4))));
    const auto r = calibrate_ranges(g, tf_test::random_inputs(rng, 50, 5, -5, 5));
    CHECK(r.activations.at(g.output).min >= 0.0f);
    CHECK(r.activations.at(g.output).max <= 1.0f);
  }
  SUBCASE("empty set and already-int8 graph") {
    Rng rng(4);
    const auto g = tf_test::random_graph(rng);
    CHECK_THROWS_AS(calibrate_ranges(g, {}), Error);
    const auto q = tf_test::quantized(g, rng);
    CHECK_THROWS_AS(calibrate_ranges(q, tf_test::random_inputs(rng, 2, tf_test::input_len(g))), Error);
    CHECK_THROWS_AS(quantize_graph(q, calibrate_ranges(g, tf_test::random_inputs(rng, 2, tf_test::input_len(g)))),
                    Error);
  }
}

TEST_CASE("quantized graph structure") {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto g = tf_test::random_graph(rng);
    const auto rep = tf_test::random_inputs(rng, 16, tf_test::input_len(g));
    const auto ranges = calibrate_ranges(g, rep);
    const auto qm = quantize_graph(g, ranges);
    const auto& q = qm.graph;
    CHECK_NOTHROW(ir::shape_infer_validate(q));
    CHECK(q.activation_dtype() == ir::DType::kI8);
    CHECK(q.weight_bytes() < g.weight_bytes());
    for (const auto& n : q.nodes) {
      const auto& out = q.tensor(n.output);
      const auto& in = q.tensor(n.inputs[0]);
      switch (n.kind) {
        case ir::OpKind::kSoftmax:
        case ir::OpKind::kKmeansDistance:
          CHECK(out.dtype == ir::DType::kF32);
          break;
        case ir::OpKind::kRelu:
        case ir::OpKind::kMaxPool1d:
        case ir::OpKind::kFlatten:
          CHECK(out.quant == in.quant);
          break;
        case ir::OpKind::kDense:
        case ir::OpKind::kConv1d: {
          CHECK(out.dtype == ir::DType::kI8);
          const auto& wq = *q.tensor(n.inputs[1]).quant;
          CHECK(wq.granularity == ir::Granularity::kPerChannel);
          const auto& fb = g.f32_weights(n.inputs[2]);
          const auto& qb = q.i32_weights(n.inputs[2]);
          const double s_in = in.quant->scale[0];
          for (std::size_t c = 0; c < fb.size(); ++c) {
            const double bs = s_in * wq.scale[c];
            CHECK(std::abs(qb[c] - fb[c] / bs) <= 0.5 + 1e-6);
          }
          const auto& fw = g.f32_weights(n.inputs[1]);
          const auto& qw = q.i8_weights(n.inputs[1]);
          const std::size_t ch = wq.scale.size();
          for (std::size_t i = 0; i < fw.size(); ++i) {
            CHECK(qw[i] == quantize(fw[i], wq.scale[i % ch], 0));
          }
          break;
        }
      }
    }
  }
}

TEST_CASE("degenerate activation range warns") {
  ir::GraphBuilder b({2});
  const auto g = b.finish(b.dense(b.input(), 1, {0.0f, 0.0f}, {0.0f}));
  const std::vector<std::vector<float>> rep = {{1.0f, 2.0f}};
  const auto qm = quantize_graph(g, calibrate_ranges(g, rep));
  CHECK_FALSE(qm.warnings.empty());
  CHECK(qm.graph.tensor(qm.graph.output).quant->scale[0] == 1.0f);
}

TEST_CASE("int8 interpreter is bit-identical to the integer oracle on random graphs") {
  Rng rng(13);
  for (int t = 0; t < 150; ++t) {
    const auto q = tf_test::quantized(tf_test::random_graph(rng), rng);
    interp::Interpreter it(q);
    for (int k = 0; k < 10; ++k) {
      const auto in = rng.floats(tf_test::input_len(q), -1.3, 1.3);
      const auto got = it.run(in);
      const auto want = tf_test::oracle_forward_i8(q, in);
      REQUIRE(got.size() == want.size());
      CHECK(tf_test::same_bits(got, want));
      interp::RunOptions serial;
      serial.exec = kernels::Exec::kSerial;
      CHECK(tf_test::same_bits(got, it.run(in, serial)));
    }
  }
}

TEST_CASE("int8 output tracks the float output") {
  Rng rng(14);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    tf_test::GraphGenOptions o;
    o.allow_kmeans = false;
    const auto g = tf_test::random_graph(rng, o);
    const auto rep = tf_test::random_inputs(rng, 128, tf_test::input_len(g));
    const auto q = quantize_graph(g, calibrate_ranges(g, rep)).graph;
    if (g.nodes.back().kind != ir::OpKind::kSoftmax) continue;
    for (int k = 0; k < 10; ++k) {
      const auto in = rng.floats(tf_test::input_len(g), -0.9, 0.9);
      const auto a = interp::run_graph(g, in), b = interp::run_graph(q, in);
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - b[i]));
    }
  }
  MESSAGE("worst softmax probability gap: " << worst);
  CHECK(worst < 0.15);
}
