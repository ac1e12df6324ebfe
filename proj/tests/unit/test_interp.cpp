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

using namespace tinyforge;
using namespace tinyforge::interp;
using tf_test::Rng;

TEST_CASE("identity dense and uniform softmax") {
  ir::GraphBuilder b({2});
  const auto g = b.finish(b.dense(b.input(), 2, {1, 0, 0, 1}, {0, 0}));
  CHECK(run_graph(g, std::vector<float>{1, 2}) == std::vector<float>{1, 2});

  ir::GraphBuilder s({3});
  const auto sg = s.finish(s.softmax(s.dense(s.input(), 3, std::vector<float>(9, 0.f), {0, 0, 0})));
  for (float v : run_graph(sg, std::vector<float>{4, -1, 7})) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
}

TEST_CASE("float interpreter matches the naive-loop oracle on random graphs") {
  Rng rng(17);
  double worst = 0;
  for (int t = 0; t < 300; ++t) {
    const auto g = tf_test::random_graph(rng);
    Interpreter it(g);
    CHECK(it.input_size() == tf_test::input_len(g));
    for (int k = 0; k < 5; ++k) {
      const auto in = rng.floats(it.input_size());
      const auto got = it.run(in);
      const auto want = tf_test::oracle_forward_f32(g, in);
      REQUIRE(got.size() == want.size());
      REQUIRE(got.size() == it.output_size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        // Relative to max(|ref|, 1): near-zero outputs come from cancelling
        // sums whose terms are O(1).
        const double e = std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i]));
        worst = std::max(worst, e);
        CHECK(e <= 1e-6);
      }
      interp::RunOptions serial;
      serial.exec = kernels::Exec::kSerial;
      CHECK(tf_test::same_bits(got, it.run(in, serial)));
    }
  }
  MESSAGE("worst float error: " << worst);
}

TEST_CASE("wrong input length is rejected") {
  Rng rng(1);
  const auto g = tf_test::random_graph(rng);
  Interpreter it(g);
  CHECK_THROWS_AS(it.run(std::vector<float>(it.input_size() + 1, 0.f)), Error);
}

TEST_CASE("predict_class is argmax") {
  ir::GraphBuilder b({3});
  const auto g = b.finish(b.dense(b.input(), 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}));
  Interpreter it(g);
  CHECK(predict_class(it, std::vector<float>{0.1f, 0.9f, 0.2f}) == 1);
  CHECK(predict_class(it, std::vector<float>{3, 0.9f, 0.2f}) == 0);
}

TEST_CASE("trace covers every activation and round-trips through its binary form") {
  Rng rng(19);
  for (int t = 0; t < 60; ++t) {
    auto g = tf_test::random_graph(rng);
    if (t % 2) g = tf_test::quantized(g, rng, 8);
    Interpreter it(g);
    const auto in = rng.floats(it.input_size());
    const auto tr = collect_trace(it, in);
    REQUIRE(tr.size() == g.nodes.size() + 1);
    CHECK(tr.front().tensor == g.input);
    CHECK(tr.back().tensor == g.output);
    for (const auto& e : tr) CHECK(e.length() == g.tensor(e.tensor).num_elements());
    const auto bytes = encode_trace(tr);
    std::size_t want = 0;
    for (const auto& e : tr) want += 12 + e.bytes.size();
    CHECK(bytes.size() == want);
    CHECK(decode_trace(bytes) == tr);
    // The final trace entry is the output the caller sees for float outputs.
    if (tr.back().dtype == ir::DType::kF32) {
      const auto out = it.run(in);
      CHECK(std::memcmp(out.data(), tr.back().bytes.data(), out.size() * 4) == 0);
    }
    if (!bytes.empty()) {
      auto cut = bytes;
      cut.pop_back();
      CHECK_THROWS_AS(decode_trace(cut), ParseError);
    }
  }
}

TEST_CASE("trace header layout") {
  TraceEntry e{7, ir::DType::kI8, {std::byte{1}, std::byte{0xff}}};
  const auto b = encode_trace(std::vector<TraceEntry>{e});
  const std::vector<std::uint8_t> want = {7, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 1, 0xff};
  CHECK(b == want);
  auto bad = b;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_trace(bad), ParseError);
}

TEST_CASE("feature vector file layout and round trip") {
  FeatureVectors fv;
  fv.len = 2;
  fv.vectors = {{1.0f, -2.0f}};
  const auto b = encode_fvf(fv);
  const std::vector<std::uint8_t> want = {1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0};
  CHECK(b == want);

  Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    FeatureVectors v;
    v.len = static_cast<std::uint32_t>(rng.integer(0, 20));
    const int count = rng.integer(0, 10);
    for (int i = 0; i < count; ++i) {
      std::vector<float> x(v.len);
      for (auto& f : x) f = std::bit_cast<float>(static_cast<std::uint32_t>(rng.g()));
      v.vectors.push_back(x);
    }
    const auto enc = encode_fvf(v);
    CHECK(enc.size() == 8 + 4 * v.len * v.vectors.size());
    const auto dec = decode_fvf(enc);
    CHECK(dec.len == v.len);
    REQUIRE(dec.vectors.size() == v.vectors.size());
    for (std::size_t i = 0; i < v.vectors.size(); ++i) CHECK(tf_test::same_bits(dec.vectors[i], v.vectors[i]));
  }
  FeatureVectors empty;
  empty.len = 5;
  CHECK(decode_fvf(encode_fvf(empty)).vectors.empty());
  auto trunc = encode_fvf(fv);
  trunc.pop_back();
  CHECK_THROWS_AS(decode_fvf(trunc), ParseError);
  CHECK_THROWS_AS(decode_fvf(std::vector<std::uint8_t>{1, 0}), ParseError);
  FeatureVectors ragged;
  ragged.len = 3;
  ragged.vectors = {{1, 2}};
  CHECK_THROWS_AS(encode_fvf(ragged), Error);
}

TEST_CASE("relu output is non-negative and runs are deterministic") {
  Rng rng(29);
  for (int t = 0; t < 100; ++t) {
    const auto g = tf_test::random_graph(rng);
    Interpreter it(g);
    const auto in = rng.floats(it.input_size(), -3, 3);
    const auto tr = collect_trace(it, in);
    for (const auto& n : g.nodes) {
      if (n.kind != ir::OpKind::kRelu && n.fused_activation != ir::Activation::kRelu) continue;
      for (const auto& e : tr) {
        if (e.tensor != n.output) continue;
        std::vector<float> v(e.length());
        std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
        for (float x : v) CHECK(x >= 0.0f);
      }
    }
    CHECK(tf_test::same_bits(it.run(in), it.run(in)));
  }
}
