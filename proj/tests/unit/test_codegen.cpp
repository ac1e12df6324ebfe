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

#include <regex>
#include <set>

#include "test_support.hpp"
#include "tinyforge/codegen.hpp"
#include "tinyforge/interp.hpp"
#include "tinyforge/trainer.hpp"

using namespace tinyforge;
using namespace tinyforge::codegen;
using tf_test::Rng;

namespace {

const std::vector<std::string> kAllKernels = {
    "dense_f32",   "dense_i8",   "conv1d_f32",         "conv1d_i8",          "relu_f32",
    "relu_i8",     "maxpool1d_f32", "maxpool1d_i8",    "softmax_f32",        "softmax_i8",
    "kmeans_distance_f32", "kmeans_distance_i8", "flatten"};

GeneratedSource gen(const ir::ModelGraph& g, const std::string& prefix = "m", bool hooks = false) {
  CodegenOptions o;
  o.symbol_prefix = prefix;
  o.emit_trace_hooks = hooks;
  return emit_c(g, interp::plan_arena(g), o);
}

bool defines(const std::string& src, const std::string& fn) {
  return src.find("static void " + fn + "(") != std::string::npos;
}

int count_of(const std::string& s, const std::string& needle) {
  int n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("identifier check") {
  CHECK(is_c_identifier("model"));
  CHECK(is_c_identifier("_kws2"));
  CHECK_FALSE(is_c_identifier("2kws"));
  CHECK_FALSE(is_c_identifier("kws-model"));
  CHECK_FALSE(is_c_identifier(""));
  CodegenOptions o;
  o.symbol_prefix = "bad name";
  CHECK_THROWS_AS(o.validate(), ValidationError);
}

TEST_CASE("generation is deterministic and prefix-scoped") {
  Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    auto g = tf_test::random_graph(rng);
    if (t % 2) g = tf_test::quantized(g, rng);
    const auto a = gen(g, "kws"), b = gen(g, "kws");
    CHECK(a.source == b.source);
    CHECK(a.header == b.header);
    CHECK(a.header_name == "kws.h");
    CHECK(a.source_name == "kws.c");
    for (const std::string fn : {"kws_init(void)", "kws_input(void)", "kws_invoke(size_t *out_len)"}) {
      CHECK(count_of(a.header, fn) == 2);  // ABI comment and prototype
      CHECK(count_of(a.source, fn) == 1);
    }
    CHECK(a.source.find("m_init") == std::string::npos);
  }
}

TEST_CASE("only the kernels the graph uses are emitted") {
  Rng rng(5);
  std::set<std::string> seen;
  for (int t = 0; t < 120; ++t) {
    auto g = tf_test::random_graph(rng);
    if (t % 2) g = tf_test::quantized(g, rng);
    const auto names = kernel_names(g);
    std::set<std::string> want;
    for (const auto& n : g.nodes) {
      std::string k;
      const bool q = g.tensor(n.inputs[0]).dtype == ir::DType::kI8;
      switch (n.kind) {
        case ir::OpKind::kDense: k = "dense"; break;
        case ir::OpKind::kConv1d: k = "conv1d"; break;
        case ir::OpKind::kRelu: k = "relu"; break;
        case ir::OpKind::kMaxPool1d: k = "maxpool1d"; break;
        case ir::OpKind::kSoftmax: k = "softmax"; break;
        case ir::OpKind::kKmeansDistance: k = "kmeans_distance"; break;
        case ir::OpKind::kFlatten: k = "flatten"; break;
      }
      if (k != "flatten") k += q ? "_i8" : "_f32";
      want.insert(k);
    }
    CHECK(std::set<std::string>(names.begin(), names.end()) == want);
    const auto src = gen(g).source;
    for (const auto& k : kAllKernels) {
      CHECK_MESSAGE(defines(src, k) == (want.count(k) == 1), k);
      // Each used kernel is called once per node that needs it.
    }
    seen.insert(want.begin(), want.end());
  }
  CHECK(seen.size() >= 12);
}

TEST_CASE("arena is a single static buffer of the planned peak size") {
  Rng rng(7);
  const std::regex arena_decl(R"(uint8_t bytes\[(\d+)\];)");
  for (int t = 0; t < 60; ++t) {
    auto g = tf_test::random_graph(rng);
    if (t % 3 == 0) g = tf_test::quantized(g, rng);
    const auto plan = interp::plan_arena(g);
    const auto s = gen(g);
    std::smatch m;
    REQUIRE(std::regex_search(s.source, m, arena_decl));
    CHECK(std::stoull(m[1].str()) == plan.peak_bytes);
    CHECK(count_of(s.source, "uint8_t bytes[") == 1);
    CHECK(s.header.find("M_ARENA_BYTES " + std::to_string(plan.peak_bytes) + "\n") != std::string::npos);
    CHECK(s.header.find("M_INPUT_LEN " + std::to_string(tf_test::input_len(g)) + "\n") != std::string::npos);
    for (const std::string bad : {"malloc", "calloc", "realloc", "free(", "printf", "stdio.h", "stdlib.h"}) {
      CHECK_MESSAGE(s.source.find(bad) == std::string::npos, bad);
    }
    // Every weight is a const array.
    const std::regex weight_decl(R"(static (const )?(float|int8_t|int32_t) w\d+\[)");
    for (auto it = std::sregex_iterator(s.source.begin(), s.source.end(), weight_decl); it != std::sregex_iterator();
         ++it) {
      CHECK((*it)[1].matched);
    }
  }
}

TEST_CASE("trace hooks are opt-in") {
  Rng rng(9);
  const auto g = tf_test::random_graph(rng);
  const auto plain = gen(g), traced = gen(g, "m", true);
  CHECK(plain.header.find("m_set_trace") == std::string::npos);
  CHECK(plain.source.find("trace(") == std::string::npos);
  CHECK(traced.header.find("void m_set_trace(") != std::string::npos);
  CHECK(count_of(traced.source, "  trace(") == static_cast<int>(g.nodes.size()) + 1);
}

TEST_CASE("bad plan or bad graph fails before anything is written") {
  Rng rng(11);
  const auto g = tf_test::random_graph(rng);
  auto plan = interp::plan_arena(g);
  plan.peak_bytes -= 1;
  CodegenOptions o;
  CHECK_THROWS_AS(emit_c(g, plan, o), ValidationError);

  auto bad = g;
  bad.nodes.back().kind = static_cast<ir::OpKind>(99);
  const auto dir = tf_test::scratch_dir("codegen_unsupported");
  bool threw = false;
  try {
    write_c(emit_c(bad, interp::plan_arena(g), o), dir);
  } catch (const Error&) {
    threw = true;
  }
  CHECK(threw);
  CHECK(std::filesystem::is_empty(dir));
}

TEST_CASE("compiled model matches the interpreter") {
  if (!tf_test::have_cc()) {
    MESSAGE("no C compiler; skipped");
    return;
  }
  Rng rng(13);
  double worst_f32 = 0;
  int i8_graphs = 0;
  for (int t = 0; t < 16; ++t) {
    auto g = tf_test::random_graph(rng);
    const bool q = t % 2 == 1;
    if (q) g = tf_test::quantized(g, rng);
    const auto inputs = tf_test::random_inputs(rng, 20, tf_test::input_len(g), -1.2, 1.2);
    const auto dir = tf_test::scratch_dir("codegen_conf_" + std::to_string(t));
    const auto r = tf_test::compile_and_run(g, inputs, dir, "mdl");
    REQUIRE_MESSAGE(r.build_status == 0, r.log);
    REQUIRE_MESSAGE(r.run_status == 0, r.log);
    REQUIRE(r.outputs.size() == inputs.size());
    interp::Interpreter it(g);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto want = it.run(inputs[i]);
      REQUIRE(r.outputs[i].size() == want.size());
      if (q) {
        CHECK(tf_test::same_bits(r.outputs[i], want));
      } else {
        for (std::size_t k = 0; k < want.size(); ++k) {
          const double e = std::abs(double(r.outputs[i][k]) - want[k]) / std::max(1.0, std::abs(double(want[k])));
          worst_f32 = std::max(worst_f32, e);
          CHECK(e <= 1e-5);
        }
      }
    }
    i8_graphs += q;
  }
  CHECK(i8_graphs == 8);
  MESSAGE("worst float deviation: " << worst_f32);
}

TEST_CASE("compiled object passes the freestanding check") {
  if (!tf_test::have_cc()) return;
  Rng rng(17);
  const std::string src = TINYFORGE_SOURCE_DIR;
  for (int t = 0; t < 4; ++t) {
    auto g = tf_test::random_graph(rng);
    if (t % 2) g = tf_test::quantized(g, rng);
    const auto dir = tf_test::scratch_dir("codegen_free_" + std::to_string(t));
    CodegenOptions o;
    o.symbol_prefix = "fm";
    write_c(emit_c(g, interp::plan_arena(g), o), dir);
    // -O0 keeps static kernels as local symbols for nm.
    const auto obj = (dir / "fm.o").string();
    REQUIRE(std::system(("cc -std=c99 -O0 -c '" + (dir / "fm.c").string() + "' -o '" + obj + "'").c_str()) == 0);
    std::string kernels;
    for (const auto& k : kernel_names(g)) kernels += " " + k;
    const std::string check = "sh '" + src + "/harness/freestanding_check.sh' '" + obj + "' fm" + kernels +
                              " > '" + (dir / "check.log").string() + "' 2>&1";
    CHECK_MESSAGE(std::system(check.c_str()) == 0, tf_test::slurp(dir / "check.log"));
    // Dropping a used kernel from the allow-list must make the check fail.
    const auto names = kernel_names(g);
    std::string fewer;
    for (std::size_t i = 1; i < names.size(); ++i) fewer += " " + names[i];
    const std::string neg = "sh '" + src + "/harness/freestanding_check.sh' '" + obj + "' fm" + fewer + " > /dev/null 2>&1";
    CHECK(std::system(neg.c_str()) != 0);
  }
}

TEST_CASE("harness edge cases: empty input and wrong vector length") {
  if (!tf_test::have_cc()) return;
  Rng rng(19);
  const auto g = tf_test::random_graph(rng);
  const auto dir = tf_test::scratch_dir("codegen_edge");
  const auto r = tf_test::compile_and_run(g, {}, dir, "mdl");
  REQUIRE_MESSAGE(r.build_status == 0, r.log);
  CHECK(r.run_status == 0);
  CHECK(r.outputs.empty());
  const auto out = project::read_file(dir / "out.fvf");
  CHECK(out.size() == 8);

  interp::FeatureVectors fv;
  fv.len = static_cast<std::uint32_t>(tf_test::input_len(g) + 1);
  fv.vectors = {std::vector<float>(fv.len, 0.f)};
  project::write_file(dir / "bad.fvf", interp::encode_fvf(fv));
  const std::string src = TINYFORGE_SOURCE_DIR;
  const std::string run = "'" + src + "/harness/harness' '" + (dir / "model_bin").string() + "' '" +
                          (dir / "bad.fvf").string() + "' '" + (dir / "bad_out.fvf").string() + "' 2> '" +
                          (dir / "bad.log").string() + "'";
  CHECK(std::system(run.c_str()) != 0);
  CHECK(tf_test::slurp(dir / "bad.log").find("model expects") != std::string::npos);
  CHECK(std::system(("sh '" + src + "/harness/harness' > /dev/null 2>&1").c_str()) != 0);
}

TEST_CASE("keyword-spotting sized model compiles and conforms") {
  if (!tf_test::have_cc()) return;
  const auto g = trainer::init_preset(trainer::DataKind::kAudio, 49, 13, 4, 21);
  Rng rng(23);
  for (const bool q : {false, true}) {
    const auto m = q ? tf_test::quantized(g, rng, 16) : g;
    const auto inputs = tf_test::random_inputs(rng, 10, tf_test::input_len(m), -2, 2);
    const auto r = tf_test::compile_and_run(m, inputs, tf_test::scratch_dir(q ? "kws_i8" : "kws_f32"), "kws");
    REQUIRE_MESSAGE(r.run_status == 0, r.log);
    interp::Interpreter it(m);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto want = it.run(inputs[i]);
      if (q) {
        CHECK(tf_test::same_bits(r.outputs[i], want));
      } else {
        for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(r.outputs[i][k] - want[k]) <= 1e-5);
      }
    }
  }
}
