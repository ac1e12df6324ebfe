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

#include <cstdlib>

#include "test_support.hpp"
#include "tinyforge/estimate.hpp"

using namespace tinyforge;
using namespace tinyforge::estimate;
using tf_test::Rng;

namespace {

std::vector<float> zeros(std::size_t n) { return std::vector<float>(n, 0.0f); }

// Counts MACs by visiting every output element and counting the products
// that feed it.
std::int64_t brute_macs(const ir::ModelGraph& g) {
  std::int64_t total = 0;
  for (const auto& n : g.nodes) {
    const auto& xs = g.tensor(n.inputs[0]).shape;
    const auto out = g.tensor(n.output).num_elements();
    for (std::size_t e = 0; e < out; ++e) {
      switch (n.kind) {
        case ir::OpKind::kDense:
          for (int i = 0; i < xs[0]; ++i) ++total;
          break;
        case ir::OpKind::kConv1d:
          for (int k = 0; k < n.attrs.kernel_size; ++k)
            for (int c = 0; c < xs[1]; ++c) ++total;
          break;
        case ir::OpKind::kKmeansDistance:
          for (int j = 0; j < n.attrs.k; ++j)
            for (int i = 0; i < xs[0]; ++i) ++total;
          break;
        default:
          break;
      }
    }
  }
  return total;
}

// Butterflies of a radix-2 transform, by its recursion.
std::int64_t butterflies(std::int64_t n) { return n <= 1 ? 0 : 2 * butterflies(n / 2) + n / 2; }

struct EnvGuard {
  explicit EnvGuard(const std::string& v) { setenv("TINYFORGE_PROFILE_DIR", v.c_str(), 1); }
  ~EnvGuard() { unsetenv("TINYFORGE_PROFILE_DIR"); }
};

}  // namespace

TEST_CASE("MAC count examples") {
  {
    ir::GraphBuilder b({16});
    const auto g = b.finish(b.dense(b.input(), 8, zeros(128), zeros(8)));
    CHECK(count_macs(g).total_macs == 128);
  }
  {
    ir::GraphBuilder b({100, 4});
    const auto g = b.finish(b.flatten(b.conv1d(b.input(), 8, 3, 1, zeros(96), zeros(8))));
    const auto m = count_macs(g);
    CHECK(m.total_macs == 98 * 8 * 3 * 4);
    CHECK(m.total_macs == 9408);
    CHECK(m.elementwise == 0);
  }
  {
    ir::GraphBuilder b({7, 3});
    const auto g = b.finish(b.flatten(b.input()));
    const auto m = count_macs(g);
    CHECK(m.total_macs == 0);
    CHECK(m.elementwise == 0);
  }
  {
    ir::GraphBuilder b({5});
    const auto g = b.finish(b.softmax(b.relu(b.input())));
    CHECK(count_macs(g).elementwise == 10);
  }
}

TEST_CASE("MAC count equals a per-output-element counter on random graphs") {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto g = tf_test::random_graph(rng);
    const auto m = count_macs(g);
    CHECK(m.total_macs == brute_macs(g));
    std::int64_t s = 0;
    for (auto v : m.per_node_macs) s += v;
    CHECK(s == m.total_macs);
    CHECK(m.per_node_macs.size() == g.nodes.size());
  }
}

TEST_CASE("latency formula examples") {
  DeviceProfile p = load_profile("nano33");
  p.cycles_per_mac_i8 = 4.0;
  MacCount m;
  m.total_macs = 9408;
  CHECK(nn_latency_ms(m, ir::DType::kI8, p) == doctest::Approx(9408.0 * 4 / 64e6 * 1000).epsilon(1e-12));
  CHECK(nn_latency_ms(m, ir::DType::kI8, p) == doctest::Approx(0.588).epsilon(1e-3));

  dsp::DspConfig cfg;
  cfg.block = dsp::Block::kMfe;
  cfg.frame_length_s = 0.02;
  cfg.frame_stride_s = 0.01;
  cfg.num_mel_filters = 40;
  cfg.fft_size = 512;
  const auto c = dsp_cost(cfg, 16000, 1);
  CHECK(c.frames == 1 + (16000 - 320) / 160);
  CHECK(c.frames == 99);
  CHECK(c.butterflies == 99 * butterflies(512));
  CHECK(c.butterflies == 99 * 256 * 9);
  CHECK(c.filterbank_macs == 99 * 257 * 40);
  CHECK(c.ram_bytes == 512 * 8 + 99 * 40 * 4);
}

TEST_CASE("doubling the clock halves every latency term") {
  Rng rng(4);
  const auto p = load_profile("pico");
  auto p2 = p;
  p2.clock_hz *= 2;
  dsp::DspConfig cfg;
  cfg.block = dsp::Block::kMfcc;
  for (int t = 0; t < 50; ++t) {
    const auto g = tf_test::random_graph(rng);
    const auto a = estimate::estimate(g, cfg, 16000, 1, p), b = estimate::estimate(g, cfg, 16000, 1, p2);
    CHECK(b.nn_latency_ms == doctest::Approx(a.nn_latency_ms / 2).epsilon(1e-12));
    CHECK(b.dsp_latency_ms == doctest::Approx(a.dsp_latency_ms / 2).epsilon(1e-12));
    CHECK(a.total_latency_ms == a.dsp_latency_ms + a.nn_latency_ms);
    CHECK(a.ram_bytes == a.dsp_ram_bytes + a.nn_ram_bytes);
  }
}

TEST_CASE("generated footprint is below the interpreter baseline for every strict kernel subset") {
  Rng rng(5);
  for (const auto& p : builtin_profiles()) {
    for (int t = 0; t < 100; ++t) {
      auto g = tf_test::random_graph(rng);
      if (t % 2) g = tf_test::quantized(g, rng, 8);
      REQUIRE(g.used_kinds().size() < static_cast<std::size_t>(ir::kNumOpKinds));
      const auto plan = interp::plan_arena(g);
      const auto r = flash_ram_report(g, plan, p);
      CHECK(r.generated.flash_bytes < r.interpreter_baseline.flash_bytes);
      CHECK(r.generated.ram_bytes < r.interpreter_baseline.ram_bytes);
      CHECK(r.generated.scaffold_ram_bytes < r.interpreter_baseline.scaffold_ram_bytes);
      // RAM of generated code is exactly arena + io buffers.
      CHECK(r.generated.ram_bytes ==
            static_cast<std::int64_t>(plan.peak_bytes) + 4 * static_cast<std::int64_t>(tf_test::input_len(g) +
                                                                                      g.tensor(g.output).num_elements()));
      std::int64_t code = 0;
      for (auto k : g.used_kinds()) code += p.kernel_code_bytes.at(k);
      CHECK(r.generated.flash_bytes == static_cast<std::int64_t>(g.weight_bytes()) + code + p.generated_scaffold_bytes);
    }
  }
}

TEST_CASE("weightless graph: flash is code constants only") {
  ir::GraphBuilder b({6});
  const auto g = b.finish(b.softmax(b.relu(b.input())));
  const auto p = load_profile("nano33");
  const auto r = flash_ram_report(g, interp::plan_arena(g), p);
  CHECK(r.generated.flash_bytes ==
        p.kernel_code_bytes.at(ir::OpKind::kRelu) + p.kernel_code_bytes.at(ir::OpKind::kSoftmax) +
            p.generated_scaffold_bytes);
}

TEST_CASE("estimates never shrink when a layer grows") {
  Rng rng(6);
  const auto p = load_profile("esp-eye");
  dsp::DspConfig cfg;
  int kernel_cases = 0;
  for (int t = 0; t < 200; ++t) {
    const int len = rng.integer(10, 30), ch = rng.integer(1, 4), f = rng.integer(1, 8), k = rng.integer(1, 4),
              u = rng.integer(2, 10), stride = rng.integer(1, 3);
    auto build = [&](int filters, int kernel, int units) {
      ir::GraphBuilder b({len, ch});
      int x = b.conv1d(b.input(), filters, kernel, stride, zeros(static_cast<std::size_t>(kernel * ch * filters)),
                       zeros(static_cast<std::size_t>(filters)), ir::Activation::kRelu);
      x = b.flatten(x);
      x = b.dense(x, units, zeros(static_cast<std::size_t>(b.shape(x)[0] * units)), zeros(static_cast<std::size_t>(units)));
      return b.finish(b.softmax(x));
    };
    const auto g0 = build(f, k, u);
    const auto base = estimate::estimate(g0, cfg, 16000, 1, p);
    std::vector<ir::ModelGraph> grown = {build(f + 1, k, u), build(f, k, u + 1)};
    // A longer valid-padding kernel can shorten the output and with it
    // every later layer; only compare when the output length is unchanged.
    if ((len - k - 1) / stride == (len - k) / stride) {
      grown.push_back(build(f, k + 1, u));
      ++kernel_cases;
    }
    for (const auto& g : grown) {
      const auto e = estimate::estimate(g, cfg, 16000, 1, p);
      CHECK(e.nn_latency_ms >= base.nn_latency_ms);
      CHECK(e.flash_bytes >= base.flash_bytes);
      CHECK(e.ram_bytes >= base.ram_bytes);
      CHECK(count_macs(g).total_macs >= count_macs(g0).total_macs);
    }
  }
  CHECK(kernel_cases > 20);
}

TEST_CASE("a longer kernel can shrink the downstream layers") {
  // Pinned counterexample: 10x1 input, 4 filters, then dense(8).
  auto build = [](int kernel) {
    ir::GraphBuilder b({10, 1});
    int x = b.conv1d(b.input(), 4, kernel, 1, zeros(static_cast<std::size_t>(kernel * 4)), zeros(4));
    x = b.flatten(x);
    x = b.dense(x, 8, zeros(static_cast<std::size_t>(b.shape(x)[0] * 8)), zeros(8));
    return b.finish(x);
  };
  const auto a = count_macs(build(3)).total_macs, b = count_macs(build(4)).total_macs;
  CHECK(a == 8 * 4 * 3 + 32 * 8);
  CHECK(b == 7 * 4 * 4 + 28 * 8);
  CHECK(b < a);
}

TEST_CASE("fits_device: capacities are inclusive") {
  const auto nano = load_profile("nano33");
  ResourceEstimate e;
  e.ram_bytes = 493 * 1024;
  e.flash_bytes = 100 * 1024;
  auto r = fits_device(e, nano);
  CHECK_FALSE(r.fits);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].resource == "ram");
  CHECK(r.violations[0].margin() == doctest::Approx((493.0 - 256.0) * 1024));
  e.ram_bytes = 100 * 1024;
  CHECK(fits_device(e, nano).fits);
  e.ram_bytes = nano.ram_capacity_bytes;
  e.flash_bytes = nano.flash_capacity_bytes;
  CHECK(fits_device(e, nano).fits);
  e.ram_bytes += 1;
  CHECK_FALSE(fits_device(e, nano).fits);

  Constraints c;
  parse_constraint("latency=300", c);
  ResourceEstimate slow;
  slow.total_latency_ms = 300.0;
  CHECK(fits_device(slow, nano, c).fits);
  slow.total_latency_ms = 300.5;
  const auto lr = fits_device(slow, nano, c);
  CHECK_FALSE(lr.fits);
  CHECK(lr.violations[0].resource == "latency");
}

TEST_CASE("constraint parsing") {
  Constraints c;
  parse_constraint("ram=256k", c);
  CHECK(*c.ram_bytes == 262144);
  parse_constraint("flash=1M", c);
  CHECK(*c.flash_bytes == 1048576);
  parse_constraint("ram=128kb", c);
  CHECK(*c.ram_bytes == 131072);
  parse_constraint("flash=2MB", c);
  CHECK(*c.flash_bytes == 2 * 1048576);
  parse_constraint("ram=5000", c);
  CHECK(*c.ram_bytes == 5000);
  parse_constraint("latency=12.5", c);
  CHECK(*c.latency_ms == 12.5);
  CHECK_FALSE(c.empty());
  CHECK(Constraints{}.empty());
  Constraints bad;
  for (const char* s : {"ram", "ram=", "ram=abc", "ram=-1", "cpu=3", "latency=3k", "ram=12b"}) {
    CHECK_THROWS_AS(parse_constraint(s, bad), Error);
  }
}

TEST_CASE("built-in profiles carry the published platform figures") {
  const auto n = load_profile("nano33");
  CHECK(n.clock_hz == 64e6);
  CHECK(n.flash_capacity_bytes == 1024 * 1024);
  CHECK(n.ram_capacity_bytes == 256 * 1024);
  const auto e = load_profile("esp-eye");
  CHECK(e.clock_hz == 160e6);
  CHECK(e.flash_capacity_bytes == 4 * 1024 * 1024);
  CHECK(e.ram_capacity_bytes == 8 * 1024 * 1024);
  const auto p = load_profile("pico");
  CHECK(p.clock_hz == 133e6);
  CHECK(p.flash_capacity_bytes == 16 * 1024 * 1024);
  CHECK(p.ram_capacity_bytes == 264 * 1024);
  for (const auto& b : builtin_profiles()) {
    CHECK_NOTHROW(b.validate());
    CHECK(b.kernel_code_bytes.size() == static_cast<std::size_t>(ir::kNumOpKinds));
    // Shipped files agree with the compiled-in defaults.
    const auto file = std::filesystem::path(TINYFORGE_SOURCE_DIR) / "profiles" / (b.name + ".json");
    REQUIRE(std::filesystem::exists(file));
    nlohmann::json want = b;
    CHECK(nlohmann::json::parse(tf_test::slurp(file)) == want);
  }
  CHECK_THROWS_AS(load_profile("no-such-board"), Error);
}

TEST_CASE("profile directory override") {
  const auto dir = tf_test::scratch_dir("profiles");
  auto custom = load_profile("nano33");
  custom.name = "tiny";
  custom.ram_capacity_bytes = 1234;
  nlohmann::json j = custom;
  project::write_text(dir / "tiny.json", j.dump(2));
  project::write_text(dir / "broken.json", "{");
  auto bad = j;
  bad["clock_hz"] = -1.0;
  project::write_text(dir / "negative.json", bad.dump());
  {
    EnvGuard env(dir.string());
    CHECK(profile_dir() == dir);
    CHECK(load_profile("tiny").ram_capacity_bytes == 1234);
    CHECK(load_profile("pico").clock_hz == 133e6);
    CHECK_THROWS_AS(load_profile("broken"), ParseError);
    CHECK_THROWS_AS(load_profile("negative"), Error);
    const auto names = profile_names();
    CHECK(std::find(names.begin(), names.end(), "tiny") != names.end());
  }
  CHECK_THROWS_AS(load_profile("tiny"), Error);
  std::filesystem::remove_all(dir);
}
