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

// Serial reference vs OpenMP schedule for the layer kernels.
// Arg 0 picks the schedule: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "tinyforge/kernels.hpp"

namespace k = tinyforge::kernels;

namespace {

k::Exec exec_of(const benchmark::State& st) { return st.range(0) ? k::Exec::kParallel : k::Exec::kSerial; }

template <typename T>
std::vector<T> filled(std::size_t n, std::uint32_t seed) {
  std::mt19937 g(seed);
  std::vector<T> v(n);
  if constexpr (std::is_floating_point_v<T>) {
    std::uniform_real_distribution<T> d(-1, 1);
    for (auto& x : v) x = d(g);
  } else {
    std::uniform_int_distribution<int> d(-128, 127);
    for (auto& x : v) x = static_cast<T>(d(g));
  }
  return v;
}

// 49 frames x 13 coefficients, a keyword-spotting sized input.
const k::Conv1dShape kConv{49, 13, 32, 3, 1};
const k::DenseShape kDense{1568, 128};

void BM_conv1d_f32(benchmark::State& st) {
  const auto in = filled<float>(kConv.in_len * kConv.in_ch, 1);
  const auto w = filled<float>(kConv.kernel * kConv.in_ch * kConv.filters, 2);
  const auto b = filled<float>(kConv.filters, 3);
  std::vector<float> out(kConv.out_len() * kConv.filters);
  for (auto _ : st) {
    k::conv1d_f32(exec_of(st), in, w, b, kConv, true, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * kConv.out_len() * kConv.filters * kConv.kernel * kConv.in_ch);
}

void BM_conv1d_i8(benchmark::State& st) {
  const auto in = filled<std::int8_t>(kConv.in_len * kConv.in_ch, 1);
  const auto w = filled<std::int8_t>(kConv.kernel * kConv.in_ch * kConv.filters, 2);
  const std::vector<std::int32_t> b(kConv.filters, 17);
  const std::vector<float> m(kConv.filters, 0.004f);
  std::vector<std::int8_t> out(kConv.out_len() * kConv.filters);
  const k::QuantLayer q{-3, m, -128};
  for (auto _ : st) {
    k::conv1d_i8(exec_of(st), in, w, b, kConv, q, true, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * kConv.out_len() * kConv.filters * kConv.kernel * kConv.in_ch);
}

void BM_dense_f32(benchmark::State& st) {
  const auto in = filled<float>(kDense.in, 4);
  const auto w = filled<float>(kDense.in * kDense.units, 5);
  const auto b = filled<float>(kDense.units, 6);
  std::vector<float> out(kDense.units);
  for (auto _ : st) {
    k::dense_f32(exec_of(st), in, w, b, kDense, false, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * kDense.in * kDense.units);
}

void BM_dense_i8(benchmark::State& st) {
  const auto in = filled<std::int8_t>(kDense.in, 4);
  const auto w = filled<std::int8_t>(kDense.in * kDense.units, 5);
  const std::vector<std::int32_t> b(kDense.units, -40);
  const std::vector<float> m(kDense.units, 0.001f);
  std::vector<std::int8_t> out(kDense.units);
  const k::QuantLayer q{5, m, 0};
  for (auto _ : st) {
    k::dense_i8(exec_of(st), in, w, b, kDense, q, false, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * kDense.in * kDense.units);
}

void BM_maxpool_f32(benchmark::State& st) {
  const k::PoolShape s{4096, 32, 2, 2};
  const auto in = filled<float>(s.in_len * s.ch, 7);
  std::vector<float> out(s.out_len() * s.ch);
  for (auto _ : st) {
    k::maxpool1d_f32(exec_of(st), in, s, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_conv1d_f32)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_conv1d_i8)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_dense_f32)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_dense_i8)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_maxpool_f32)->ArgName("parallel")->Arg(0)->Arg(1);

BENCHMARK_MAIN();
