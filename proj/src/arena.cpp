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

#include "tinyforge/arena.hpp"

#include <algorithm>

namespace tinyforge::interp {

std::vector<LiveRange> live_ranges(const ir::ModelGraph& g) {
  const int last_step = static_cast<int>(g.nodes.size()) - 1;
  std::map<int, LiveRange> by_tensor;
  auto touch = [&](int t, int step) {
    auto [it, inserted] = by_tensor.try_emplace(t);
    if (inserted) {
      it->second.tensor = t;
      it->second.size = align_up(g.tensor(t).byte_size());
      it->second.first = step;
      it->second.last = step;
    }
    it->second.first = std::min(it->second.first, step);
    it->second.last = std::max(it->second.last, step);
  };
  touch(g.input, 0);
  for (const auto& n : g.nodes) {
    for (int t : n.inputs) {
      if (!g.is_weight(t)) touch(t, n.id);
    }
    touch(n.output, n.id);
  }
  touch(g.output, last_step);
  std::vector<LiveRange> out;
  for (auto& [t, r] : by_tensor) out.push_back(r);
  return out;
}

ArenaPlan plan_intervals(std::span<const LiveRange> ranges) {
  std::vector<LiveRange> order(ranges.begin(), ranges.end());
  std::stable_sort(order.begin(), order.end(), [](const LiveRange& a, const LiveRange& b) {
    if (a.size != b.size) return a.size > b.size;
    if (a.first != b.first) return a.first < b.first;
    return a.tensor < b.tensor;
  });
  ArenaPlan plan;
  plan.ranges.assign(ranges.begin(), ranges.end());
  std::vector<std::pair<LiveRange, std::size_t>> placed;
  for (const auto& r : order) {
    std::vector<std::pair<std::size_t, std::size_t>> busy;  // [begin, end)
    for (const auto& [p, off] : placed) {
      if (p.overlaps(r)) busy.emplace_back(off, off + p.size);
    }
    std::sort(busy.begin(), busy.end());
    std::size_t candidate = 0;
    for (const auto& [b, e] : busy) {
      if (candidate + r.size <= b) break;
      candidate = std::max(candidate, align_up(e, plan.alignment));
    }
    placed.emplace_back(r, candidate);
    plan.offsets[r.tensor] = candidate;
    plan.peak_bytes = std::max(plan.peak_bytes, candidate + r.size);
  }
  return plan;
}

ArenaPlan plan_arena(const ir::ModelGraph& g) { return plan_intervals(live_ranges(g)); }

std::size_t live_set_lower_bound(std::span<const LiveRange> ranges) {
  std::size_t best = 0;
  for (const auto& probe : ranges) {
    for (int step : {probe.first, probe.last}) {
      std::size_t sum = 0;
      for (const auto& r : ranges) {
        if (r.first <= step && step <= r.last) sum += r.size;
      }
      best = std::max(best, sum);
    }
  }
  return best;
}

bool plan_is_valid(const ArenaPlan& plan) {
  for (std::size_t i = 0; i < plan.ranges.size(); ++i) {
    const auto& a = plan.ranges[i];
    const std::size_t ao = plan.offset(a.tensor);
    if (ao % plan.alignment != 0 || ao + a.size > plan.peak_bytes) return false;
    for (std::size_t j = i + 1; j < plan.ranges.size(); ++j) {
      const auto& b = plan.ranges[j];
      if (!a.overlaps(b)) continue;
      const std::size_t bo = plan.offset(b.tensor);
      if (ao < bo + b.size && bo < ao + a.size) return false;
    }
  }
  return true;
}

}  // namespace tinyforge::interp
