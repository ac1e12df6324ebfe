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

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "tinyforge/ir.hpp"

namespace tinyforge::interp {

inline constexpr std::size_t kArenaAlignment = 16;

constexpr std::size_t align_up(std::size_t n, std::size_t a = kArenaAlignment) {
  return (n + a - 1) / a * a;
}

/// A buffer that must stay intact over node steps [first, last].
/// `size` is already rounded up to the arena alignment.
struct LiveRange {
  int tensor = -1;
  std::size_t size = 0;
  int first = 0;
  int last = 0;

  bool overlaps(const LiveRange& o) const { return first <= o.last && o.first <= last; }
};

struct ArenaPlan {
  std::map<int, std::size_t> offsets;
  std::vector<LiveRange> ranges;
  std::size_t peak_bytes = 0;
  std::size_t alignment = kArenaAlignment;

  std::size_t offset(int tensor) const { return offsets.at(tensor); }
};

/// Activation tensors (everything that is not a weight) with their live
/// steps. The graph input is live from step 0; a node's output from its own
/// step to its last consumer (the final step for the graph output). Inputs
/// and outputs of one node are live together, so nothing runs in place.
std::vector<LiveRange> live_ranges(const ir::ModelGraph& g);

/// Greedy first-fit by decreasing size onto 16-byte aligned offsets.
/// Deterministic: ties are broken by first step, then tensor id.
ArenaPlan plan_intervals(std::span<const LiveRange> ranges);

ArenaPlan plan_arena(const ir::ModelGraph& g);

/// max over steps of the total size live at that step.
std::size_t live_set_lower_bound(std::span<const LiveRange> ranges);

/// True when every pair of overlapping live ranges occupies disjoint bytes.
bool plan_is_valid(const ArenaPlan& plan);

}  // namespace tinyforge::interp
