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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "test_support.hpp"
#include "tinyforge/trainer.hpp"

namespace tf_test {

// Central differences on every weight, bias and input element.
struct GradCheck {
  double worst = 0.0;
  std::size_t checked = 0;
};

inline double grad_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

inline GradCheck check_gradients(trainer::Network& net, const std::vector<double>& x, int label) {
  constexpr double eps = 1e-4;
  GradCheck r;
  net.zero_gradients();
  std::vector<double> gx;
  net.accumulate_gradients(x, label, &gx);
  if (gx.size() != x.size()) throw std::runtime_error("input gradient has the wrong size");
  for (auto& l : net.layers()) {
    for (auto [p, g] : {std::pair{&l.w, &l.gw}, std::pair{&l.b, &l.gb}}) {
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double keep = (*p)[i];
        (*p)[i] = keep + eps;
        const double up = net.loss(x, label);
        (*p)[i] = keep - eps;
        const double down = net.loss(x, label);
        (*p)[i] = keep;
        r.worst = std::max(r.worst, grad_err((*g)[i], (up - down) / (2 * eps)));
        ++r.checked;
      }
    }
  }
  auto xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + eps;
    const double up = net.loss(xp, label);
    xp[i] = x[i] - eps;
    const double down = net.loss(xp, label);
    xp[i] = x[i];
    r.worst = std::max(r.worst, grad_err(gx[i], (up - down) / (2 * eps)));
    ++r.checked;
  }
  return r;
}

inline ir::ModelGraph conv_net(Rng& rng, int len, int ch, bool fused) {
  ir::GraphBuilder b({len, ch});
  const auto act = fused ? ir::Activation::kRelu : ir::Activation::kNone;
  int x = b.conv1d(b.input(), 3, 3, rng.integer(1, 2), rng.floats(static_cast<std::size_t>(3 * ch * 3)),
                   rng.floats(3, -0.1, 0.1), act);
  if (!fused) x = b.relu(x);
  x = b.maxpool1d(x, 2, rng.integer(1, 2));
  x = b.flatten(x);
  const int in = b.shape(x)[0];
  x = b.dense(x, 4, rng.floats(static_cast<std::size_t>(in * 4)), rng.floats(4, -0.1, 0.1), act);
  if (!fused) x = b.relu(x);
  x = b.dense(x, 3, rng.floats(12), rng.floats(3, -0.1, 0.1));
  return b.finish(b.softmax(x));
}

}  // namespace tf_test
