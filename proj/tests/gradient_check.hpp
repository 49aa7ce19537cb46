// Copyright 2026 The dodloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dodloc/network.hpp"
#include "dodloc/rng.hpp"

namespace dodloc::gradcheck {

inline ArchSpec toy(int size, std::vector<ConvStage> stages, int n_bin, GridSpec grid, TailKind tail) {
  ArchSpec a;
  a.in_width = a.in_height = size;
  a.stages = std::move(stages);
  a.n_bin = n_bin;
  a.grid = grid;
  a.tail = tail;
  return a;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Central differences of L^2 against backward(). A parameter is skipped when
// either probe switches a pooled unit on or off or moves the winner of an
// active one, since L^2 is not differentiable across those kinks.
struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

inline bool same_kinks(const Regressor<double>::Cache& a, const Regressor<double>::Cache& b) {
  for (std::size_t s = 0; s < a.argmax.size(); ++s)
    for (std::size_t o = 0; o < a.argmax[s].size(); ++o) {
      const bool on_a = a.pre[s][a.argmax[s][o]] > 0;
      const bool on_b = b.pre[s][b.argmax[s][o]] > 0;
      if (on_a != on_b || (on_a && a.argmax[s][o] != b.argmax[s][o])) return false;
    }
  return true;
}

inline GradCheck gradient_check(const ArchSpec& arch, std::uint64_t seed) {
  Rng rng(seed);
  Regressor<double> net(arch);
  net.initialize(seed);
  // Weights well above h keep most probes on one side of every kink.
  for (auto& t : net.params().tensors) {
    if (t.name.find("bias") != std::string::npos) {
      for (double& b : t.data) b = rng.uniform(-0.5, 0.5);
    } else {
      for (double& v : t.data) v *= 4.0;
    }
  }
  const auto x = random_vector(rng, static_cast<std::size_t>(3 * arch.in_width * arch.in_height), -0.5, 0.5);
  const auto target = random_vector(rng, static_cast<std::size_t>(arch.output_size()), 0.0, 2.0);
  const auto w = random_vector(rng, static_cast<std::size_t>(arch.output_size()), 0.5, 3.0);

  Regressor<double>::Cache base;
  net.forward(x, base);
  auto grads = net.zeros_like();
  net.backward(base, target, w, 1.0, grads);
  double g_max = 0.0;
  for (const auto& t : grads.tensors)
    for (double g : t.data) g_max = std::max(g_max, std::abs(g));

  const auto loss_sq = [&](const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::pow((y[i] - target[i]) * w[i], 2);
    return s;
  };
  const double h = 1e-3;
  GradCheck r;
  Regressor<double>::Cache plus, minus;
  for (std::size_t t = 0; t < net.params().tensors.size(); ++t) {
    auto& data = net.params().tensors[t].data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double lp = loss_sq(net.forward(x, plus));
      data[i] = keep - h;
      const double lm = loss_sq(net.forward(x, minus));
      data[i] = keep;
      if (!same_kinks(base, plus) || !same_kinks(base, minus)) {
        ++r.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2 * h);
      const double analytic = grads.tensors[t].data[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3 * g_max});
      r.max_rel = std::max(r.max_rel, std::abs(numeric - analytic) / denom);
      ++r.checked;
    }
  }
  return r;
}

struct GradCase {
  int size;
  std::vector<ConvStage> stages;
  int n_bin;
  GridSpec grid;
  TailKind tail;
};

/// Small layouts covering both tails, several grids and a stage without pooling.
inline std::vector<GradCase> toy_layouts() {
  return {
      {8, {{4, 2}, {4, 2}}, 5, {1, 1}, TailKind::one_by_one_conv},
      {8, {{4, 2}, {4, 2}}, 5, {2, 2}, TailKind::one_by_one_conv},
      {8, {{4, 2}, {4, 2}}, 5, {1, 1}, TailKind::fully_connected},
      {8, {{4, 2}, {4, 2}}, 5, {2, 2}, TailKind::fully_connected},
      {12, {{3, 2}, {4, 1}, {4, 2}}, 4, {3, 3}, TailKind::one_by_one_conv},
  };
}

}  // namespace dodloc::gradcheck
