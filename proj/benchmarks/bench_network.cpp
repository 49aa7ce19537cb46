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

#include <vector>

#include <benchmark/benchmark.h>

#include "dodloc/network.hpp"
#include "dodloc/rng.hpp"
#include "dodloc/training.hpp"

namespace {

using namespace dodloc;

ArchSpec arch_for(int grid, int tail) {
  ArchSpec a;
  a.grid = {grid, grid};
  a.tail = tail == 0 ? TailKind::one_by_one_conv : TailKind::fully_connected;
  return a;
}

std::vector<float> random_input(const ArchSpec& a) {
  Rng rng(3);
  std::vector<float> x(static_cast<std::size_t>(a.in_channels) * a.in_width * a.in_height);
  for (float& v : x) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  return x;
}

void BM_Forward(benchmark::State& state) {
  const auto a = arch_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  Regressor<float> net(a);
  net.initialize(1);
  const auto x = random_input(a);
  Regressor<float>::Cache cache;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, cache).data());
}
BENCHMARK(BM_Forward)->Args({1, 0})->Args({3, 0})->Args({3, 1})->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto a = arch_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  Regressor<float> net(a);
  net.initialize(1);
  const auto x = random_input(a);
  const std::vector<float> target(static_cast<std::size_t>(a.output_size()), 0.1f);
  const auto w = LossWeights::near_emphasis(a.n_bin).meta<float>(a.grid.cell_count());
  auto grads = net.zeros_like();
  Regressor<float>::Cache cache;
  for (auto _ : state) {
    net.forward(x, cache);
    benchmark::DoNotOptimize(net.backward(cache, target, w, 1.0f, grads));
  }
}
BENCHMARK(BM_ForwardBackward)->Args({1, 0})->Args({3, 0})->Args({3, 1})->Unit(benchmark::kMicrosecond);

void BM_AdamStep(benchmark::State& state) {
  Regressor<float> net(arch_for(3, 0));
  net.initialize(1);
  auto grads = net.zeros_like();
  for (auto& t : grads.tensors)
    for (float& g : t.data) g = 1e-3f;
  auto st = AdamState<float>::zeros_like(net.params());
  const TrainConfig cfg;
  for (auto _ : state) adam_step(net.params(), grads, st, 1e-3, cfg);
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
