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

#include <benchmark/benchmark.h>

#include "dodloc/labeling.hpp"
#include "dodloc/rng.hpp"
#include "dodloc/scenegen.hpp"

namespace {

using namespace dodloc;

Scene scene_with(int n) {
  DatasetSetup setup;
  GenConfig g = setup.gen.with_high_density();
  g.min_count = g.max_count = n;
  Rng rng(1, static_cast<std::uint64_t>(n));
  return sample_scene(rng, g, setup.source_camera, setup.model);
}

void BM_RawHistogram(benchmark::State& state) {
  const DatasetSetup setup;
  const Scene s = scene_with(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(raw_histogram(s, setup.source_camera, setup.grid, setup.labels));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RawHistogram)->RangeMultiplier(2)->Range(1, 128)->Arg(150)->Complexity();

void BM_Smooth(benchmark::State& state) {
  const DatasetSetup setup;
  const auto mode = static_cast<SmoothingMode>(state.range(0));
  const LabelGrid raw = raw_histogram(scene_with(15), setup.source_camera, setup.grid, setup.labels);
  for (auto _ : state) benchmark::DoNotOptimize(smooth_labels(raw, setup.labels, mode));
}
BENCHMARK(BM_Smooth)
    ->Arg(static_cast<int>(SmoothingMode::partial))
    ->Arg(static_cast<int>(SmoothingMode::full));

void BM_MakeLabels(benchmark::State& state) {
  const DatasetSetup setup;
  const Scene s = scene_with(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(make_labels(s, setup.source_camera, setup.grid, setup.labels, SmoothingMode::partial));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MakeLabels)->DenseRange(10, 150, 35)->Complexity(benchmark::oN);

}  // namespace

BENCHMARK_MAIN();
