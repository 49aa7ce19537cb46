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

#include "dodloc/rng.hpp"
#include "dodloc/scenegen.hpp"

namespace {

using namespace dodloc;

void BM_SampleScene(benchmark::State& state) {
  const DatasetSetup setup;
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(7, i++);
    benchmark::DoNotOptimize(sample_scene(rng, setup.gen, setup.source_camera, setup.model));
  }
}
BENCHMARK(BM_SampleScene);

void BM_Render(benchmark::State& state) {
  const DatasetSetup setup;
  Rng rng(7);
  const Scene s = sample_scene(rng, setup.gen, setup.source_camera, setup.model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_scene(s, setup.source_camera, setup.model, setup.style, RenderFrame{7}));
  }
}
BENCHMARK(BM_Render)->Unit(benchmark::kMicrosecond);

void BM_GenerateDataset(benchmark::State& state) {
  DatasetSetup setup;
  setup.val_count = 10;
  setup.test_count = 10;
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(setup, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_GenerateDataset)->Arg(150)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
