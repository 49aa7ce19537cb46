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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dodloc/metrics.hpp"
#include "dodloc/network.hpp"
#include "dodloc/scenegen.hpp"
#include "dodloc/training.hpp"

namespace dodloc::cli {

/// Every setting a command may read, resolved before it runs.
struct RunConfig {
  std::uint64_t seed = 7;
  int n = 1500;
  DatasetSetup setup;
  SmoothingMode mode = SmoothingMode::partial;
  ArchSpec arch;
  TrainConfig train;
  double loss_beta = 4.0;
  double loss_near_bins = 12.0;
  BinWindow window;
  std::string split = "test";
  double bias_distance = 10.5;
  double bias_max_tilt = 60.0;
  double bias_step = 5.0;

  void validate() const;
  LossWeights loss_weights() const;
};

/// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<std::string> grid;
  std::optional<std::string> labels;
  std::optional<std::string> tail;
  std::optional<int> balance_cap;
  bool high_density = false;
};

GridSpec parse_grid(const std::string& text);

/// INI file with [run] [camera] [model] [labels] [gen] [arch] [train]
/// [metrics] [bias] sections. Unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig resolve(const std::optional<std::filesystem::path>& file, const Overrides& overrides);

std::string to_ini(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace dodloc::cli
