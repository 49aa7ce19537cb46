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

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "run_config.hpp"

namespace dodloc::cli {

/// Generates and writes a dataset; prints the count buckets and the
/// per-bin target distribution.
void cmd_gen(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// Trains on the train split and writes model.ckpt and history.csv.
void cmd_train(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out,
               std::ostream& log);

/// Evaluates a checkpoint (or the ideal detector when model is empty) on
/// the configured split; writes report.csv, quartiles.csv and cells.csv.
void cmd_eval(const RunConfig& cfg, const std::filesystem::path& model, const std::filesystem::path& data,
              bool ideal_detector, const std::filesystem::path& out, std::ostream& log);

/// Joins reports into compare.csv; the best entries of each column carry
/// a trailing '*'.
void cmd_compare(const RunConfig& cfg, const std::vector<std::filesystem::path>& reports,
                 const std::filesystem::path& out, std::ostream& log);

/// Tilt sweep of a target on the optical axis; writes tilt_bias.csv and
/// bbox_table.csv.
void cmd_bias_study(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

}  // namespace dodloc::cli
