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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "dodloc/error.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct CommonFlags {
  std::string config;
  dodloc::cli::Overrides overrides;
  std::uint64_t seed = 0;
  int n = 0;
  std::string grid, labels, tail;
  int balance_cap = 0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out) {
  cmd->add_option("--config", f.config, "INI run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--n", f.n, "Number of dataset samples")->check(CLI::PositiveNumber);
  cmd->add_option("--grid", f.grid, "Output grid")->check(CLI::IsMember({"1x1", "3x3"}));
  cmd->add_option("--labels", f.labels, "Label smoothing")->check(CLI::IsMember({"raw", "partial", "full"}));
  cmd->add_option("--tail", f.tail, "Network tail")->check(CLI::IsMember({"1x1", "fc"}));
  cmd->add_option("--balance-cap", f.balance_cap, "Largest balanced target count")->check(CLI::PositiveNumber);
  cmd->add_flag("--high-density", f.overrides.high_density, "Up to 150 targets per image");
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (needs_out) out->required();
}

dodloc::cli::RunConfig resolve(const CLI::App* cmd, CommonFlags& f) {
  auto& o = f.overrides;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (cmd->count("--n")) o.n = f.n;
  if (cmd->count("--grid")) o.grid = f.grid;
  if (cmd->count("--labels")) o.labels = f.labels;
  if (cmd->count("--tail")) o.tail = f.tail;
  if (cmd->count("--balance-cap")) o.balance_cap = f.balance_cap;
  std::optional<std::filesystem::path> file;
  if (!f.config.empty()) file = f.config;
  return dodloc::cli::resolve(file, o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density-over-distance relative localization toolkit"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  add_common(gen, flags, true);

  std::string data, model, split;
  auto* train = app.add_subcommand("train", "Train a regressor");
  add_common(train, flags, true);
  train->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  bool ideal = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or the ideal detector");
  add_common(eval, flags, true);
  eval->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* model_opt = eval->add_option("--model", model, "Checkpoint file")->check(CLI::ExistingFile);
  auto* ideal_opt = eval->add_flag("--ideal-detector", ideal, "Evaluate the bounding-box baseline");
  model_opt->excludes(ideal_opt);
  eval->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));

  std::vector<std::string> reports;
  auto* compare = app.add_subcommand("compare", "Tabulate metric reports");
  add_common(compare, flags, true);
  compare->add_option("reports", reports, "report.csv files")->required()->check(CLI::ExistingFile);

  auto* bias = app.add_subcommand("bias-study", "Sweep target tilt against the box baseline");
  add_common(bias, flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    auto cfg = resolve(cmd, flags);
    if (!split.empty()) cfg.split = split;
    const std::filesystem::path out = flags.out;
    if (cmd == gen) {
      dodloc::cli::cmd_gen(cfg, out, std::cout);
    } else if (cmd == train) {
      dodloc::cli::cmd_train(cfg, data, out, std::cout);
    } else if (cmd == eval) {
      if (model.empty() && !ideal) {
        std::cerr << "eval: pass --model or --ideal-detector\n";
        return kUsage;
      }
      dodloc::cli::cmd_eval(cfg, model, data, ideal, out, std::cout);
    } else if (cmd == compare) {
      std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
      dodloc::cli::cmd_compare(cfg, paths, out, std::cout);
    } else if (cmd == bias) {
      dodloc::cli::cmd_bias_study(cfg, out, std::cout);
    }
  } catch (const dodloc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
