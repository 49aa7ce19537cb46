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

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dodloc/baselines.hpp"
#include "dodloc/error.hpp"

namespace dodloc::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

const std::vector<int>& split_indices(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.split.train;
  if (name == "val") return ds.split.val;
  return ds.split.test;
}

// A report.csv is named after its directory.
std::string report_name(const fs::path& path) {
  const auto dir = path.parent_path().filename().string();
  return path.filename() == "report.csv" && !dir.empty() ? dir : path.stem().string();
}

}  // namespace

void cmd_gen(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Dataset ds = generate_dataset(cfg.setup, cfg.n);
  write_dataset(ds, out);
  save_run_config(cfg, out);

  std::string buckets = "count,images\n";
  const auto counts = count_buckets(ds.samples);
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > 0) buckets += fmt::format("{},{}\n", c, counts[c]);
  }
  std::string bins = "bin_index,targets\n";
  const auto per_bin = bin_distribution(ds.samples, cfg.setup.labels);
  for (std::size_t d = 0; d < per_bin.size(); ++d) bins += fmt::format("{},{}\n", d, per_bin[d]);
  write_text(out / "buckets.csv", buckets);
  write_text(out / "bin_distribution.csv", bins);

  fmt::print(log, "{} samples ({} candidates), split {}/{}/{}\n", ds.samples.size(), ds.candidates_tried,
             ds.split.train.size(), ds.split.val.size(), ds.split.test.size());
  fmt::print(log, "{}\n{}", buckets, bins);
}

void cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out, std::ostream& log) {
  const Dataset ds = read_dataset(data);
  ArchSpec arch = cfg.arch;
  arch.n_bin = ds.setup.labels.n_bin;
  arch.in_width = ds.setup.gen.crop_width;
  arch.in_height = ds.setup.gen.crop_height;
  arch.validate();

  const TrainingSet train_set = make_training_set(ds.samples, ds.split.train, arch, ds.setup.labels, cfg.mode);
  const TrainingSet val_set = make_training_set(ds.samples, ds.split.val, arch, ds.setup.labels, cfg.mode);
  const LossWeights weights = LossWeights::near_emphasis(arch.n_bin, cfg.loss_beta, cfg.loss_near_bins);

  Regressor<float> net(arch);
  net.initialize(cfg.seed);
  fmt::print(log, "grid {}x{}, tail {}, labels {}, parameters {}\n", arch.grid.cols, arch.grid.rows,
             to_string(arch.tail), to_string(cfg.mode), net.parameter_count());

  const TrainResult result = train(net, train_set, val_set, cfg.train, weights, [&log](const EpochRecord& r) {
    fmt::print(log, "epoch {:3d}  train {:.6f}  val {:.6f}  lr {:.3g}\n", r.epoch, r.train_loss, r.val_loss, r.lr);
    log.flush();
  });

  fs::create_directories(out);
  Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.labels = ds.setup.labels;
  ckpt.mode = cfg.mode;
  ckpt.weights = weights;
  ckpt.params = result.best;
  ckpt.history = result.history;
  ckpt.initial_val_loss = result.initial_val_loss;
  ckpt.best_epoch = result.best_epoch;
  save_checkpoint(ckpt, out / "model.ckpt");
  write_history_csv(result.history, result.initial_val_loss, out / "history.csv");
  save_run_config(cfg, out);
  fmt::print(log, "best epoch {} of {}, {} learning-rate reductions\n", result.best_epoch, result.history.size(),
             result.lr_reductions);
}

void cmd_eval(const RunConfig& cfg, const fs::path& model, const fs::path& data, bool ideal_detector,
              const fs::path& out, std::ostream& log) {
  const Dataset ds = read_dataset(data);
  const LabelSpec& spec = ds.setup.labels;
  const auto& indices = split_indices(ds, cfg.split);
  if (indices.empty()) throw DataError("eval: split '" + cfg.split + "' is empty");

  std::vector<LabelGrid> preds, gts;
  std::int64_t params = 0;
  GridSpec grid = cfg.arch.grid;
  if (ideal_detector) {
    const BboxStatTable table = build_bbox_table(ds.samples, ds.split.train, spec);
    for (const int i : indices) preds.push_back(ideal_detector_histogram(ds.samples[i], table, grid));
    fs::create_directories(out);
    write_bbox_table_csv(table, out / "bbox_table.csv");
  } else {
    const Checkpoint ckpt = load_checkpoint(model);
    if (!(ckpt.labels == spec)) throw DataError("eval: checkpoint label spec differs from the dataset");
    if (ckpt.arch.in_width != ds.setup.gen.crop_width || ckpt.arch.in_height != ds.setup.gen.crop_height) {
      throw DataError("eval: checkpoint input size differs from the dataset crops");
    }
    grid = ckpt.arch.grid;
    Regressor<float> net(ckpt.arch);
    net.set_params(ckpt.params);
    params = static_cast<std::int64_t>(net.parameter_count());
    typename Regressor<float>::Cache cache;
    for (const int i : indices) {
      const auto input = image_to_input<float>(ds.samples[i].image);
      const auto& y = net.forward(input, cache);
      const std::vector<double> meta(y.begin(), y.end());
      preds.push_back(unstack_cells(meta, grid, spec.n_bin));
    }
  }
  for (const int i : indices) gts.push_back(raw_histogram(ds.samples[i].scene, ds.samples[i].camera, grid, spec));

  Evaluation ev = evaluate(preds, gts, spec.delta_d, cfg.window);
  ev.report.params = params;
  fs::create_directories(out);
  report_export(ev.report, out / "report.csv");
  write_quartiles_csv(ev.images, out / "quartiles.csv");
  write_cell_csv(ev, out / "cells.csv");
  save_run_config(cfg, out);
  fmt::print(log, "{} images ({} split): T_bar {:.6f}  E_bar {:.6f}  E_bar' {:.6f}\n", ev.report.n_images,
             cfg.split, ev.report.T_bar, ev.report.E_bar, ev.report.E_bar_prime);
}

void cmd_compare(const RunConfig& cfg, const std::vector<fs::path>& reports, const fs::path& out,
                 std::ostream& log) {
  if (reports.empty()) throw DataError("compare: no reports given");
  std::vector<MetricsReport> rs;
  for (const auto& p : reports) rs.push_back(report_import(p));
  for (const auto& r : rs) {
    if (r.n_bin() != rs.front().n_bin() || r.delta_d != rs.front().delta_d || r.window.lo != rs.front().window.lo ||
        r.window.hi != rs.front().window.hi) {
      throw DataError("compare: reports use different label specs or windows");
    }
  }

  // The best min(2, m - 1) of the m ranked entries per column get a '*', so a
  // lone report passes through unmarked. Reports without a parameter count
  // are not ranked.
  const std::size_t n = rs.size();
  const auto marks = [&](auto value, auto eligible) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i)
      if (eligible(rs[i])) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value(rs[a]) < value(rs[b]); });
    std::vector<bool> marked(n, false);
    const std::size_t k = order.empty() ? 0 : std::min<std::size_t>(2, order.size() - 1);
    for (std::size_t i = 0; i < k; ++i) marked[order[i]] = true;
    return marked;
  };
  const auto all = [](const MetricsReport&) { return true; };
  const auto has_params = [](const MetricsReport& r) { return r.params > 0; };
  const auto mt = marks([](const MetricsReport& r) { return r.T_bar; }, all);
  const auto me = marks([](const MetricsReport& r) { return r.E_bar; }, all);
  const auto mp = marks([](const MetricsReport& r) { return r.E_bar_prime; }, all);
  const auto mn = marks([](const MetricsReport& r) { return r.params; }, has_params);

  std::string csv = "report,T_bar,E_bar,E_bar_prime,params\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rs[i];
    const std::string params = r.params > 0 ? fmt::format("{}{}", r.params, mn[i] ? "*" : "") : "N/A";
    csv += fmt::format("{},{:.9g}{},{:.9g}{},{:.9g}{},{}\n", report_name(reports[i]), r.T_bar, mt[i] ? "*" : "", r.E_bar, me[i] ? "*" : "", r.E_bar_prime, mp[i] ? "*" : "",
                       params);
  }
  fs::create_directories(out);
  write_text(out / "compare.csv", csv);
  save_run_config(cfg, out);
  fmt::print(log, "{}", csv);
}

void cmd_bias_study(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  std::vector<double> tilts;
  for (int i = 0; i * cfg.bias_step <= cfg.bias_max_tilt + 1e-9; ++i) tilts.push_back(i * cfg.bias_step);
  const auto& cam = cfg.setup.source_camera;
  const auto rows = tilt_bias_sweep(cam, cfg.setup.model, cfg.setup.labels, cfg.bias_distance, tilts);
  fs::create_directories(out);
  write_tilt_bias_csv(rows, out / "tilt_bias.csv");
  write_bbox_table_csv(canonical_bbox_table(cam, cfg.setup.model, cfg.setup.labels), out / "bbox_table.csv");
  save_run_config(cfg, out);
  fmt::print(log, "tilt_deg,bbox_error,label_error,correlation_shift\n");
  for (const auto& r : rows) {
    fmt::print(log, "{:g},{},{},{}\n", r.tilt_deg, r.bbox_error(), r.label_error(), r.correlation_shift);
  }
}

}  // namespace dodloc::cli
