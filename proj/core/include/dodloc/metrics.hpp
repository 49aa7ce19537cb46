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
#include <span>
#include <vector>

#include "dodloc/labeling.hpp"

namespace dodloc {

/// Errors of one image over cell-summed histograms.
struct ImageErrors {
  std::vector<double> e;   ///< pred - gt per bin
  std::vector<double> gt;  ///< ground-truth mass per bin
  double T = 0.0;          ///< |sum e| / sum gt
};

/// Bins [lo, hi] summed into E'.
struct BinWindow {
  int lo = 2;
  int hi = 11;
};

/// Predictions are clamped at zero. Throws DataError when the ground truth
/// holds no target or the shapes differ.
ImageErrors per_image_errors(const LabelGrid& pred, const LabelGrid& gt_raw);
ImageErrors per_image_errors(std::span<const double> pred, std::span<const double> gt_raw);

struct MetricsReport {
  double delta_d = 1.0;
  /// NaN for bins with error but no ground-truth mass; such bins are left
  /// out of E and E'.
  std::vector<double> e_bar;
  std::vector<double> gt_mass;
  double T_bar = 0.0;
  double E_bar = 0.0;
  double E_bar_prime = 0.0;
  BinWindow window;
  std::int64_t n_images = 0;
  std::int64_t params = 0;  ///< learnable parameters of the model, 0 if none

  int n_bin() const { return static_cast<int>(e_bar.size()); }
};

/// Fixed-order reduction over images. Throws DataError on empty input.
MetricsReport aggregate(std::span<const ImageErrors> images, double delta_d = 1.0, BinWindow window = {});

/// Per-bin values of every image, in image order.
struct Evaluation {
  MetricsReport report;
  std::vector<ImageErrors> images;
  /// e_bar per cell, rows of n_bin, same sentinel rule as the report.
  std::vector<std::vector<double>> cell_e_bar;
};

Evaluation evaluate(std::span<const LabelGrid> preds, std::span<const LabelGrid> gts, double delta_d = 1.0,
                    BinWindow window = {});

/// bin_index,bin_lo_m,bin_hi_m,e_bar,gt_mass then a "# summary" block.
void report_export(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport report_import(const std::filesystem::path& path);

/// bin_index,q1,median,q3 of the signed per-image errors.
void write_quartiles_csv(std::span<const ImageErrors> images, const std::filesystem::path& path);
/// cell,bin_index,e_bar
void write_cell_csv(const Evaluation& eval, const std::filesystem::path& path);

/// Type-7 quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);

}  // namespace dodloc
