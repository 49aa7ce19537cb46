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

#include <span>
#include <string_view>
#include <vector>

#include "dodloc/geometry.hpp"

namespace dodloc {

/// Distance discretization and smoothing parameters shared by every
/// histogram in a dataset.
struct LabelSpec {
  double delta_d = 1.0;  ///< bin width, meters
  int n_bin = 50;
  double sigma = 1.0;    ///< Gaussian std, in bins
  int k = 5;             ///< closest bins kept unsmoothed

  double d_max() const { return delta_d * (n_bin - 1); }
  void validate() const;
  /// Bin of a target at the given range; everything past d_max lands in
  /// the last bin.
  int bin_of(double distance) const;

  bool operator==(const LabelSpec&) const = default;
};

enum class SmoothingMode { raw, partial, full };

SmoothingMode parse_smoothing_mode(std::string_view name);
std::string_view to_string(SmoothingMode mode);

/// Expected target count per distance bin.
struct DensityHistogram {
  std::vector<double> values;

  DensityHistogram() = default;
  explicit DensityHistogram(int n_bin) : values(static_cast<std::size_t>(n_bin), 0.0) {}
  explicit DensityHistogram(std::vector<double> v) : values(std::move(v)) {}

  int n_bin() const { return static_cast<int>(values.size()); }
  double sum() const;
  bool operator==(const DensityHistogram&) const = default;
};

/// One histogram per grid cell. Storage is the stacked meta-vector:
/// cells in row-major order, bins contiguous per cell.
class LabelGrid {
 public:
  LabelGrid() = default;
  LabelGrid(GridSpec grid, int n_bin);

  const GridSpec& grid() const { return grid_; }
  int n_bin() const { return n_bin_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> cell(int col, int row);
  std::span<const double> cell(int col, int row) const;
  std::span<double> cell(int index);
  std::span<const double> cell(int index) const;

  DensityHistogram cell_histogram(int col, int row) const;
  /// Sum over all cells.
  DensityHistogram collapsed() const;
  double total() const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const LabelGrid&) const = default;

 private:
  GridSpec grid_{};
  int n_bin_ = 0;
  std::vector<double> values_;
};

/// Per-cell counts of targets by range. Targets whose centre projects
/// outside the image or behind the camera are ignored.
LabelGrid raw_histogram(const Scene& scene, const CameraIntrinsics& cam, const GridSpec& grid,
                        const LabelSpec& spec);

/// Unit-sum discrete Gaussian over offsets [-R, R], R = ceil(4 sigma).
/// Empty for sigma <= 0.
std::vector<double> gaussian_kernel(double sigma);

/// Smooths one histogram. Mass originating in bins below k (partial mode)
/// stays in place; every other source bin is spread by the Gaussian,
/// renormalized over the bins that exist, so the total is conserved.
DensityHistogram smooth_histogram(const DensityHistogram& raw, const LabelSpec& spec, SmoothingMode mode);

LabelGrid smooth_labels(const LabelGrid& raw, const LabelSpec& spec, SmoothingMode mode);

/// Convenience: raw_histogram followed by smooth_labels.
LabelGrid make_labels(const Scene& scene, const CameraIntrinsics& cam, const GridSpec& grid,
                      const LabelSpec& spec, SmoothingMode mode);

std::vector<double> stack_cells(const LabelGrid& grid);
LabelGrid unstack_cells(std::span<const double> meta, const GridSpec& grid, int n_bin);

}  // namespace dodloc
