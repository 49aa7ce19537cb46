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

#include "dodloc/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dodloc/error.hpp"

namespace dodloc {

void LabelSpec::validate() const {
  if (!(delta_d > 0.0) || !std::isfinite(delta_d)) throw DataError("label spec: delta_d must be > 0");
  if (n_bin < 1) throw DataError("label spec: n_bin must be >= 1");
  if (k < 0 || k > n_bin) throw DataError("label spec: k must lie in [0, n_bin]");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DataError("label spec: sigma must be >= 0");
}

int LabelSpec::bin_of(double distance) const {
  if (distance > d_max()) return n_bin - 1;
  const double b = std::floor(distance / delta_d);
  if (b < 0.0) return 0;
  return std::min(static_cast<int>(b), n_bin - 1);
}

SmoothingMode parse_smoothing_mode(std::string_view name) {
  if (name == "raw") return SmoothingMode::raw;
  if (name == "partial") return SmoothingMode::partial;
  if (name == "full") return SmoothingMode::full;
  throw DataError("unknown label mode '" + std::string(name) + "' (expected raw|partial|full)");
}

std::string_view to_string(SmoothingMode mode) {
  switch (mode) {
    case SmoothingMode::raw:
      return "raw";
    case SmoothingMode::partial:
      return "partial";
    case SmoothingMode::full:
      return "full";
  }
  return "raw";
}

double DensityHistogram::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

LabelGrid::LabelGrid(GridSpec grid, int n_bin)
    : grid_(grid), n_bin_(n_bin), values_(static_cast<std::size_t>(grid.cell_count()) * n_bin, 0.0) {}

std::span<double> LabelGrid::cell(int index) {
  return std::span<double>(values_).subspan(static_cast<std::size_t>(index) * n_bin_, n_bin_);
}
std::span<const double> LabelGrid::cell(int index) const {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(index) * n_bin_, n_bin_);
}
std::span<double> LabelGrid::cell(int col, int row) { return cell(row * grid_.cols + col); }
std::span<const double> LabelGrid::cell(int col, int row) const { return cell(row * grid_.cols + col); }

DensityHistogram LabelGrid::cell_histogram(int col, int row) const {
  const auto c = cell(col, row);
  return DensityHistogram(std::vector<double>(c.begin(), c.end()));
}

DensityHistogram LabelGrid::collapsed() const {
  DensityHistogram out(n_bin_);
  for (int c = 0; c < grid_.cell_count(); ++c) {
    const auto src = cell(c);
    for (int b = 0; b < n_bin_; ++b) out.values[b] += src[b];
  }
  return out;
}

double LabelGrid::total() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

LabelGrid raw_histogram(const Scene& scene, const CameraIntrinsics& cam, const GridSpec& grid,
                        const LabelSpec& spec) {
  LabelGrid out(grid, spec.n_bin);
  for (const UavPose& uav : scene.uavs) {
    const auto cell = cell_of_target(cam, grid, uav);
    if (!cell) continue;
    out.cell(cell->col, cell->row)[spec.bin_of(uav.distance())] += 1.0;
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    kernel[j + radius] = std::exp(-0.5 * (j * j) / (sigma * sigma));
    total += kernel[j + radius];
  }
  for (double& w : kernel) w /= total;
  return kernel;
}

namespace {

void smooth_into(std::span<const double> src, std::span<double> dst, const std::vector<double>& kernel,
                 int first_smoothed) {
  const int n = static_cast<int>(src.size());
  const int radius = static_cast<int>(kernel.size() / 2);
  std::fill(dst.begin(), dst.end(), 0.0);
  for (int s = 0; s < n; ++s) {
    const double mass = src[s];
    if (mass == 0.0) continue;
    if (s < first_smoothed || kernel.empty()) {
      dst[s] += mass;
      continue;
    }
    const int lo = std::max(0, s - radius);
    const int hi = std::min(n - 1, s + radius);
    double in_range = 0.0;
    for (int t = lo; t <= hi; ++t) in_range += kernel[t - s + radius];
    for (int t = lo; t <= hi; ++t) dst[t] += mass * kernel[t - s + radius] / in_range;
  }
}

}  // namespace

DensityHistogram smooth_histogram(const DensityHistogram& raw, const LabelSpec& spec, SmoothingMode mode) {
  if (mode == SmoothingMode::raw) return raw;
  DensityHistogram out(raw.n_bin());
  smooth_into(raw.values, out.values, gaussian_kernel(spec.sigma), mode == SmoothingMode::partial ? spec.k : 0);
  return out;
}

LabelGrid smooth_labels(const LabelGrid& raw, const LabelSpec& spec, SmoothingMode mode) {
  spec.validate();
  if (raw.n_bin() != spec.n_bin) throw DataError("smooth: histogram length does not match n_bin");
  for (const double v : raw.values())
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("smooth: raw entries must be finite and non-negative");
  if (mode == SmoothingMode::raw) return raw;
  LabelGrid out(raw.grid(), raw.n_bin());
  const auto kernel = gaussian_kernel(spec.sigma);
  const int first = mode == SmoothingMode::partial ? spec.k : 0;
  for (int c = 0; c < raw.grid().cell_count(); ++c) smooth_into(raw.cell(c), out.cell(c), kernel, first);
  return out;
}

LabelGrid make_labels(const Scene& scene, const CameraIntrinsics& cam, const GridSpec& grid,
                      const LabelSpec& spec, SmoothingMode mode) {
  return smooth_labels(raw_histogram(scene, cam, grid, spec), spec, mode);
}

std::vector<double> stack_cells(const LabelGrid& grid) {
  return std::vector<double>(grid.values().begin(), grid.values().end());
}

LabelGrid unstack_cells(std::span<const double> meta, const GridSpec& grid, int n_bin) {
  if (meta.size() != static_cast<std::size_t>(grid.cell_count()) * n_bin) {
    throw DataError("unstack: meta-vector length " + std::to_string(meta.size()) + " does not match grid");
  }
  LabelGrid out(grid, n_bin);
  std::copy(meta.begin(), meta.end(), out.values().begin());
  return out;
}

}  // namespace dodloc
