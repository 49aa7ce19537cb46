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

#include "dodloc/baselines.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "dodloc/error.hpp"

namespace dodloc {

BboxStatTable::BboxStatTable(LabelSpec spec, std::vector<BboxStat> bins) : spec_(spec), bins_(std::move(bins)) {
  spec_.validate();
  if (static_cast<int>(bins_.size()) != spec_.n_bin) throw DataError("bbox table: bin count does not match n_bin");
}

int BboxStatTable::valid_bins() const {
  int n = 0;
  for (const auto& b : bins_) n += b.valid() ? 1 : 0;
  return n;
}

BboxStatTable build_bbox_table(std::span<const BboxObservation> observations, const LabelSpec& spec) {
  spec.validate();
  std::vector<double> sum_w(spec.n_bin, 0.0), sum_h(spec.n_bin, 0.0);
  std::vector<long> count(spec.n_bin, 0);
  for (const auto& o : observations) {
    const int d = spec.bin_of(o.distance);
    sum_w[d] += o.width;
    sum_h[d] += o.height;
    ++count[d];
  }
  std::vector<BboxStat> bins(spec.n_bin);
  for (int d = 0; d < spec.n_bin; ++d) {
    if (count[d] == 0) continue;
    bins[d] = {sum_w[d] / count[d], sum_h[d] / count[d], count[d]};
  }
  return BboxStatTable(spec, std::move(bins));
}

BboxStatTable build_bbox_table(std::span<const Sample> samples, std::span<const int> indices, const LabelSpec& spec) {
  std::vector<BboxObservation> obs;
  for (const int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= samples.size()) throw DataError("bbox table: index out of range");
    const Sample& s = samples[i];
    for (const auto& tb : s.bboxes) {
      obs.push_back({s.scene.uavs.at(static_cast<std::size_t>(tb.uav)).distance(), tb.box.width(), tb.box.height()});
    }
  }
  return build_bbox_table(obs, spec);
}

BboxStatTable canonical_bbox_table(const CameraIntrinsics& cam, const TargetModel& model, const LabelSpec& spec) {
  spec.validate();
  std::vector<BboxStat> bins(spec.n_bin);
  for (int d = 0; d < spec.n_bin; ++d) {
    UavPose pose;
    pose.position = Vec3(0.0, 0.0, (d + 0.5) * spec.delta_d);
    const auto box = target_bbox_unclipped(cam, pose, model);
    if (!box) continue;
    bins[d] = {box->width(), box->height(), 1};
  }
  return BboxStatTable(spec, std::move(bins));
}

int bbox_distance_estimate(const PixelBox& box, const BboxStatTable& table) {
  const double w = box.width();
  const double h = box.height();
  if (!(w > 0.0) || !(h > 0.0)) throw DataError("bbox estimate: zero-area box");
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int d = 0; d < static_cast<int>(table.bins().size()); ++d) {
    const auto& b = table.bins()[d];
    if (!b.valid()) continue;
    const double dist = std::hypot(w - b.mean_width, h - b.mean_height);
    if (dist < best_dist) {
      best_dist = dist;
      best = d;
    }
  }
  if (best < 0) throw DataError("bbox estimate: table has no valid bins");
  return best;
}

LabelGrid ideal_detector_histogram(const Sample& sample, const BboxStatTable& table, const GridSpec& grid) {
  LabelGrid out(grid, table.spec().n_bin);
  for (std::size_t u = 0; u < sample.scene.uavs.size(); ++u) {
    const auto cell = cell_of_target(sample.camera, grid, sample.scene.uavs[u]);
    if (!cell) continue;
    const TargetBox* found = nullptr;
    for (const auto& tb : sample.bboxes) {
      if (tb.uav == static_cast<int>(u)) {
        found = &tb;
        break;
      }
    }
    if (found == nullptr) throw DataError(fmt::format("ideal detector: target {} is visible but has no box", u));
    out.cell(cell->col, cell->row)[bbox_distance_estimate(found->box, table)] += 1.0;
  }
  return out;
}

int correlation_bias(const DensityHistogram& pred, const DensityHistogram& gt) {
  const int n = pred.n_bin();
  if (n == 0 || gt.n_bin() != n) throw DataError("correlation: histograms differ in length");
  if (pred.sum() == 0.0 || gt.sum() == 0.0) throw DataError("correlation: all-zero histogram");
  const auto corr = [&](int s) {
    double acc = 0.0;
    for (int d = std::max(0, s); d < std::min(n, n + s); ++d) acc += pred.values[d] * gt.values[d - s];
    return acc;
  };
  int best = 0;
  double best_value = corr(0);
  for (int k = 1; k < n; ++k) {
    for (const int s : {k, -k}) {
      const double c = corr(s);
      if (c > best_value + 1e-12 * std::abs(best_value)) {
        best_value = c;
        best = s;
      }
    }
  }
  return best;
}

void write_bbox_table_csv(const BboxStatTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "bin,mean_w,mean_h,count\n";
  for (std::size_t d = 0; d < table.bins().size(); ++d) {
    const auto& b = table.bins()[d];
    out << fmt::format("{},{:.9g},{:.9g},{}\n", d, b.mean_width, b.mean_height, b.count);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<TiltBiasRow> tilt_bias_sweep(const CameraIntrinsics& cam, const TargetModel& model,
                                         const LabelSpec& spec, double distance, std::span<const double> tilts_deg) {
  const BboxStatTable table = canonical_bbox_table(cam, model, spec);
  const int true_bin = spec.bin_of(distance);
  std::vector<TiltBiasRow> rows;
  for (const double tilt : tilts_deg) {
    const UavPose pose =
        UavPose::from_angles(Vec3(0.0, 0.0, distance), 0.0, tilt * std::numbers::pi / 180.0, 0.0);
    const auto box = target_bbox_unclipped(cam, pose, model);
    if (!box) throw DataError("tilt sweep: target not visible");
    TiltBiasRow row;
    row.tilt_deg = tilt;
    row.true_bin = true_bin;
    row.bbox_bin = bbox_distance_estimate(*box, table);
    row.label_bin = spec.bin_of(pose.distance());
    DensityHistogram pred(spec.n_bin), gt(spec.n_bin);
    pred.values[row.bbox_bin] = 1.0;
    gt.values[row.label_bin] = 1.0;
    row.correlation_shift = correlation_bias(pred, gt);
    rows.push_back(row);
  }
  return rows;
}

void write_tilt_bias_csv(std::span<const TiltBiasRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "tilt_deg,true_bin,bbox_bin,bbox_error,label_error,correlation_shift\n";
  for (const auto& r : rows) {
    out << fmt::format("{:.9g},{},{},{},{},{}\n", r.tilt_deg, r.true_bin, r.bbox_bin, r.bbox_error(), r.label_error(),
                       r.correlation_shift);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace dodloc
