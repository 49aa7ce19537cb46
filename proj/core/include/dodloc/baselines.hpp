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
#include <span>
#include <vector>

#include "dodloc/geometry.hpp"
#include "dodloc/labeling.hpp"
#include "dodloc/scenegen.hpp"

namespace dodloc {

struct BboxStat {
  double mean_width = 0.0;
  double mean_height = 0.0;
  long count = 0;

  bool valid() const { return count > 0; }
};

/// Mean ground-truth box size per distance bin. Immutable once built.
class BboxStatTable {
 public:
  BboxStatTable() = default;
  BboxStatTable(LabelSpec spec, std::vector<BboxStat> bins);

  const LabelSpec& spec() const { return spec_; }
  const std::vector<BboxStat>& bins() const { return bins_; }
  const BboxStat& bin(int d) const { return bins_.at(static_cast<std::size_t>(d)); }
  int valid_bins() const;

 private:
  LabelSpec spec_;
  std::vector<BboxStat> bins_;
};

/// One observed box with the range of its target.
struct BboxObservation {
  double distance = 0.0;
  double width = 0.0;
  double height = 0.0;
};

BboxStatTable build_bbox_table(std::span<const BboxObservation> observations, const LabelSpec& spec);

/// Table from every ground-truth box of the selected samples.
BboxStatTable build_bbox_table(std::span<const Sample> samples, std::span<const int> indices, const LabelSpec& spec);

/// Table of the target placed on the optical axis at each bin centre with
/// identity orientation.
BboxStatTable canonical_bbox_table(const CameraIntrinsics& cam, const TargetModel& model, const LabelSpec& spec);

/// Nearest valid bin in (width, height); ties go to the smaller index.
/// Throws DataError for a zero-area box or a table without valid bins.
int bbox_distance_estimate(const PixelBox& box, const BboxStatTable& table);

/// Each target whose centre lies in the image adds 1 to its cell at the
/// bin estimated from its ground-truth box.
LabelGrid ideal_detector_histogram(const Sample& sample, const BboxStatTable& table, const GridSpec& grid);

/// Lag s maximizing sum_d pred[d] * gt[d - s]. Positive s means the
/// prediction sits at larger distances. Ties prefer the smallest |s|, then
/// the positive lag.
int correlation_bias(const DensityHistogram& pred, const DensityHistogram& gt);

/// bin,mean_w,mean_h,count
void write_bbox_table_csv(const BboxStatTable& table, const std::filesystem::path& path);

/// One row of the tilt sweep.
struct TiltBiasRow {
  double tilt_deg = 0.0;
  int true_bin = 0;
  int bbox_bin = 0;
  int label_bin = 0;
  int bbox_error() const { return bbox_bin - true_bin; }
  int label_error() const { return label_bin - true_bin; }
  int correlation_shift = 0;
};

/// A target on the optical axis at `distance`, rotated about the camera x
/// axis by each angle, estimated against the canonical table.
std::vector<TiltBiasRow> tilt_bias_sweep(const CameraIntrinsics& cam, const TargetModel& model,
                                         const LabelSpec& spec, double distance, std::span<const double> tilts_deg);

void write_tilt_bias_csv(std::span<const TiltBiasRow> rows, const std::filesystem::path& path);

}  // namespace dodloc
