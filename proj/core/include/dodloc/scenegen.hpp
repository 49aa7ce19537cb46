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
#include <string>
#include <vector>

#include "dodloc/geometry.hpp"
#include "dodloc/image.hpp"
#include "dodloc/labeling.hpp"
#include "dodloc/rng.hpp"

namespace dodloc {

/// Procedural scene and dataset parameters. Distances in meters.
///
/// Scenes hold at most one group whose centroid lies closer than
/// near_threshold; every other target belongs to far groups whose
/// members stay beyond far_member_min_distance.
struct GenConfig {
  int min_count = 1;
  int max_count = 30;

  double near_probability = 0.5;
  double near_threshold = 8.0;
  double near_min_distance = 2.0;
  double near_radius = 1.5;
  int near_max_size = 4;

  int far_groups_min = 1;
  int far_groups_max = 4;
  double far_min_distance = 11.0;
  double far_max_distance = 60.0;
  double far_radius = 3.0;
  double far_member_min_distance = 9.0;

  double min_depth = 1.0;
  double frustum_margin_px = 1.0;
  double max_tilt_deg = 30.0;
  /// Minimum centre spacing as a multiple of the model diagonal.
  double separation_factor = 2.0;
  int max_attempts = 200;

  int crop_width = 64;
  int crop_height = 64;
  double crop_bias_weight = 3.0;

  int balance_cap = 15;
  /// Share of a generated dataset reserved for images with more than
  /// balance_cap targets.
  double over_cap_fraction = 0.0;
  bool high_density = false;

  std::uint64_t seed = 7;

  void validate() const;
  /// Settings for the 1..150 targets-per-image regime.
  GenConfig with_high_density() const;
};

struct RenderStyle {
  double noise_amplitude = 10.0;
  double color_jitter = 35.0;
};

/// Where a rendered window sits inside the full frame. Background and
/// per-target colours depend only on absolute frame coordinates, so a
/// window rendered directly equals the same window cut from a full render.
struct RenderFrame {
  std::uint64_t seed = 0;
  int origin_x = 0;
  int origin_y = 0;
  int frame_height = 0;  ///< 0: use the camera height
};

struct TargetBox {
  int uav = 0;  ///< index into Sample::scene.uavs
  PixelBox box;
  bool operator==(const TargetBox&) const = default;
};

/// One dataset image: the crop camera, the targets whose centre lies in
/// the crop, their ground-truth boxes and the three label variants.
struct Sample {
  std::uint64_t index = 0;
  CameraIntrinsics camera;
  Image image;
  Scene scene;
  std::vector<TargetBox> bboxes;
  LabelGrid raw;
  LabelGrid partial;
  LabelGrid full;

  int count() const { return static_cast<int>(scene.uavs.size()); }
  const LabelGrid& labels(SmoothingMode mode) const;
};

struct CropWindow {
  int x0 = 0;
  int y0 = 0;
  bool operator==(const CropWindow&) const = default;
};

Scene sample_scene(Rng& rng, const GenConfig& cfg, const CameraIntrinsics& cam, const TargetModel& model);

Image render_scene(const Scene& scene, const CameraIntrinsics& cam, const TargetModel& model,
                   const RenderStyle& style, const RenderFrame& frame);

/// Picks a crop offset. Windows containing a target closer than
/// near_threshold are weighted by bias_weight (infinity: only those).
CropWindow choose_crop(Rng& rng, const Scene& scene, const CameraIntrinsics& source, int crop_width,
                       int crop_height, double near_threshold, double bias_weight);

/// Keeps the targets whose centre lands in the image, then fills boxes and
/// labels for them.
Sample make_sample(std::uint64_t index, const CameraIntrinsics& cam, Image image, const Scene& scene,
                   const TargetModel& model, const LabelSpec& spec, const GridSpec& grid);

Sample crop_biased(Rng& rng, const Sample& full, const GenConfig& cfg, const TargetModel& model,
                   const LabelSpec& spec, const GridSpec& grid);

struct BalanceResult {
  std::vector<std::size_t> kept;    ///< positions into the input, ascending
  std::vector<int> empty_buckets;   ///< counts in 1..cap with no images
};

/// Downsamples the buckets 1..cap to the smallest non-empty bucket size,
/// keeping the earliest members. Images with more than cap targets (or
/// none) pass through untouched.
BalanceResult balance_dataset(std::span<const int> counts, int cap);
BalanceResult balance_dataset(std::span<const Sample> samples, int cap);

struct Split {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

Split make_split(int n, int val_count, int test_count, std::uint64_t seed);

/// Everything needed to regenerate or validate a dataset.
struct DatasetSetup {
  CameraIntrinsics source_camera{96.0, 96.0, 48.0, 48.0, 96, 96};
  TargetModel model;
  LabelSpec labels;
  GridSpec grid{3, 3};
  GenConfig gen;
  RenderStyle style;
  int val_count = 200;
  int test_count = 100;

  void validate() const;
};

struct Dataset {
  DatasetSetup setup;
  std::vector<Sample> samples;
  Split split;
  std::uint64_t candidates_tried = 0;
};

/// Streams candidates (each from its own RNG stream derived from the seed
/// and candidate index) into per-count quotas until n samples exist. The
/// count quotas are flat over 1..balance_cap.
Dataset generate_dataset(const DatasetSetup& setup, int n);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Validates shapes and label invariants; recomputes every raw label and
/// the smoothed labels of one randomly chosen sample.
Dataset read_dataset(const std::filesystem::path& dir);

/// Target count per image (index = count) and target count per distance bin.
std::vector<std::size_t> count_buckets(std::span<const Sample> samples);
std::vector<std::size_t> bin_distribution(std::span<const Sample> samples, const LabelSpec& spec);

}  // namespace dodloc
