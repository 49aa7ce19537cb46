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

#include "dodloc/scenegen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dodloc/error.hpp"

namespace dodloc {

namespace {

constexpr std::uint64_t kSceneSalt = 0x5ce7e;
constexpr std::uint64_t kRenderSalt = 0x7e7de7;
constexpr std::uint64_t kSplitSalt = 0x5b117;
constexpr std::uint64_t kCheckSalt = 0xc7ec4;
constexpr int kGroupRetries = 10;
constexpr int kFormatVersion = 1;

double round6(double x) { return std::round(x * 1e6) / 1e6; }

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Rejects candidates that come closer than `spacing` to a placed target.
class SpacingIndex {
 public:
  explicit SpacingIndex(double spacing) : spacing_(spacing) {}

  bool admits(const Vec3& p) const {
    const auto [ix, iy, iz] = cell(p);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(key(ix + dx, iy + dy, iz + dz));
          if (it == cells_.end()) continue;
          for (const Vec3& q : it->second)
            if ((p - q).norm() < spacing_) return false;
        }
    return true;
  }

  void insert(const Vec3& p) {
    const auto [ix, iy, iz] = cell(p);
    cells_[key(ix, iy, iz)].push_back(p);
  }

  void erase(const Vec3& p) {
    const auto [ix, iy, iz] = cell(p);
    auto& bucket = cells_[key(ix, iy, iz)];
    bucket.erase(std::find(bucket.begin(), bucket.end(), p));
  }

 private:
  std::tuple<std::int64_t, std::int64_t, std::int64_t> cell(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / spacing_)),
            static_cast<std::int64_t>(std::floor(p.y() / spacing_)),
            static_cast<std::int64_t>(std::floor(p.z() / spacing_))};
  }
  static std::uint64_t key(std::int64_t x, std::int64_t y, std::int64_t z) {
    return mix64(static_cast<std::uint64_t>(x) * 0x100000001b3ULL ^ mix64(static_cast<std::uint64_t>(y)) ^
                 (mix64(static_cast<std::uint64_t>(z)) << 1));
  }

  double spacing_;
  std::unordered_map<std::uint64_t, std::vector<Vec3>> cells_;
};

struct GroupShape {
  int size = 0;
  double centre_min = 0.0;
  double centre_max = 0.0;
  double radius = 0.0;
  double member_min = 0.0;
};

class Placer {
 public:
  Placer(const GenConfig& cfg, const CameraIntrinsics& cam, const TargetModel& model)
      : cfg_(cfg), cam_(cam), spacing_(cfg.separation_factor * model.diagonal()), index_(std::max(spacing_, 1e-3)) {}

  void place_group(Rng& rng, const GroupShape& shape, Scene& scene) {
    for (int attempt = 0; attempt < kGroupRetries; ++attempt) {
      const Vec3 centre = random_ray(rng) * rng.uniform(shape.centre_min, shape.centre_max);
      const std::size_t first = scene.uavs.size();
      bool ok = true;
      for (int m = 0; m < shape.size && ok; ++m) {
        ok = place_member(rng, centre, shape, scene);
      }
      if (ok) return;
      for (std::size_t i = first; i < scene.uavs.size(); ++i) index_.erase(scene.uavs[i].position);
      scene.uavs.resize(first);
    }
    throw GenerationError(fmt::format("could not place a group of {} targets at {:.1f}-{:.1f} m", shape.size,
                                      shape.centre_min, shape.centre_max));
  }

 private:
  Vec3 random_ray(Rng& rng) const {
    const double m = cfg_.frustum_margin_px;
    const double u = rng.uniform(m, cam_.width - m);
    const double v = rng.uniform(m, cam_.height - m);
    return Vec3((u - cam_.cx) / cam_.fx, (v - cam_.cy) / cam_.fy, 1.0).normalized();
  }

  bool admissible(const Vec3& p, const GroupShape& shape) const {
    if (p.z() < cfg_.min_depth) return false;
    if (p.norm() < shape.member_min) return false;
    const auto proj = project_point(cam_, p);
    const double m = cfg_.frustum_margin_px;
    if (!proj || proj->u < m || proj->u > cam_.width - m || proj->v < m || proj->v > cam_.height - m) return false;
    return index_.admits(p);
  }

  bool place_member(Rng& rng, const Vec3& centre, const GroupShape& shape, Scene& scene) {
    const double tilt = deg2rad(cfg_.max_tilt_deg);
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
      Vec3 offset;
      do {
        offset = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      } while (offset.squaredNorm() > 1.0);
      Vec3 p = centre + shape.radius * offset;
      p = Vec3(round6(p.x()), round6(p.y()), round6(p.z()));
      if (!admissible(p, shape)) continue;
      const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double pitch = rng.uniform(-tilt, tilt);
      const double roll = rng.uniform(-tilt, tilt);
      scene.uavs.push_back(UavPose::from_angles(p, yaw, pitch, roll));
      index_.insert(p);
      return true;
    }
    return false;
  }

  const GenConfig& cfg_;
  const CameraIntrinsics& cam_;
  double spacing_;
  SpacingIndex index_;
};

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

/// Symmetric noise in [-1, 1] keyed by absolute pixel position and channel.
double pixel_noise(std::uint64_t seed, int x, int y, int channel) {
  const std::uint64_t h = mix64(seed ^ mix64((static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
                                             static_cast<std::uint32_t>(y)) ^
                                static_cast<std::uint64_t>(channel) * 0x9e3779b97f4a7c15ULL);
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

struct Point2 {
  double x, y;
};

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_convex(const std::vector<Point2>& hull, const Point2& p) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < 0) return false;
  }
  return true;
}

bool in_image(const CameraIntrinsics& cam, const UavPose& pose) {
  return cell_of_target(cam, GridSpec{1, 1}, pose).has_value();
}

}  // namespace

void GenConfig::validate() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  if (min_count < 1 || max_count < min_count) throw DataError("generator: need 1 <= min_count <= max_count");
  if (balance_cap < 1) throw DataError("generator: balance_cap must be >= 1");
  if (!finite(near_threshold) || !finite(near_min_distance) || !finite(near_radius) || !finite(far_min_distance) ||
      !finite(far_max_distance) || !finite(far_radius) || !finite(far_member_min_distance) || !finite(min_depth)) {
    throw DataError("generator: placement bounds must be finite");
  }
  if (near_min_distance >= near_threshold || far_min_distance > far_max_distance) {
    throw DataError("generator: empty placement range");
  }
  if (near_max_size < 1 || far_groups_min < 1 || far_groups_max < far_groups_min) {
    throw DataError("generator: invalid group sizes");
  }
  if (crop_width < 1 || crop_height < 1) throw DataError("generator: crop size must be positive");
  if (!(crop_bias_weight >= 1.0)) throw DataError("generator: crop bias weight must be >= 1");
  if (!(over_cap_fraction >= 0.0 && over_cap_fraction < 1.0)) {
    throw DataError("generator: over_cap_fraction must lie in [0, 1)");
  }
  if (max_attempts < 1) throw DataError("generator: max_attempts must be >= 1");
}

GenConfig GenConfig::with_high_density() const {
  GenConfig c = *this;
  c.high_density = true;
  c.max_count = 150;
  c.far_groups_max = std::max(far_groups_max, 8);
  c.far_radius = std::max(far_radius, 4.0);
  if (c.over_cap_fraction == 0.0) c.over_cap_fraction = 0.5;
  return c;
}

const LabelGrid& Sample::labels(SmoothingMode mode) const {
  switch (mode) {
    case SmoothingMode::raw:
      return raw;
    case SmoothingMode::partial:
      return partial;
    case SmoothingMode::full:
      return full;
  }
  return raw;
}

Scene sample_scene(Rng& rng, const GenConfig& cfg, const CameraIntrinsics& cam, const TargetModel& model) {
  const int n = static_cast<int>(rng.uniform_int(cfg.min_count, cfg.max_count));
  int near_size = 0;
  if (rng.bernoulli(cfg.near_probability)) {
    near_size = std::min(n, static_cast<int>(rng.uniform_int(1, cfg.near_max_size)));
  }
  const int far_total = n - near_size;
  const int groups =
      far_total > 0 ? std::min(far_total, static_cast<int>(rng.uniform_int(cfg.far_groups_min, cfg.far_groups_max)))
                    : 0;
  std::vector<int> far_sizes(static_cast<std::size_t>(groups), 1);
  for (int i = groups; i < far_total; ++i) ++far_sizes[rng.uniform_int(0, groups - 1)];

  Scene scene;
  scene.uavs.reserve(static_cast<std::size_t>(n));
  Placer placer(cfg, cam, model);
  if (near_size > 0) {
    placer.place_group(rng,
                       GroupShape{near_size, cfg.near_min_distance, cfg.near_threshold, cfg.near_radius, 0.0},
                       scene);
  }
  const double spacing = cfg.separation_factor * model.diagonal();
  for (const int size : far_sizes) {
    // Large groups need room for their spacing spheres.
    const double radius = std::max(cfg.far_radius, 0.8 * spacing * std::cbrt(static_cast<double>(size)));
    placer.place_group(
        rng, GroupShape{size, cfg.far_min_distance, cfg.far_max_distance, radius, cfg.far_member_min_distance},
        scene);
  }
  return scene;
}

Image render_scene(const Scene& scene, const CameraIntrinsics& cam, const TargetModel& model,
                   const RenderStyle& style, const RenderFrame& frame) {
  Image img(cam.width, cam.height);
  const double frame_h = frame.frame_height > 0 ? frame.frame_height : cam.height;

  Rng palette(frame.seed, 0, 0xba5e);
  const double top[3] = {palette.uniform(90, 170), palette.uniform(120, 200), palette.uniform(160, 240)};
  const double bottom[3] = {palette.uniform(60, 140), palette.uniform(70, 150), palette.uniform(40, 110)};

  for (int y = 0; y < cam.height; ++y) {
    const int ay = y + frame.origin_y;
    const double t = std::clamp((ay + 0.5) / frame_h, 0.0, 1.0);
    for (int x = 0; x < cam.width; ++x) {
      const int ax = x + frame.origin_x;
      auto* px = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        px[c] = clamp_byte(top[c] * (1.0 - t) + bottom[c] * t +
                           style.noise_amplitude * pixel_noise(frame.seed, ax, ay, c));
      }
    }
  }

  std::vector<std::size_t> order(scene.uavs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scene.uavs[a].distance() > scene.uavs[b].distance();
  });

  const auto corners = model.corners();
  for (const std::size_t i : order) {
    const UavPose& uav = scene.uavs[i];
    std::vector<Point2> projected;
    bool all_front = true;
    for (const Vec3& corner : corners) {
      const auto p = project_point(cam, uav.orientation * corner + uav.position);
      if (!p) {
        all_front = false;
        break;
      }
      projected.push_back({p->u, p->v});
    }
    const auto centre = project_point(cam, uav.position);
    if (!all_front || !centre) continue;

    // Colour keyed by position so it survives re-indexing after a crop.
    const std::uint64_t key = mix64(frame.seed ^ mix64(std::bit_cast<std::uint64_t>(uav.position.x())) ^
                                    mix64(std::bit_cast<std::uint64_t>(uav.position.y()) + 1) ^
                                    mix64(std::bit_cast<std::uint64_t>(uav.position.z()) + 2));
    Rng tint(key);
    const double base = tint.uniform(30, 80);
    std::uint8_t colour[3];
    for (int c = 0; c < 3; ++c) colour[c] = clamp_byte(base + style.color_jitter * (tint.uniform() - 0.5));

    const auto hull = convex_hull(projected);
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
    for (const auto& p : hull) {
      x_lo = std::min(x_lo, p.x);
      x_hi = std::max(x_hi, p.x);
      y_lo = std::min(y_lo, p.y);
      y_hi = std::max(y_hi, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(x_lo)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(x_hi)));
    const int y0 = std::max(0, static_cast<int>(std::floor(y_lo)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(y_hi)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (inside_convex(hull, {x + 0.5, y + 0.5})) std::copy(colour, colour + 3, img.pixel(x, y));

    // Sub-pixel targets still mark the pixel under their centre.
    const int cxp = static_cast<int>(std::floor(centre->u));
    const int cyp = static_cast<int>(std::floor(centre->v));
    if (cxp >= 0 && cxp < cam.width && cyp >= 0 && cyp < cam.height) std::copy(colour, colour + 3, img.pixel(cxp, cyp));
  }
  return img;
}

CropWindow choose_crop(Rng& rng, const Scene& scene, const CameraIntrinsics& source, int crop_width,
                       int crop_height, double near_threshold, double bias_weight) {
  const int nx = source.width - crop_width + 1;
  const int ny = source.height - crop_height + 1;
  if (nx < 1 || ny < 1) throw DataError("crop larger than source image");

  // Offsets whose window contains a near target, via a 2-D difference array.
  std::vector<int> diff(static_cast<std::size_t>(nx + 1) * (ny + 1), 0);
  const auto at = [&](int x, int y) -> int& { return diff[static_cast<std::size_t>(y) * (nx + 1) + x]; };
  bool any_near = false;
  for (const UavPose& uav : scene.uavs) {
    if (!(uav.distance() < near_threshold)) continue;
    const auto p = project_point(source, uav.position);
    if (!p || p->u < 0 || p->v < 0 || p->u >= source.width || p->v >= source.height) continue;
    // x0 <= u < x0 + w  <=>  floor(u) - w + 1 <= x0 <= floor(u)
    const int xa = std::max(0, static_cast<int>(std::floor(p->u)) - crop_width + 1);
    const int xb = std::min(nx - 1, static_cast<int>(std::floor(p->u)));
    const int ya = std::max(0, static_cast<int>(std::floor(p->v)) - crop_height + 1);
    const int yb = std::min(ny - 1, static_cast<int>(std::floor(p->v)));
    if (xa > xb || ya > yb) continue;
    any_near = true;
    at(xa, ya) += 1;
    at(xb + 1, ya) -= 1;
    at(xa, yb + 1) -= 1;
    at(xb + 1, yb + 1) += 1;
  }

  const auto total_offsets = static_cast<std::size_t>(nx) * ny;
  if (!any_near || bias_weight == 1.0) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total_offsets) - 1));
    return CropWindow{static_cast<int>(k % nx), static_cast<int>(k / nx)};
  }

  std::vector<char> contains(total_offsets, 0);
  std::vector<int> row(static_cast<std::size_t>(nx + 1), 0);
  std::size_t n_contain = 0;
  for (int y = 0; y < ny; ++y) {
    int run = 0;
    for (int x = 0; x < nx; ++x) {
      row[x] += at(x, y);
      run += row[x];
      if (run > 0) {
        contains[static_cast<std::size_t>(y) * nx + x] = 1;
        ++n_contain;
      }
    }
  }

  const bool only_near = std::isinf(bias_weight);
  const double total = only_near ? static_cast<double>(n_contain)
                                 : static_cast<double>(total_offsets - n_contain) + bias_weight * n_contain;
  double r = rng.uniform() * total;
  std::size_t last_eligible = 0;
  for (std::size_t k = 0; k < total_offsets; ++k) {
    const double w = contains[k] ? (only_near ? 1.0 : bias_weight) : (only_near ? 0.0 : 1.0);
    if (w == 0.0) continue;
    last_eligible = k;
    if (r < w) return CropWindow{static_cast<int>(k % nx), static_cast<int>(k / nx)};
    r -= w;
  }
  return CropWindow{static_cast<int>(last_eligible % nx), static_cast<int>(last_eligible / nx)};
}

Sample make_sample(std::uint64_t index, const CameraIntrinsics& cam, Image image, const Scene& scene,
                   const TargetModel& model, const LabelSpec& spec, const GridSpec& grid) {
  Sample s;
  s.index = index;
  s.camera = cam;
  s.image = std::move(image);
  for (const UavPose& uav : scene.uavs) {
    if (in_image(cam, uav)) s.scene.uavs.push_back(uav);
  }
  for (int i = 0; i < s.count(); ++i) {
    const auto box = target_bbox(cam, s.scene.uavs[i], model);
    if (box) s.bboxes.push_back(TargetBox{i, *box});
  }
  s.raw = raw_histogram(s.scene, cam, grid, spec);
  s.partial = smooth_labels(s.raw, spec, SmoothingMode::partial);
  s.full = smooth_labels(s.raw, spec, SmoothingMode::full);
  return s;
}

Sample crop_biased(Rng& rng, const Sample& full, const GenConfig& cfg, const TargetModel& model,
                   const LabelSpec& spec, const GridSpec& grid) {
  if (full.image.width < cfg.crop_width || full.image.height < cfg.crop_height) {
    throw DataError("source image smaller than crop");
  }
  const CropWindow w = choose_crop(rng, full.scene, full.camera, cfg.crop_width, cfg.crop_height,
                                   cfg.near_threshold, cfg.crop_bias_weight);
  const CameraIntrinsics cam = full.camera.cropped(w.x0, w.y0, cfg.crop_width, cfg.crop_height);
  return make_sample(full.index, cam, crop_image(full.image, w.x0, w.y0, cfg.crop_width, cfg.crop_height),
                     full.scene, model, spec, grid);
}

BalanceResult balance_dataset(std::span<const int> counts, int cap) {
  if (cap < 1) throw DataError("balance cap must be >= 1");
  std::vector<std::size_t> bucket_size(static_cast<std::size_t>(cap) + 1, 0);
  for (const int c : counts)
    if (c >= 1 && c <= cap) ++bucket_size[c];

  BalanceResult result;
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (int c = 1; c <= cap; ++c) {
    if (bucket_size[c] == 0) {
      result.empty_buckets.push_back(c);
      continue;
    }
    smallest = std::min(smallest, bucket_size[c]);
  }
  std::vector<std::size_t> taken(static_cast<std::size_t>(cap) + 1, 0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const int c = counts[i];
    if (c >= 1 && c <= cap) {
      if (taken[c] >= smallest) continue;
      ++taken[c];
    }
    result.kept.push_back(i);
  }
  return result;
}

BalanceResult balance_dataset(std::span<const Sample> samples, int cap) {
  std::vector<int> counts;
  counts.reserve(samples.size());
  for (const Sample& s : samples) counts.push_back(s.count());
  return balance_dataset(counts, cap);
}

Split make_split(int n, int val_count, int test_count, std::uint64_t seed) {
  if (val_count < 0 || test_count < 0 || val_count + test_count >= n) {
    throw DataError(fmt::format("cannot split {} samples into {} validation and {} test with a non-empty train set",
                                n, val_count, test_count));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0, kSplitSalt);
  rng.shuffle(order.begin(), order.end());
  Split split;
  split.val.assign(order.begin(), order.begin() + val_count);
  split.test.assign(order.begin() + val_count, order.begin() + val_count + test_count);
  split.train.assign(order.begin() + val_count + test_count, order.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

void DatasetSetup::validate() const {
  source_camera.validate();
  model.validate();
  labels.validate();
  grid.validate();
  gen.validate();
  if (gen.crop_width > source_camera.width || gen.crop_height > source_camera.height) {
    throw DataError("generator: crop larger than the source camera image");
  }
  if (grid.cols > gen.crop_width || grid.rows > gen.crop_height) throw DataError("grid finer than the crop");
}

Dataset generate_dataset(const DatasetSetup& setup, int n) {
  setup.validate();
  if (n < 1) throw DataError("dataset size must be >= 1");
  const GenConfig& gen = setup.gen;
  const int cap = gen.balance_cap;
  const int over_quota = static_cast<int>(std::lround(n * gen.over_cap_fraction));
  const int flat_total = n - over_quota;
  // Remainders go to the smallest counts.
  std::vector<int> quota(static_cast<std::size_t>(cap) + 1, 0);
  for (int c = 1; c <= cap; ++c) quota[c] = flat_total / cap + (c <= flat_total % cap ? 1 : 0);
  int over_left = over_quota;

  Dataset ds;
  ds.setup = setup;
  ds.samples.reserve(static_cast<std::size_t>(n));
  const std::uint64_t budget = std::max<std::uint64_t>(20000, 2000ULL * n);
  std::uint64_t candidate = 0;
  for (; static_cast<int>(ds.samples.size()) < n; ++candidate) {
    if (candidate >= budget) {
      std::string missing;
      for (int c = 1; c <= cap; ++c)
        if (quota[c] > 0) missing += fmt::format(" {}:{}", c, quota[c]);
      if (over_left > 0) missing += fmt::format(" >{}:{}", cap, over_left);
      throw GenerationError("candidate budget exhausted; unfilled count quotas:" + missing);
    }
    Rng rng(gen.seed, candidate, kSceneSalt);
    const Scene scene = sample_scene(rng, gen, setup.source_camera, setup.model);
    const CropWindow w = choose_crop(rng, scene, setup.source_camera, gen.crop_width, gen.crop_height,
                                     gen.near_threshold, gen.crop_bias_weight);
    const CameraIntrinsics cam = setup.source_camera.cropped(w.x0, w.y0, gen.crop_width, gen.crop_height);
    int count = 0;
    for (const UavPose& uav : scene.uavs) count += in_image(cam, uav) ? 1 : 0;
    if (count == 0) continue;
    if (count <= cap) {
      if (quota[count] == 0) continue;
      --quota[count];
    } else {
      if (over_left == 0) continue;
      --over_left;
    }
    const RenderFrame frame{stream_seed(gen.seed, candidate, kRenderSalt), w.x0, w.y0, setup.source_camera.height};
    Image image = render_scene(scene, cam, setup.model, setup.style, frame);
    ds.samples.push_back(
        make_sample(ds.samples.size(), cam, std::move(image), scene, setup.model, setup.labels, setup.grid));
  }
  ds.candidates_tried = candidate;
  ds.split = make_split(n, setup.val_count, setup.test_count, gen.seed);
  return ds;
}

std::vector<std::size_t> count_buckets(std::span<const Sample> samples) {
  std::vector<std::size_t> out;
  for (const Sample& s : samples) {
    if (static_cast<std::size_t>(s.count()) >= out.size()) out.resize(static_cast<std::size_t>(s.count()) + 1, 0);
    ++out[s.count()];
  }
  return out;
}

std::vector<std::size_t> bin_distribution(std::span<const Sample> samples, const LabelSpec& spec) {
  std::vector<std::size_t> out(static_cast<std::size_t>(spec.n_bin), 0);
  for (const Sample& s : samples)
    for (const UavPose& uav : s.scene.uavs) ++out[spec.bin_of(uav.distance())];
  return out;
}

// --- serialization -------------------------------------------------------

namespace {

using nlohmann::json;

json camera_to_json(const CameraIntrinsics& c) {
  return json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

CameraIntrinsics camera_from_json(const json& j) {
  CameraIntrinsics c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

json gen_to_json(const GenConfig& g) {
  return json{{"min_count", g.min_count},
              {"max_count", g.max_count},
              {"near_probability", g.near_probability},
              {"near_threshold", g.near_threshold},
              {"near_min_distance", g.near_min_distance},
              {"near_radius", g.near_radius},
              {"near_max_size", g.near_max_size},
              {"far_groups_min", g.far_groups_min},
              {"far_groups_max", g.far_groups_max},
              {"far_min_distance", g.far_min_distance},
              {"far_max_distance", g.far_max_distance},
              {"far_radius", g.far_radius},
              {"far_member_min_distance", g.far_member_min_distance},
              {"min_depth", g.min_depth},
              {"frustum_margin_px", g.frustum_margin_px},
              {"max_tilt_deg", g.max_tilt_deg},
              {"separation_factor", g.separation_factor},
              {"max_attempts", g.max_attempts},
              {"crop_width", g.crop_width},
              {"crop_height", g.crop_height},
              {"crop_bias_weight", g.crop_bias_weight},
              {"balance_cap", g.balance_cap},
              {"over_cap_fraction", g.over_cap_fraction},
              {"high_density", g.high_density},
              {"seed", g.seed}};
}

GenConfig gen_from_json(const json& j) {
  GenConfig g;
  g.min_count = j.at("min_count").get<int>();
  g.max_count = j.at("max_count").get<int>();
  g.near_probability = j.at("near_probability").get<double>();
  g.near_threshold = j.at("near_threshold").get<double>();
  g.near_min_distance = j.at("near_min_distance").get<double>();
  g.near_radius = j.at("near_radius").get<double>();
  g.near_max_size = j.at("near_max_size").get<int>();
  g.far_groups_min = j.at("far_groups_min").get<int>();
  g.far_groups_max = j.at("far_groups_max").get<int>();
  g.far_min_distance = j.at("far_min_distance").get<double>();
  g.far_max_distance = j.at("far_max_distance").get<double>();
  g.far_radius = j.at("far_radius").get<double>();
  g.far_member_min_distance = j.at("far_member_min_distance").get<double>();
  g.min_depth = j.at("min_depth").get<double>();
  g.frustum_margin_px = j.at("frustum_margin_px").get<double>();
  g.max_tilt_deg = j.at("max_tilt_deg").get<double>();
  g.separation_factor = j.at("separation_factor").get<double>();
  g.max_attempts = j.at("max_attempts").get<int>();
  g.crop_width = j.at("crop_width").get<int>();
  g.crop_height = j.at("crop_height").get<int>();
  g.crop_bias_weight = j.at("crop_bias_weight").get<double>();
  g.balance_cap = j.at("balance_cap").get<int>();
  g.over_cap_fraction = j.at("over_cap_fraction").get<double>();
  g.high_density = j.at("high_density").get<bool>();
  g.seed = j.at("seed").get<std::uint64_t>();
  return g;
}

json grid_labels_to_json(const LabelGrid& g) {
  json cells = json::array();
  for (int c = 0; c < g.grid().cell_count(); ++c) {
    const auto v = g.cell(c);
    cells.push_back(std::vector<double>(v.begin(), v.end()));
  }
  return cells;
}

LabelGrid grid_labels_from_json(const json& j, const GridSpec& grid, int n_bin, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != grid.cell_count()) {
    throw DataError(what + ": expected " + std::to_string(grid.cell_count()) + " cells");
  }
  LabelGrid out(grid, n_bin);
  for (int c = 0; c < grid.cell_count(); ++c) {
    const auto bins = j[c].get<std::vector<double>>();
    if (static_cast<int>(bins.size()) != n_bin) throw DataError(what + ": bin count mismatch");
    for (int b = 0; b < n_bin; ++b) {
      if (!std::isfinite(bins[b]) || bins[b] < 0.0) throw DataError(what + ": negative or non-finite entry");
      out.cell(c)[b] = bins[b];
    }
  }
  return out;
}

json sample_to_json(const Sample& s) {
  json poses = json::array();
  for (const UavPose& p : s.scene.uavs) {
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[r * 3 + c] = p.orientation(r, c);
    poses.push_back(json{{"position", {p.position.x(), p.position.y(), p.position.z()}}, {"rotation", rot}});
  }
  json boxes = json::array();
  for (const TargetBox& b : s.bboxes) {
    boxes.push_back(json{{"uav", b.uav},
                         {"box", {b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max}},
                         {"clipped", b.box.clipped}});
  }
  return json{{"index", s.index},
              {"camera", camera_to_json(s.camera)},
              {"poses", poses},
              {"bboxes", boxes},
              {"histograms",
               {{"raw", grid_labels_to_json(s.raw)},
                {"partial", grid_labels_to_json(s.partial)},
                {"full", grid_labels_to_json(s.full)}}}};
}

std::string file_stem(std::size_t i) { return fmt::format("{:06d}", i); }

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void check_mass(const LabelGrid& raw, const LabelGrid& smoothed, const std::string& what) {
  for (int c = 0; c < raw.grid().cell_count(); ++c) {
    const auto a = raw.cell(c);
    const auto b = smoothed.cell(c);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    if (std::abs(sa - sb) > 1e-9) throw DataError(what + ": smoothed label does not conserve cell mass");
  }
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "labels", ec);
  if (ec) throw DataError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  const auto& st = ds.setup;
  json manifest{{"format", "dodloc-dataset"},
                {"version", kFormatVersion},
                {"count", ds.samples.size()},
                {"seed", st.gen.seed},
                {"candidates_tried", ds.candidates_tried},
                {"source_camera", camera_to_json(st.source_camera)},
                {"model", {{"half_extents", {st.model.half_extents.x(), st.model.half_extents.y(), st.model.half_extents.z()}}}},
                {"label_spec", {{"delta_d", st.labels.delta_d}, {"n_bin", st.labels.n_bin}, {"sigma", st.labels.sigma}, {"k", st.labels.k}}},
                {"grid", {{"cols", st.grid.cols}, {"rows", st.grid.rows}}},
                {"generator", gen_to_json(st.gen)},
                {"style", {{"noise_amplitude", st.style.noise_amplitude}, {"color_jitter", st.style.color_jitter}}},
                {"split", {{"val_count", st.val_count}, {"test_count", st.test_count}, {"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}}}};
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("cannot write manifest in " + dir.string());
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    write_ppm(s.image, dir / "images" / (file_stem(i) + ".ppm"));
    std::ofstream out(dir / "labels" / (file_stem(i) + ".json"));
    out << sample_to_json(s).dump() << '\n';
    if (!out) throw DataError("cannot write label file for sample " + std::to_string(i));
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  Dataset ds;
  std::size_t count = 0;
  try {
    if (manifest.at("format").get<std::string>() != "dodloc-dataset") throw DataError("not a dodloc dataset manifest");
    if (manifest.at("version").get<int>() != kFormatVersion) throw DataError("unsupported dataset format version");
    count = manifest.at("count").get<std::size_t>();
    auto& st = ds.setup;
    st.source_camera = camera_from_json(manifest.at("source_camera"));
    const auto he = manifest.at("model").at("half_extents").get<std::vector<double>>();
    if (he.size() != 3) throw DataError("manifest: model half_extents must have 3 entries");
    st.model.half_extents = Vec3(he[0], he[1], he[2]);
    const auto& ls = manifest.at("label_spec");
    st.labels = LabelSpec{ls.at("delta_d").get<double>(), ls.at("n_bin").get<int>(), ls.at("sigma").get<double>(),
                          ls.at("k").get<int>()};
    st.grid = GridSpec{manifest.at("grid").at("cols").get<int>(), manifest.at("grid").at("rows").get<int>()};
    st.gen = gen_from_json(manifest.at("generator"));
    st.style.noise_amplitude = manifest.at("style").at("noise_amplitude").get<double>();
    st.style.color_jitter = manifest.at("style").at("color_jitter").get<double>();
    const auto& sp = manifest.at("split");
    st.val_count = sp.at("val_count").get<int>();
    st.test_count = sp.at("test_count").get<int>();
    ds.split.train = sp.at("train").get<std::vector<int>>();
    ds.split.val = sp.at("val").get<std::vector<int>>();
    ds.split.test = sp.at("test").get<std::vector<int>>();
    ds.candidates_tried = manifest.at("candidates_tried").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  ds.setup.validate();

  std::vector<int> seen(count, 0);
  for (const auto* part : {&ds.split.train, &ds.split.val, &ds.split.test})
    for (const int i : *part) {
      if (i < 0 || static_cast<std::size_t>(i) >= count || seen[i]++) throw DataError("manifest: split is not a partition");
    }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw DataError("manifest: split is not a partition");

  const auto& st = ds.setup;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string what = "sample " + file_stem(i);
    Sample s;
    s.image = read_ppm(dir / "images" / (file_stem(i) + ".ppm"));
    if (s.image.width != st.gen.crop_width || s.image.height != st.gen.crop_height) {
      throw DataError(what + ": image dimensions do not match the manifest");
    }
    const json j = read_json(dir / "labels" / (file_stem(i) + ".json"));
    try {
      s.index = j.at("index").get<std::uint64_t>();
      s.camera = camera_from_json(j.at("camera"));
      for (const auto& p : j.at("poses")) {
        const auto pos = p.at("position").get<std::vector<double>>();
        const auto rot = p.at("rotation").get<std::vector<double>>();
        if (pos.size() != 3 || rot.size() != 9) throw DataError(what + ": malformed pose");
        UavPose pose;
        pose.position = Vec3(pos[0], pos[1], pos[2]);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) pose.orientation(r, c) = rot[r * 3 + c];
        pose.validate();
        s.scene.uavs.push_back(pose);
      }
      for (const auto& b : j.at("bboxes")) {
        const auto v = b.at("box").get<std::vector<double>>();
        if (v.size() != 4) throw DataError(what + ": malformed bbox");
        s.bboxes.push_back(TargetBox{b.at("uav").get<int>(), PixelBox{v[0], v[1], v[2], v[3], b.at("clipped").get<bool>()}});
      }
      const auto& h = j.at("histograms");
      s.raw = grid_labels_from_json(h.at("raw"), st.grid, st.labels.n_bin, what + " raw");
      s.partial = grid_labels_from_json(h.at("partial"), st.grid, st.labels.n_bin, what + " partial");
      s.full = grid_labels_from_json(h.at("full"), st.grid, st.labels.n_bin, what + " full");
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ": malformed label file: " + e.what());
    }
    if (s.index != i) throw DataError(what + ": index field mismatch");
    if (s.camera.width != s.image.width || s.camera.height != s.image.height) {
      throw DataError(what + ": camera does not match image");
    }
    for (const UavPose& uav : s.scene.uavs)
      if (!in_image(s.camera, uav)) throw DataError(what + ": pose outside the image");
    if (s.bboxes.size() != s.scene.uavs.size()) throw DataError(what + ": bbox count does not match target count");
    for (std::size_t b = 0; b < s.bboxes.size(); ++b)
      if (s.bboxes[b].uav != static_cast<int>(b)) throw DataError(what + ": bbox order mismatch");
    if (!(raw_histogram(s.scene, s.camera, st.grid, st.labels) == s.raw)) {
      throw DataError(what + ": raw label does not match the stored poses");
    }
    check_mass(s.raw, s.partial, what + " partial");
    check_mass(s.raw, s.full, what + " full");
    ds.samples.push_back(std::move(s));
  }

  if (count > 0) {
    Rng rng(st.gen.seed, count, kCheckSalt);
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(count) - 1));
    const Sample& s = ds.samples[pick];
    if (!(smooth_labels(s.raw, st.labels, SmoothingMode::partial) == s.partial) ||
        !(smooth_labels(s.raw, st.labels, SmoothingMode::full) == s.full)) {
      throw DataError("sample " + file_stem(pick) + ": smoothed label checksum mismatch");
    }
  }
  return ds;
}

}  // namespace dodloc
