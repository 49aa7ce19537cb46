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

#include "dodloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dodloc/error.hpp"

namespace dodloc {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DataError("camera: resolution must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw DataError("camera: principal point must lie inside the image");
  }
}

CameraIntrinsics CameraIntrinsics::cropped(int x0, int y0, int crop_width, int crop_height) const {
  CameraIntrinsics c = *this;
  c.cx = cx - x0;
  c.cy = cy - y0;
  c.width = crop_width;
  c.height = crop_height;
  return c;
}

void TargetModel::validate() const {
  if (!(half_extents.minCoeff() > 0.0)) throw DataError("target model: half-extents must be positive");
}

std::array<Vec3, 8> TargetModel::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    out[i] = Vec3((i & 1) ? half_extents.x() : -half_extents.x(),
                  (i & 2) ? half_extents.y() : -half_extents.y(),
                  (i & 4) ? half_extents.z() : -half_extents.z());
  }
  return out;
}

UavPose UavPose::from_angles(const Vec3& position, double yaw, double pitch, double roll) {
  UavPose pose;
  pose.position = position;
  pose.orientation = (Eigen::AngleAxisd(roll, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
                      Eigen::AngleAxisd(yaw, Vec3::UnitY()))
                         .toRotationMatrix();
  return pose;
}

void UavPose::validate() const {
  if (!position.allFinite()) throw DataError("pose: non-finite position");
  const double orth = (orientation.transpose() * orientation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(orth <= 1e-9) || std::abs(orientation.determinant() - 1.0) > 1e-9) {
    throw DataError("pose: orientation is not a proper rotation");
  }
}

void GridSpec::validate() const {
  if (cols < 1 || rows < 1) throw DataError("grid: cell counts must be >= 1");
}

std::optional<Projection> project_point(const CameraIntrinsics& cam, const Vec3& p) {
  if (!(p.z() > 0.0)) return std::nullopt;
  return Projection{cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z()};
}

std::optional<PixelBox> target_bbox_unclipped(const CameraIntrinsics& cam, const UavPose& pose,
                                              const TargetModel& model) {
  int in_front = 0;
  PixelBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), false};
  for (const Vec3& corner : model.corners()) {
    const Vec3 p = pose.orientation * corner + pose.position;
    const auto proj = project_point(cam, p);
    if (!proj) continue;
    ++in_front;
    box.x_min = std::min(box.x_min, proj->u);
    box.x_max = std::max(box.x_max, proj->u);
    box.y_min = std::min(box.y_min, proj->v);
    box.y_max = std::max(box.y_max, proj->v);
  }
  if (in_front == 0) return std::nullopt;
  if (in_front != 8) {
    throw DegenerateProjection("target straddles the camera plane (" + std::to_string(in_front) +
                               " of 8 corners in front)");
  }
  return box;
}

std::optional<PixelBox> target_bbox(const CameraIntrinsics& cam, const UavPose& pose,
                                    const TargetModel& model) {
  auto box = target_bbox_unclipped(cam, pose, model);
  if (!box) return std::nullopt;
  const double w = cam.width;
  const double h = cam.height;
  if (box->x_max <= 0.0 || box->y_max <= 0.0 || box->x_min >= w || box->y_min >= h) {
    return std::nullopt;
  }
  PixelBox out = *box;
  out.x_min = std::max(out.x_min, 0.0);
  out.y_min = std::max(out.y_min, 0.0);
  out.x_max = std::min(out.x_max, w);
  out.y_max = std::min(out.y_max, h);
  out.clipped = !(out == *box);
  return out;
}

std::optional<CellIndex> grid_cell_of(const CameraIntrinsics& cam, const GridSpec& grid, double u,
                                      double v) {
  if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height)) return std::nullopt;
  const int cell_w = std::max(cam.width / grid.cols, 1);
  const int cell_h = std::max(cam.height / grid.rows, 1);
  const int col = std::min(static_cast<int>(std::floor(u / cell_w)), grid.cols - 1);
  const int row = std::min(static_cast<int>(std::floor(v / cell_h)), grid.rows - 1);
  return CellIndex{col, row};
}

std::optional<CellIndex> cell_of_target(const CameraIntrinsics& cam, const GridSpec& grid,
                                        const UavPose& pose) {
  const auto proj = project_point(cam, pose.position);
  if (!proj) return std::nullopt;
  return grid_cell_of(cam, grid, proj->u, proj->v);
}

}  // namespace dodloc
