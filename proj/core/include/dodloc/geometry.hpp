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

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dodloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics, pixel units. The optical frame is x right, y down,
/// z forward.
struct CameraIntrinsics {
  double fx = 300.0;
  double fy = 300.0;
  double cx = 150.0;
  double cy = 150.0;
  int width = 300;
  int height = 300;

  /// Throws DataError when the invariants do not hold.
  void validate() const;

  /// Virtual camera of a width x height window whose top-left pixel sits
  /// at (x0, y0) in this camera's image.
  CameraIntrinsics cropped(int x0, int y0, int crop_width, int crop_height) const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Axis-aligned box approximating the airframe. Half-extents are expressed
/// in the optical frame for the canonical (level, facing the camera) pose:
/// x is the span seen across the image, y the vertical thickness, z the
/// span along the viewing direction.
struct TargetModel {
  Vec3 half_extents{0.225, 0.125, 0.225};

  void validate() const;
  std::array<Vec3, 8> corners() const;
  /// Full space diagonal of the box, meters.
  double diagonal() const { return 2.0 * half_extents.norm(); }
};

struct UavPose {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();

  /// Rotation composed as R = Rz(roll) * Rx(pitch) * Ry(yaw) in the
  /// optical frame (yaw about the vertical y axis, pitch about x,
  /// roll about the viewing axis z).
  static UavPose from_angles(const Vec3& position, double yaw, double pitch, double roll);

  double distance() const { return position.norm(); }
  /// Throws DataError unless orientation is a proper rotation within 1e-9.
  void validate() const;
};

/// Set of target poses in the optical frame of one camera.
struct Scene {
  std::vector<UavPose> uavs;
};

struct GridSpec {
  int cols = 1;
  int rows = 1;

  int cell_count() const { return cols * rows; }
  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Image-space box. Coordinates are continuous pixel positions.
struct PixelBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  bool clipped = false;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool operator==(const PixelBox&) const = default;
};

struct CellIndex {
  int col = 0;
  int row = 0;
  bool operator==(const CellIndex&) const = default;
};

/// Returns nothing for points with z <= 0.
std::optional<Projection> project_point(const CameraIntrinsics& cam, const Vec3& p);

/// Bounding box of the projected model corners, clipped to the image.
/// Returns nothing when every corner is behind the camera or the box lies
/// entirely outside the image; throws DegenerateProjection when corners
/// straddle the camera plane.
std::optional<PixelBox> target_bbox(const CameraIntrinsics& cam, const UavPose& pose,
                                    const TargetModel& model);

/// Same as target_bbox without clipping (clipped flag always false).
std::optional<PixelBox> target_bbox_unclipped(const CameraIntrinsics& cam, const UavPose& pose,
                                              const TargetModel& model);

/// Cell containing pixel (u, v). Cells are floor(width / cols) wide; the
/// last column and row absorb the remainder.
std::optional<CellIndex> grid_cell_of(const CameraIntrinsics& cam, const GridSpec& grid, double u,
                                      double v);

/// Cell of the projected target centre, or nothing when the centre is
/// behind the camera or outside the image.
std::optional<CellIndex> cell_of_target(const CameraIntrinsics& cam, const GridSpec& grid,
                                        const UavPose& pose);

}  // namespace dodloc
