#pragma once

#include <Eigen/Core>
#include <span>
#include <utility>
#include <vector>

#include "ag/scene_io.hpp"

namespace ag {

/// A 3D point projected into a frame. Only emitted for points in front of
/// the camera and inside the image bounds.
struct PixelProjection {
  double u = 0, v = 0;     // continuous pixel coordinates
  double z_proj = 0;       // camera-frame depth, meters (> 0)
  int point_index = -1;    // index into the source point span
};

inline constexpr double kBehindCameraEps = 1e-6;

/// Pinhole projection of world points through a camera-to-world pose.
/// Points with camera-frame z <= 1e-6 or projecting outside
/// [0,width) x [0,height) are dropped; retained projections keep input order.
std::vector<PixelProjection> project_points(std::span<const Eigen::Vector3d> points,
                                            const Pose& pose,
                                            const CameraIntrinsics& intrinsics);

/// Inverse of project_points for a single pixel. depth must be > 0.
Eigen::Vector3d backproject_pixel(double u, double v, double depth,
                                  const Pose& pose, const CameraIntrinsics& intrinsics);

/// Residual r_i = z_proj - depth_map(round(u), round(v)).
/// Projections landing on invalid depth (<= 0 or non-finite) are omitted.
std::vector<std::pair<int, double>> depth_residuals(const std::vector<PixelProjection>& projections,
                                                    const DepthMap& depth_map);

}  // namespace ag
