#include "ag/geometry.hpp"

#include <cmath>

#include "ag/common.hpp"

namespace ag {

std::vector<PixelProjection> project_points(std::span<const Eigen::Vector3d> points,
                                            const Pose& pose,
                                            const CameraIntrinsics& intrinsics) {
  std::vector<PixelProjection> out;
  out.reserve(points.size());
  const Eigen::Matrix3d r_inv = pose.rotation.transpose();
  const Eigen::Vector3d t = pose.translation;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3d cam = r_inv * (points[i] - t);
    if (cam.z() <= kBehindCameraEps) continue;
    const double u = intrinsics.fx * (cam.x() / cam.z()) + intrinsics.cx;
    const double v = intrinsics.fy * (cam.y() / cam.z()) + intrinsics.cy;
    if (u < 0 || u >= intrinsics.width || v < 0 || v >= intrinsics.height) continue;
    out.push_back({u, v, cam.z(), static_cast<int>(i)});
  }
  return out;
}

Eigen::Vector3d backproject_pixel(double u, double v, double depth,
                                  const Pose& pose, const CameraIntrinsics& intrinsics) {
  if (!(depth > 0)) throw ContractViolation("backproject_pixel: depth must be > 0");
  const Eigen::Vector3d cam((u - intrinsics.cx) / intrinsics.fx * depth,
                            (v - intrinsics.cy) / intrinsics.fy * depth,
                            depth);
  return pose.rotation * cam + pose.translation;
}

std::vector<std::pair<int, double>> depth_residuals(const std::vector<PixelProjection>& projections,
                                                    const DepthMap& depth_map) {
  std::vector<std::pair<int, double>> out;
  out.reserve(projections.size());
  for (const auto& p : projections) {
    int px = static_cast<int>(std::lround(p.u));
    int py = static_cast<int>(std::lround(p.v));
    // Rounding can push a projection from [0,w) onto the w edge; clamp to the
    // nearest valid pixel.
    px = std::min(std::max(px, 0), depth_map.width - 1);
    py = std::min(std::max(py, 0), depth_map.height - 1);
    const float d = depth_map.at(px, py);
    if (!(d > 0) || !std::isfinite(d)) continue;
    out.emplace_back(p.point_index, p.z_proj - static_cast<double>(d));
  }
  return out;
}

}  // namespace ag
