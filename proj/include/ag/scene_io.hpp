#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ag/image.hpp"

namespace ag {

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;  // throws ValidationError
};

/// Camera-to-world rigid transform.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static constexpr double kOrthonormalTol = 1e-6;
  void validate() const;  // orthonormal + det(+1) within tolerance
  Pose inverse() const;
  Eigen::Vector3d camera_center() const { return translation; }

  /// Row-major 4x4 [R|t; 0 0 0 1].
  static Pose from_matrix4_row_major(const std::array<double, 16>& m);
  std::array<double, 16> to_matrix4_row_major() const;
};

struct Frame {
  int index = 0;
  Image8 rgb;
  DepthMap depth;
  CameraIntrinsics intrinsics;
  Pose pose;

  void validate() const;
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;                 // world frame, meters
  std::vector<std::array<std::uint8_t, 3>> colors;     // optional; empty or size()==points.size()

  std::size_t size() const { return points.size(); }
  void validate() const;
};

struct SceneSequence {
  std::string scene_id;
  std::vector<Frame> frames;
  PointCloud cloud;
  Eigen::Vector3d up_axis = Eigen::Vector3d(0, 0, 1);  // manifest override, default +z

  void validate() const;
};

struct AffordanceAnnotation {
  std::string category;             // lowercase-normalized
  std::vector<int> point_indices;   // sorted ascending, unique
  std::string scene_id;
};

enum class DepthFormat { png16_mm, raw_f32_m };

/// Reads a scene directory (manifest.json + frame files + cloud.ply).
/// Depth is converted to meters regardless of the on-disk unit.
SceneSequence load_scene(const std::filesystem::path& root);

/// Writes a scene in the same layout load_scene expects.
void save_scene(const SceneSequence& scene, const std::filesystem::path& root, DepthFormat depth_format);

/// JSON map category -> point index array. Categories are lowercase-trimmed.
std::vector<AffordanceAnnotation> load_annotations(const std::filesystem::path& path,
                                                   const std::string& scene_id,
                                                   std::optional<std::size_t> cloud_size = std::nullopt);
void save_annotations(const std::vector<AffordanceAnnotation>& annotations,
                      const std::filesystem::path& path);

// Binary little-endian PLY, x/y/z float32 with optional r/g/b uchar.
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace ag
