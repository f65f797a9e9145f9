#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ag/scene_io.hpp"

namespace ag {

struct Aabb {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool intersects(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
};

/// One cabinet: a body box with evenly stacked drawer fronts, each carrying a
/// centered handle cuboid protruding toward -y (the viewing side).
struct CabinetSpec {
  Eigen::Vector3d center{0, 0, 0.55};
  Eigen::Vector3d size{0.6, 0.4, 1.0};
  int drawer_count = 3;
  // x extent, protrusion along -y, z extent; the protrusion must exceed the
  // depth-filter floor or points behind the grip would pass as visible
  Eigen::Vector3d handle_size{0.16, 0.08, 0.06};
  double drawer_protrusion = 0.01;
  double drawer_gap = 0.06;
};

struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  std::vector<CabinetSpec> cabinets = {CabinetSpec{}};
  std::optional<Aabb> occluder;

  double orbit_radius = 1.7;
  double orbit_height = 0.7;
  int frame_count = 24;
  double arc_degrees = 150;  // frontal arc centered on -y

  int image_width = 160;
  int image_height = 120;
  double focal = 150;

  double cloud_spacing = 0.012;  // surface sample spacing, meters
};

/// A labeled scene object; handles parent to drawers, drawers to cabinets.
struct SceneInstance {
  int id = 0;
  std::string label;
  std::optional<int> parent_id;
  Aabb box;
  std::vector<int> point_indices;  // into the scene cloud
};

struct SyntheticQuery {
  std::string query_id;
  std::string text;
  std::vector<int> gt_indices;  // ground-truth instance mask, sorted
};

struct SyntheticScene {
  SceneSequence scene;
  std::vector<AffordanceAnnotation> annotations;  // per category
  std::vector<SceneInstance> instances;
  std::vector<SyntheticQuery> queries;
};

/// Analytic depth (slab ray/AABB test), flat-colored RGB, jittered-grid
/// surface samples. Deterministic per seed.
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

/// Scene directory plus annotations.json, instances.json, queries.json, gt.json.
void save_synthetic_scene(const SyntheticScene& synth, const std::filesystem::path& root,
                          DepthFormat depth_format = DepthFormat::raw_f32_m);

/// Camera-frame depth of the first AABB intersection along an unnormalized
/// ray (direction z-component scaled to the camera axis), or nothing.
std::optional<double> ray_aabb_depth(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                     const Aabb& box);

/// Scene id convention for generated scenes: "synth-<seed>".
std::string synthetic_scene_id(std::uint64_t seed);

}  // namespace ag
