#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ag/affordance_memory.hpp"
#include "ag/fusion.hpp"
#include "ag/query.hpp"
#include "ag/scene_io.hpp"

namespace ag {

struct GraphNode {
  enum class Kind { CTX, INT };
  int node_id = 0;  // 1-based, serialization order
  Kind kind = Kind::INT;
  std::string label;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_max = Eigen::Vector3d::Zero();
  std::optional<int> parent_id;    // INT only
  std::vector<int> point_indices;  // indices into the scene cloud
};

struct SceneGraph {
  std::vector<GraphNode> nodes;
  Eigen::Vector3d up_axis = Eigen::Vector3d(0, 0, 1);
  std::string scene_id;

  const GraphNode* find(int node_id) const;
  void validate() const;
};

/// CTX nodes first (centroid lexicographic), then INT nodes. Each INT node is
/// parented to the smallest-volume CTX node whose AABB, dilated by 0.05 m,
/// contains the INT centroid.
SceneGraph build_graph(const CandidatePool& int_candidates, const CandidatePool& ctx_candidates,
                       const std::string& int_label, const std::optional<std::string>& ctx_label,
                       const Eigen::Vector3d& up_axis, const std::string& scene_id);

/// Canonical JSON: fixed key order, floats to 4 decimals, byte-deterministic.
std::string serialize_graph(const SceneGraph& graph);
SceneGraph parse_graph(const std::string& json_text);

void persist_scene_graph(const SceneGraph& graph, const std::filesystem::path& path);
SceneGraph load_scene_graph(const std::filesystem::path& path);

/// Schematic top-down orthographic SVG: sub-sampled cloud in gray, AABB
/// footprints as rectangles (CTX and INT in distinct colors) labeled by node
/// id. Byte-deterministic.
std::string render_topdown(const SceneGraph& graph, const PointCloud& cloud);

/// Send-time raster companion of render_topdown (1024x1024, 4 px strokes),
/// attached to HTTP selection requests instead of the SVG text.
Image8 render_topdown_raster(const SceneGraph& graph, const PointCloud& cloud);

struct CropResult {
  std::map<int, Image8> crops;        // node_id -> RGB crop
  std::vector<std::string> warnings;  // nodes visible nowhere
};

/// Best-scoring frame per node (same quality score as memory construction),
/// crop box dilated 10% per side and clamped to the image.
CropResult extract_crops(const SceneGraph& graph, const SceneSequence& scene,
                         const DepthFilterParams& params = {}, double w1 = 0.5, double w2 = 0.5);

struct ResolveOutcome {
  int node_id = 0;
  std::optional<std::string> warning;
};

/// Deterministic counterpart of the language-model instance selection; used
/// for backend-free tests and the graph ablation.
ResolveOutcome resolve_spatial(const SceneGraph& graph, const SpatialDescriptor& descriptor,
                               const std::string& int_label);

}  // namespace ag
