#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ag/geometry.hpp"
#include "ag/scene_io.hpp"

namespace ag {

struct DepthFilterParams {
  double k = 3.0;         // MAD multiplier
  double tau_min = 0.05;  // threshold floor, meters
};

struct FrameScore {
  std::string scene_id;
  int frame_index = 0;
  double centrality = 0;  // [0,1]
  double proximity = 0;   // [0,1]
  double score = 0;       // w1*centrality + w2*proximity
};

struct MemoryExemplar {
  std::string category;
  std::string scene_id;
  int frame_index = 0;
  Image8 overlay;  // source RGB with the mask filled green at alpha 0.5
  Mask mask;       // convex-hull fill of the depth-filtered projection
  FrameScore score;
};

struct MemoryBank {
  // Per category, exemplars ordered by (score desc, scene_id asc, frame_index asc).
  std::map<std::string, std::vector<MemoryExemplar>> entries;
  int k_recall = 20;
  std::set<std::string> source_scene_ids;
  DepthFilterParams params;
  double w1 = 0.5, w2 = 0.5;
};

/// Per-sequence statistics used by the proximity term: min/max of the inverse
/// camera-to-centroid distance over the sequence's surviving frames.
struct SequenceStats {
  double min_inv_dist = 0;
  double max_inv_dist = 0;
};

/// Frames where at least one annotated point projects in-bounds onto a valid
/// depth pixel. Occlusion is not checked here; the depth filter handles it.
std::vector<int> find_visible_frames(const AffordanceAnnotation& annotation,
                                     const SceneSequence& scene);

double median_of(std::vector<double> values);

/// Robust residual filter: tau = max(tau_min, k * MAD); retain |r - median| < tau.
/// Returns the retained point indices, input order preserved. Empty input -> empty.
std::vector<int> depth_consistency_filter(const std::vector<std::pair<int, double>>& residuals,
                                          const DepthFilterParams& params);

/// centrality = 1 - d(mask centroid, image center) / half_diagonal;
/// proximity = min-max normalized inverse camera-to-centroid distance.
FrameScore frame_quality_score(const Mask& mask, const Frame& frame,
                               const Eigen::Vector3d& annotation_centroid_3d,
                               const SequenceStats& stats,
                               double w1 = 0.5, double w2 = 0.5);

/// The k highest scores pooled across scenes; ties broken by
/// (scene_id asc, frame_index asc). Result sorted descending.
std::vector<FrameScore> select_top_k(std::vector<FrameScore> scored, int k);

/// Rasterized convex hull (boundary inclusive) of the rounded pixel set.
/// Collinear or <= 2 distinct pixels fall back to a 1-pixel dilation.
Mask convex_hull_fill(const std::vector<std::pair<int, int>>& pixels, int width, int height);

MemoryBank build_memory_bank(const std::vector<AffordanceAnnotation>& annotations,
                             const std::map<std::string, const SceneSequence*>& scenes,
                             const DepthFilterParams& params = {},
                             int k_recall = 20, double w1 = 0.5, double w2 = 0.5);

/// Exact match on the lowercase-trimmed label; unseen category -> empty list.
const std::vector<MemoryExemplar>& recall(const MemoryBank& bank, const std::string& interaction_label);

/// Throws LeakageError if the bank was built from the given target scene.
void assert_no_leakage(const MemoryBank& bank, const std::string& target_scene_id);

// Bank on disk: bank.json plus <category>/<scene_id>_<frame_index>.png overlays
// and ..._mask.png masks.
void save_bank(const MemoryBank& bank, const std::filesystem::path& dir);
MemoryBank load_bank(const std::filesystem::path& dir);

}  // namespace ag
