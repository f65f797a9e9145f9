#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ag/affordance_memory.hpp"
#include "ag/scene_io.hpp"

namespace ag {

struct VoteTable {
  std::vector<int> n_vis;  // per-point visibility counts
  std::vector<int> n_fg;   // per-point foreground support counts
  std::size_t point_count() const { return n_vis.size(); }
};

struct VotingParams {
  enum class Mode { ratio, wilson };
  double rho0 = 0.70;
  int theta_vis = 3;
  Mode mode = Mode::ratio;
  double z = 1.96;  // wilson mode only
};

struct Candidate3D {
  std::vector<int> point_indices;  // sorted ascending, indices into the scene cloud
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_max = Eigen::Vector3d::Zero();
  int support = 0;  // frames contributing foreground evidence (max n_fg over members)

  void recompute_geometry(const PointCloud& cloud);
};

struct CandidatePool {
  std::vector<Candidate3D> candidates;
  VotingParams params;
  double dbscan_eps = 0.03;
  int dbscan_min_pts = 5;
  double theta_iou = 0.30;
  double theta_rec = 0.60;
};

/// Per frame: project every cloud point, gate visibility by the same robust
/// depth-consistency filter (per-frame statistics over all projected points),
/// then count mask membership. Order of frames does not affect the result.
VoteTable accumulate_votes(const PointCloud& cloud,
                           const std::vector<std::pair<const Frame*, std::vector<Mask>>>& frames_with_masks,
                           const DepthFilterParams& filter_params = {});

/// ratio mode: keep i iff n_fg/n_vis > rho0 and n_vis > theta_vis (strict).
/// wilson mode: the ratio is replaced by the Wilson lower bound.
std::vector<int> threshold_foreground(const VoteTable& votes, const VotingParams& params);

/// Lower bound of the Wilson score interval for a binomial proportion.
double wilson_lower_bound(long long successes, long long trials, double z);

/// DBSCAN over 3D Euclidean distance (dist <= eps, neighborhoods include the
/// point itself). Border points join the cluster of their nearest core
/// neighbor, ties broken by lexicographically smallest core coordinates, so
/// the partition is independent of input order. Noise is discarded.
/// Output sorted by (size desc, centroid lexicographic).
std::vector<Candidate3D> cluster_candidates(const std::vector<int>& foreground_points,
                                            const PointCloud& cloud,
                                            double eps, int min_pts,
                                            const VoteTable* votes = nullptr);

/// Iteratively unions candidates while point-set IoU > theta_iou or
/// min-recall |A∩B|/min(|A|,|B|) > theta_rec, to a fixed point.
CandidatePool merge_candidates(std::vector<Candidate3D> pool, const PointCloud& cloud,
                               double theta_iou, double theta_rec);

// JSON persistence; deterministic byte output.
void persist_candidate_pool(const CandidatePool& pool, const std::filesystem::path& path);
CandidatePool load_candidate_pool(const std::filesystem::path& path);

double point_set_iou(const std::vector<int>& a, const std::vector<int>& b);  // sorted inputs
double point_set_min_recall(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace ag
