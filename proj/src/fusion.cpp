#include "ag/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"
#include "ag/geometry.hpp"

namespace ag {

using json = nlohmann::ordered_json;

void Candidate3D::recompute_geometry(const PointCloud& cloud) {
  if (point_indices.empty()) throw ContractViolation("candidate with no points");
  centroid = Eigen::Vector3d::Zero();
  aabb_min = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
  aabb_max = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
  for (int idx : point_indices) {
    const Eigen::Vector3d& p = cloud.points[static_cast<std::size_t>(idx)];
    centroid += p;
    aabb_min = aabb_min.cwiseMin(p);
    aabb_max = aabb_max.cwiseMax(p);
  }
  centroid /= static_cast<double>(point_indices.size());
}

VoteTable accumulate_votes(const PointCloud& cloud,
                           const std::vector<std::pair<const Frame*, std::vector<Mask>>>& frames_with_masks,
                           const DepthFilterParams& filter_params) {
  VoteTable votes;
  votes.n_vis.assign(cloud.size(), 0);
  votes.n_fg.assign(cloud.size(), 0);

  for (const auto& [frame, masks] : frames_with_masks) {
    for (const auto& m : masks)
      if (m.width != frame->intrinsics.width || m.height != frame->intrinsics.height)
        throw ValidationError("mask dimensions do not match frame " + std::to_string(frame->index));

    auto projs = project_points(cloud.points, frame->pose, frame->intrinsics);
    auto residuals = depth_residuals(projs, frame->depth);
    if (residuals.empty()) continue;
    auto retained = depth_consistency_filter(residuals, filter_params);

    // retained holds cloud indices; projs is ordered by point_index, so walk both.
    std::size_t pi = 0;
    for (int idx : retained) {
      while (pi < projs.size() && projs[pi].point_index != idx) ++pi;
      if (pi == projs.size()) break;
      ++votes.n_vis[static_cast<std::size_t>(idx)];
      const int px = std::clamp(static_cast<int>(std::lround(projs[pi].u)), 0,
                                frame->intrinsics.width - 1);
      const int py = std::clamp(static_cast<int>(std::lround(projs[pi].v)), 0,
                                frame->intrinsics.height - 1);
      for (const auto& m : masks)
        if (m.test(px, py)) {
          ++votes.n_fg[static_cast<std::size_t>(idx)];
          break;
        }
    }
  }
  return votes;
}

std::vector<int> threshold_foreground(const VoteTable& votes, const VotingParams& params) {
  std::vector<int> keep;
  for (std::size_t i = 0; i < votes.point_count(); ++i) {
    const int vis = votes.n_vis[i];
    const int fg = votes.n_fg[i];
    if (vis <= params.theta_vis || vis == 0) continue;
    const double stat = params.mode == VotingParams::Mode::ratio
                            ? static_cast<double>(fg) / vis
                            : wilson_lower_bound(fg, vis, params.z);
    if (stat > params.rho0) keep.push_back(static_cast<int>(i));
  }
  return keep;
}

double wilson_lower_bound(long long successes, long long trials, double z) {
  if (trials < 1) throw ContractViolation("wilson_lower_bound: trials must be >= 1");
  if (successes < 0 || successes > trials)
    throw ContractViolation("wilson_lower_bound: successes out of range");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = p + z2 / (2.0 * n);
  const double margin = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return (center - margin) / denom;
}

namespace {

struct LexLess {
  const PointCloud* cloud;
  bool operator()(int a, int b) const {
    const auto& pa = cloud->points[static_cast<std::size_t>(a)];
    const auto& pb = cloud->points[static_cast<std::size_t>(b)];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    return pa.z() < pb.z();
  }
};

// Uniform grid over the foreground points for eps-neighborhood queries.
class NeighborGrid {
 public:
  NeighborGrid(const std::vector<int>& indices, const PointCloud& cloud, double eps)
      : cloud_(cloud), eps_(eps) {
    for (int idx : indices) {
      cells_[key(cloud.points[static_cast<std::size_t>(idx)])].push_back(idx);
    }
  }

  // All foreground points within eps (inclusive), self included.
  std::vector<int> neighbors(int idx) const {
    const Eigen::Vector3d& p = cloud_.points[static_cast<std::size_t>(idx)];
    std::vector<int> out;
    const auto base = cell_of(p);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(pack(base[0] + dx, base[1] + dy, base[2] + dz));
          if (it == cells_.end()) continue;
          for (int q : it->second)
            if ((cloud_.points[static_cast<std::size_t>(q)] - p).norm() <= eps_) out.push_back(q);
        }
    return out;
  }

 private:
  std::array<long, 3> cell_of(const Eigen::Vector3d& p) const {
    return {static_cast<long>(std::floor(p.x() / eps_)),
            static_cast<long>(std::floor(p.y() / eps_)),
            static_cast<long>(std::floor(p.z() / eps_))};
  }
  static std::uint64_t pack(long x, long y, long z) {
    auto h = static_cast<std::uint64_t>(x) * 73856093ull;
    h ^= static_cast<std::uint64_t>(y) * 19349663ull;
    h ^= static_cast<std::uint64_t>(z) * 83492791ull;
    return h;
  }
  std::uint64_t key(const Eigen::Vector3d& p) const {
    auto c = cell_of(p);
    return pack(c[0], c[1], c[2]);
  }

  const PointCloud& cloud_;
  double eps_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

// (size desc, centroid lexicographic, point set lexicographic)
bool candidate_order(const Candidate3D& a, const Candidate3D& b) {
  if (a.point_indices.size() != b.point_indices.size())
    return a.point_indices.size() > b.point_indices.size();
  if (a.centroid.x() != b.centroid.x()) return a.centroid.x() < b.centroid.x();
  if (a.centroid.y() != b.centroid.y()) return a.centroid.y() < b.centroid.y();
  if (a.centroid.z() != b.centroid.z()) return a.centroid.z() < b.centroid.z();
  return a.point_indices < b.point_indices;
}

}  // namespace

std::vector<Candidate3D> cluster_candidates(const std::vector<int>& foreground_points,
                                            const PointCloud& cloud,
                                            double eps, int min_pts,
                                            const VoteTable* votes) {
  if (!(eps > 0)) throw ContractViolation("cluster_candidates: eps must be > 0");
  if (min_pts < 1) throw ContractViolation("cluster_candidates: min_pts must be >= 1");
  if (foreground_points.empty()) return {};

  NeighborGrid grid(foreground_points, cloud, eps);

  // Core points: |N_eps| >= min_pts (self included).
  std::unordered_map<int, std::vector<int>> core_neighbors;
  for (int idx : foreground_points) {
    auto nb = grid.neighbors(idx);
    if (static_cast<int>(nb.size()) >= min_pts) core_neighbors.emplace(idx, std::move(nb));
  }

  // Connected components over core points.
  std::unordered_map<int, int> cluster_of;  // core point -> cluster id
  int next_cluster = 0;
  for (int idx : foreground_points) {
    if (!core_neighbors.count(idx) || cluster_of.count(idx)) continue;
    const int cid = next_cluster++;
    std::vector<int> stack = {idx};
    cluster_of[idx] = cid;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      for (int nb : core_neighbors.at(cur)) {
        if (core_neighbors.count(nb) && !cluster_of.count(nb)) {
          cluster_of[nb] = cid;
          stack.push_back(nb);
        }
      }
    }
  }

  // Border points attach to the nearest core neighbor; ties go to the core
  // with lexicographically smallest coordinates (order-independent).
  LexLess lex{&cloud};
  std::map<int, std::vector<int>> members;  // cluster id -> point indices
  for (int idx : foreground_points) {
    auto core_it = core_neighbors.find(idx);
    if (core_it != core_neighbors.end()) {
      members[cluster_of.at(idx)].push_back(idx);
      continue;
    }
    int best_core = -1;
    double best_dist = std::numeric_limits<double>::max();
    for (int nb : grid.neighbors(idx)) {
      if (!core_neighbors.count(nb)) continue;
      const double d = (cloud.points[static_cast<std::size_t>(nb)] -
                        cloud.points[static_cast<std::size_t>(idx)]).norm();
      if (d < best_dist || (d == best_dist && (best_core < 0 || lex(nb, best_core)))) {
        best_dist = d;
        best_core = nb;
      }
    }
    if (best_core >= 0) members[cluster_of.at(best_core)].push_back(idx);
    // else noise, discarded
  }

  std::vector<Candidate3D> out;
  out.reserve(members.size());
  for (auto& [cid, idxs] : members) {
    Candidate3D c;
    std::sort(idxs.begin(), idxs.end());
    c.point_indices = std::move(idxs);
    c.recompute_geometry(cloud);
    if (votes) {
      for (int idx : c.point_indices)
        c.support = std::max(c.support, votes->n_fg[static_cast<std::size_t>(idx)]);
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), candidate_order);
  return out;
}

double point_set_iou(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else { ++inter; ++i; ++j; }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double point_set_min_recall(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else { ++inter; ++i; ++j; }
  }
  return static_cast<double>(inter) / static_cast<double>(std::min(a.size(), b.size()));
}

CandidatePool merge_candidates(std::vector<Candidate3D> pool, const PointCloud& cloud,
                               double theta_iou, double theta_rec) {
  if (!(theta_iou > 0 && theta_iou < 1) || !(theta_rec > 0 && theta_rec < 1))
    throw ContractViolation("merge_candidates: thresholds must lie in (0,1)");

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < pool.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < pool.size() && !changed; ++j) {
        const double iou = point_set_iou(pool[i].point_indices, pool[j].point_indices);
        const double rec = point_set_min_recall(pool[i].point_indices, pool[j].point_indices);
        if (iou > theta_iou || rec > theta_rec) {
          std::vector<int> merged;
          std::set_union(pool[i].point_indices.begin(), pool[i].point_indices.end(),
                         pool[j].point_indices.begin(), pool[j].point_indices.end(),
                         std::back_inserter(merged));
          pool[i].point_indices = std::move(merged);
          pool[i].support = std::max(pool[i].support, pool[j].support);
          pool[i].recompute_geometry(cloud);
          pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
          changed = true;  // candidate count strictly decreases; loop terminates
        }
      }
    }
  }

  std::sort(pool.begin(), pool.end(), candidate_order);

  CandidatePool out;
  out.candidates = std::move(pool);
  out.theta_iou = theta_iou;
  out.theta_rec = theta_rec;
  return out;
}

void persist_candidate_pool(const CandidatePool& pool, const std::filesystem::path& path) {
  json doc;
  doc["params"] = {
      {"rho0", pool.params.rho0},
      {"theta_vis", pool.params.theta_vis},
      {"mode", pool.params.mode == VotingParams::Mode::ratio ? "ratio" : "wilson"},
      {"z", pool.params.z},
      {"dbscan_eps", pool.dbscan_eps},
      {"dbscan_min_pts", pool.dbscan_min_pts},
      {"theta_iou", pool.theta_iou},
      {"theta_rec", pool.theta_rec},
  };
  doc["candidates"] = json::array();
  for (const auto& c : pool.candidates) {
    json cj;
    cj["point_indices"] = c.point_indices;
    cj["centroid"] = {c.centroid.x(), c.centroid.y(), c.centroid.z()};
    cj["aabb"] = {{"min", {c.aabb_min.x(), c.aabb_min.y(), c.aabb_min.z()}},
                  {"max", {c.aabb_max.x(), c.aabb_max.y(), c.aabb_max.z()}}};
    cj["support"] = c.support;
    doc["candidates"].push_back(std::move(cj));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write candidate pool: " + path.string());
  out << doc.dump(2) << "\n";
}

CandidatePool load_candidate_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open candidate pool: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("candidate pool parse error: " + std::string(e.what()), e.byte);
  }

  CandidatePool pool;
  const auto& pj = doc.at("params");
  pool.params.rho0 = pj.at("rho0").get<double>();
  pool.params.theta_vis = pj.at("theta_vis").get<int>();
  pool.params.mode = pj.at("mode").get<std::string>() == "wilson" ? VotingParams::Mode::wilson
                                                                  : VotingParams::Mode::ratio;
  pool.params.z = pj.at("z").get<double>();
  pool.dbscan_eps = pj.at("dbscan_eps").get<double>();
  pool.dbscan_min_pts = pj.at("dbscan_min_pts").get<int>();
  pool.theta_iou = pj.at("theta_iou").get<double>();
  pool.theta_rec = pj.at("theta_rec").get<double>();

  for (const auto& cj : doc.at("candidates")) {
    Candidate3D c;
    c.point_indices = cj.at("point_indices").get<std::vector<int>>();
    auto cen = cj.at("centroid").get<std::vector<double>>();
    c.centroid = Eigen::Vector3d(cen[0], cen[1], cen[2]);
    auto mn = cj.at("aabb").at("min").get<std::vector<double>>();
    auto mx = cj.at("aabb").at("max").get<std::vector<double>>();
    c.aabb_min = Eigen::Vector3d(mn[0], mn[1], mn[2]);
    c.aabb_max = Eigen::Vector3d(mx[0], mx[1], mx[2]);
    c.support = cj.at("support").get<int>();
    pool.candidates.push_back(std::move(c));
  }
  return pool;
}

}  // namespace ag
