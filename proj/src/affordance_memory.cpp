#include "ag/affordance_memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"

namespace ag {

using json = nlohmann::ordered_json;

std::vector<int> find_visible_frames(const AffordanceAnnotation& annotation,
                                     const SceneSequence& scene) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(annotation.point_indices.size());
  for (int idx : annotation.point_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= scene.cloud.size())
      throw ValidationError("annotation index " + std::to_string(idx) + " out of range for scene " +
                            scene.scene_id);
    pts.push_back(scene.cloud.points[static_cast<std::size_t>(idx)]);
  }

  std::vector<int> visible;
  for (const auto& frame : scene.frames) {
    auto projs = project_points(pts, frame.pose, frame.intrinsics);
    if (!depth_residuals(projs, frame.depth).empty()) visible.push_back(frame.index);
  }
  return visible;
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw ContractViolation("median of empty list");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double hi = values[mid];
  if (n % 2 == 1) return hi;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid - 1),
                   values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (values[mid - 1] + hi) / 2.0;
}

std::vector<int> depth_consistency_filter(const std::vector<std::pair<int, double>>& residuals,
                                          const DepthFilterParams& params) {
  if (residuals.empty()) return {};
  std::vector<double> r;
  r.reserve(residuals.size());
  for (const auto& [idx, v] : residuals) r.push_back(v);
  const double mu = median_of(r);
  std::vector<double> dev;
  dev.reserve(r.size());
  for (double v : r) dev.push_back(std::abs(v - mu));
  const double mad = median_of(std::move(dev));
  const double tau = std::max(params.tau_min, params.k * mad);

  std::vector<int> retained;
  retained.reserve(residuals.size());
  for (const auto& [idx, v] : residuals)
    if (std::abs(v - mu) < tau) retained.push_back(idx);
  return retained;
}

FrameScore frame_quality_score(const Mask& mask, const Frame& frame,
                               const Eigen::Vector3d& annotation_centroid_3d,
                               const SequenceStats& stats,
                               double w1, double w2) {
  if (mask.empty_mask()) throw ContractViolation("frame_quality_score: empty mask");

  double sum_x = 0, sum_y = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.test(x, y)) {
        sum_x += x;
        sum_y += y;
        ++n;
      }
  const double cx_mask = sum_x / static_cast<double>(n);
  const double cy_mask = sum_y / static_cast<double>(n);
  const double cx_img = frame.intrinsics.width / 2.0;
  const double cy_img = frame.intrinsics.height / 2.0;
  const double half_diag = 0.5 * std::hypot(static_cast<double>(frame.intrinsics.width),
                                            static_cast<double>(frame.intrinsics.height));
  double centrality = 1.0 - std::hypot(cx_mask - cx_img, cy_mask - cy_img) / half_diag;
  centrality = std::clamp(centrality, 0.0, 1.0);

  const double dist = (frame.pose.camera_center() - annotation_centroid_3d).norm();
  const double inv = dist > 0 ? 1.0 / dist : std::numeric_limits<double>::max();
  double proximity;
  if (stats.max_inv_dist > stats.min_inv_dist)
    proximity = (inv - stats.min_inv_dist) / (stats.max_inv_dist - stats.min_inv_dist);
  else
    proximity = 1.0;  // single frame or equal distances: every frame is the nearest
  proximity = std::clamp(proximity, 0.0, 1.0);

  FrameScore s;
  s.frame_index = frame.index;
  s.centrality = centrality;
  s.proximity = proximity;
  s.score = std::clamp(w1 * centrality + w2 * proximity, 0.0, 1.0);
  return s;
}

namespace {

bool score_order(const FrameScore& a, const FrameScore& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
  return a.frame_index < b.frame_index;
}

}  // namespace

std::vector<FrameScore> select_top_k(std::vector<FrameScore> scored, int k) {
  if (k < 1) throw ContractViolation("select_top_k: k must be >= 1");
  std::sort(scored.begin(), scored.end(), score_order);
  if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

namespace {

// cross product (b-a) x (c-a), exact in 64-bit for pixel coordinates
long long cross_ll(const std::pair<int, int>& a, const std::pair<int, int>& b,
                   const std::pair<int, int>& c) {
  return static_cast<long long>(b.first - a.first) * (c.second - a.second) -
         static_cast<long long>(b.second - a.second) * (c.first - a.first);
}

// Andrew monotone chain; returns CCW hull without repeated endpoint.
std::vector<std::pair<int, int>> convex_hull(std::vector<std::pair<int, int>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<std::pair<int, int>> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross_ll(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross_ll(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

Mask convex_hull_fill(const std::vector<std::pair<int, int>>& pixels, int width, int height) {
  if (pixels.empty()) throw ContractViolation("convex_hull_fill: no pixels");
  Mask mask(width, height);

  auto hull = convex_hull(pixels);
  if (hull.size() < 3) {
    // Degenerate hull: dilate the pixel set by one (3x3 neighborhood).
    for (const auto& [px, py] : pixels)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = px + dx, y = py + dy;
          if (x >= 0 && x < width && y >= 0 && y < height) mask.set(x, y);
        }
    return mask;
  }

  int min_x = width - 1, max_x = 0, min_y = height - 1, max_y = 0;
  for (const auto& [px, py] : hull) {
    min_x = std::min(min_x, px);
    max_x = std::max(max_x, px);
    min_y = std::min(min_y, py);
    max_y = std::max(max_y, py);
  }
  min_x = std::max(min_x, 0);
  min_y = std::max(min_y, 0);
  max_x = std::min(max_x, width - 1);
  max_y = std::min(max_y, height - 1);

  // Boundary-inclusive point-in-convex-polygon test, exact integer arithmetic.
  for (int y = min_y; y <= max_y; ++y)
    for (int x = min_x; x <= max_x; ++x) {
      bool inside = true;
      for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        if (cross_ll(a, b, {x, y}) < 0) {
          inside = false;
          break;
        }
      }
      if (inside) mask.set(x, y);
    }
  return mask;
}

namespace {

struct ScoredFrame {
  FrameScore score;
  const Frame* frame = nullptr;
  Mask mask;
};

Image8 render_overlay(const Image8& rgb, const Mask& mask) {
  Image8 out = rgb;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.test(x, y)) {
        // pure green at alpha 0.5
        out.at(x, y, 0) = static_cast<std::uint8_t>(out.at(x, y, 0) / 2);
        out.at(x, y, 1) = static_cast<std::uint8_t>((out.at(x, y, 1) + 255) / 2);
        out.at(x, y, 2) = static_cast<std::uint8_t>(out.at(x, y, 2) / 2);
      }
  return out;
}

}  // namespace

MemoryBank build_memory_bank(const std::vector<AffordanceAnnotation>& annotations,
                             const std::map<std::string, const SceneSequence*>& scenes,
                             const DepthFilterParams& params,
                             int k_recall, double w1, double w2) {
  if (k_recall < 1) throw ContractViolation("build_memory_bank: k_recall must be >= 1");
  MemoryBank bank;
  bank.k_recall = k_recall;
  bank.params = params;
  bank.w1 = w1;
  bank.w2 = w2;
  for (const auto& [id, seq] : scenes) bank.source_scene_ids.insert(id);

  // category -> surviving frames across all source scenes
  std::map<std::string, std::vector<ScoredFrame>> per_category;

  for (const auto& annotation : annotations) {
    auto it = scenes.find(annotation.scene_id);
    if (it == scenes.end())
      throw ValidationError("annotation references unknown scene " + annotation.scene_id);
    const SceneSequence& scene = *it->second;

    std::vector<Eigen::Vector3d> pts;
    pts.reserve(annotation.point_indices.size());
    for (int idx : annotation.point_indices) pts.push_back(scene.cloud.points[static_cast<std::size_t>(idx)]);

    // One pass per frame: project, filter, mask, filtered 3D centroid.
    struct Survivor {
      const Frame* frame;
      Mask mask;
      Eigen::Vector3d centroid;
    };
    std::vector<Survivor> survivors;
    for (const auto& frame : scene.frames) {
      auto projs = project_points(pts, frame.pose, frame.intrinsics);
      auto residuals = depth_residuals(projs, frame.depth);
      if (residuals.empty()) continue;
      auto retained = depth_consistency_filter(residuals, params);
      if (retained.empty()) continue;

      std::vector<std::pair<int, int>> pix;
      pix.reserve(retained.size());
      Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
      // retained indices refer to positions in pts; projs is ordered by point_index
      std::size_t pi = 0;
      for (int idx : retained) {
        while (pi < projs.size() && projs[pi].point_index != idx) ++pi;
        if (pi == projs.size()) break;
        pix.emplace_back(static_cast<int>(std::lround(projs[pi].u)),
                         static_cast<int>(std::lround(projs[pi].v)));
        centroid += pts[static_cast<std::size_t>(idx)];
      }
      if (pix.empty()) continue;
      centroid /= static_cast<double>(pix.size());

      survivors.push_back({&frame,
                           convex_hull_fill(pix, frame.intrinsics.width, frame.intrinsics.height),
                           centroid});
    }
    if (survivors.empty()) continue;

    SequenceStats stats;
    stats.min_inv_dist = std::numeric_limits<double>::max();
    stats.max_inv_dist = 0;
    for (const auto& s : survivors) {
      const double dist = (s.frame->pose.camera_center() - s.centroid).norm();
      const double inv = dist > 0 ? 1.0 / dist : std::numeric_limits<double>::max();
      stats.min_inv_dist = std::min(stats.min_inv_dist, inv);
      stats.max_inv_dist = std::max(stats.max_inv_dist, inv);
    }

    for (auto& s : survivors) {
      FrameScore fs = frame_quality_score(s.mask, *s.frame, s.centroid, stats, w1, w2);
      fs.scene_id = annotation.scene_id;

      ScoredFrame sf;
      sf.score = fs;
      sf.frame = s.frame;
      sf.mask = std::move(s.mask);
      per_category[annotation.category].push_back(std::move(sf));
    }
  }

  for (auto& [category, frames] : per_category) {
    std::vector<FrameScore> scores;
    scores.reserve(frames.size());
    for (const auto& f : frames) scores.push_back(f.score);
    auto top = select_top_k(std::move(scores), k_recall);

    std::vector<MemoryExemplar> exemplars;
    exemplars.reserve(top.size());
    for (const auto& fs : top) {
      auto match = std::find_if(frames.begin(), frames.end(), [&](const ScoredFrame& f) {
        return f.score.scene_id == fs.scene_id && f.score.frame_index == fs.frame_index;
      });
      MemoryExemplar ex;
      ex.category = category;
      ex.scene_id = fs.scene_id;
      ex.frame_index = fs.frame_index;
      ex.mask = match->mask;
      ex.overlay = render_overlay(match->frame->rgb, match->mask);
      ex.score = fs;
      exemplars.push_back(std::move(ex));
    }
    bank.entries[category] = std::move(exemplars);
  }
  return bank;
}

const std::vector<MemoryExemplar>& recall(const MemoryBank& bank, const std::string& interaction_label) {
  static const std::vector<MemoryExemplar> kEmpty;
  if (interaction_label.empty()) throw ContractViolation("recall: empty label");
  auto it = bank.entries.find(lowercase_trim(interaction_label));
  return it == bank.entries.end() ? kEmpty : it->second;
}

void assert_no_leakage(const MemoryBank& bank, const std::string& target_scene_id) {
  if (bank.source_scene_ids.count(target_scene_id))
    throw LeakageError("memory bank was built from target scene \"" + target_scene_id +
                       "\"; refusing to run");
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json doc;
  doc["k_recall"] = bank.k_recall;
  doc["params"] = {{"k", bank.params.k}, {"tau_min", bank.params.tau_min}};
  doc["weights"] = {{"w1", bank.w1}, {"w2", bank.w2}};
  doc["source_scene_ids"] = bank.source_scene_ids;
  doc["categories"] = json::object();

  for (const auto& [category, exemplars] : bank.entries) {
    std::filesystem::create_directories(dir / category);
    json list = json::array();
    for (const auto& ex : exemplars) {
      const std::string stem = ex.scene_id + "_" + std::to_string(ex.frame_index);
      const std::string overlay_rel = category + "/" + stem + ".png";
      const std::string mask_rel = category + "/" + stem + "_mask.png";
      write_png_rgb8(dir / overlay_rel, ex.overlay);
      write_png_mask(dir / mask_rel, ex.mask);
      json e;
      e["scene_id"] = ex.scene_id;
      e["frame_index"] = ex.frame_index;
      e["centrality"] = ex.score.centrality;
      e["proximity"] = ex.score.proximity;
      e["score"] = ex.score.score;
      e["overlay"] = overlay_rel;
      e["mask"] = mask_rel;
      list.push_back(std::move(e));
    }
    doc["categories"][category] = std::move(list);
  }
  std::ofstream out(dir / "bank.json", std::ios::trunc);
  out << doc.dump(2) << "\n";
}

MemoryBank load_bank(const std::filesystem::path& dir) {
  std::ifstream in(dir / "bank.json");
  if (!in) throw IngestionError("missing bank manifest: " + (dir / "bank.json").string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("bank.json parse error: " + std::string(e.what()), e.byte);
  }

  MemoryBank bank;
  bank.k_recall = doc.at("k_recall").get<int>();
  bank.params.k = doc.at("params").at("k").get<double>();
  bank.params.tau_min = doc.at("params").at("tau_min").get<double>();
  bank.w1 = doc.at("weights").at("w1").get<double>();
  bank.w2 = doc.at("weights").at("w2").get<double>();
  for (const auto& s : doc.at("source_scene_ids")) bank.source_scene_ids.insert(s.get<std::string>());

  for (auto it = doc.at("categories").begin(); it != doc.at("categories").end(); ++it) {
    std::vector<MemoryExemplar> exemplars;
    for (const auto& e : it.value()) {
      MemoryExemplar ex;
      ex.category = it.key();
      ex.scene_id = e.at("scene_id").get<std::string>();
      ex.frame_index = e.at("frame_index").get<int>();
      ex.score.scene_id = ex.scene_id;
      ex.score.frame_index = ex.frame_index;
      ex.score.centrality = e.at("centrality").get<double>();
      ex.score.proximity = e.at("proximity").get<double>();
      ex.score.score = e.at("score").get<double>();
      ex.overlay = read_png_rgb8(dir / e.at("overlay").get<std::string>());
      ex.mask = read_png_mask(dir / e.at("mask").get<std::string>());
      exemplars.push_back(std::move(ex));
    }
    bank.entries[it.key()] = std::move(exemplars);
  }
  return bank;
}

}  // namespace ag
