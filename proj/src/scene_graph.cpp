#include "ag/scene_graph.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"
#include "ag/geometry.hpp"

namespace ag {

using json = nlohmann::ordered_json;

namespace {

constexpr double kParentDilation = 0.05;  // meters

std::string fmt4(double v) {
  char buf[32];
  // normalize negative zero so output is stable
  if (v == 0.0) v = 0.0;
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[32];
  if (v == 0.0) v = 0.0;
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

std::string vec3_json(const Eigen::Vector3d& v) {
  return "[" + fmt4(v.x()) + ", " + fmt4(v.y()) + ", " + fmt4(v.z()) + "]";
}

bool centroid_lex_less(const Candidate3D& a, const Candidate3D& b) {
  if (a.centroid.x() != b.centroid.x()) return a.centroid.x() < b.centroid.x();
  if (a.centroid.y() != b.centroid.y()) return a.centroid.y() < b.centroid.y();
  return a.centroid.z() < b.centroid.z();
}

}  // namespace

const GraphNode* SceneGraph::find(int node_id) const {
  for (const auto& n : nodes)
    if (n.node_id == node_id) return &n;
  return nullptr;
}

void SceneGraph::validate() const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].node_id != static_cast<int>(i) + 1)
      throw ValidationError("graph node ids must be contiguous 1..n");
    if (nodes[i].parent_id) {
      if (nodes[i].kind == GraphNode::Kind::CTX)
        throw ValidationError("CTX nodes never carry parents");
      const GraphNode* parent = find(*nodes[i].parent_id);
      if (!parent || parent->kind != GraphNode::Kind::CTX)
        throw ValidationError("parent_id must reference a CTX node");
    }
  }
}

SceneGraph build_graph(const CandidatePool& int_candidates, const CandidatePool& ctx_candidates,
                       const std::string& int_label, const std::optional<std::string>& ctx_label,
                       const Eigen::Vector3d& up_axis, const std::string& scene_id) {
  SceneGraph graph;
  graph.scene_id = scene_id;
  graph.up_axis = up_axis.normalized();

  std::vector<Candidate3D> ctx = ctx_candidates.candidates;
  std::vector<Candidate3D> intc = int_candidates.candidates;
  std::sort(ctx.begin(), ctx.end(), centroid_lex_less);
  std::sort(intc.begin(), intc.end(), centroid_lex_less);

  int next_id = 1;
  for (const auto& c : ctx) {
    GraphNode n;
    n.node_id = next_id++;
    n.kind = GraphNode::Kind::CTX;
    n.label = ctx_label ? lowercase_trim(*ctx_label) : std::string("object");
    n.centroid = c.centroid;
    n.aabb_min = c.aabb_min;
    n.aabb_max = c.aabb_max;
    n.point_indices = c.point_indices;
    graph.nodes.push_back(std::move(n));
  }
  const int ctx_count = next_id - 1;

  for (const auto& c : intc) {
    GraphNode n;
    n.node_id = next_id++;
    n.kind = GraphNode::Kind::INT;
    n.label = lowercase_trim(int_label);
    n.centroid = c.centroid;
    n.aabb_min = c.aabb_min;
    n.aabb_max = c.aabb_max;
    n.point_indices = c.point_indices;

    // smallest-volume dilated CTX box containing the centroid
    double best_volume = std::numeric_limits<double>::max();
    for (int i = 0; i < ctx_count; ++i) {
      const GraphNode& p = graph.nodes[static_cast<std::size_t>(i)];
      const Eigen::Vector3d lo = p.aabb_min.array() - kParentDilation;
      const Eigen::Vector3d hi = p.aabb_max.array() + kParentDilation;
      if ((n.centroid.array() >= lo.array()).all() && (n.centroid.array() <= hi.array()).all()) {
        const Eigen::Vector3d ext = p.aabb_max - p.aabb_min;
        const double vol = ext.x() * ext.y() * ext.z();
        if (vol < best_volume) {
          best_volume = vol;
          n.parent_id = p.node_id;
        }
      }
    }
    graph.nodes.push_back(std::move(n));
  }
  graph.validate();
  return graph;
}

std::string serialize_graph(const SceneGraph& graph) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"scene_id\": \"" << json_escape(graph.scene_id) << "\",\n";
  out << "  \"up_axis\": " << vec3_json(graph.up_axis) << ",\n";
  out << "  \"nodes\": [";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& n = graph.nodes[i];
    out << (i == 0 ? "\n" : ",\n");
    out << "    {\"id\": " << n.node_id
        << ", \"kind\": \"" << (n.kind == GraphNode::Kind::CTX ? "CTX" : "INT") << "\""
        << ", \"label\": \"" << json_escape(n.label) << "\""
        << ", \"centroid\": " << vec3_json(n.centroid)
        << ", \"aabb\": {\"min\": " << vec3_json(n.aabb_min)
        << ", \"max\": " << vec3_json(n.aabb_max) << "}"
        << ", \"parent\": ";
    if (n.parent_id) out << *n.parent_id;
    else out << "null";
    out << "}";
  }
  out << "\n  ]\n}\n";
  return out.str();
}

namespace {

SceneGraph graph_from_json(const json& doc) {
  SceneGraph g;
  g.scene_id = doc.at("scene_id").get<std::string>();
  auto up = doc.at("up_axis").get<std::vector<double>>();
  g.up_axis = Eigen::Vector3d(up[0], up[1], up[2]);
  for (const auto& nj : doc.at("nodes")) {
    GraphNode n;
    n.node_id = nj.at("id").get<int>();
    n.kind = nj.at("kind").get<std::string>() == "CTX" ? GraphNode::Kind::CTX : GraphNode::Kind::INT;
    n.label = nj.at("label").get<std::string>();
    auto c = nj.at("centroid").get<std::vector<double>>();
    n.centroid = Eigen::Vector3d(c[0], c[1], c[2]);
    auto mn = nj.at("aabb").at("min").get<std::vector<double>>();
    auto mx = nj.at("aabb").at("max").get<std::vector<double>>();
    n.aabb_min = Eigen::Vector3d(mn[0], mn[1], mn[2]);
    n.aabb_max = Eigen::Vector3d(mx[0], mx[1], mx[2]);
    if (nj.contains("parent") && !nj.at("parent").is_null())
      n.parent_id = nj.at("parent").get<int>();
    if (nj.contains("points")) n.point_indices = nj.at("points").get<std::vector<int>>();
    g.nodes.push_back(std::move(n));
  }
  return g;
}

}  // namespace

SceneGraph parse_graph(const std::string& json_text) {
  try {
    return graph_from_json(json::parse(json_text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("graph JSON parse error: " + std::string(e.what()));
  }
}

void persist_scene_graph(const SceneGraph& graph, const std::filesystem::path& path) {
  // Canonical schema plus a "points" array per node so the artifact
  // round-trips with its instance masks.
  json doc = json::parse(serialize_graph(graph));
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    doc["nodes"][i]["points"] = graph.nodes[i].point_indices;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write graph: " + path.string());
  out << doc.dump(2) << "\n";
}

SceneGraph load_scene_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open graph: " + path.string());
  try {
    return graph_from_json(json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("graph parse error: " + std::string(e.what()), e.byte);
  }
}

namespace {

struct MapAxes {
  Eigen::Vector3d right;
  Eigen::Vector3d front;  // toward the viewer of the map
};

MapAxes map_axes(const Eigen::Vector3d& up) {
  Eigen::Vector3d front0(0, -1, 0);
  if (up.cross(front0).norm() < 1e-6) front0 = Eigen::Vector3d(0, 0, -1);
  MapAxes a;
  a.right = up.cross(front0).normalized();
  a.front = a.right.cross(up).normalized();
  return a;
}

struct Rect {
  double x0, y0, x1, y1;
  bool overlaps(const Rect& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
};

}  // namespace

std::string render_topdown(const SceneGraph& graph, const PointCloud& cloud) {
  constexpr int kCanvas = 1024;
  constexpr double kMargin = 48.0;

  const MapAxes axes = map_axes(graph.up_axis);
  auto to_plane = [&](const Eigen::Vector3d& p) {
    return std::pair<double, double>(p.dot(axes.right), p.dot(axes.front));
  };

  double min_x = std::numeric_limits<double>::max(), max_x = std::numeric_limits<double>::lowest();
  double min_y = min_x, max_y = max_x;
  auto grow = [&](double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  for (const auto& p : cloud.points) {
    auto [x, y] = to_plane(p);
    grow(x, y);
  }
  for (const auto& n : graph.nodes) {
    for (int cx = 0; cx < 2; ++cx)
      for (int cy = 0; cy < 2; ++cy)
        for (int cz = 0; cz < 2; ++cz) {
          Eigen::Vector3d corner(cx ? n.aabb_max.x() : n.aabb_min.x(),
                                 cy ? n.aabb_max.y() : n.aabb_min.y(),
                                 cz ? n.aabb_max.z() : n.aabb_min.z());
          auto [x, y] = to_plane(corner);
          grow(x, y);
        }
  }
  if (!(max_x > min_x)) { min_x -= 0.5; max_x += 0.5; }
  if (!(max_y > min_y)) { min_y -= 0.5; max_y += 0.5; }
  const double scale = std::min((kCanvas - 2 * kMargin) / (max_x - min_x),
                                (kCanvas - 2 * kMargin) / (max_y - min_y));
  auto to_canvas = [&](double x, double y) {
    // +front points toward the bottom of the map
    return std::pair<double, double>(kMargin + (x - min_x) * scale,
                                     kMargin + (y - min_y) * scale);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\""
      << kCanvas << "\" viewBox=\"0 0 " << kCanvas << " " << kCanvas << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << kCanvas << "\" height=\"" << kCanvas
      << "\" fill=\"#ffffff\"/>\n";

  // sub-sampled cloud
  const std::size_t step = std::max<std::size_t>(1, cloud.size() / 2000);
  for (std::size_t i = 0; i < cloud.size(); i += step) {
    auto [x, y] = to_plane(cloud.points[i]);
    auto [cx, cy] = to_canvas(x, y);
    svg << "<circle cx=\"" << fmt2(cx) << "\" cy=\"" << fmt2(cy)
        << "\" r=\"1\" fill=\"#b0b0b0\"/>\n";
  }

  // node footprints
  std::vector<Rect> rects;
  rects.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) {
    double rx0 = std::numeric_limits<double>::max(), rx1 = std::numeric_limits<double>::lowest();
    double ry0 = rx0, ry1 = rx1;
    for (int cx = 0; cx < 2; ++cx)
      for (int cy = 0; cy < 2; ++cy)
        for (int cz = 0; cz < 2; ++cz) {
          Eigen::Vector3d corner(cx ? n.aabb_max.x() : n.aabb_min.x(),
                                 cy ? n.aabb_max.y() : n.aabb_min.y(),
                                 cz ? n.aabb_max.z() : n.aabb_min.z());
          auto [x, y] = to_plane(corner);
          auto [px, py] = to_canvas(x, y);
          rx0 = std::min(rx0, px);
          rx1 = std::max(rx1, px);
          ry0 = std::min(ry0, py);
          ry1 = std::max(ry1, py);
        }
    rects.push_back({rx0, ry0, rx1, ry1});
  }

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& n = graph.nodes[i];
    const Rect& r = rects[i];
    const char* color = n.kind == GraphNode::Kind::CTX ? "#1f77b4" : "#d62728";
    svg << "<rect x=\"" << fmt2(r.x0) << "\" y=\"" << fmt2(r.y0) << "\" width=\""
        << fmt2(std::max(1.0, r.x1 - r.x0)) << "\" height=\"" << fmt2(std::max(1.0, r.y1 - r.y0))
        << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";

    bool overlapping = false;
    for (std::size_t j = 0; j < rects.size(); ++j)
      if (j != i && r.overlaps(rects[j])) {
        overlapping = true;
        break;
      }

    if (!overlapping) {
      svg << "<text x=\"" << fmt2((r.x0 + r.x1) / 2) << "\" y=\"" << fmt2((r.y0 + r.y1) / 2)
          << "\" font-family=\"monospace\" font-size=\"16\" fill=\"" << color
          << "\" text-anchor=\"middle\">" << n.node_id << "</text>\n";
    } else {
      // label outside the box, with a leader line to its corner
      const double lx = r.x1 + 10.0 + 18.0 * static_cast<double>(i % 3);
      const double ly = r.y0 - 8.0 - 14.0 * static_cast<double>(i % 3);
      svg << "<line x1=\"" << fmt2(r.x1) << "\" y1=\"" << fmt2(r.y0) << "\" x2=\"" << fmt2(lx)
          << "\" y2=\"" << fmt2(ly) << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
      svg << "<text x=\"" << fmt2(lx + 2.0) << "\" y=\"" << fmt2(ly) << "\" font-family=\"monospace\""
          << " font-size=\"16\" fill=\"" << color << "\">" << n.node_id << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

Image8 render_topdown_raster(const SceneGraph& graph, const PointCloud& cloud) {
  constexpr int kCanvas = 1024;
  constexpr double kMargin = 48.0;
  constexpr int kStroke = 4;

  const MapAxes axes = map_axes(graph.up_axis);
  auto to_plane = [&](const Eigen::Vector3d& p) {
    return std::pair<double, double>(p.dot(axes.right), p.dot(axes.front));
  };

  double min_x = std::numeric_limits<double>::max(), max_x = std::numeric_limits<double>::lowest();
  double min_y = min_x, max_y = max_x;
  auto grow = [&](double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  for (const auto& p : cloud.points) {
    auto [x, y] = to_plane(p);
    grow(x, y);
  }
  for (const auto& n : graph.nodes) {
    auto [x0, y0] = to_plane(n.aabb_min);
    auto [x1, y1] = to_plane(n.aabb_max);
    grow(x0, y0);
    grow(x1, y1);
  }
  if (!(max_x > min_x)) { min_x -= 0.5; max_x += 0.5; }
  if (!(max_y > min_y)) { min_y -= 0.5; max_y += 0.5; }
  const double scale = std::min((kCanvas - 2 * kMargin) / (max_x - min_x),
                                (kCanvas - 2 * kMargin) / (max_y - min_y));

  Image8 img(kCanvas, kCanvas, 3, 255);
  auto put = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || x >= kCanvas || y < 0 || y >= kCanvas) return;
    img.at(x, y, 0) = r;
    img.at(x, y, 1) = g;
    img.at(x, y, 2) = b;
  };
  auto to_canvas = [&](double x, double y) {
    return std::pair<int, int>(static_cast<int>(std::lround(kMargin + (x - min_x) * scale)),
                               static_cast<int>(std::lround(kMargin + (y - min_y) * scale)));
  };

  const std::size_t step = std::max<std::size_t>(1, cloud.size() / 4000);
  for (std::size_t i = 0; i < cloud.size(); i += step) {
    auto [x, y] = to_plane(cloud.points[i]);
    auto [cx, cy] = to_canvas(x, y);
    put(cx, cy, 176, 176, 176);
  }

  for (const auto& n : graph.nodes) {
    const bool ctx = n.kind == GraphNode::Kind::CTX;
    const std::uint8_t r = ctx ? 31 : 214, g = ctx ? 119 : 39, b = ctx ? 180 : 40;
    double rx0 = std::numeric_limits<double>::max(), rx1 = std::numeric_limits<double>::lowest();
    double ry0 = rx0, ry1 = rx1;
    for (int cx = 0; cx < 2; ++cx)
      for (int cy = 0; cy < 2; ++cy)
        for (int cz = 0; cz < 2; ++cz) {
          Eigen::Vector3d corner(cx ? n.aabb_max.x() : n.aabb_min.x(),
                                 cy ? n.aabb_max.y() : n.aabb_min.y(),
                                 cz ? n.aabb_max.z() : n.aabb_min.z());
          auto [x, y] = to_plane(corner);
          rx0 = std::min(rx0, x);
          rx1 = std::max(rx1, x);
          ry0 = std::min(ry0, y);
          ry1 = std::max(ry1, y);
        }
    auto [px0, py0] = to_canvas(rx0, ry0);
    auto [px1, py1] = to_canvas(rx1, ry1);
    for (int s = 0; s < kStroke; ++s) {
      for (int x = px0 - s; x <= px1 + s; ++x) {
        put(x, py0 - s, r, g, b);
        put(x, py1 + s, r, g, b);
      }
      for (int y = py0 - s; y <= py1 + s; ++y) {
        put(px0 - s, y, r, g, b);
        put(px1 + s, y, r, g, b);
      }
    }
    // node id in a 3x5 digit font, scaled 3x, anchored inside the top-left corner
    static const std::uint16_t kDigits[10] = {
        0b111101101101111, 0b010110010010111, 0b111001111100111, 0b111001111001111,
        0b101101111001001, 0b111100111001111, 0b111100111101111, 0b111001001001001,
        0b111101111101111, 0b111101111001111};
    const std::string id = std::to_string(n.node_id);
    int ox = px0 + kStroke + 3;
    const int oy = py0 + kStroke + 3;
    for (char c : id) {
      const std::uint16_t glyph = kDigits[c - '0'];
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (glyph >> (14 - (row * 3 + col)) & 1)
            for (int sy = 0; sy < 3; ++sy)
              for (int sx = 0; sx < 3; ++sx) put(ox + col * 3 + sx, oy + row * 3 + sy, r, g, b);
      ox += 12;
    }
  }
  return img;
}

CropResult extract_crops(const SceneGraph& graph, const SceneSequence& scene,
                         const DepthFilterParams& params, double w1, double w2) {
  CropResult result;
  for (const auto& node : graph.nodes) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(node.point_indices.size());
    for (int idx : node.point_indices)
      pts.push_back(scene.cloud.points[static_cast<std::size_t>(idx)]);
    if (pts.empty()) {
      result.warnings.push_back("node " + std::to_string(node.node_id) + " carries no points");
      continue;
    }

    struct View {
      const Frame* frame;
      int min_x, min_y, max_x, max_y;
      Mask mask;
      Eigen::Vector3d centroid;
    };
    std::vector<View> views;
    for (const auto& frame : scene.frames) {
      auto projs = project_points(pts, frame.pose, frame.intrinsics);
      auto residuals = depth_residuals(projs, frame.depth);
      if (residuals.empty()) continue;
      auto retained = depth_consistency_filter(residuals, params);
      if (retained.empty()) continue;

      View v;
      v.frame = &frame;
      v.mask = Mask(frame.intrinsics.width, frame.intrinsics.height);
      v.min_x = frame.intrinsics.width;
      v.min_y = frame.intrinsics.height;
      v.max_x = 0;
      v.max_y = 0;
      v.centroid = Eigen::Vector3d::Zero();
      std::size_t pi = 0;
      std::size_t used = 0;
      for (int idx : retained) {
        while (pi < projs.size() && projs[pi].point_index != idx) ++pi;
        if (pi == projs.size()) break;
        const int px = std::clamp(static_cast<int>(std::lround(projs[pi].u)), 0,
                                  frame.intrinsics.width - 1);
        const int py = std::clamp(static_cast<int>(std::lround(projs[pi].v)), 0,
                                  frame.intrinsics.height - 1);
        v.mask.set(px, py);
        v.min_x = std::min(v.min_x, px);
        v.max_x = std::max(v.max_x, px);
        v.min_y = std::min(v.min_y, py);
        v.max_y = std::max(v.max_y, py);
        v.centroid += pts[static_cast<std::size_t>(idx)];
        ++used;
      }
      if (used == 0) continue;
      v.centroid /= static_cast<double>(used);
      views.push_back(std::move(v));
    }

    if (views.empty()) {
      result.warnings.push_back("node " + std::to_string(node.node_id) + " visible in no frame");
      continue;
    }

    SequenceStats stats;
    stats.min_inv_dist = std::numeric_limits<double>::max();
    stats.max_inv_dist = 0;
    for (const auto& v : views) {
      const double d = (v.frame->pose.camera_center() - v.centroid).norm();
      const double inv = d > 0 ? 1.0 / d : std::numeric_limits<double>::max();
      stats.min_inv_dist = std::min(stats.min_inv_dist, inv);
      stats.max_inv_dist = std::max(stats.max_inv_dist, inv);
    }

    const View* best = nullptr;
    double best_score = -1;
    for (const auto& v : views) {
      FrameScore fs = frame_quality_score(v.mask, *v.frame, v.centroid, stats, w1, w2);
      if (fs.score > best_score) {
        best_score = fs.score;
        best = &v;
      }
    }

    // 10% dilation per side, clamped
    const int w = best->max_x - best->min_x + 1;
    const int h = best->max_y - best->min_y + 1;
    const int dx = std::max(1, w / 10);
    const int dy = std::max(1, h / 10);
    const int x0 = std::max(0, best->min_x - dx);
    const int y0 = std::max(0, best->min_y - dy);
    const int x1 = std::min(best->frame->intrinsics.width - 1, best->max_x + dx);
    const int y1 = std::min(best->frame->intrinsics.height - 1, best->max_y + dy);

    Image8 crop(x1 - x0 + 1, y1 - y0 + 1, 3);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        for (int c = 0; c < 3; ++c)
          crop.at(x - x0, y - y0, c) = best->frame->rgb.at(x, y, c);
    result.crops.emplace(node.node_id, std::move(crop));
  }
  return result;
}

namespace {

Eigen::Vector3d direction_axis(const SpatialDescriptor::Direction d, const Eigen::Vector3d& up) {
  const MapAxes axes = map_axes(up);
  using D = SpatialDescriptor::Direction;
  switch (d) {
    case D::top: return up;
    case D::bottom: return -up;
    case D::left: return -axes.right;
    case D::right: return axes.right;
    case D::front: return axes.front;
    case D::back: return -axes.front;
  }
  return up;
}

}  // namespace

ResolveOutcome resolve_spatial(const SceneGraph& graph, const SpatialDescriptor& descriptor,
                               const std::string& int_label) {
  const std::string label = lowercase_trim(int_label);
  std::vector<const GraphNode*> matching;
  for (const auto& n : graph.nodes)
    if (n.kind == GraphNode::Kind::INT && n.label == label) matching.push_back(&n);
  if (matching.empty())
    throw ResolutionError("no INT node labeled \"" + label + "\"");

  using Kind = SpatialDescriptor::Kind;

  if (descriptor.kind == Kind::none) {
    if (matching.size() == 1) return {matching.front()->node_id, std::nullopt};
    int lowest = matching.front()->node_id;
    for (const auto* n : matching) lowest = std::min(lowest, n->node_id);
    return {lowest, "descriptor absent with " + std::to_string(matching.size()) +
                        " candidates; picked lowest node id"};
  }

  if (descriptor.kind == Kind::ordinal) {
    if (descriptor.ordinal_rank < 1) throw ContractViolation("ordinal rank must be >= 1");
    const Eigen::Vector3d axis = direction_axis(descriptor.direction, graph.up_axis.normalized());
    std::vector<const GraphNode*> sorted = matching;
    std::stable_sort(sorted.begin(), sorted.end(), [&](const GraphNode* a, const GraphNode* b) {
      const double pa = a->centroid.dot(axis);
      const double pb = b->centroid.dot(axis);
      if (pa != pb) return pa > pb;
      return a->node_id < b->node_id;
    });
    if (static_cast<std::size_t>(descriptor.ordinal_rank) > sorted.size())
      throw ResolutionError("ordinal rank " + std::to_string(descriptor.ordinal_rank) +
                            " exceeds " + std::to_string(sorted.size()) + " candidates");
    return {sorted[static_cast<std::size_t>(descriptor.ordinal_rank) - 1]->node_id, std::nullopt};
  }

  // relation / nearest need reference CTX nodes
  const std::string ref_label = lowercase_trim(descriptor.reference_label);
  std::vector<const GraphNode*> refs;
  for (const auto& n : graph.nodes)
    if (n.kind == GraphNode::Kind::CTX && n.label == ref_label) refs.push_back(&n);
  if (refs.empty())
    throw ResolutionError("referenced label \"" + ref_label + "\" absent from graph");

  auto nearest_ref_dist = [&](const GraphNode* n) {
    double best = std::numeric_limits<double>::max();
    for (const auto* r : refs) best = std::min(best, (n->centroid - r->centroid).norm());
    return best;
  };
  auto pick_nearest = [&](const std::vector<const GraphNode*>& candidates) -> ResolveOutcome {
    if (candidates.empty())
      throw ResolutionError("no candidate satisfies the spatial relation");
    const GraphNode* best = candidates.front();
    double best_dist = nearest_ref_dist(best);
    for (const auto* n : candidates) {
      const double d = nearest_ref_dist(n);
      if (d < best_dist || (d == best_dist && n->node_id < best->node_id)) {
        best = n;
        best_dist = d;
      }
    }
    return {best->node_id, std::nullopt};
  };

  if (descriptor.kind == Kind::nearest) return pick_nearest(matching);

  const MapAxes axes = map_axes(graph.up_axis.normalized());
  const Eigen::Vector3d up = graph.up_axis.normalized();
  using R = SpatialDescriptor::Relation;
  if (descriptor.relation == R::next_to) return pick_nearest(matching);

  Eigen::Vector3d axis;
  bool below_all = true;  // candidate coordinate must be below every ref, else above every ref
  switch (descriptor.relation) {
    case R::left_of: axis = axes.right; below_all = true; break;
    case R::right_of: axis = axes.right; below_all = false; break;
    case R::above: axis = up; below_all = false; break;
    case R::below: axis = up; below_all = true; break;
    case R::next_to: axis = up; break;  // handled above
  }
  double ref_extreme = below_all ? std::numeric_limits<double>::max()
                                 : std::numeric_limits<double>::lowest();
  for (const auto* r : refs) {
    const double v = r->centroid.dot(axis);
    ref_extreme = below_all ? std::min(ref_extreme, v) : std::max(ref_extreme, v);
  }
  std::vector<const GraphNode*> satisfying;
  for (const auto* n : matching) {
    const double v = n->centroid.dot(axis);
    if ((below_all && v < ref_extreme) || (!below_all && v > ref_extreme)) satisfying.push_back(n);
  }
  return pick_nearest(satisfying);
}

}  // namespace ag
