#include "ag/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"

namespace ag {

using json = nlohmann::ordered_json;

std::string synthetic_scene_id(std::uint64_t seed) {
  return "synth-" + std::to_string(seed);
}

std::optional<double> ray_aabb_depth(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                     const Aabb& box) {
  double tnear = 1e-9;
  double tfar = std::numeric_limits<double>::max();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir[i]) < 1e-12) {
      if (origin[i] < box.lo[i] || origin[i] > box.hi[i]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[i];
    double t0 = (box.lo[i] - origin[i]) * inv;
    double t1 = (box.hi[i] - origin[i]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    tnear = std::max(tnear, t0);
    tfar = std::min(tfar, t1);
    if (tnear > tfar) return std::nullopt;
  }
  return tnear;
}

namespace {

struct Body {
  int instance_id;
  Aabb box;
};

const char* ordinal_word(int rank) {
  static const char* words[] = {"first", "second", "third", "fourth", "fifth",
                                "sixth", "seventh", "eighth", "ninth", "tenth"};
  return rank >= 1 && rank <= 10 ? words[rank - 1] : "first";
}

std::array<std::uint8_t, 3> instance_color(const std::string& label, int id) {
  std::array<std::uint8_t, 3> base{90, 100, 110};
  if (label == "cabinet") base = {115, 115, 122};
  else if (label == "drawer") base = {165, 125, 85};
  else if (label == "handle") base = {205, 65, 60};
  const int shift = (id % 5) * 6;
  for (auto& c : base) c = static_cast<std::uint8_t>(std::min(255, c + shift));
  return base;
}

// Jittered-grid samples over one axis-aligned rectangle of a box face.
// axis_fixed: which coordinate is constant; at_hi: which side of the box.
void sample_face(const Aabb& box, int axis_fixed, bool at_hi, double spacing,
                 SplitMix64& rng, std::vector<Eigen::Vector3d>& out) {
  const int a = (axis_fixed + 1) % 3;
  const int b = (axis_fixed + 2) % 3;
  const double len_a = box.hi[a] - box.lo[a];
  const double len_b = box.hi[b] - box.lo[b];
  const int na = std::max(1, static_cast<int>(std::lround(len_a / spacing)));
  const int nb = std::max(1, static_cast<int>(std::lround(len_b / spacing)));
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      Eigen::Vector3d p;
      p[axis_fixed] = at_hi ? box.hi[axis_fixed] : box.lo[axis_fixed];
      p[a] = box.lo[a] + (i + rng.uniform(0.3, 0.7)) * len_a / na;
      p[b] = box.lo[b] + (j + rng.uniform(0.3, 0.7)) * len_b / nb;
      out.push_back(p);
    }
}

Pose look_at_pose(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d down(0, 0, -1);
  Eigen::Vector3d x = down.cross(forward);
  if (x.norm() < 1e-9) x = Eigen::Vector3d(1, 0, 0);
  x.normalize();
  const Eigen::Vector3d y = forward.cross(x);
  Pose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

float snap_f32(double v) { return static_cast<float>(v); }

}  // namespace

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
  if (spec.cabinets.empty()) throw ValidationError("synthetic spec: at least one cabinet");
  if (spec.frame_count < 1) throw ValidationError("synthetic spec: frame_count must be >= 1");
  if (spec.image_width < 8 || spec.image_height < 8)
    throw ValidationError("synthetic spec: image too small");
  if (!(spec.cloud_spacing > 0)) throw ValidationError("synthetic spec: cloud_spacing must be > 0");

  SyntheticScene out;
  out.scene.scene_id = synthetic_scene_id(spec.seed);

  // ---- instances ----------------------------------------------------------
  std::vector<SceneInstance> instances;
  int next_id = 1;
  for (const auto& cab : spec.cabinets) {
    SceneInstance body;
    body.id = next_id++;
    body.label = "cabinet";
    body.box.lo = cab.center - cab.size / 2;
    body.box.hi = cab.center + cab.size / 2;
    const int cabinet_id = body.id;
    instances.push_back(body);

    if (cab.drawer_count < 0) throw ValidationError("synthetic spec: negative drawer count");
    const double front_y = body.box.lo.y();
    const double usable = cab.size.z() - (cab.drawer_count + 1) * cab.drawer_gap;
    if (cab.drawer_count > 0 && usable <= 0)
      throw ValidationError("synthetic spec: drawers do not fit the cabinet");
    const double drawer_h = cab.drawer_count > 0 ? usable / cab.drawer_count : 0;
    const double drawer_w = cab.size.x() * 0.86;

    for (int d = 0; d < cab.drawer_count; ++d) {
      const double z0 = body.box.lo.z() + cab.drawer_gap + d * (drawer_h + cab.drawer_gap);
      SceneInstance drawer;
      drawer.id = next_id++;
      drawer.label = "drawer";
      drawer.parent_id = cabinet_id;
      drawer.box.lo = Eigen::Vector3d(cab.center.x() - drawer_w / 2, front_y - cab.drawer_protrusion, z0);
      drawer.box.hi = Eigen::Vector3d(cab.center.x() + drawer_w / 2, front_y, z0 + drawer_h);
      const int drawer_id = drawer.id;
      instances.push_back(drawer);

      SceneInstance handle;
      handle.id = next_id++;
      handle.label = "handle";
      handle.parent_id = drawer_id;
      const double hy1 = front_y - cab.drawer_protrusion;
      const double zc = z0 + drawer_h / 2;
      handle.box.lo = Eigen::Vector3d(cab.center.x() - cab.handle_size.x() / 2,
                                      hy1 - cab.handle_size.y(),
                                      zc - cab.handle_size.z() / 2);
      handle.box.hi = Eigen::Vector3d(cab.center.x() + cab.handle_size.x() / 2,
                                      hy1,
                                      zc + cab.handle_size.z() / 2);
      instances.push_back(handle);
    }
  }
  if (spec.occluder) {
    SceneInstance occ;
    occ.id = next_id++;
    occ.label = "occluder";
    occ.box = *spec.occluder;
    instances.push_back(occ);
  }

  // handles must be pairwise disjoint
  for (std::size_t i = 0; i < instances.size(); ++i)
    for (std::size_t j = i + 1; j < instances.size(); ++j)
      if (instances[i].label == "handle" && instances[j].label == "handle" &&
          instances[i].box.intersects(instances[j].box))
        throw ValidationError("synthetic spec: handles overlap");

  // ---- cloud ---------------------------------------------------------------
  // Faces: cabinets expose every side but the bottom; drawers only their
  // front; handles their grip surface plus the two vertical side faces (the
  // top/bottom faces of stacked handles are rarely observed from an orbit and
  // would never accumulate votes); occluders their vertical sides and top.
  PointCloud cloud;
  for (auto& inst : instances) {
    std::vector<Eigen::Vector3d> pts;
    SplitMix64 rng(fnv1a64(inst.label, spec.seed * 0x9e3779b9u + static_cast<std::uint64_t>(inst.id)));
    if (inst.label == "cabinet") {
      sample_face(inst.box, 1, false, spec.cloud_spacing, rng, pts);  // front (-y)
      sample_face(inst.box, 1, true, spec.cloud_spacing, rng, pts);   // back
      sample_face(inst.box, 0, false, spec.cloud_spacing, rng, pts);  // left
      sample_face(inst.box, 0, true, spec.cloud_spacing, rng, pts);   // right
      sample_face(inst.box, 2, true, spec.cloud_spacing, rng, pts);   // top
    } else if (inst.label == "drawer") {
      sample_face(inst.box, 1, false, spec.cloud_spacing, rng, pts);  // front (-y)
    } else if (inst.label == "handle") {
      sample_face(inst.box, 1, false, spec.cloud_spacing, rng, pts);  // grip front
      sample_face(inst.box, 0, false, spec.cloud_spacing, rng, pts);  // left side
      sample_face(inst.box, 0, true, spec.cloud_spacing, rng, pts);   // right side
    } else {  // occluder
      sample_face(inst.box, 1, false, spec.cloud_spacing, rng, pts);
      sample_face(inst.box, 1, true, spec.cloud_spacing, rng, pts);
      sample_face(inst.box, 0, false, spec.cloud_spacing, rng, pts);
      sample_face(inst.box, 0, true, spec.cloud_spacing, rng, pts);
      sample_face(inst.box, 2, true, spec.cloud_spacing, rng, pts);
    }
    const auto color = instance_color(inst.label, inst.id);
    for (const auto& p : pts) {
      inst.point_indices.push_back(static_cast<int>(cloud.points.size()));
      // snap to float32 so the in-memory cloud equals the PLY round trip
      cloud.points.emplace_back(snap_f32(p.x()), snap_f32(p.y()), snap_f32(p.z()));
      cloud.colors.push_back(color);
    }
  }
  out.scene.cloud = std::move(cloud);

  // ---- cameras + analytic render -------------------------------------------
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  for (const auto& cab : spec.cabinets) target += cab.center;
  target /= static_cast<double>(spec.cabinets.size());

  std::vector<Body> bodies;
  for (const auto& inst : instances) bodies.push_back({inst.id, inst.box});

  const double arc = spec.arc_degrees * M_PI / 180.0;
  for (int t = 0; t < spec.frame_count; ++t) {
    const double theta = spec.frame_count > 1
                             ? -arc / 2 + arc * t / (spec.frame_count - 1)
                             : 0.0;
    const Eigen::Vector3d eye = target + Eigen::Vector3d(spec.orbit_radius * std::sin(theta),
                                                         -spec.orbit_radius * std::cos(theta),
                                                         spec.orbit_height - target.z());

    Frame frame;
    frame.index = t;
    frame.intrinsics.fx = frame.intrinsics.fy = spec.focal;
    frame.intrinsics.cx = spec.image_width / 2.0;
    frame.intrinsics.cy = spec.image_height / 2.0;
    frame.intrinsics.width = spec.image_width;
    frame.intrinsics.height = spec.image_height;
    frame.pose = look_at_pose(eye, target);
    frame.rgb = Image8(spec.image_width, spec.image_height, 3);
    frame.depth = DepthMap(spec.image_width, spec.image_height, 0.f);

    for (int py = 0; py < spec.image_height; ++py) {
      for (int px = 0; px < spec.image_width; ++px) {
        const Eigen::Vector3d dir_cam((px - frame.intrinsics.cx) / frame.intrinsics.fx,
                                      (py - frame.intrinsics.cy) / frame.intrinsics.fy, 1.0);
        const Eigen::Vector3d dir = frame.pose.rotation * dir_cam;
        double best = std::numeric_limits<double>::max();
        int hit_id = -1;
        for (const auto& b : bodies) {
          auto d = ray_aabb_depth(eye, dir, b.box);
          if (d && *d < best) {
            best = *d;
            hit_id = b.instance_id;
          }
        }
        if (hit_id >= 0) {
          frame.depth.at(px, py) = snap_f32(best);
          const auto& inst = instances[static_cast<std::size_t>(hit_id - 1)];
          const auto color = instance_color(inst.label, inst.id);
          frame.rgb.at(px, py, 0) = color[0];
          frame.rgb.at(px, py, 1) = color[1];
          frame.rgb.at(px, py, 2) = color[2];
        } else {
          frame.rgb.at(px, py, 0) = 25;
          frame.rgb.at(px, py, 1) = 26;
          frame.rgb.at(px, py, 2) = 30;
        }
      }
    }
    out.scene.frames.push_back(std::move(frame));
  }

  // ---- annotations ----------------------------------------------------------
  std::map<std::string, AffordanceAnnotation> per_category;
  for (const auto& inst : instances) {
    if (inst.label != "handle") continue;
    auto& a = per_category[inst.label];
    a.category = inst.label;
    a.scene_id = out.scene.scene_id;
    a.point_indices.insert(a.point_indices.end(), inst.point_indices.begin(),
                           inst.point_indices.end());
  }
  for (auto& [cat, a] : per_category) {
    std::sort(a.point_indices.begin(), a.point_indices.end());
    out.annotations.push_back(a);
  }

  // ---- queries ---------------------------------------------------------------
  std::vector<const SceneInstance*> handles;
  for (const auto& inst : instances)
    if (inst.label == "handle") handles.push_back(&inst);
  auto handle_center = [](const SceneInstance* h) {
    return (h->box.lo + h->box.hi) / 2;
  };

  if (!handles.empty()) {
    std::vector<const SceneInstance*> by_top = handles;
    std::sort(by_top.begin(), by_top.end(), [&](const SceneInstance* a, const SceneInstance* b) {
      return handle_center(a).z() > handle_center(b).z();
    });
    for (std::size_t k = 0; k < by_top.size() && k < 10; ++k) {
      SyntheticQuery q;
      q.query_id = out.scene.scene_id + "/top-" + std::to_string(k + 1);
      q.text = "the handle of the " + std::string(ordinal_word(static_cast<int>(k + 1))) +
               " drawer from the top";
      q.gt_indices = by_top[k]->point_indices;
      std::sort(q.gt_indices.begin(), q.gt_indices.end());
      out.queries.push_back(std::move(q));
    }
    for (std::size_t k = 0; k < by_top.size() && k < 10; ++k) {
      SyntheticQuery q;
      q.query_id = out.scene.scene_id + "/bottom-" + std::to_string(k + 1);
      q.text = "the handle of the " + std::string(ordinal_word(static_cast<int>(k + 1))) +
               " drawer from the bottom";
      q.gt_indices = by_top[by_top.size() - 1 - k]->point_indices;
      std::sort(q.gt_indices.begin(), q.gt_indices.end());
      out.queries.push_back(std::move(q));
    }
    if (spec.cabinets.size() > 1) {
      std::vector<const SceneInstance*> by_left = handles;
      std::sort(by_left.begin(), by_left.end(), [&](const SceneInstance* a, const SceneInstance* b) {
        return handle_center(a).x() < handle_center(b).x();
      });
      for (std::size_t k = 0; k < by_left.size() && k < 10; ++k) {
        SyntheticQuery q;
        q.query_id = out.scene.scene_id + "/left-" + std::to_string(k + 1);
        q.text = "the " + std::string(ordinal_word(static_cast<int>(k + 1))) +
                 " handle from the left";
        q.gt_indices = by_left[k]->point_indices;
        std::sort(q.gt_indices.begin(), q.gt_indices.end());
        out.queries.push_back(std::move(q));
      }
    }
  }

  out.instances = std::move(instances);
  out.scene.validate();
  return out;
}

void save_synthetic_scene(const SyntheticScene& synth, const std::filesystem::path& root,
                          DepthFormat depth_format) {
  save_scene(synth.scene, root, depth_format);
  save_annotations(synth.annotations, root / "annotations.json");

  json instances = json::array();
  for (const auto& inst : synth.instances) {
    json ij;
    ij["id"] = inst.id;
    ij["label"] = inst.label;
    if (inst.parent_id) ij["parent"] = *inst.parent_id;
    else ij["parent"] = nullptr;
    ij["box"] = {{"lo", {inst.box.lo.x(), inst.box.lo.y(), inst.box.lo.z()}},
                 {"hi", {inst.box.hi.x(), inst.box.hi.y(), inst.box.hi.z()}}};
    ij["points"] = inst.point_indices;
    instances.push_back(std::move(ij));
  }
  std::ofstream(root / "instances.json", std::ios::trunc)
      << json{{"instances", instances}}.dump(2) << "\n";

  json queries = json::array();
  json gt = json::object();
  for (const auto& q : synth.queries) {
    queries.push_back({{"query_id", q.query_id}, {"text", q.text}});
    gt[q.query_id] = q.gt_indices;
  }
  std::ofstream(root / "queries.json", std::ios::trunc) << queries.dump(2) << "\n";
  std::ofstream(root / "gt.json", std::ios::trunc) << gt.dump(2) << "\n";
}

}  // namespace ag
