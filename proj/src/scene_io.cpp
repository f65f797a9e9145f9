#include "ag/scene_io.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "PLY and raw depth I/O assume a little-endian host");

namespace ag {

using json = nlohmann::ordered_json;

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ValidationError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("intrinsics: image dimensions must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw ValidationError("intrinsics: principal point outside image");
}

void Pose::validate() const {
  Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > kOrthonormalTol)
    throw ValidationError("pose: rotation not orthonormal within 1e-6");
  if (std::abs(rotation.determinant() - 1.0) > kOrthonormalTol)
    throw ValidationError("pose: rotation determinant not +1 within 1e-6");
  if (!translation.allFinite()) throw ValidationError("pose: non-finite translation");
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

Pose Pose::from_matrix4_row_major(const std::array<double, 16>& m) {
  Pose p;
  p.rotation << m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10];
  p.translation << m[3], m[7], m[11];
  return p;
}

std::array<double, 16> Pose::to_matrix4_row_major() const {
  std::array<double, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 4 + c)] = rotation(r, c);
    m[static_cast<std::size_t>(r * 4 + 3)] = translation(r);
  }
  m[15] = 1.0;
  return m;
}

void Frame::validate() const {
  intrinsics.validate();
  pose.validate();
  if (rgb.width != intrinsics.width || rgb.height != intrinsics.height ||
      depth.width != intrinsics.width || depth.height != intrinsics.height)
    throw ValidationError("frame " + std::to_string(index) +
                          ": rgb/depth dimensions do not match intrinsics");
  for (float d : depth.data)
    if (std::isinf(d) || std::isnan(d))
      throw ValidationError("frame " + std::to_string(index) + ": non-finite depth value");
}

void PointCloud::validate() const {
  if (points.empty()) throw ValidationError("point cloud is empty");
  for (const auto& p : points)
    if (!p.allFinite()) throw ValidationError("point cloud contains non-finite coordinates");
  if (!colors.empty() && colors.size() != points.size())
    throw ValidationError("point cloud colors/points size mismatch");
}

void SceneSequence::validate() const {
  cloud.validate();
  int last = -1;
  for (const auto& f : frames) {
    if (f.index <= last)
      throw ValidationError("frame indices not strictly increasing at " + std::to_string(f.index));
    last = f.index;
    f.validate();
  }
}

namespace {

std::string depth_format_tag(DepthFormat f) {
  return f == DepthFormat::png16_mm ? "mm" : "m";
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("JSON parse error in " + path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

SceneSequence load_scene(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw IngestionError("missing manifest: " + manifest_path.string());
  json manifest = load_json_file(manifest_path);

  SceneSequence scene;
  scene.scene_id = manifest.at("scene_id").get<std::string>();
  const std::string unit = manifest.at("depth_unit").get<std::string>();
  if (unit != "mm" && unit != "m")
    throw IngestionError("manifest depth_unit must be \"mm\" or \"m\", got \"" + unit + "\"");
  if (manifest.contains("up_axis")) {
    auto u = manifest["up_axis"].get<std::vector<double>>();
    if (u.size() != 3) throw IngestionError("manifest up_axis must have 3 components");
    scene.up_axis = Eigen::Vector3d(u[0], u[1], u[2]).normalized();
  }

  for (const auto& fj : manifest.at("frames")) {
    Frame f;
    f.index = fj.at("index").get<int>();
    f.intrinsics.fx = fj.at("fx").get<double>();
    f.intrinsics.fy = fj.at("fy").get<double>();
    f.intrinsics.cx = fj.at("cx").get<double>();
    f.intrinsics.cy = fj.at("cy").get<double>();
    f.intrinsics.width = fj.at("width").get<int>();
    f.intrinsics.height = fj.at("height").get<int>();

    auto pose_vals = fj.at("pose").get<std::vector<double>>();
    if (pose_vals.size() != 16)
      throw IngestionError("frame " + std::to_string(f.index) + ": pose must be 16 floats");
    std::array<double, 16> m{};
    std::copy(pose_vals.begin(), pose_vals.end(), m.begin());
    f.pose = Pose::from_matrix4_row_major(m);

    const auto rgb_path = root / fj.at("rgb").get<std::string>();
    if (!std::filesystem::exists(rgb_path))
      throw IngestionError("missing rgb file: " + rgb_path.string());
    f.rgb = read_png_rgb8(rgb_path);

    const auto depth_path = root / fj.at("depth").get<std::string>();
    if (!std::filesystem::exists(depth_path))
      throw IngestionError("missing depth file: " + depth_path.string());
    if (unit == "mm") {
      int dw = 0, dh = 0;
      auto raw = read_png_gray16(depth_path, dw, dh);
      f.depth = DepthMap(dw, dh);
      for (std::size_t i = 0; i < raw.size(); ++i)
        f.depth.data[i] = static_cast<float>(raw[i]) * 1e-3f;
    } else {
      f.depth = read_depth_f32(depth_path, f.intrinsics.width, f.intrinsics.height);
    }

    scene.frames.push_back(std::move(f));
  }

  const auto cloud_path = root / manifest.value("cloud", std::string("cloud.ply"));
  if (!std::filesystem::exists(cloud_path))
    throw IngestionError("missing cloud file: " + cloud_path.string());
  scene.cloud = read_ply(cloud_path);

  scene.validate();
  return scene;
}

void save_scene(const SceneSequence& scene, const std::filesystem::path& root, DepthFormat depth_format) {
  scene.validate();
  std::filesystem::create_directories(root / "frames");

  json manifest;
  manifest["scene_id"] = scene.scene_id;
  manifest["depth_unit"] = depth_format_tag(depth_format);
  manifest["up_axis"] = {scene.up_axis.x(), scene.up_axis.y(), scene.up_axis.z()};
  manifest["cloud"] = "cloud.ply";
  manifest["frames"] = json::array();

  char name[64];
  for (const auto& f : scene.frames) {
    std::snprintf(name, sizeof(name), "frames/rgb_%05d.png", f.index);
    const std::string rgb_rel = name;
    write_png_rgb8(root / rgb_rel, f.rgb);

    std::string depth_rel;
    if (depth_format == DepthFormat::png16_mm) {
      std::snprintf(name, sizeof(name), "frames/depth_%05d.png", f.index);
      depth_rel = name;
      std::vector<std::uint16_t> mm(f.depth.data.size());
      for (std::size_t i = 0; i < mm.size(); ++i) {
        float v = f.depth.data[i];
        mm[i] = v > 0 ? static_cast<std::uint16_t>(std::min(65535.f, std::round(v * 1000.f))) : 0;
      }
      write_png_gray16(root / depth_rel, mm, f.depth.width, f.depth.height);
    } else {
      std::snprintf(name, sizeof(name), "frames/depth_%05d.f32", f.index);
      depth_rel = name;
      write_depth_f32(root / depth_rel, f.depth);
    }

    json fj;
    fj["index"] = f.index;
    fj["rgb"] = rgb_rel;
    fj["depth"] = depth_rel;
    fj["fx"] = f.intrinsics.fx;
    fj["fy"] = f.intrinsics.fy;
    fj["cx"] = f.intrinsics.cx;
    fj["cy"] = f.intrinsics.cy;
    fj["width"] = f.intrinsics.width;
    fj["height"] = f.intrinsics.height;
    fj["pose"] = f.pose.to_matrix4_row_major();
    manifest["frames"].push_back(std::move(fj));
  }

  write_ply(root / "cloud.ply", scene.cloud);
  std::ofstream out(root / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
}

std::vector<AffordanceAnnotation> load_annotations(const std::filesystem::path& path,
                                                   const std::string& scene_id,
                                                   std::optional<std::size_t> cloud_size) {
  json doc = load_json_file(path);
  if (!doc.is_object()) throw ValidationError("annotations file must be a JSON object");

  std::vector<AffordanceAnnotation> out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    AffordanceAnnotation a;
    a.category = lowercase_trim(it.key());
    if (a.category.empty()) throw ValidationError("annotation with empty category");
    a.scene_id = scene_id;
    for (const auto& v : it.value()) {
      int idx = v.get<int>();
      if (idx < 0 || (cloud_size && static_cast<std::size_t>(idx) >= *cloud_size))
        throw ValidationError("annotation \"" + a.category + "\": point index " +
                              std::to_string(idx) + " out of range");
      a.point_indices.push_back(idx);
    }
    std::sort(a.point_indices.begin(), a.point_indices.end());
    a.point_indices.erase(std::unique(a.point_indices.begin(), a.point_indices.end()),
                          a.point_indices.end());
    out.push_back(std::move(a));
  }
  // Deterministic order regardless of JSON key order.
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return x.category < y.category; });
  return out;
}

void save_annotations(const std::vector<AffordanceAnnotation>& annotations,
                      const std::filesystem::path& path) {
  std::vector<const AffordanceAnnotation*> sorted;
  for (const auto& a : annotations) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* x, const auto* y) { return x->category < y->category; });
  json doc = json::object();
  for (const auto* a : sorted) doc[a->category] = a->point_indices;
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump(2) << "\n";
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open PLY: " + path.string());

  std::string line;
  std::size_t vertex_count = 0;
  bool has_color = false;
  std::vector<std::string> props;
  if (!std::getline(in, line) || line != "ply")
    throw ParseError("not a PLY file: " + path.string(), 0);
  bool binary_le = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string what;
      ls >> what >> vertex_count;
      if (what != "vertex") throw ParseError("unsupported PLY element: " + what);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
      if (name == "red") has_color = true;
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw ParseError("PLY must be binary little-endian: " + path.string());

  PointCloud cloud;
  cloud.points.resize(vertex_count);
  if (has_color) cloud.colors.resize(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    float xyz[3];
    in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    if (!in) {
      const auto pos = in.tellg();
      throw ParseError("PLY truncated at vertex " + std::to_string(i),
                       pos < 0 ? 0 : static_cast<std::size_t>(pos));
    }
    cloud.points[i] = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
    if (has_color) {
      std::uint8_t rgb[3];
      in.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
      cloud.colors[i] = {rgb[0], rgb[1], rgb[2]};
    }
  }
  cloud.validate();
  return cloud;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write PLY: " + path.string());
  const bool has_color = !cloud.colors.empty();
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (has_color)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    float xyz[3] = {static_cast<float>(cloud.points[i].x()),
                    static_cast<float>(cloud.points[i].y()),
                    static_cast<float>(cloud.points[i].z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    if (has_color)
      out.write(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
  }
}

}  // namespace ag
