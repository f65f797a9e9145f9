#include "ag/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ag/httplib_include.hpp"

#include "ag/common.hpp"
#include "ag/geometry.hpp"
#include "ag/prompts.hpp"

namespace ag {

using json = nlohmann::json;

void BoundingBox2D::validate(int width, int height) const {
  if (!(x_min < x_max) || !(y_min < y_max))
    throw ValidationError("bounding box is empty or inverted");
  if (x_min < 0 || y_min < 0 || x_max > width || y_max > height)
    throw ValidationError("bounding box outside image bounds");
  if (part_index != 0 && part_index != 1)
    throw ValidationError("part_index must be 0 or 1");
}

namespace {

std::string base64_encode(const std::vector<std::uint8_t>& data) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < data.size()) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < data.size()) chunk |= data[i + 2];
    out.push_back(alphabet[(chunk >> 18) & 0x3f]);
    out.push_back(alphabet[(chunk >> 12) & 0x3f]);
    out.push_back(i + 1 < data.size() ? alphabet[(chunk >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < data.size() ? alphabet[chunk & 0x3f] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  int acc = 0, bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw ParseError("invalid base64 character");
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace

HttpConfig HttpConfig::from_env() {
  HttpConfig c;
  if (const char* v = std::getenv("AFFGROUND_ENDPOINT")) c.endpoint = v;
  if (const char* v = std::getenv("AFFGROUND_API_KEY")) c.api_key = v;
  if (const char* v = std::getenv("AFFGROUND_MODEL")) c.model = v;
  return c;
}

HttpChatClient::HttpChatClient(HttpConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty())
    throw ValidationError("http backend: endpoint not configured (AFFGROUND_ENDPOINT)");
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
  // split endpoint into base url + path prefix
  std::string base = config_.endpoint;
  std::string prefix;
  const auto scheme_end = base.find("://");
  if (scheme_end != std::string::npos) {
    const auto path_start = base.find('/', scheme_end + 3);
    if (path_start != std::string::npos) {
      prefix = base.substr(path_start);
      base = base.substr(0, path_start);
    }
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  json body;
  body["model"] = config_.model;
  body["temperature"] = 0;
  body["messages"] = json::array();
  for (const auto& m : messages) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& img : m.images) {
      const std::string b64 = base64_encode(encode_png_rgb8(img));
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:image/png;base64," + b64}}}});
    }
    body["messages"].push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const int delay_ms = config_.backoff_base_ms << (attempt - 1);  // 1s, 2s
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    }
    httplib::Client client(base);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(prefix + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw BackendError("chat completion failed with HTTP " + std::to_string(res->status) +
                         ": " + res->body);
    try {
      json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("malformed chat completion response: " + std::string(e.what()) +
                       "; body: " + res->body);
    }
  }
  throw BackendError("chat completion failed after " + std::to_string(config_.max_retries + 1) +
                     " attempts; last error: " + last_error);
}

std::vector<BoundingBox2D> parse_boxes_response(const std::string& text) {
  // Models often wrap the JSON array in prose; keep everything between the
  // first '[' and the last ']'.
  const auto first = text.find('[');
  const auto last = text.rfind(']');
  if (first == std::string::npos || last == std::string::npos || last < first)
    throw ParseError("no JSON array in grounding response; raw payload: " + text);
  json arr;
  try {
    arr = json::parse(text.substr(first, last - first + 1));
  } catch (const json::exception& e) {
    throw ParseError("grounding response is not valid JSON: " + std::string(e.what()) +
                     "; raw payload: " + text);
  }
  if (!arr.is_array())
    throw ParseError("grounding response is not a JSON array; raw payload: " + text);

  std::vector<BoundingBox2D> boxes;
  for (const auto& item : arr) {
    BoundingBox2D b;
    const auto& bb = item.at("bbox_2d");
    if (!bb.is_array() || bb.size() != 4)
      throw ParseError("bbox_2d must be [x_min, y_min, x_max, y_max]; raw payload: " + text);
    b.x_min = bb[0].get<double>();
    b.y_min = bb[1].get<double>();
    b.x_max = bb[2].get<double>();
    b.y_max = bb[3].get<double>();
    b.part_index = item.at("part_index").get<int>();
    boxes.push_back(b);
  }
  return boxes;
}

int parse_selection_response(const std::string& text, int n_candidates) {
  std::string trimmed = lowercase_trim(text);
  if (trimmed.empty() || !std::all_of(trimmed.begin(), trimmed.end(), [](unsigned char c) {
        return std::isdigit(c);
      }))
    throw ParseError("selection response is not digits-only: \"" + text + "\"");
  const long value = std::strtol(trimmed.c_str(), nullptr, 10);
  if (value < 1 || value > n_candidates)
    throw SelectionError("selected node " + std::to_string(value) + " outside [1, " +
                         std::to_string(n_candidates) + "]");
  return static_cast<int>(value);
}

namespace {

class HttpGrounder : public VlmGrounder {
 public:
  explicit HttpGrounder(std::shared_ptr<ChatClient> chat) : chat_(std::move(chat)) {}

  std::vector<BoundingBox2D> ground(const GroundingRequest& request) override {
    ChatMessage msg;
    msg.role = "user";
    msg.text = request.instruction;
    for (const auto* ex : request.exemplars) msg.images.push_back(ex->overlay);
    msg.images.push_back(request.query_frame->rgb);
    return parse_boxes_response(chat_->complete({msg}));
  }

 private:
  std::shared_ptr<ChatClient> chat_;
};

class HttpSelector : public LlmSelector {
 public:
  explicit HttpSelector(std::shared_ptr<ChatClient> chat) : chat_(std::move(chat)) {}

  int select(const SelectionRequest& request, int n_candidates) override {
    std::string prompt = prompts::substitute(prompts::kStage3InstanceSelection,
                                             "{instruction}", request.instruction);
    prompt = prompts::substitute(prompt, "{len(affordance_nodes)}", std::to_string(n_candidates));
    prompt += "\n" + request.graph_json;

    ChatMessage msg;
    msg.role = "user";
    msg.text = prompt;
    msg.images.push_back(request.topdown_render);
    for (const auto& [node_id, crop] : request.node_crops) msg.images.push_back(crop);

    std::string response;
    for (int attempt = 0; attempt < 2; ++attempt) {  // retry once on non-numeric output
      response = chat_->complete({msg});
      try {
        return parse_selection_response(response, n_candidates);
      } catch (const ParseError&) {
        if (attempt == 1) throw;
      }
    }
    throw ParseError("selection response not numeric: " + response);
  }

 private:
  std::shared_ptr<ChatClient> chat_;
};

class HttpSegmenter : public Segmenter2D {
 public:
  explicit HttpSegmenter(std::shared_ptr<ChatClient> chat) : chat_(std::move(chat)) {}

  std::vector<Mask> segment_by_text(const Frame& frame, const std::string& label) override {
    if (label.empty()) throw ContractViolation("segment_by_text: empty label");
    ChatMessage msg;
    msg.role = "user";
    msg.text = "Segment every instance of \"" + label +
               "\" in the attached image. Return JSON only: a list of objects with a "
               "\"mask\" field holding a base64 PNG the same size as the image "
               "(white = instance, black = background).";
    msg.images.push_back(frame.rgb);
    return parse_masks(chat_->complete({msg}), frame.intrinsics.width, frame.intrinsics.height);
  }

  Mask segment_by_box(const Frame& frame, const BoundingBox2D& box) override {
    if (box.part_index != 1)
      throw ContractViolation("segment_by_box: refusing non-positive box (part_index 0)");
    box.validate(frame.intrinsics.width, frame.intrinsics.height);
    char text[256];
    std::snprintf(text, sizeof(text),
                  "Segment the single object inside the box [%.1f, %.1f, %.1f, %.1f] of the "
                  "attached image. Return JSON only: a list with one object with a \"mask\" "
                  "field holding a base64 PNG the same size as the image.",
                  box.x_min, box.y_min, box.x_max, box.y_max);
    ChatMessage msg;
    msg.role = "user";
    msg.text = text;
    msg.images.push_back(frame.rgb);
    auto masks = parse_masks(chat_->complete({msg}), frame.intrinsics.width, frame.intrinsics.height);
    if (masks.empty()) return Mask(frame.intrinsics.width, frame.intrinsics.height);
    return masks.front();
  }

 private:
  static std::vector<Mask> parse_masks(const std::string& response, int width, int height) {
    const auto first = response.find('[');
    const auto last = response.rfind(']');
    if (first == std::string::npos || last == std::string::npos || last < first)
      throw ParseError("no JSON array in segmentation response; raw payload: " + response);
    json arr;
    try {
      arr = json::parse(response.substr(first, last - first + 1));
    } catch (const json::exception& e) {
      throw ParseError("segmentation response is not valid JSON: " + std::string(e.what()));
    }
    std::vector<Mask> masks;
    for (const auto& item : arr) {
      const Image8 img = decode_png_rgb8(base64_decode(item.at("mask").get<std::string>()));
      if (img.width != width || img.height != height)
        throw ParseError("segmentation mask size mismatch");
      Mask m(width, height);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          if (img.at(x, y, 0) > 127) m.set(x, y);
      masks.push_back(std::move(m));
    }
    return masks;
  }

  std::shared_ptr<ChatClient> chat_;
};

}  // namespace

BackendSet make_http_backends(const HttpConfig& config) {
  auto chat = std::make_shared<HttpChatClient>(config);
  BackendSet set;
  set.chat = chat;
  set.grounder = std::make_shared<HttpGrounder>(chat);
  set.selector = std::make_shared<HttpSelector>(chat);
  set.segmenter = std::make_shared<HttpSegmenter>(chat);
  return set;
}

// ---- mocks -------------------------------------------------------------------

MockScenario MockScenario::load(const std::filesystem::path& scene_root) {
  MockScenario s;
  s.scene = load_scene(scene_root);

  std::ifstream in(scene_root / "instances.json");
  if (!in) throw IngestionError("missing instances.json in " + scene_root.string());
  json doc = json::parse(in);
  for (const auto& ij : doc.at("instances")) {
    SceneInstance inst;
    inst.id = ij.at("id").get<int>();
    inst.label = ij.at("label").get<std::string>();
    if (!ij.at("parent").is_null()) inst.parent_id = ij.at("parent").get<int>();
    auto lo = ij.at("box").at("lo").get<std::vector<double>>();
    auto hi = ij.at("box").at("hi").get<std::vector<double>>();
    inst.box.lo = Eigen::Vector3d(lo[0], lo[1], lo[2]);
    inst.box.hi = Eigen::Vector3d(hi[0], hi[1], hi[2]);
    inst.point_indices = ij.at("points").get<std::vector<int>>();
    s.instances.push_back(std::move(inst));
  }

  std::ifstream qin(scene_root / "queries.json");
  if (qin) {
    json queries = json::parse(qin);
    for (const auto& q : queries)
      s.query_text_to_id[q.at("text").get<std::string>()] = q.at("query_id").get<std::string>();
  }
  std::ifstream gin(scene_root / "gt.json");
  if (gin) {
    json gt = json::parse(gin);
    for (auto it = gt.begin(); it != gt.end(); ++it)
      s.gt_by_query[it.key()] = it.value().get<std::vector<int>>();
  }
  return s;
}

namespace {

struct InstanceView {
  std::vector<std::pair<int, int>> pixels;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

// Depth-consistent projection of one instance into one frame.
std::optional<InstanceView> project_instance(const MockScenario& scenario,
                                             const SceneInstance& inst, const Frame& frame) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(inst.point_indices.size());
  for (int idx : inst.point_indices)
    pts.push_back(scenario.scene.cloud.points[static_cast<std::size_t>(idx)]);
  auto projs = project_points(pts, frame.pose, frame.intrinsics);
  auto residuals = depth_residuals(projs, frame.depth);
  if (residuals.empty()) return std::nullopt;
  auto retained = depth_consistency_filter(residuals, DepthFilterParams{});
  if (retained.empty()) return std::nullopt;

  InstanceView view;
  view.min_x = frame.intrinsics.width;
  view.min_y = frame.intrinsics.height;
  view.max_x = view.max_y = 0;
  std::size_t pi = 0;
  for (int idx : retained) {
    while (pi < projs.size() && projs[pi].point_index != idx) ++pi;
    if (pi == projs.size()) break;
    const int px = std::clamp(static_cast<int>(std::lround(projs[pi].u)), 0,
                              frame.intrinsics.width - 1);
    const int py = std::clamp(static_cast<int>(std::lround(projs[pi].v)), 0,
                              frame.intrinsics.height - 1);
    view.pixels.emplace_back(px, py);
    view.min_x = std::min(view.min_x, px);
    view.max_x = std::max(view.max_x, px);
    view.min_y = std::min(view.min_y, py);
    view.max_y = std::max(view.max_y, py);
  }
  if (view.pixels.empty()) return std::nullopt;
  return view;
}

double box_iou(double ax0, double ay0, double ax1, double ay1,
               double bx0, double by0, double bx1, double by1) {
  const double ix0 = std::max(ax0, bx0), iy0 = std::max(ay0, by0);
  const double ix1 = std::min(ax1, bx1), iy1 = std::min(ay1, by1);
  const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

class OracleGrounder : public VlmGrounder {
 public:
  OracleGrounder(std::shared_ptr<const MockScenario> scenario, MockOptions options)
      : scenario_(std::move(scenario)), options_(options) {}

  std::vector<BoundingBox2D> ground(const GroundingRequest& request) override {
    if (!request.query_frame) throw ContractViolation("ground: null query frame");
    if (request.instruction.empty()) throw ContractViolation("ground: empty instruction");
    const std::string label = lowercase_trim(request.interaction_label);
    const bool adversarial = request.instruction.find("part_index 0") != std::string::npos;
    const Frame& frame = *request.query_frame;

    std::vector<BoundingBox2D> boxes;
    for (const auto& inst : scenario_->instances) {
      if (inst.label != label) continue;
      auto view = project_instance(*scenario_, inst, frame);
      if (!view) continue;

      const std::uint64_t h =
          fnv1a64(scenario_->scene.scene_id + "|" + std::to_string(frame.index) + "|" + label +
                  "|" + std::to_string(inst.id));
      const double jitter = options_.bbox_jitter_px;
      auto off = [&](int slot) {
        return jitter > 0
                   ? static_cast<double>(static_cast<int>((h >> (slot * 8)) % 5) - 2) *
                         (jitter / 2.0)
                   : 0.0;
      };
      BoundingBox2D pos;
      pos.part_index = 1;
      pos.x_min = std::max(0.0, view->min_x + off(0));
      pos.y_min = std::max(0.0, view->min_y + off(1));
      pos.x_max = std::min<double>(frame.intrinsics.width, view->max_x + 1 + off(2));
      pos.y_max = std::min<double>(frame.intrinsics.height, view->max_y + 1 + off(3));
      if (pos.x_max <= pos.x_min) pos.x_max = pos.x_min + 1;
      if (pos.y_max <= pos.y_min) pos.y_max = pos.y_min + 1;
      boxes.push_back(pos);

      if (adversarial) {
        BoundingBox2D neg;
        neg.part_index = 0;
        bool have_parent = false;
        if (inst.parent_id) {
          const auto& parent = scenario_->instances[static_cast<std::size_t>(*inst.parent_id - 1)];
          if (auto pview = project_instance(*scenario_, parent, frame)) {
            neg.x_min = pview->min_x;
            neg.y_min = pview->min_y;
            neg.x_max = pview->max_x + 1;
            neg.y_max = pview->max_y + 1;
            have_parent = true;
          }
        }
        if (!have_parent) {
          // companion fallback: the positive box dilated by 4 px
          neg.x_min = std::max(0.0, pos.x_min - 4);
          neg.y_min = std::max(0.0, pos.y_min - 4);
          neg.x_max = std::min<double>(frame.intrinsics.width, pos.x_max + 4);
          neg.y_max = std::min<double>(frame.intrinsics.height, pos.y_max + 4);
        }
        boxes.push_back(neg);
      }
    }
    return boxes;
  }

 private:
  std::shared_ptr<const MockScenario> scenario_;
  MockOptions options_;
};

class OracleSelector : public LlmSelector {
 public:
  explicit OracleSelector(std::shared_ptr<const MockScenario> scenario)
      : scenario_(std::move(scenario)) {}

  int select(const SelectionRequest& request, int n_candidates) override {
    if (n_candidates < 1) throw ContractViolation("select: n_candidates must be >= 1");
    auto it = scenario_->query_text_to_id.find(request.instruction);
    if (it == scenario_->query_text_to_id.end())
      throw SelectionError("scenario has no ground truth for instruction \"" +
                           request.instruction + "\"");
    const auto& gt = scenario_->gt_by_query.at(it->second);
    Eigen::Vector3d gt_centroid = Eigen::Vector3d::Zero();
    for (int idx : gt) gt_centroid += scenario_->scene.cloud.points[static_cast<std::size_t>(idx)];
    gt_centroid /= static_cast<double>(gt.size());

    // pick the INT node whose centroid is nearest the ground-truth centroid
    json doc = json::parse(request.graph_json);
    int best_id = -1;
    double best_dist = std::numeric_limits<double>::max();
    for (const auto& nj : doc.at("nodes")) {
      if (nj.at("kind").get<std::string>() != "INT") continue;
      auto c = nj.at("centroid").get<std::vector<double>>();
      const double d = (Eigen::Vector3d(c[0], c[1], c[2]) - gt_centroid).norm();
      if (d < best_dist) {
        best_dist = d;
        best_id = nj.at("id").get<int>();
      }
    }
    if (best_id < 1) throw SelectionError("graph has no INT nodes");
    if (best_id > n_candidates)
      throw SelectionError("selected node " + std::to_string(best_id) + " outside [1, " +
                           std::to_string(n_candidates) + "]");
    return best_id;
  }

 private:
  std::shared_ptr<const MockScenario> scenario_;
};

class OracleSegmenter : public Segmenter2D {
 public:
  OracleSegmenter(std::shared_ptr<const MockScenario> scenario, MockOptions options)
      : scenario_(std::move(scenario)), options_(options) {}

  std::vector<Mask> segment_by_text(const Frame& frame, const std::string& label) override {
    if (label.empty()) throw ContractViolation("segment_by_text: empty label");
    const std::string wanted = lowercase_trim(label);
    std::vector<Mask> masks;
    const SceneInstance* top_visible = nullptr;
    for (const auto& inst : scenario_->instances) {
      if (inst.label != wanted) continue;
      auto view = project_instance(*scenario_, inst, frame);
      if (!view) continue;
      masks.push_back(convex_hull_fill(view->pixels, frame.intrinsics.width,
                                       frame.intrinsics.height));
      if (!top_visible ||
          (inst.box.lo.z() + inst.box.hi.z()) > (top_visible->box.lo.z() + top_visible->box.hi.z()))
        top_visible = &inst;
    }

    if (options_.noisy_segmenter && top_visible && top_visible->parent_id) {
      // One spurious coarse mask per frame: the parent object of the topmost
      // visible instance.
      const auto& parent =
          scenario_->instances[static_cast<std::size_t>(*top_visible->parent_id - 1)];
      if (auto pview = project_instance(*scenario_, parent, frame))
        masks.push_back(convex_hull_fill(pview->pixels, frame.intrinsics.width,
                                         frame.intrinsics.height));
    }
    return masks;
  }

  Mask segment_by_box(const Frame& frame, const BoundingBox2D& box) override {
    if (box.part_index != 1)
      throw ContractViolation("segment_by_box: refusing non-positive box (part_index 0)");
    box.validate(frame.intrinsics.width, frame.intrinsics.height);

    const SceneInstance* best = nullptr;
    std::optional<InstanceView> best_view;
    double best_iou = 0.10;  // below this the box covers background
    for (const auto& inst : scenario_->instances) {
      auto view = project_instance(*scenario_, inst, frame);
      if (!view) continue;
      const double iou = box_iou(view->min_x, view->min_y, view->max_x + 1, view->max_y + 1,
                                 box.x_min, box.y_min, box.x_max, box.y_max);
      if (iou > best_iou) {
        best_iou = iou;
        best = &inst;
        best_view = std::move(view);
      }
    }
    Mask out(frame.intrinsics.width, frame.intrinsics.height);
    if (!best) return out;  // empty mask; caller drops the candidate

    Mask hull = convex_hull_fill(best_view->pixels, frame.intrinsics.width,
                                 frame.intrinsics.height);
    const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)) - 5);
    const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)) - 5);
    const int x1 = std::min(frame.intrinsics.width - 1, static_cast<int>(std::ceil(box.x_max)) + 5);
    const int y1 = std::min(frame.intrinsics.height - 1, static_cast<int>(std::ceil(box.y_max)) + 5);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (hull.test(x, y)) out.set(x, y);
    return out;
  }

 private:
  std::shared_ptr<const MockScenario> scenario_;
  MockOptions options_;
};

}  // namespace

BackendSet make_oracle_backends(std::shared_ptr<const MockScenario> scenario,
                                const MockOptions& options) {
  if (!scenario) throw ContractViolation("oracle backends need a scenario");
  BackendSet set;
  set.chat = nullptr;  // stage-1 falls back to the deterministic parser
  set.grounder = std::make_shared<OracleGrounder>(scenario, options);
  set.selector = std::make_shared<OracleSelector>(scenario);
  set.segmenter = std::make_shared<OracleSegmenter>(scenario, options);
  return set;
}

namespace {

class ReplayGrounder : public VlmGrounder {
 public:
  ReplayGrounder(std::map<std::string, std::string> responses, std::string scene_id)
      : responses_(std::move(responses)), scene_id_(std::move(scene_id)) {}

  std::vector<BoundingBox2D> ground(const GroundingRequest& request) override {
    const std::string key = scene_id_ + "|" + std::to_string(request.query_frame->index) + "|" +
                            lowercase_trim(request.interaction_label);
    auto it = responses_.find(key);
    if (it == responses_.end())
      throw BackendError("replay file has no grounding response for key " + key);
    return parse_boxes_response(it->second);
  }

 private:
  std::map<std::string, std::string> responses_;
  std::string scene_id_;
};

class ReplaySelector : public LlmSelector {
 public:
  explicit ReplaySelector(std::map<std::string, std::string> responses)
      : responses_(std::move(responses)) {}

  int select(const SelectionRequest& request, int n_candidates) override {
    auto it = responses_.find(request.instruction);
    if (it == responses_.end())
      throw BackendError("replay file has no selection response for instruction \"" +
                         request.instruction + "\"");
    return parse_selection_response(it->second, n_candidates);
  }

 private:
  std::map<std::string, std::string> responses_;
};

}  // namespace

BackendSet make_replay_backends(const std::filesystem::path& replay_file,
                                std::shared_ptr<const MockScenario> scenario_for_segmenter) {
  std::ifstream in(replay_file);
  if (!in) throw IngestionError("cannot open replay file: " + replay_file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("replay file parse error: " + std::string(e.what()), e.byte);
  }

  std::map<std::string, std::string> ground_responses;
  if (doc.contains("ground"))
    for (const auto& e : doc["ground"])
      ground_responses[e.at("scene_id").get<std::string>() + "|" +
                       std::to_string(e.at("frame_index").get<int>()) + "|" +
                       lowercase_trim(e.at("label").get<std::string>())] =
          e.at("response").get<std::string>();
  std::map<std::string, std::string> select_responses;
  if (doc.contains("select"))
    for (const auto& e : doc["select"])
      select_responses[e.at("instruction").get<std::string>()] = e.at("response").get<std::string>();

  if (!scenario_for_segmenter)
    throw ContractViolation("replay backends need a scenario for the segmenter");

  BackendSet set;
  set.chat = nullptr;
  set.grounder = std::make_shared<ReplayGrounder>(std::move(ground_responses),
                                                  scenario_for_segmenter->scene.scene_id);
  set.selector = std::make_shared<ReplaySelector>(std::move(select_responses));
  set.segmenter = std::make_shared<OracleSegmenter>(scenario_for_segmenter, MockOptions{});
  return set;
}

std::string ScriptedChatClient::complete(const std::vector<ChatMessage>&) {
  const std::size_t i = next_.fetch_add(1);
  if (responses_.empty()) throw BackendError("scripted chat has no responses");
  return responses_[std::min(i, responses_.size() - 1)];
}

}  // namespace ag
