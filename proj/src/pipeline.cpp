#include "ag/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"
#include "ag/prompts.hpp"

namespace ag {

using json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << content;
}

std::string sanitize_id(const std::string& id) {
  std::string out;
  out.reserve(id.size());
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
  PipelineConfig c;
  c.apply_json(read_file(path));
  return c;
}

void PipelineConfig::apply_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config parse error: " + std::string(e.what()), e.byte);
  }
  if (doc.contains("k")) filter.k = doc["k"].get<double>();
  if (doc.contains("tau_min")) filter.tau_min = doc["tau_min"].get<double>();
  if (doc.contains("rho0")) voting.rho0 = doc["rho0"].get<double>();
  if (doc.contains("theta_vis")) voting.theta_vis = doc["theta_vis"].get<int>();
  if (doc.contains("wilson") && doc["wilson"].get<bool>())
    voting.mode = VotingParams::Mode::wilson;
  if (doc.contains("z")) voting.z = doc["z"].get<double>();
  if (doc.contains("dbscan_eps")) dbscan_eps = doc["dbscan_eps"].get<double>();
  if (doc.contains("dbscan_min_pts")) dbscan_min_pts = doc["dbscan_min_pts"].get<int>();
  if (doc.contains("theta_iou")) theta_iou = doc["theta_iou"].get<double>();
  if (doc.contains("theta_rec")) theta_rec = doc["theta_rec"].get<double>();
  if (doc.contains("k_recall")) k_recall = doc["k_recall"].get<int>();
  if (doc.contains("w1")) w1 = doc["w1"].get<double>();
  if (doc.contains("w2")) w2 = doc["w2"].get<double>();
  if (doc.contains("backend")) backend = doc["backend"].get<std::string>();
  if (doc.contains("scenario")) scenario_path = doc["scenario"].get<std::string>();
  if (doc.contains("replay_file")) replay_file = doc["replay_file"].get<std::string>();
  if (doc.contains("noisy_segmenter")) noisy_segmenter = doc["noisy_segmenter"].get<bool>();
  if (doc.contains("concurrency")) concurrency = doc["concurrency"].get<int>();
  if (doc.contains("ablate")) {
    for (const auto& a : doc["ablate"]) {
      const std::string name = a.get<std::string>();
      if (name == "memory") ablate_memory = true;
      else if (name == "adversarial") ablate_adversarial = true;
      else if (name == "graph") ablate_graph = true;
      else throw ValidationError("unknown ablation flag: " + name);
    }
  }
  if (doc.contains("cache_dir")) cache_dir = doc["cache_dir"].get<std::string>();
}

std::string PipelineConfig::snapshot_json() const {
  json doc;
  doc["k"] = filter.k;
  doc["tau_min"] = filter.tau_min;
  doc["rho0"] = voting.rho0;
  doc["theta_vis"] = voting.theta_vis;
  doc["wilson"] = voting.mode == VotingParams::Mode::wilson;
  doc["z"] = voting.z;
  doc["dbscan_eps"] = dbscan_eps;
  doc["dbscan_min_pts"] = dbscan_min_pts;
  doc["theta_iou"] = theta_iou;
  doc["theta_rec"] = theta_rec;
  doc["k_recall"] = k_recall;
  doc["w1"] = w1;
  doc["w2"] = w2;
  doc["backend"] = backend;
  doc["noisy_segmenter"] = noisy_segmenter;
  doc["ablate_memory"] = ablate_memory;
  doc["ablate_adversarial"] = ablate_adversarial;
  doc["ablate_graph"] = ablate_graph;
  return doc.dump();
}

std::vector<QuerySpec> load_queries(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("query file parse error: " + std::string(e.what()), e.byte);
  }
  if (!doc.is_array()) throw ValidationError("query file must be a JSON array");
  std::vector<QuerySpec> out;
  for (const auto& q : doc) {
    QuerySpec spec;
    spec.query_id = q.at("query_id").get<std::string>();
    spec.text = q.at("text").get<std::string>();
    if (spec.text.empty()) throw ValidationError("query " + spec.query_id + " has empty text");
    out.push_back(std::move(spec));
  }
  return out;
}

// ---- stage cache --------------------------------------------------------------

struct PipelineRunner::StageCache {
  std::filesystem::path dir;
  std::filesystem::path lock_path;
  bool locked = false;

  explicit StageCache(const std::filesystem::path& cache_dir) : dir(cache_dir) {
    std::filesystem::create_directories(dir);
    lock_path = dir / ".lock";
    const int fd = ::open(lock_path.string().c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw ValidationError("cache directory " + dir.string() +
                            " is locked by another run (found " + lock_path.string() + ")");
    ::close(fd);
    locked = true;
  }

  ~StageCache() {
    if (locked) {
      std::error_code ec;
      std::filesystem::remove(lock_path, ec);
    }
  }

  std::filesystem::path slot(const std::string& stage, const std::string& key) const {
    return dir / stage / key;
  }

  bool fetch(const std::string& stage, const std::string& key,
             const std::filesystem::path& dest) const {
    const auto src = slot(stage, key);
    if (!std::filesystem::exists(src)) return false;
    std::filesystem::remove_all(dest);
    std::filesystem::create_directories(dest.parent_path());
    std::filesystem::copy(src, dest,
                          std::filesystem::copy_options::recursive |
                              std::filesystem::copy_options::overwrite_existing);
    return true;
  }

  void store(const std::string& stage, const std::string& key,
             const std::filesystem::path& src) const {
    const auto dst = slot(stage, key);
    if (std::filesystem::exists(dst)) return;
    std::filesystem::create_directories(dst.parent_path());
    std::filesystem::copy(src, dst,
                          std::filesystem::copy_options::recursive |
                              std::filesystem::copy_options::overwrite_existing);
  }
};

// ---- runner --------------------------------------------------------------------

PipelineRunner::PipelineRunner(PipelineConfig config,
                               const std::filesystem::path& scene_root,
                               const std::filesystem::path& query_file,
                               const std::optional<std::filesystem::path>& bank_dir,
                               const std::filesystem::path& out_dir)
    : config_(std::move(config)), scene_root_(scene_root), out_dir_(out_dir) {
  scene_ = load_scene(scene_root);
  queries_ = load_queries(query_file);

  if (bank_dir) {
    bank_ = load_bank(*bank_dir);
    bank_fingerprint_ = hex64(fnv1a64(read_file(*bank_dir / "bank.json")));
    // Appendix-style separation contract: the bank must not contain the target.
    assert_no_leakage(*bank_, scene_.scene_id);
  } else {
    bank_fingerprint_ = "none";
  }

  if (config_.backend == "http") {
    backends_ = make_http_backends(HttpConfig::from_env());
  } else if (config_.backend == "mock-oracle" || config_.backend == "mock-replay") {
    const auto scenario_root =
        config_.scenario_path.empty() ? scene_root : config_.scenario_path;
    auto scenario = std::make_shared<MockScenario>(MockScenario::load(scenario_root));
    MockOptions options;
    options.noisy_segmenter = config_.noisy_segmenter;
    backends_ = config_.backend == "mock-oracle"
                    ? make_oracle_backends(scenario, options)
                    : make_replay_backends(config_.replay_file, scenario);
  } else {
    throw ValidationError("unknown backend: " + config_.backend);
  }

  std::filesystem::create_directories(out_dir_);
  if (!config_.cache_dir.empty()) cache_ = std::make_unique<StageCache>(config_.cache_dir);
}

PipelineRunner::~PipelineRunner() = default;

std::filesystem::path PipelineRunner::query_dir(const QuerySpec& q) const {
  return out_dir_ / sanitize_id(q.query_id);
}

std::string PipelineRunner::scene_fingerprint() const {
  return hex64(fnv1a64(read_file(scene_root_ / "manifest.json")));
}

ParsedQuery PipelineRunner::load_parsed(const QuerySpec& q) const {
  const auto path = query_dir(q) / "parse.json";
  if (!std::filesystem::exists(path))
    throw DependencyError("stage \"parse\" artifact missing for query " + q.query_id +
                          "; run the parse stage first");
  return parsed_query_from_json(read_file(path));
}

void PipelineRunner::stage_parse() {
  for (const auto& q : queries_) {
    std::filesystem::create_directories(query_dir(q));
    const auto dest = query_dir(q) / "parse.json";
    const std::string key =
        hex64(fnv1a64(config_.snapshot_json() + "|parse|" + q.text));
    if (cache_ && cache_->fetch("parse", key, dest)) continue;
    ParsedQuery parsed = parse_query(q.text, backends_.chat.get());
    write_file(dest, parsed_query_to_json(parsed));
    if (cache_) cache_->store("parse", key, dest);
  }
}

void PipelineRunner::stage_ground() {
  for (const auto& q : queries_) {
    const ParsedQuery parsed = load_parsed(q);
    const auto ground_dir = query_dir(q) / "ground";
    const std::string key = hex64(fnv1a64(config_.snapshot_json() + "|ground|" + q.text + "|" +
                                          read_file(query_dir(q) / "parse.json") + "|" +
                                          scene_fingerprint() + "|" + bank_fingerprint_));
    if (cache_ && cache_->fetch("ground", key, ground_dir)) continue;

    std::filesystem::remove_all(ground_dir);
    std::filesystem::create_directories(ground_dir);

    static const std::vector<MemoryExemplar> kNoExemplars;
    const auto& exemplars = (config_.ablate_memory || !bank_)
                                ? kNoExemplars
                                : recall(*bank_, parsed.interaction_label);

    // Memory-guided instruction (adversarial by default, positive-only under
    // the ablation); unseen categories fall back to text-only grounding.
    std::string instruction;
    if (!exemplars.empty()) {
      std::string preamble = prompts::substitute(prompts::kMemoryRecallPreamble, "{INT label}",
                                                 parsed.interaction_label);
      std::string stage2 = config_.ablate_adversarial ? prompts::kStage2PositiveOnlyGrounding
                                                      : prompts::kStage2AdversarialGrounding;
      stage2 = prompts::substitute(stage2, "{instruction}", parsed.original_prompt);
      stage2 = prompts::substitute(stage2, "{category}", parsed.interaction_label);
      instruction = preamble + "\n" + stage2;
    }

    struct FrameMasks {
      std::vector<Mask> int_masks;
      std::vector<Mask> ctx_masks;
    };
    const auto per_frame = parallel_map<FrameMasks>(
        scene_.frames.size(), config_.concurrency, [&](std::size_t fi) {
          const Frame& frame = scene_.frames[fi];
          FrameMasks fm;

          if (exemplars.empty()) {
            // Table-3 row 1 behavior: direct text-prompted masks.
            fm.int_masks = backends_.segmenter->segment_by_text(frame, parsed.interaction_label);
          } else {
            // Text prompting bounds the search space; the memory-guided VLM
            // proposes boxes and only positive boxes are segmented.
            auto hits = backends_.segmenter->segment_by_text(frame, parsed.interaction_label);
            if (!hits.empty()) {
              GroundingRequest request;
              request.query_frame = &frame;
              for (const auto& ex : exemplars) request.exemplars.push_back(&ex);
              request.interaction_label = parsed.interaction_label;
              request.instruction = instruction;
              for (const auto& box : backends_.grounder->ground(request)) {
                if (box.part_index != 1) continue;
                Mask m = backends_.segmenter->segment_by_box(frame, box);
                if (!m.empty_mask()) fm.int_masks.push_back(std::move(m));
              }
            }
          }

          if (parsed.context_label)
            fm.ctx_masks = backends_.segmenter->segment_by_text(frame, *parsed.context_label);
          return fm;
        });

    json index;
    index["int"] = json::array();
    index["ctx"] = json::array();
    char name[64];
    for (std::size_t fi = 0; fi < scene_.frames.size(); ++fi) {
      const int frame_index = scene_.frames[fi].index;
      json int_entry{{"frame", frame_index}, {"masks", json::array()}};
      for (std::size_t j = 0; j < per_frame[fi].int_masks.size(); ++j) {
        std::snprintf(name, sizeof(name), "int_f%05d_m%02zu.png", frame_index, j);
        write_png_mask(ground_dir / name, per_frame[fi].int_masks[j]);
        int_entry["masks"].push_back(name);
      }
      if (!int_entry["masks"].empty()) index["int"].push_back(std::move(int_entry));

      json ctx_entry{{"frame", frame_index}, {"masks", json::array()}};
      for (std::size_t j = 0; j < per_frame[fi].ctx_masks.size(); ++j) {
        std::snprintf(name, sizeof(name), "ctx_f%05d_m%02zu.png", frame_index, j);
        write_png_mask(ground_dir / name, per_frame[fi].ctx_masks[j]);
        ctx_entry["masks"].push_back(name);
      }
      if (!ctx_entry["masks"].empty()) index["ctx"].push_back(std::move(ctx_entry));
    }
    write_file(ground_dir / "index.json", index.dump(2) + "\n");
    if (cache_) cache_->store("ground", key, ground_dir);
  }
}

namespace {

std::vector<std::pair<const Frame*, std::vector<Mask>>> load_frame_masks(
    const SceneSequence& scene, const std::filesystem::path& ground_dir, const json& entries) {
  std::map<int, const Frame*> by_index;
  for (const auto& f : scene.frames) by_index[f.index] = &f;
  std::vector<std::pair<const Frame*, std::vector<Mask>>> out;
  for (const auto& e : entries) {
    const int frame_index = e.at("frame").get<int>();
    auto it = by_index.find(frame_index);
    if (it == by_index.end())
      throw ValidationError("ground index references unknown frame " + std::to_string(frame_index));
    std::vector<Mask> masks;
    for (const auto& name : e.at("masks"))
      masks.push_back(read_png_mask(ground_dir / name.get<std::string>()));
    out.emplace_back(it->second, std::move(masks));
  }
  return out;
}

}  // namespace

void PipelineRunner::stage_fuse() {
  for (const auto& q : queries_) {
    const auto ground_dir = query_dir(q) / "ground";
    if (!std::filesystem::exists(ground_dir / "index.json"))
      throw DependencyError("stage \"ground\" artifact missing for query " + q.query_id +
                            "; run the ground stage first");
    const json index = json::parse(read_file(ground_dir / "index.json"));

    auto fuse_one = [&](const json& entries) {
      auto frame_masks = load_frame_masks(scene_, ground_dir, entries);
      const VoteTable votes = accumulate_votes(scene_.cloud, frame_masks, config_.filter);
      const auto fg = threshold_foreground(votes, config_.voting);
      auto clusters = cluster_candidates(fg, scene_.cloud, config_.dbscan_eps,
                                         config_.dbscan_min_pts, &votes);
      CandidatePool pool = merge_candidates(std::move(clusters), scene_.cloud,
                                            config_.theta_iou, config_.theta_rec);
      pool.params = config_.voting;
      pool.dbscan_eps = config_.dbscan_eps;
      pool.dbscan_min_pts = config_.dbscan_min_pts;
      return pool;
    };

    persist_candidate_pool(fuse_one(index.at("int")), query_dir(q) / "fuse_int.json");
    persist_candidate_pool(fuse_one(index.at("ctx")), query_dir(q) / "fuse_ctx.json");
  }
}

void PipelineRunner::stage_graph() {
  for (const auto& q : queries_) {
    const ParsedQuery parsed = load_parsed(q);
    const auto int_path = query_dir(q) / "fuse_int.json";
    if (!std::filesystem::exists(int_path))
      throw DependencyError("stage \"fuse\" artifact missing for query " + q.query_id +
                            "; run the fuse stage first");
    const CandidatePool int_pool = load_candidate_pool(int_path);
    const CandidatePool ctx_pool = load_candidate_pool(query_dir(q) / "fuse_ctx.json");

    const SceneGraph graph = build_graph(int_pool, ctx_pool, parsed.interaction_label,
                                         parsed.context_label, scene_.up_axis, scene_.scene_id);
    persist_scene_graph(graph, query_dir(q) / "graph.json");
    write_file(query_dir(q) / "graph.svg", render_topdown(graph, scene_.cloud));

    const CropResult crops = extract_crops(graph, scene_, config_.filter, config_.w1, config_.w2);
    const auto crops_dir = query_dir(q) / "crops";
    std::filesystem::remove_all(crops_dir);
    std::filesystem::create_directories(crops_dir);
    for (const auto& [node_id, crop] : crops.crops)
      write_png_rgb8(crops_dir / ("node_" + std::to_string(node_id) + ".png"), crop);
    if (!crops.warnings.empty()) {
      json w = crops.warnings;
      write_file(query_dir(q) / "crop_warnings.json", w.dump(2) + "\n");
    }
  }
}

void PipelineRunner::stage_select() {
  for (const auto& q : queries_) {
    const auto dest = query_dir(q) / "select.json";
    json result;

    if (config_.ablate_graph) {
      // Flat selection: the largest-support candidate, no spatial reasoning.
      const auto int_path = query_dir(q) / "fuse_int.json";
      if (!std::filesystem::exists(int_path))
        throw DependencyError("stage \"fuse\" artifact missing for query " + q.query_id +
                              "; run the fuse stage first");
      const CandidatePool pool = load_candidate_pool(int_path);
      result["mode"] = "largest_support";
      if (pool.candidates.empty()) {
        result["node_id"] = nullptr;
        result["point_indices"] = json::array();
      } else {
        const Candidate3D* best = &pool.candidates.front();
        for (const auto& c : pool.candidates)
          if (c.support > best->support) best = &c;
        result["node_id"] = nullptr;
        result["point_indices"] = best->point_indices;
      }
      write_file(dest, result.dump(2) + "\n");
      continue;
    }

    const auto graph_path = query_dir(q) / "graph.json";
    if (!std::filesystem::exists(graph_path))
      throw DependencyError("stage \"graph\" artifact missing for query " + q.query_id +
                            "; run the graph stage first");
    const SceneGraph graph = load_scene_graph(graph_path);
    result["mode"] = "graph";

    bool has_int = false;
    for (const auto& n : graph.nodes) has_int |= n.kind == GraphNode::Kind::INT;
    if (!has_int) {
      result["node_id"] = nullptr;
      result["point_indices"] = json::array();
      write_file(dest, result.dump(2) + "\n");
      continue;
    }

    const std::string graph_json = serialize_graph(graph);
    const std::string key = hex64(fnv1a64(config_.snapshot_json() + "|select|" + q.text + "|" +
                                          graph_json + "|" + scene_fingerprint()));
    if (cache_ && cache_->fetch("select", key, dest)) continue;

    SelectionRequest request;
    request.graph_json = graph_json;
    request.topdown_render = render_topdown_raster(graph, scene_.cloud);
    const auto crops_dir = query_dir(q) / "crops";
    for (const auto& n : graph.nodes) {
      const auto crop_path = crops_dir / ("node_" + std::to_string(n.node_id) + ".png");
      if (std::filesystem::exists(crop_path))
        request.node_crops[n.node_id] = read_png_rgb8(crop_path);
    }
    request.instruction = q.text;

    const int node_id = backends_.selector->select(request, static_cast<int>(graph.nodes.size()));
    const GraphNode* node = graph.find(node_id);
    if (!node) throw SelectionError("selected node " + std::to_string(node_id) + " not in graph");
    if (node->kind != GraphNode::Kind::INT)
      throw SelectionError("selected node " + std::to_string(node_id) +
                           " is a CTX node, expected an interactive instance");

    result["node_id"] = node_id;
    result["point_indices"] = node->point_indices;
    write_file(dest, result.dump(2) + "\n");
    if (cache_) cache_->store("select", key, dest);
  }
}

RunResult PipelineRunner::stage_eval() {
  const auto gt_path = scene_root_ / "gt.json";
  if (!std::filesystem::exists(gt_path))
    throw ValidationError("evaluation needs ground truth: missing " + gt_path.string());
  const json gt = json::parse(read_file(gt_path));

  RunResult run;
  for (const auto& q : queries_) {
    const auto select_path = query_dir(q) / "select.json";
    if (!std::filesystem::exists(select_path))
      throw DependencyError("stage \"select\" artifact missing for query " + q.query_id +
                            "; run the select stage first");
    const json sel = json::parse(read_file(select_path));
    if (!gt.contains(q.query_id))
      throw ValidationError("gt.json has no entry for query " + q.query_id);

    std::optional<std::vector<int>> predicted;
    const auto& idx = sel.at("point_indices");
    if (!idx.empty()) predicted = idx.get<std::vector<int>>();
    run.records.push_back(
        make_record(q.query_id, std::move(predicted), gt.at(q.query_id).get<std::vector<int>>()));
  }
  run.metrics = compute_metrics(run.records);

  json records = json::array();
  for (const auto& r : run.records) {
    json rj;
    rj["query_id"] = r.query_id;
    rj["iou"] = r.iou;
    rj["predicted"] = r.predicted ? json(*r.predicted) : json(nullptr);
    rj["ground_truth_size"] = r.ground_truth.size();
    records.push_back(std::move(rj));
  }
  write_file(out_dir_ / "records.json", records.dump(2) + "\n");

  // Macro over queries is the headline; the per-scene grouping (query ids are
  // "<scene>/<name>") and its macro average are recorded alongside.
  auto metrics_json = [](const Metrics& m) {
    return json{{"AP50", m.ap50}, {"AP25", m.ap25}, {"AR50", m.ar50},
                {"AR25", m.ar25}, {"mIoU", m.miou}};
  };
  std::map<std::string, std::vector<EvalRecord>> by_scene;
  for (const auto& r : run.records) {
    const auto slash = r.query_id.find('/');
    by_scene[slash == std::string::npos ? std::string("all") : r.query_id.substr(0, slash)]
        .push_back(r);
  }
  Metrics scene_macro;
  json per_scene = json::object();
  for (const auto& [scene_id, records_for_scene] : by_scene) {
    const Metrics m = compute_metrics(records_for_scene);
    per_scene[scene_id] = metrics_json(m);
    scene_macro.ap25 += m.ap25 / static_cast<double>(by_scene.size());
    scene_macro.ap50 += m.ap50 / static_cast<double>(by_scene.size());
    scene_macro.ar25 += m.ar25 / static_cast<double>(by_scene.size());
    scene_macro.ar50 += m.ar50 / static_cast<double>(by_scene.size());
    scene_macro.miou += m.miou / static_cast<double>(by_scene.size());
  }

  json metrics;
  metrics["macro_over_queries"] = metrics_json(run.metrics);
  metrics["macro_over_scenes"] = metrics_json(scene_macro);
  metrics["per_scene"] = std::move(per_scene);
  write_file(out_dir_ / "metrics.json", metrics.dump(2) + "\n");

  std::ostringstream table;
  table << "metric  value\n";
  table << "AP50    " << fmt_metric(run.metrics.ap50) << "\n";
  table << "AP25    " << fmt_metric(run.metrics.ap25) << "\n";
  table << "AR50    " << fmt_metric(run.metrics.ar50) << "\n";
  table << "AR25    " << fmt_metric(run.metrics.ar25) << "\n";
  table << "mIoU    " << fmt_metric(run.metrics.miou) << "\n";
  write_file(out_dir_ / "metrics.txt", table.str());

  return run;
}

RunResult PipelineRunner::run_all() {
  stage_parse();
  stage_ground();
  stage_fuse();
  stage_graph();
  stage_select();
  return stage_eval();
}

}  // namespace ag
