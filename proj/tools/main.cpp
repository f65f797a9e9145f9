#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "ag/affordance_memory.hpp"
#include "ag/common.hpp"
#include "ag/pipeline.hpp"
#include "ag/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;
constexpr int kExitLeakage = 4;

struct PipelineArgs {
  std::string scene_root;
  std::string query_file;
  std::string bank_dir;
  std::string out_dir = "out";
  std::string config_file;
  std::string backend = "mock-oracle";
  std::string scenario;
  std::string replay_file;
  std::string cache_dir;
  std::vector<std::string> ablations;
  bool noisy_segmenter = false;
  int concurrency = 4;
};

void add_pipeline_options(CLI::App* cmd, PipelineArgs& args) {
  cmd->add_option("--scene", args.scene_root, "target scene directory")->required();
  cmd->add_option("--queries", args.query_file, "query file (JSON array of {query_id, text}); defaults to <scene>/queries.json");
  cmd->add_option("--bank", args.bank_dir, "memory bank directory");
  cmd->add_option("--out", args.out_dir, "output directory for stage artifacts");
  cmd->add_option("--config", args.config_file, "JSON config file; flags override it");
  cmd->add_option("--backend", args.backend, "http | mock-oracle | mock-replay")
      ->check(CLI::IsMember({"http", "mock-oracle", "mock-replay"}));
  cmd->add_option("--scenario", args.scenario, "scenario directory for mock backends (defaults to --scene)");
  cmd->add_option("--replay", args.replay_file, "replay file for mock-replay");
  cmd->add_option("--cache", args.cache_dir, "stage cache directory");
  cmd->add_option("--ablate", args.ablations, "repeatable: memory | adversarial | graph")
      ->check(CLI::IsMember({"memory", "adversarial", "graph"}));
  cmd->add_flag("--noisy-segmenter", args.noisy_segmenter, "mock segmenter adds one spurious mask per frame");
  cmd->add_option("--concurrency", args.concurrency, "max in-flight backend requests");
}

ag::PipelineConfig build_config(const PipelineArgs& args) {
  ag::PipelineConfig config;
  if (!args.config_file.empty())
    config = ag::PipelineConfig::from_json_file(args.config_file);
  config.backend = args.backend;
  if (!args.scenario.empty()) config.scenario_path = args.scenario;
  if (!args.replay_file.empty()) config.replay_file = args.replay_file;
  if (!args.cache_dir.empty()) config.cache_dir = args.cache_dir;
  config.noisy_segmenter = config.noisy_segmenter || args.noisy_segmenter;
  config.concurrency = args.concurrency;
  for (const auto& a : args.ablations) {
    if (a == "memory") config.ablate_memory = true;
    if (a == "adversarial") config.ablate_adversarial = true;
    if (a == "graph") config.ablate_graph = true;
  }
  return config;
}

ag::PipelineRunner make_runner(const PipelineArgs& args) {
  const std::string query_file =
      args.query_file.empty() ? args.scene_root + "/queries.json" : args.query_file;
  std::optional<std::filesystem::path> bank;
  if (!args.bank_dir.empty()) bank = args.bank_dir;
  return ag::PipelineRunner(build_config(args), args.scene_root, query_file, bank, args.out_dir);
}

void print_metrics(const ag::Metrics& m) {
  std::printf("AP50 %.4f  AP25 %.4f  AR50 %.4f  AR25 %.4f  mIoU %.4f\n",
              m.ap50, m.ap25, m.ar50, m.ar25, m.miou);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D functional affordance grounding over posed RGB-D sequences"};
  app.require_subcommand(1);

  // ---- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a deterministic synthetic scene");
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  int synth_cabinets = 1, synth_drawers = 3, synth_frames = 24;
  int synth_width = 160, synth_height = 120;
  double synth_radius = 1.7, synth_camera_height = 0.7, synth_arc = 150, synth_spacing = 0.012;
  bool synth_occluder = false;
  std::string synth_depth_format = "f32";
  synth->add_option("--out", synth_out, "output scene directory")->required();
  synth->add_option("--seed", synth_seed, "random seed (also names the scene: synth-<seed>)");
  synth->add_option("--cabinets", synth_cabinets)->check(CLI::Range(1, 4));
  synth->add_option("--drawers", synth_drawers)->check(CLI::Range(0, 8));
  synth->add_option("--frames", synth_frames)->check(CLI::Range(1, 512));
  synth->add_option("--width", synth_width);
  synth->add_option("--height", synth_height);
  synth->add_option("--radius", synth_radius, "camera orbit radius, meters");
  synth->add_option("--camera-height", synth_camera_height, "camera height, meters");
  synth->add_option("--arc", synth_arc, "orbit arc, degrees");
  synth->add_option("--spacing", synth_spacing, "cloud sample spacing, meters");
  synth->add_flag("--occluder", synth_occluder, "add a pillar between cameras and cabinet");
  synth->add_option("--depth-format", synth_depth_format, "f32 | png16")
      ->check(CLI::IsMember({"f32", "png16"}));

  // ---- build-memory --------------------------------------------------------
  auto* build = app.add_subcommand("build-memory", "build a memory bank from annotated scenes");
  std::vector<std::string> build_scenes;
  std::string build_out;
  int build_k_recall = 20;
  double build_k = 3.0, build_tau_min = 0.05, build_w1 = 0.5, build_w2 = 0.5;
  build->add_option("--scene", build_scenes, "source scene directory (repeatable); needs annotations.json")
      ->required();
  build->add_option("--out", build_out, "bank output directory")->required();
  build->add_option("--k-recall", build_k_recall, "exemplars kept per category");
  build->add_option("--k", build_k, "depth filter MAD multiplier");
  build->add_option("--tau-min", build_tau_min, "depth filter floor, meters");
  build->add_option("--w1", build_w1, "centrality weight");
  build->add_option("--w2", build_w2, "proximity weight");

  // ---- pipeline stages -------------------------------------------------------
  std::map<std::string, PipelineArgs> stage_args;
  for (const char* name : {"parse", "ground", "fuse", "graph", "select", "eval", "run"}) {
    auto* cmd = app.add_subcommand(name, std::string("pipeline stage: ") + name);
    add_pipeline_options(cmd, stage_args[name]);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      ag::SyntheticSceneSpec spec;
      spec.seed = synth_seed;
      spec.frame_count = synth_frames;
      spec.image_width = synth_width;
      spec.image_height = synth_height;
      spec.orbit_radius = synth_radius;
      spec.orbit_height = synth_camera_height;
      spec.arc_degrees = synth_arc;
      spec.cloud_spacing = synth_spacing;
      spec.cabinets.clear();
      for (int i = 0; i < synth_cabinets; ++i) {
        ag::CabinetSpec cab;
        cab.center = Eigen::Vector3d(i * 0.9 - (synth_cabinets - 1) * 0.45, 0, 0.55);
        cab.drawer_count = synth_drawers;
        spec.cabinets.push_back(cab);
      }
      if (synth_occluder) {
        ag::Aabb occ;
        occ.lo = Eigen::Vector3d(-0.45, -0.85, 0.0);
        occ.hi = Eigen::Vector3d(-0.27, -0.75, 1.35);
        spec.occluder = occ;
      }
      const auto scene = ag::generate_synthetic_scene(spec);
      ag::save_synthetic_scene(scene, synth_out,
                               synth_depth_format == "png16" ? ag::DepthFormat::png16_mm
                                                             : ag::DepthFormat::raw_f32_m);
      std::printf("wrote %s (%zu frames, %zu points, %zu queries)\n", synth_out.c_str(),
                  scene.scene.frames.size(), scene.scene.cloud.size(), scene.queries.size());
      return kExitOk;
    }

    if (build->parsed()) {
      std::vector<ag::SceneSequence> scenes;
      scenes.reserve(build_scenes.size());
      std::vector<ag::AffordanceAnnotation> annotations;
      for (const auto& dir : build_scenes) {
        scenes.push_back(ag::load_scene(dir));
        auto anns = ag::load_annotations(std::filesystem::path(dir) / "annotations.json",
                                         scenes.back().scene_id, scenes.back().cloud.size());
        annotations.insert(annotations.end(), anns.begin(), anns.end());
      }
      std::map<std::string, const ag::SceneSequence*> by_id;
      for (const auto& s : scenes) by_id[s.scene_id] = &s;
      ag::DepthFilterParams params{build_k, build_tau_min};
      const ag::MemoryBank bank =
          ag::build_memory_bank(annotations, by_id, params, build_k_recall, build_w1, build_w2);
      ag::save_bank(bank, build_out);
      std::printf("wrote bank %s (%zu categories, %zu source scenes)\n", build_out.c_str(),
                  bank.entries.size(), bank.source_scene_ids.size());
      return kExitOk;
    }

    for (const auto& [name, args] : stage_args) {
      auto* cmd = app.get_subcommand(name);
      if (!cmd->parsed()) continue;
      ag::PipelineRunner runner = make_runner(args);
      if (name == "parse") runner.stage_parse();
      else if (name == "ground") runner.stage_ground();
      else if (name == "fuse") runner.stage_fuse();
      else if (name == "graph") runner.stage_graph();
      else if (name == "select") runner.stage_select();
      else if (name == "eval") print_metrics(runner.stage_eval().metrics);
      else print_metrics(runner.run_all().metrics);
      return kExitOk;
    }
  } catch (const ag::LeakageError& e) {
    std::fprintf(stderr, "leakage refusal: %s\n", e.what());
    return kExitLeakage;
  } catch (const ag::BackendError& e) {
    std::fprintf(stderr, "backend failure: %s\n", e.what());
    return kExitBackend;
  } catch (const ag::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitValidation;
  } catch (const ag::ContractViolation& e) {
    std::fprintf(stderr, "contract violation: %s\n", e.what());
    return kExitValidation;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
