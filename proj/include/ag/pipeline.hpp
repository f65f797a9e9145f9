#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ag/affordance_memory.hpp"
#include "ag/backends.hpp"
#include "ag/evaluation.hpp"
#include "ag/fusion.hpp"
#include "ag/query.hpp"
#include "ag/scene_graph.hpp"

namespace ag {

struct PipelineConfig {
  DepthFilterParams filter;       // k=3, tau_min=0.05 m
  VotingParams voting;            // rho0=0.70, theta_vis=3, ratio mode
  double dbscan_eps = 0.03;
  int dbscan_min_pts = 5;
  double theta_iou = 0.30;
  double theta_rec = 0.60;
  int k_recall = 20;
  double w1 = 0.5, w2 = 0.5;

  std::string backend = "mock-oracle";  // http | mock-oracle | mock-replay
  std::filesystem::path scenario_path;  // mocks; defaults to the scene root
  std::filesystem::path replay_file;    // mock-replay only
  bool noisy_segmenter = false;
  int concurrency = 4;

  bool ablate_memory = false;       // text-only grounding, no recall
  bool ablate_adversarial = false;  // positive boxes only
  bool ablate_graph = false;        // largest-support candidate, no selection

  std::filesystem::path cache_dir;  // empty disables stage caching

  static PipelineConfig from_json_file(const std::filesystem::path& path);
  void apply_json(const std::string& text);
  std::string snapshot_json() const;  // deterministic, used for cache keys
};

struct QuerySpec {
  std::string query_id;
  std::string text;
};

std::vector<QuerySpec> load_queries(const std::filesystem::path& path);

struct RunResult {
  std::vector<EvalRecord> records;
  Metrics metrics;
};

/// Loads everything once and exposes the stages. Each stage persists its
/// artifact under out_dir and later stages read those artifacts, so stages can
/// also run one at a time across processes.
class PipelineRunner {
 public:
  PipelineRunner(PipelineConfig config,
                 const std::filesystem::path& scene_root,
                 const std::filesystem::path& query_file,
                 const std::optional<std::filesystem::path>& bank_dir,
                 const std::filesystem::path& out_dir);
  ~PipelineRunner();

  void stage_parse();
  void stage_ground();
  void stage_fuse();
  void stage_graph();
  void stage_select();
  RunResult stage_eval();

  RunResult run_all();

  const SceneSequence& scene() const { return scene_; }
  const std::vector<QuerySpec>& queries() const { return queries_; }

 private:
  struct StageCache;

  std::filesystem::path query_dir(const QuerySpec& q) const;
  ParsedQuery load_parsed(const QuerySpec& q) const;
  std::string scene_fingerprint() const;

  PipelineConfig config_;
  std::filesystem::path scene_root_;
  std::filesystem::path out_dir_;
  SceneSequence scene_;
  std::vector<QuerySpec> queries_;
  std::optional<MemoryBank> bank_;
  std::string bank_fingerprint_;
  BackendSet backends_;
  std::unique_ptr<StageCache> cache_;
};

}  // namespace ag
