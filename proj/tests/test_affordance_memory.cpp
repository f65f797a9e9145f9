#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ag/affordance_memory.hpp"
#include "ag/common.hpp"
#include "ag/synthetic.hpp"
#include "oracles.hpp"

using namespace ag;
namespace fs = std::filesystem;

namespace {

std::vector<std::pair<int, double>> as_residuals(const std::vector<double>& values) {
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.emplace_back(static_cast<int>(i), values[i]);
  return out;
}

}  // namespace

TEST_CASE("depth filter: degenerate MAD hits the floor") {
  // residuals {0.01, 0.01, 0.01}: MAD=0, tau=max(0.05, 0)=0.05, all retained
  auto kept = depth_consistency_filter(as_residuals({0.01, 0.01, 0.01}), {});
  CHECK(kept == std::vector<int>{0, 1, 2});
}

TEST_CASE("depth filter: outlier rejected under the floor threshold") {
  // {0,0,0,0,1.0}: median 0, MAD 0, tau 0.05 -> the 1.0 point rejected
  auto kept = depth_consistency_filter(as_residuals({0, 0, 0, 0, 1.0}), {});
  CHECK(kept == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("depth filter: hand-evaluated median/MAD case") {
  // {0.10, 0.12, 0.14, 0.50}: median 0.13, MAD 0.02, tau max(0.05, 0.06)=0.06
  // -> 0.50 rejected (|0.37| >= 0.06)
  auto kept = depth_consistency_filter(as_residuals({0.10, 0.12, 0.14, 0.50}), {});
  CHECK(kept == std::vector<int>{0, 1, 2});
}

TEST_CASE("depth filter: empty input, empty output") {
  CHECK(depth_consistency_filter({}, {}).empty());
}

TEST_CASE("depth filter agrees exactly with an independent median/MAD oracle") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    std::vector<std::pair<int, double>> residuals;
    for (int i = 0; i < n; ++i) {
      double r = rng.uniform(-0.05, 0.05);
      if (rng.below(5) == 0) r += rng.uniform(0.2, 1.5);  // occlusion outliers
      residuals.emplace_back(i, r);
    }
    CHECK(depth_consistency_filter(residuals, {}) == oracle::mad_filter(residuals, 3.0, 0.05));
  }
}

TEST_CASE("depth filter idempotence on retained sets") {
  SplitMix64 rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(30));
    std::vector<std::pair<int, double>> residuals;
    for (int i = 0; i < n; ++i)
      residuals.emplace_back(i, rng.uniform(-0.02, 0.02));  // spread < tau_min
    auto first = depth_consistency_filter(residuals, {});
    std::vector<std::pair<int, double>> surviving;
    for (int idx : first) surviving.push_back(residuals[static_cast<std::size_t>(idx)]);
    auto second = depth_consistency_filter(surviving, {});
    CHECK(second.size() == surviving.size());  // fixed point
  }
}

TEST_CASE("frame score extremes") {
  Frame frame;
  frame.index = 0;
  frame.intrinsics = {100, 100, 64, 48, 128, 96};
  frame.rgb = Image8(128, 96, 3);
  frame.depth = DepthMap(128, 96, 1.f);

  SUBCASE("mask centroid at image center, nearest camera") {
    Mask mask(128, 96);
    mask.set(64, 48);
    SequenceStats stats{0.5, 2.0};  // this camera at distance 0.5 -> inv 2.0 == max
    frame.pose.translation = Eigen::Vector3d(0, 0, -0.5);
    auto s = frame_quality_score(mask, frame, Eigen::Vector3d(0, 0, 0), stats);
    CHECK(s.centrality == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.proximity == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.score == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("mask centroid at image corner zeroes centrality") {
    Mask mask(128, 96);
    mask.set(0, 0);
    SequenceStats stats{1.0, 2.0};
    frame.pose.translation = Eigen::Vector3d(0, 0, -0.75);
    auto s = frame_quality_score(mask, frame, Eigen::Vector3d(0, 0, 0), stats);
    CHECK(s.centrality == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.score == doctest::Approx(0.5 * s.proximity).epsilon(1e-9));
  }
  SUBCASE("min-max proximity over distances 1 m and 2 m") {
    Mask mask(128, 96);
    mask.set(64, 48);
    SequenceStats stats{0.5, 1.0};  // inv of 2 m and 1 m
    frame.pose.translation = Eigen::Vector3d(0, 0, -1.0);
    auto near = frame_quality_score(mask, frame, Eigen::Vector3d(0, 0, 0), stats);
    CHECK(near.proximity == doctest::Approx(1.0).epsilon(1e-9));
    frame.pose.translation = Eigen::Vector3d(0, 0, -2.0);
    auto far = frame_quality_score(mask, frame, Eigen::Vector3d(0, 0, 0), stats);
    CHECK(far.proximity == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("score components stay in [0,1]") {
  SplitMix64 rng(5);
  Frame frame;
  frame.intrinsics = {100, 100, 64, 48, 128, 96};
  frame.rgb = Image8(128, 96, 3);
  frame.depth = DepthMap(128, 96, 1.f);
  for (int trial = 0; trial < 200; ++trial) {
    Mask mask(128, 96);
    mask.set(static_cast<int>(rng.below(128)), static_cast<int>(rng.below(96)));
    SequenceStats stats;
    stats.min_inv_dist = rng.uniform(0.1, 1.0);
    stats.max_inv_dist = stats.min_inv_dist + rng.uniform(0, 2.0);
    frame.pose.translation = Eigen::Vector3d(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    auto s = frame_quality_score(mask, frame, Eigen::Vector3d::Zero(), stats);
    CHECK(s.centrality >= 0.0);
    CHECK(s.centrality <= 1.0);
    CHECK(s.proximity >= 0.0);
    CHECK(s.proximity <= 1.0);
    CHECK(s.score >= 0.0);
    CHECK(s.score <= 1.0);
  }
}

TEST_CASE("top-k equals the prefix of a brute-force stable sort") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<FrameScore> scores;
    const int n = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) {
      FrameScore s;
      s.scene_id = "scene" + std::to_string(rng.below(4));
      s.frame_index = static_cast<int>(rng.below(50));
      s.score = rng.below(8) / 7.0;  // coarse grid forces ties
      scores.push_back(s);
    }
    const int k = 1 + static_cast<int>(rng.below(25));

    auto full = scores;
    std::sort(full.begin(), full.end(), [](const FrameScore& a, const FrameScore& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
      return a.frame_index < b.frame_index;
    });
    if (full.size() > static_cast<std::size_t>(k)) full.resize(static_cast<std::size_t>(k));

    auto got = select_top_k(scores, k);
    REQUIRE(got.size() == full.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].scene_id == full[i].scene_id);
      CHECK(got[i].frame_index == full[i].frame_index);
      CHECK(got[i].score == full[i].score);
    }
  }
}

TEST_CASE("top-k tie-break prefers the lexicographically earlier scene") {
  FrameScore a{"a", 3, 0, 0, 0.8};
  FrameScore b{"b", 1, 0, 0, 0.8};
  FrameScore c{"c", 2, 0, 0, 0.9};
  auto got = select_top_k({b, c, a}, 2);
  REQUIRE(got.size() == 2);
  CHECK(got[0].scene_id == "c");
  CHECK(got[1].scene_id == "a");
}

TEST_CASE("top-k with fewer inputs than k returns everything") {
  FrameScore a{"a", 0, 0, 0, 0.1};
  CHECK(select_top_k({a, a, a}, 20).size() == 3);
  CHECK_THROWS_AS(select_top_k({a}, 0), ContractViolation);
}

TEST_CASE("convex hull fill: triangle contains its generators") {
  std::vector<std::pair<int, int>> pts = {{0, 0}, {10, 0}, {0, 10}};
  Mask mask = convex_hull_fill(pts, 16, 16);
  for (const auto& [x, y] : pts) CHECK(mask.test(x, y));
  CHECK(mask.test(2, 2));      // interior
  CHECK(!mask.test(9, 9));     // outside the hypotenuse
}

TEST_CASE("convex hull fill: inclusive square area matches the rasterization oracle") {
  std::vector<std::pair<int, int>> pts = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  Mask mask = convex_hull_fill(pts, 16, 16);
  CHECK(mask.count() == 121);
  CHECK(mask.count() == oracle::hull_area_pixels(pts));
}

TEST_CASE("convex hull fill: random hulls match the oracle") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<int, int>> pts;
    const int n = 3 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i)
      pts.emplace_back(static_cast<int>(rng.below(40)), static_cast<int>(rng.below(40)));
    const std::size_t expected = oracle::hull_area_pixels(pts);
    if (expected == 0) continue;  // degenerate; covered below
    Mask mask = convex_hull_fill(pts, 48, 48);
    CHECK(mask.count() == expected);
    for (const auto& [x, y] : pts) CHECK(mask.test(x, y));
  }
}

TEST_CASE("convex hull fill: collinear input dilates the segment") {
  Mask mask = convex_hull_fill({{0, 0}, {5, 0}, {10, 0}}, 16, 16);
  CHECK(mask.test(5, 0));
  CHECK(mask.test(5, 1));  // dilated
  CHECK(mask.test(4, 1));
  CHECK(!mask.test(5, 3));
  CHECK_THROWS_AS(convex_hull_fill({}, 16, 16), ContractViolation);
}

namespace {

SyntheticSceneSpec small_spec(std::uint64_t seed, int frames = 15) {
  SyntheticSceneSpec spec;
  spec.seed = seed;
  spec.frame_count = frames;
  spec.image_width = 96;
  spec.image_height = 72;
  spec.focal = 90;
  spec.cloud_spacing = 0.02;
  spec.cabinets[0].drawer_count = 2;
  return spec;
}

}  // namespace

TEST_CASE("memory bank: global top-k across two scenes, ordered by score") {
  auto a = generate_synthetic_scene(small_spec(1));
  auto b = generate_synthetic_scene(small_spec(2));

  std::vector<AffordanceAnnotation> annotations;
  for (const auto& ann : a.annotations) annotations.push_back(ann);
  for (const auto& ann : b.annotations) annotations.push_back(ann);
  std::map<std::string, const SceneSequence*> scenes{{a.scene.scene_id, &a.scene},
                                                     {b.scene.scene_id, &b.scene}};

  const MemoryBank bank = build_memory_bank(annotations, scenes, {}, 20);
  REQUIRE(bank.entries.count("handle"));
  const auto& exemplars = bank.entries.at("handle");
  CHECK(exemplars.size() == 20);  // 30 visible frames pooled, k=20 kept
  for (std::size_t i = 1; i < exemplars.size(); ++i)
    CHECK(exemplars[i - 1].score.score >= exemplars[i].score.score);
  // both source scenes contribute
  std::set<std::string> sources;
  for (const auto& ex : exemplars) sources.insert(ex.scene_id);
  CHECK(sources.size() == 2);
  CHECK(bank.source_scene_ids == std::set<std::string>{a.scene.scene_id, b.scene.scene_id});
  for (const auto& ex : exemplars) {
    CHECK(!ex.mask.empty_mask());
    CHECK(ex.overlay.width == 96);
  }
}

TEST_CASE("memory bank: invisible category is absent, visible one is unaffected") {
  auto synth = generate_synthetic_scene(small_spec(3));
  std::map<std::string, const SceneSequence*> scenes{{synth.scene.scene_id, &synth.scene}};

  // Fabricate a category whose points sit far outside every frustum.
  SceneSequence& scene = synth.scene;
  AffordanceAnnotation ghost;
  ghost.category = "ghost";
  ghost.scene_id = scene.scene_id;
  scene.cloud.points.emplace_back(0, -50.0, 0);  // behind every camera in the arc
  if (!scene.cloud.colors.empty()) scene.cloud.colors.push_back({0, 0, 0});
  ghost.point_indices = {static_cast<int>(scene.cloud.size()) - 1};

  auto annotations = synth.annotations;
  annotations.push_back(ghost);
  const MemoryBank bank = build_memory_bank(annotations, scenes, {}, 5);
  CHECK(bank.entries.count("handle") == 1);
  CHECK(bank.entries.count("ghost") == 0);
}

TEST_CASE("find_visible_frames: frustum and valid-depth gating") {
  auto synth = generate_synthetic_scene(small_spec(6, 8));
  const auto visible = find_visible_frames(synth.annotations.at(0), synth.scene);
  CHECK(!visible.empty());  // frontal arc sees the handles

  AffordanceAnnotation ghost;
  ghost.category = "ghost";
  ghost.scene_id = synth.scene.scene_id;
  synth.scene.cloud.points.emplace_back(0, -50.0, 0);
  if (!synth.scene.cloud.colors.empty()) synth.scene.cloud.colors.push_back({0, 0, 0});
  ghost.point_indices = {static_cast<int>(synth.scene.cloud.size()) - 1};
  CHECK(find_visible_frames(ghost, synth.scene).empty());
}

TEST_CASE("recall: exact, normalized, and unseen labels") {
  auto synth = generate_synthetic_scene(small_spec(4, 8));
  std::map<std::string, const SceneSequence*> scenes{{synth.scene.scene_id, &synth.scene}};
  const MemoryBank bank = build_memory_bank(synth.annotations, scenes, {}, 5);

  CHECK(!recall(bank, "handle").empty());
  CHECK(recall(bank, " Handle ").size() == recall(bank, "handle").size());
  CHECK(recall(bank, "pedal").empty());  // unseen category: no prior
  CHECK_THROWS_AS(recall(bank, ""), ContractViolation);
}

TEST_CASE("bank save/load round trip and leakage assertion") {
  const fs::path dir = fs::temp_directory_path() / "ag_test_bank";
  fs::remove_all(dir);

  auto synth = generate_synthetic_scene(small_spec(5, 8));
  std::map<std::string, const SceneSequence*> scenes{{synth.scene.scene_id, &synth.scene}};
  const MemoryBank bank = build_memory_bank(synth.annotations, scenes, {}, 5);
  save_bank(bank, dir);
  const MemoryBank loaded = load_bank(dir);

  CHECK(loaded.k_recall == bank.k_recall);
  CHECK(loaded.source_scene_ids == bank.source_scene_ids);
  REQUIRE(loaded.entries.count("handle"));
  const auto& a = bank.entries.at("handle");
  const auto& b = loaded.entries.at("handle");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].scene_id == b[i].scene_id);
    CHECK(a[i].frame_index == b[i].frame_index);
    CHECK(a[i].score.score == doctest::Approx(b[i].score.score).epsilon(1e-12));
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].overlay == b[i].overlay);
  }

  CHECK_THROWS_AS(assert_no_leakage(bank, synth.scene.scene_id), LeakageError);
  CHECK_NOTHROW(assert_no_leakage(bank, "some-other-scene"));
}

TEST_CASE("bank persistence is deterministic") {
  const fs::path dir_a = fs::temp_directory_path() / "ag_test_bank_det_a";
  const fs::path dir_b = fs::temp_directory_path() / "ag_test_bank_det_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  auto synth = generate_synthetic_scene(small_spec(8, 6));
  std::map<std::string, const SceneSequence*> scenes{{synth.scene.scene_id, &synth.scene}};
  save_bank(build_memory_bank(synth.annotations, scenes, {}, 4), dir_a);
  save_bank(build_memory_bank(synth.annotations, scenes, {}, 4), dir_b);

  for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir_a);
    std::ifstream fa(entry.path(), std::ios::binary), fb(dir_b / rel, std::ios::binary);
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
  }
}
