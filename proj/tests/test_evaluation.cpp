#include <doctest.h>

#include "ag/common.hpp"
#include "ag/evaluation.hpp"
#include "ag/synthetic.hpp"
#include "oracles.hpp"

using namespace ag;

TEST_CASE("3D mask IoU basics") {
  std::vector<int> a = {1, 2, 3};
  CHECK(mask_iou_3d(a, a) == doctest::Approx(1.0));
  CHECK(mask_iou_3d(a, std::vector<int>{7, 8}) == doctest::Approx(0.0));
  CHECK(mask_iou_3d({}, {}) == doctest::Approx(0.0));  // both empty -> 0 by convention

  // |a| = |b| = 10, overlap 5 -> 5/15
  std::vector<int> x, y;
  for (int i = 0; i < 10; ++i) x.push_back(i);
  for (int i = 5; i < 15; ++i) y.push_back(i);
  CHECK(mask_iou_3d(x, y) == doctest::Approx(5.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("IoU symmetry on random sets") {
  SplitMix64 rng(80);
  for (int trial = 0; trial < 200; ++trial) {
    std::set<int> sa, sb;
    for (int i = 0; i < 30; ++i) {
      sa.insert(static_cast<int>(rng.below(50)));
      sb.insert(static_cast<int>(rng.below(50)));
    }
    std::vector<int> a(sa.begin(), sa.end()), b(sb.begin(), sb.end());
    CHECK(mask_iou_3d(a, b) == mask_iou_3d(b, a));
  }
}

TEST_CASE("metrics: single-record thresholds") {
  auto rec = [](double iou) {
    EvalRecord r;
    r.query_id = "q";
    r.iou = iou;
    return r;
  };
  Metrics m = compute_metrics({rec(0.6)});
  CHECK(m.ap50 == doctest::Approx(1.0));
  CHECK(m.ap25 == doctest::Approx(1.0));
  CHECK(m.ar50 == doctest::Approx(1.0));
  CHECK(m.ar25 == doctest::Approx(1.0));
  CHECK(m.miou == doctest::Approx(0.6));

  m = compute_metrics({rec(0.3)});
  CHECK(m.ap25 == doctest::Approx(1.0));
  CHECK(m.ap50 == doctest::Approx(0.0));
  CHECK(m.miou == doctest::Approx(0.3));
}

TEST_CASE("metrics: hand-computed 4-query table") {
  auto rec = [](double iou) {
    EvalRecord r;
    r.iou = iou;
    return r;
  };
  const std::vector<EvalRecord> records = {rec(0.0), rec(0.3), rec(0.6), rec(0.9)};
  const Metrics m = compute_metrics(records);
  CHECK(m.ap25 == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.ap50 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.miou == doctest::Approx(0.45).epsilon(1e-12));

  const auto counted = oracle::count_metrics({0.0, 0.3, 0.6, 0.9});
  CHECK(m.ap25 == doctest::Approx(counted.ap25));
  CHECK(m.ap50 == doctest::Approx(counted.ap50));
  CHECK(m.miou == doctest::Approx(counted.miou));
}

TEST_CASE("metrics: empty record list is a contract violation") {
  CHECK_THROWS_AS(compute_metrics({}), ContractViolation);
}

TEST_CASE("metrics: AP25 >= AP50 on random record sets") {
  SplitMix64 rng(81);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EvalRecord> records;
    const int n = 1 + static_cast<int>(rng.below(20));
    std::vector<double> ious;
    for (int i = 0; i < n; ++i) {
      EvalRecord r;
      r.iou = rng.uniform();
      ious.push_back(r.iou);
      records.push_back(r);
    }
    const Metrics m = compute_metrics(records);
    CHECK(m.ap25 >= m.ap50);
    CHECK(m.ar25 >= m.ar50);
    const auto counted = oracle::count_metrics(ious);
    CHECK(m.ap25 == doctest::Approx(counted.ap25).epsilon(1e-12));
    CHECK(m.ap50 == doctest::Approx(counted.ap50).epsilon(1e-12));
  }
}

TEST_CASE("make_record: missing prediction scores zero") {
  const EvalRecord r = make_record("q", std::nullopt, {1, 2, 3});
  CHECK(r.iou == 0.0);
  CHECK(!r.predicted.has_value());

  const EvalRecord exact = make_record("q", std::vector<int>{3, 1, 2}, {1, 2, 3});
  CHECK(exact.iou == doctest::Approx(1.0));  // sorting is handled internally
}

TEST_CASE("synthetic generator: determinism and structure") {
  SyntheticSceneSpec spec;
  spec.seed = 33;
  spec.frame_count = 4;
  spec.image_width = 64;
  spec.image_height = 48;
  spec.focal = 60;
  spec.cloud_spacing = 0.03;

  const auto a = generate_synthetic_scene(spec);
  const auto b = generate_synthetic_scene(spec);
  CHECK(a.scene.cloud.size() == b.scene.cloud.size());
  for (std::size_t i = 0; i < a.scene.cloud.size(); ++i)
    CHECK((a.scene.cloud.points[i] - b.scene.cloud.points[i]).norm() == 0.0);
  for (std::size_t t = 0; t < a.scene.frames.size(); ++t) {
    CHECK(a.scene.frames[t].depth == b.scene.frames[t].depth);
    CHECK(a.scene.frames[t].rgb == b.scene.frames[t].rgb);
  }

  // 3 drawers -> 3 handles -> ordinal queries from both ends
  CHECK(a.queries.size() == 6);
  CHECK(a.queries[0].text == "the handle of the first drawer from the top");

  // GT sets exactly partition the handle annotation
  std::set<int> all_handles(a.annotations.at(0).point_indices.begin(),
                            a.annotations.at(0).point_indices.end());
  std::set<int> from_queries;
  for (std::size_t k = 0; k < 3; ++k)  // top-1..3 cover each handle once
    from_queries.insert(a.queries[k].gt_indices.begin(), a.queries[k].gt_indices.end());
  CHECK(from_queries == all_handles);
}

TEST_CASE("synthetic generator: depth matches an in-test ray cast") {
  SyntheticSceneSpec spec;
  spec.seed = 34;
  spec.frame_count = 3;
  spec.image_width = 64;
  spec.image_height = 48;
  spec.focal = 60;
  spec.cloud_spacing = 0.04;
  const auto synth = generate_synthetic_scene(spec);

  for (const auto& frame : synth.scene.frames) {
    for (int y = 0; y < frame.intrinsics.height; y += 7) {
      for (int x = 0; x < frame.intrinsics.width; x += 5) {
        const Eigen::Vector3d dir_cam((x - frame.intrinsics.cx) / frame.intrinsics.fx,
                                      (y - frame.intrinsics.cy) / frame.intrinsics.fy, 1.0);
        const Eigen::Vector3d dir = frame.pose.rotation * dir_cam;
        double best = std::numeric_limits<double>::max();
        for (const auto& inst : synth.instances) {
          auto d = ray_aabb_depth(frame.pose.translation, dir, inst.box);
          if (d && *d < best) best = *d;
        }
        const float expected =
            best == std::numeric_limits<double>::max() ? 0.f : static_cast<float>(best);
        CHECK(frame.depth.at(x, y) == expected);
      }
    }
  }
}

TEST_CASE("synthetic generator: overlapping handles are rejected") {
  SyntheticSceneSpec spec;
  spec.seed = 35;
  spec.cabinets.resize(2);
  spec.cabinets[0].center = Eigen::Vector3d(0, 0, 0.55);
  spec.cabinets[1].center = Eigen::Vector3d(0.001, 0, 0.55);  // same spot -> handles collide
  CHECK_THROWS_AS(generate_synthetic_scene(spec), ValidationError);
}

TEST_CASE("synthetic generator: invalid specs are rejected") {
  SyntheticSceneSpec spec;
  spec.cabinets.clear();
  CHECK_THROWS_AS(generate_synthetic_scene(spec), ValidationError);

  spec = SyntheticSceneSpec{};
  spec.frame_count = 0;
  CHECK_THROWS_AS(generate_synthetic_scene(spec), ValidationError);

  spec = SyntheticSceneSpec{};
  spec.cloud_spacing = 0;
  CHECK_THROWS_AS(generate_synthetic_scene(spec), ValidationError);
}
