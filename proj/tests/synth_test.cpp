#include <gtest/gtest.h>

#include <cmath>

#include "pgroup/clustering.hpp"
#include "pgroup/io.hpp"
#include "pgroup/losses.hpp"
#include "pgroup/scoring.hpp"
#include "pgroup/synth.hpp"

namespace pgroup {
namespace {

TEST(GenerateScene, DeterministicInSeed) {
  GenConfig cfg;
  cfg.seed = 17;
  cfg.adjacent_pairs = 1;
  const auto a = generate_scene(cfg);
  const auto b = generate_scene(cfg);
  EXPECT_EQ(format_scene(a.scene), format_scene(b.scene));
  EXPECT_EQ(format_offsets(a.offsets), format_offsets(b.offsets));
  set_num_threads(4);
  const auto c = generate_scene(cfg);
  set_num_threads(1);
  EXPECT_EQ(format_scene(a.scene), format_scene(c.scene));
  cfg.seed = 18;
  EXPECT_NE(format_scene(a.scene), format_scene(generate_scene(cfg).scene));
}

TEST(GenerateScene, Invariants) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenConfig cfg;
    cfg.seed = seed;
    cfg.adjacent_pairs = seed % 2;
    const auto gen = generate_scene(cfg);
    const auto& s = gen.scene;
    EXPECT_NO_THROW(validate_scene(s));
    EXPECT_EQ(s.n_instances(), cfg.n_objects);
    EXPECT_EQ(s.stuff_classes, (std::vector<ClassId>{kFloorClass, kWallClass}));
    std::size_t floor = 0;
    for (std::size_t i = 0; i < s.n_points(); ++i) {
      const auto& p = s.coords[i];
      EXPECT_GE(p.x, 0.F);
      EXPECT_LE(p.x, 4.F);
      EXPECT_GE(p.y, 0.F);
      EXPECT_LE(p.y, 4.F);
      EXPECT_GE(p.z, 0.F);
      EXPECT_LE(p.z, 2.F);
      EXPECT_EQ(s.is_stuff(s.sem_labels[i]), s.inst_ids[i] == kNoInstance);
      EXPECT_EQ(argmax_class(s.scores_of(i)), s.sem_labels[i]);
      floor += s.sem_labels[i] == kFloorClass ? 1 : 0;
    }
    EXPECT_EQ(floor, 2400U);
  }
}

TEST(GenerateScene, ShapesFollowClassCycle) {
  EXPECT_EQ(primitive_of(2), Primitive::kBox);
  EXPECT_EQ(primitive_of(3), Primitive::kCylinder);
  EXPECT_EQ(primitive_of(4), Primitive::kSphere);
  EXPECT_EQ(primitive_of(5), Primitive::kBox);
}

TEST(GenerateScene, RejectsBadConfig) {
  GenConfig cfg;
  cfg.n_classes = 2;
  EXPECT_THROW(generate_scene(cfg), ValidationError);
  cfg = {};
  cfg.adjacent_pairs = 5;
  EXPECT_THROW(generate_scene(cfg), ValidationError);
  cfg = {};
  cfg.n_objects = 500;
  EXPECT_THROW(generate_scene(cfg), Error);
  cfg = {};
  cfg.class_weights = {1.0};
  EXPECT_THROW(generate_scene(cfg), ValidationError);
}

TEST(GenerateScene, OracleOffsetsCollapseInstances) {
  const auto gen = generate_scene(GenConfig{.seed = 2});
  const auto q = shifted_coords(gen.scene, gen.offsets);
  const auto c = instance_centroids(gen.scene);
  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto id = gen.scene.inst_ids[i];
    if (id < 0) {
      EXPECT_EQ(q[i], gen.scene.coords[i]);
      continue;
    }
    worst = std::max(worst, norm(to_double(q[i]) - c[static_cast<std::size_t>(id)]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(PerturbSemantics, ZeroProbabilityIsIdentity) {
  const auto gen = generate_scene(GenConfig{.seed = 3});
  EXPECT_EQ(perturb_semantics(gen.scene, 0.0, 1.0, 5), gen.scene);
}

TEST(PerturbSemantics, FullProbabilityFlipsEveryObjectPoint) {
  const auto gen = generate_scene(GenConfig{.seed = 3});
  const auto out = perturb_semantics(gen.scene, 1.0, 1.0, 5);
  for (std::size_t i = 0; i < out.n_points(); ++i) {
    if (gen.scene.is_stuff(gen.scene.sem_labels[i])) {
      EXPECT_EQ(out.sem_labels[i], gen.scene.sem_labels[i]);
    } else {
      EXPECT_NE(out.sem_labels[i], gen.scene.sem_labels[i]);
      EXPECT_TRUE(out.is_thing(out.sem_labels[i]));
    }
    EXPECT_EQ(out.inst_ids[i], kNoInstance);
    EXPECT_EQ(argmax_class(out.scores_of(i)), out.sem_labels[i]);
  }
}

TEST(PerturbSemantics, FlipFractionMatchesProbability) {
  Scene s;
  s.n_classes = 6;
  s.stuff_classes = {0, 1};
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    s.coords.push_back({static_cast<float>(i), 0.F, 0.F});
    s.sem_labels.push_back(2 + static_cast<ClassId>(i % 4));
    s.inst_ids.push_back(static_cast<std::int32_t>(i % 4));
  }
  s.colors.assign(n, Color{});
  for (double p : {0.1, 0.3}) {
    const auto out = perturb_semantics(s, p, 0.5, 11);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < n; ++i) flipped += out.sem_labels[i] != s.sem_labels[i] ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(flipped) / static_cast<double>(n), p, 0.02);
  }
}

TEST(PerturbOffsets, ZeroSigmaIsIdentity) {
  const auto gen = generate_scene(GenConfig{.seed = 6});
  EXPECT_EQ(perturb_offsets(gen.offsets, gen.scene, 0.0, 3.0, 1), gen.offsets);
  EXPECT_THROW(perturb_offsets(gen.offsets, gen.scene, -1.0, 0.0, 1), ValidationError);
}

TEST(PerturbOffsets, NoiseStdevMatchesModel) {
  // One instance with every point at distance 1 from the centroid.
  Scene s;
  s.n_classes = 3;
  s.stuff_classes = {0};
  const std::size_t n = 20000;
  for (std::size_t i = 0; i < n; ++i) {
    const float sign = i % 2 == 0 ? 1.F : -1.F;
    s.coords.push_back({sign, 0.F, 0.F});
    s.sem_labels.push_back(2);
    s.inst_ids.push_back(0);
  }
  s.coords.push_back({9.F, 9.F, 9.F});
  s.sem_labels.push_back(0);
  s.inst_ids.push_back(kNoInstance);
  s.colors.assign(s.coords.size(), Color{});
  const auto clean = offset_targets(s);
  const double sigma0 = 0.01;
  const double beta = 2.0;
  const auto noisy = perturb_offsets(clean, s, sigma0, beta, 3);
  double sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = to_double(noisy.offsets[i]) - to_double(clean.offsets[i]);
    sum2 += dot(d, d);
  }
  const double sd = std::sqrt(sum2 / (3.0 * static_cast<double>(n)));
  EXPECT_NEAR(sd, sigma0 * (1.0 + beta), 0.05 * sigma0 * (1.0 + beta));
  EXPECT_EQ(noisy.offsets[n], clean.offsets[n]);
}

TEST(PerturbOffsets, FarPointsAreNoisier) {
  const auto gen = generate_scene(GenConfig{.seed = 7});
  const auto noisy = perturb_offsets(gen.offsets, gen.scene, 0.01, 4.0, 2);
  const auto sup = offset_supervision(gen.scene);
  double near_err = 0, far_err = 0;
  std::size_t near_n = 0, far_n = 0;
  for (std::size_t i = 0; i < gen.scene.n_points(); ++i) {
    if (!sup.mask[i]) continue;
    const double e = norm(to_double(noisy.offsets[i]) - to_double(gen.offsets.offsets[i]));
    if (norm(sup.target[i]) < 0.15) {
      near_err += e;
      ++near_n;
    } else if (norm(sup.target[i]) > 0.25) {
      far_err += e;
      ++far_n;
    }
  }
  ASSERT_GT(near_n, 100U);
  ASSERT_GT(far_n, 100U);
  EXPECT_GT(far_err / static_cast<double>(far_n), near_err / static_cast<double>(near_n));
}

std::vector<double> best_ious(const std::vector<Cluster>& clusters, const GroundTruth& gt) {
  std::vector<double> out;
  for (const auto& g : gt.instances) {
    double best = 0.0;
    for (const auto& c : clusters) best = std::max(best, iou(c.point_idx, g.point_idx));
    out.push_back(best);
  }
  return out;
}

TEST(GenerateScene, GapsWiderThanRadiusAreRecoveredByOriginalCoordinates) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto gen = generate_scene(GenConfig{.seed = seed});
    const auto gt = ground_truth(gen.scene);
    const auto p = cluster_single_set(gen.scene.coords, gen.scene.sem_labels, gen.scene.stuff_classes, {},
                                      ClusterSource::kOriginal);
    EXPECT_EQ(p.size(), gt.instances.size()) << "seed " << seed;
    for (double v : best_ious(p, gt)) EXPECT_GE(v, 0.95) << "seed " << seed;
  }
}

TEST(GenerateScene, AdjacentPairMergesInOriginalButNotShifted) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GenConfig cfg;
    cfg.seed = seed;
    cfg.n_objects = 4;
    cfg.adjacent_pairs = 1;
    const auto gen = generate_scene(cfg);
    const auto gt = ground_truth(gen.scene);
    const auto clusters = cluster_dual_set(gen.scene, gen.offsets, {});
    std::vector<Cluster> p, q;
    for (const auto& c : clusters) (c.source == ClusterSource::kOriginal ? p : q).push_back(c);
    EXPECT_EQ(p.size(), gt.instances.size() - 1) << "seed " << seed;
    const auto bp = best_ious(p, gt);
    EXPECT_LT(bp[0], 0.75);
    EXPECT_LT(bp[1], 0.75);
    EXPECT_EQ(q.size(), gt.instances.size()) << "seed " << seed;
    for (double v : best_ious(q, gt)) EXPECT_GE(v, 0.999);
  }
}

}  // namespace
}  // namespace pgroup
