#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "pgroup/losses.hpp"
#include "pgroup/synth.hpp"
#include "test_util.hpp"

namespace pgroup {
namespace {

Scene line_scene(std::vector<Vec3f> pts, std::vector<std::int32_t> inst) {
  Scene s;
  s.n_classes = 3;
  s.stuff_classes = {0};
  s.coords = std::move(pts);
  s.colors.assign(s.coords.size(), Color{});
  s.inst_ids = std::move(inst);
  for (auto id : s.inst_ids) s.sem_labels.push_back(id >= 0 ? 1 : 0);
  validate_scene(s);
  return s;
}

// Independent scalar re-implementations used as oracles.
double scalar_l1(const std::vector<double>& pred, const Scene& s) {
  std::vector<double> sx(8, 0), sy(8, 0), sz(8, 0), cnt(8, 0);
  for (std::size_t i = 0; i < s.n_points(); ++i) {
    if (s.inst_ids[i] < 0) continue;
    const auto j = static_cast<std::size_t>(s.inst_ids[i]);
    sx[j] += s.coords[i].x;
    sy[j] += s.coords[i].y;
    sz[j] += s.coords[i].z;
    cnt[j] += 1;
  }
  double sum = 0;
  double m = 0;
  for (std::size_t i = 0; i < s.n_points(); ++i) {
    if (s.inst_ids[i] < 0) continue;
    const auto j = static_cast<std::size_t>(s.inst_ids[i]);
    sum += std::fabs(pred[3 * i] - (sx[j] / cnt[j] - s.coords[i].x));
    sum += std::fabs(pred[3 * i + 1] - (sy[j] / cnt[j] - s.coords[i].y));
    sum += std::fabs(pred[3 * i + 2] - (sz[j] / cnt[j] - s.coords[i].z));
    m += 1;
  }
  return sum / m;
}

Scene random_instance_scene(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-2.F, 2.F);
  std::vector<Vec3f> pts(n);
  std::vector<std::int32_t> inst(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {u(rng), u(rng), u(rng)};
    inst[i] = i < 6 ? static_cast<std::int32_t>(i % 3) : static_cast<std::int32_t>(rng() % 4) - 1;
  }
  return line_scene(pts, inst);
}

TEST(InstanceCentroids, MeanOfMembers) {
  const auto s = line_scene({{0, 0, 0}, {2, 0, 0}, {5, 5, 5}}, {0, 0, 1});
  const auto c = instance_centroids(s);
  ASSERT_EQ(c.size(), 2U);
  EXPECT_EQ(c[0], (Vec3d{1, 0, 0}));
  EXPECT_EQ(c[1], (Vec3d{5, 5, 5}));
  EXPECT_THROW(instance_centroids(line_scene({{0, 0, 0}}, {-1})), ValidationError);
}

TEST(InstanceCentroids, IndependentOfSummationOrder) {
  const auto s = random_instance_scene(3, 5000);
  const auto c = instance_centroids(s);
  std::vector<std::size_t> order(s.n_points());
  std::iota(order.begin(), order.end(), 0U);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(4));
  std::vector<Vec3d> sum(c.size());
  std::vector<double> cnt(c.size(), 0);
  for (auto i : order) {
    if (s.inst_ids[i] < 0) continue;
    sum[static_cast<std::size_t>(s.inst_ids[i])] += to_double(s.coords[i]);
    cnt[static_cast<std::size_t>(s.inst_ids[i])] += 1;
  }
  for (std::size_t j = 0; j < c.size(); ++j) {
    EXPECT_NEAR(c[j].x, sum[j].x / cnt[j], 1e-9);
    EXPECT_NEAR(c[j].y, sum[j].y / cnt[j], 1e-9);
    EXPECT_NEAR(c[j].z, sum[j].z / cnt[j], 1e-9);
  }
}

TEST(OffsetTargets, PointAtCentroidAndStuffAreZero) {
  const auto s = line_scene({{1, 1, 1}, {0, 0, 0}, {2, 2, 2}, {9, 9, 9}}, {0, 1, 1, -1});
  const auto t = offset_targets(s);
  EXPECT_EQ(t.offsets[0], (Vec3f{0, 0, 0}));
  EXPECT_EQ(t.offsets[3], (Vec3f{0, 0, 0}));
  EXPECT_EQ(t.offsets[1], (Vec3f{1, 1, 1}));
}

TEST(OffsetTargets, ShiftedPointsReproduceCentroids) {
  const auto s = random_instance_scene(8, 2000);
  const auto c = instance_centroids(s);
  const auto sup = offset_supervision(s);
  for (std::size_t i = 0; i < s.n_points(); ++i) {
    if (!sup.mask[i]) continue;
    const Vec3d q = to_double(s.coords[i]) + sup.target[i];
    const auto& cj = c[static_cast<std::size_t>(s.inst_ids[i])];
    EXPECT_NEAR(q.x, cj.x, 1e-12);
    EXPECT_NEAR(q.y, cj.y, 1e-12);
    EXPECT_NEAR(q.z, cj.z, 1e-12);
  }
}

TEST(SemanticLoss, KnownValues) {
  const std::vector<float> certain = {0.F, 1.F, 0.F};
  EXPECT_DOUBLE_EQ(semantic_loss(certain, 3, std::vector<ClassId>{1}), 0.0);
  const std::vector<float> uniform(4 * 2, 0.25F);
  EXPECT_NEAR(semantic_loss(uniform, 4, std::vector<ClassId>{2, 3}), std::log(4.0), 1e-12);
  EXPECT_THROW(semantic_loss(certain, 3, std::vector<ClassId>{-1}), ValidationError);
  // The zero probability is clamped, not infinite.
  EXPECT_NEAR(semantic_loss(certain, 3, std::vector<ClassId>{0}), -std::log(1e-12), 1e-9);
}

TEST(SemanticLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  const int nc = 5;
  std::vector<float> scores;
  std::vector<ClassId> labels;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> row(nc);
    double s = 0;
    for (auto& v : row) s += (v = u(rng));
    for (auto v : row) scores.push_back(static_cast<float>(v / s));
    labels.push_back(i % 7 == 0 ? -1 : static_cast<ClassId>(rng() % nc));
  }
  double sum = 0;
  int count = 0;
  for (int i = 0; i < 50; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0) continue;
    sum += -std::log(static_cast<double>(scores[static_cast<std::size_t>(i * nc + labels[static_cast<std::size_t>(i)])]));
    ++count;
  }
  EXPECT_NEAR(semantic_loss(scores, nc, labels), sum / count, 1e-9);
}

TEST(OffsetRegLoss, KnownValues) {
  OffsetSupervision one;
  one.target = {{1, -2, 0.5}};
  one.mask = {1};
  one.n_masked = 1;
  EXPECT_DOUBLE_EQ(offset_reg_loss(std::vector<double>{0, 0, 0}, one), 3.5);

  // Same residual from a real scene: point 0's target is (1,-2,0.5), point 1 is exact.
  const auto s = line_scene({{0, 0, 0}, {2, -4, 1}}, {0, 0});
  std::vector<double> pred = {0, 0, 0, -1, 2, -0.5};
  EXPECT_NEAR(offset_reg_loss(pred, offset_supervision(s)), 3.5 / 2, 1e-12);
  EXPECT_DOUBLE_EQ(offset_reg_loss(offset_targets(s), s), 0.0);
  EXPECT_THROW(offset_reg_loss(std::vector<double>{0, 0, 0}, offset_supervision(line_scene({{0, 0, 0}}, {-1}))),
               ValidationError);
}

TEST(OffsetRegLoss, MatchesScalarOracleAndIsNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_instance_scene(seed, 300);
    std::mt19937_64 rng(seed + 50);
    std::normal_distribution<double> g(0.0, 0.5);
    std::vector<double> pred(3 * s.n_points());
    for (auto& v : pred) v = g(rng);
    const double got = offset_reg_loss(pred, offset_supervision(s));
    EXPECT_NEAR(got, scalar_l1(pred, s), 1e-9);
    EXPECT_GE(got, 0.0);
  }
}

TEST(OffsetDirLoss, AlignedOppositeAndScaleInvariant) {
  const auto s = random_instance_scene(2, 400);
  const auto sup = offset_supervision(s);
  std::vector<double> along(3 * s.n_points());
  std::vector<double> opposite(along.size());
  for (std::size_t i = 0; i < s.n_points(); ++i) {
    const double k = 0.1 + static_cast<double>(i % 5);
    along[3 * i] = sup.target[i].x * k;
    along[3 * i + 1] = sup.target[i].y * k;
    along[3 * i + 2] = sup.target[i].z * k;
    for (int a = 0; a < 3; ++a) opposite[3 * i + a] = -along[3 * i + a];
  }
  EXPECT_NEAR(offset_dir_loss(along, sup), -1.0, 1e-12);
  EXPECT_NEAR(offset_dir_loss(opposite, sup), 1.0, 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> pred(along.size());
  for (auto& v : pred) v = g(rng);
  std::vector<double> scaled = pred;
  for (auto& v : scaled) v *= 7.0;
  const double base = offset_dir_loss(pred, sup);
  EXPECT_NEAR(offset_dir_loss(scaled, sup), base, 1e-6);
  EXPECT_GE(base, -1.0);
  EXPECT_LE(base, 1.0);
}

TEST(OffsetDirLoss, DegeneratePointsContributeZero) {
  // Point 0 sits on its centroid (2-point instance is symmetric so use a 3rd point at the mean).
  const auto s = line_scene({{-1, 0, 0}, {1, 0, 0}, {0, 0, 0}}, {0, 0, 0});
  std::vector<double> pred = {1, 0, 0, -1, 0, 0, 1, 1, 1};
  // Points 0 and 1 aligned (cos 1), point 2 degenerate target -> 0. Mean over 3.
  EXPECT_NEAR(offset_dir_loss(pred, offset_supervision(s)), -2.0 / 3.0, 1e-12);
  std::vector<double> zero_pred = {0, 0, 0, -1, 0, 0, 0, 0, 0};
  EXPECT_NEAR(offset_dir_loss(zero_pred, offset_supervision(s)), -1.0 / 3.0, 1e-12);
}

TEST(TotalLoss, UnweightedSum) {
  EXPECT_EQ(total_loss({}).total, 0.0);
  const auto r = total_loss({1.0, -1.0, 2.0, 0.5});
  EXPECT_DOUBLE_EQ(r.total, 2.5);
  EXPECT_EQ(r.l_o_dir, 2.0);
  EXPECT_THROW(total_loss({NAN, 0, 0, 0}), ValidationError);
  EXPECT_THROW(total_loss({0, INFINITY, 0, 0}), ValidationError);
}

TEST(TotalLoss, RecomposesIndependentTerms) {
  const auto gen = generate_scene(GenConfig{.seed = 4, .n_objects = 3});
  const auto noisy = perturb_offsets(gen.offsets, gen.scene, 0.02, 1.0, 9);
  const auto sup = offset_supervision(gen.scene);
  const auto flat = flatten(noisy);
  const LossParts parts{semantic_loss(gen.scene.sem_scores, gen.scene.n_classes, gen.scene.sem_labels),
                        offset_reg_loss(flat, sup), offset_dir_loss(flat, sup), 0.3};
  const auto r = total_loss(parts);
  EXPECT_EQ(r.total, parts.l_sem + parts.l_o_dir + parts.l_o_reg + parts.l_c_score);
}

TEST(GradCheck, LinearFunctionIsExact) {
  const DifferentiableFn linear = [](std::span<const double> x, std::span<double> g) {
    double v = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      v += static_cast<double>(k + 1) * x[k];
      if (!g.empty()) g[k] = static_cast<double>(k + 1);
    }
    return v;
  };
  const std::vector<double> point = {0.3, -1.2, 4.0, 0.0};
  EXPECT_LE(grad_check(linear, point), 1e-10);
}

TEST(GradCheck, DetectsWrongGradient) {
  const DifferentiableFn wrong = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 3.0 * x[0];  // true gradient is 2x
    return x[0] * x[0];
  };
  EXPECT_GT(grad_check(wrong, std::vector<double>{1.0}), 0.1);
  const DifferentiableFn bad = [](std::span<const double>, std::span<double>) { return NAN; };
  EXPECT_THROW(grad_check(bad, std::vector<double>{1.0}), ValidationError);
}

TEST(GradCheck, OffsetLossesAtRandomPoints) {
  const auto s = random_instance_scene(12, 40);
  const auto sup = offset_supervision(s);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> mag(0.01, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(3 * s.n_points());
    for (std::size_t i = 0; i < s.n_points(); ++i) {
      const std::array<double, 3> t{sup.target[i].x, sup.target[i].y, sup.target[i].z};
      // Residuals at least 0.01 from the kink, far beyond the 1e-4 step.
      for (std::size_t a = 0; a < 3; ++a) x[3 * i + a] = t[a] + (rng() % 2 ? 1 : -1) * mag(rng);
    }
    const double reg = grad_check(
        [&](std::span<const double> p, std::span<double> g) { return offset_reg_loss(p, sup, g); }, x);
    const double dir = grad_check(
        [&](std::span<const double> p, std::span<double> g) { return offset_dir_loss(p, sup, g); }, x);
    EXPECT_LE(reg, 1e-5);
    EXPECT_LE(dir, 1e-5);
  }
}

TEST(DistanceHistogram, AllMassInFirstBinWhenPointsAtCentroids) {
  const auto s = line_scene({{1, 1, 1}, {1, 1, 1}, {3, 3, 3}}, {0, 0, 1});
  const auto h = distance_histogram(s);
  ASSERT_EQ(h.size(), 21U);
  EXPECT_DOUBLE_EQ(h[0], 1.0);
}

TEST(DistanceHistogram, OverflowBinAndNormalization) {
  const auto s = line_scene({{0, 0, 0}, {6, 0, 0}, {0, 0, 0}, {0.3F, 0, 0}}, {0, 0, 1, 1});
  const auto h = distance_histogram(s, 0.1, 2.0);
  EXPECT_DOUBLE_EQ(h.back(), 0.5);  // both points 3 m from their centroid
  EXPECT_DOUBLE_EQ(h[1], 0.5);      // 0.15 m
  EXPECT_NEAR(std::accumulate(h.begin(), h.end(), 0.0), 1.0, 1e-9);
}

TEST(DistanceHistogram, SyntheticRoomsConcentrateBelowOneMeter) {
  std::vector<double> total(21, 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto gen = generate_scene(GenConfig{.seed = seed});
    const auto h = distance_histogram(gen.scene);
    EXPECT_NEAR(std::accumulate(h.begin(), h.end(), 0.0), 1.0, 1e-9);
    for (std::size_t k = 0; k < h.size(); ++k) total[k] += h[k] / 5.0;
  }
  EXPECT_GT(std::accumulate(total.begin(), total.begin() + 10, 0.0), 0.95);
}

}  // namespace
}  // namespace pgroup
