#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pgroup/spatial.hpp"

namespace pgroup {
namespace {

std::vector<Vec3f> random_points(std::uint64_t seed, std::size_t n, float extent) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-extent, extent);
  std::vector<Vec3f> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

TEST(GridIndex, SinglePointOccupiesOneCell) {
  const std::vector<Vec3f> pts = {{1.F, 2.F, 3.F}};
  const auto index = build_index(pts, 0.03F);
  ASSERT_EQ(index.cell_count(), 1U);
  EXPECT_EQ(std::vector<PointIndex>(index.cell_points(0).begin(), index.cell_points(0).end()),
            std::vector<PointIndex>{0});
}

TEST(GridIndex, DistantPointsLandInDistinctCells) {
  const std::vector<Vec3f> pts = {{0.F, 0.F, 0.F}, {10.F, 0.F, 0.F}};
  const auto index = build_index(pts, 0.03F);
  EXPECT_EQ(index.cell_count(), 2U);
  EXPECT_NE(index.cell_of(0), index.cell_of(1));
}

TEST(GridIndex, EmptyInputGivesEmptyIndex) {
  const auto index = build_index({}, 0.03F);
  EXPECT_EQ(index.size(), 0U);
  EXPECT_EQ(index.cell_count(), 0U);
}

TEST(GridIndex, RejectsBadArguments) {
  const std::vector<Vec3f> pts = {{0.F, 0.F, 0.F}};
  EXPECT_THROW(build_index(pts, 0.F), ValidationError);
  EXPECT_THROW(build_index(pts, -1.F), ValidationError);
  const std::vector<Vec3f> bad = {{0.F, std::numeric_limits<float>::quiet_NaN(), 0.F}};
  EXPECT_THROW(build_index(bad, 0.03F), ValidationError);
  const auto index = build_index(pts, 0.03F);
  EXPECT_THROW(ball_query(index, 0, 0.05F), ValidationError);
}

TEST(GridIndex, EveryPointInExactlyOneMatchingCell) {
  const auto pts = random_points(1, 10000, 1.F);
  const auto index = build_index(pts, 0.03F);
  std::vector<int> seen(pts.size(), 0);
  for (std::uint32_t c = 0; c < index.cell_count(); ++c) {
    const auto members = index.cell_points(c);
    for (auto i : members) {
      ++seen[i];
      EXPECT_EQ(index.cell_of(i), c);
      EXPECT_EQ(index.cell_coord(pts[i]), index.cell_coord(pts[members.front()]));
    }
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

TEST(BallQuery, IsolatedPointFindsItself) {
  const std::vector<Vec3f> pts = {{0.F, 0.F, 0.F}, {1.F, 1.F, 1.F}};
  const auto index = build_index(pts, 0.03F);
  EXPECT_EQ(ball_query(index, 0, 0.03F), std::vector<PointIndex>{0});
  EXPECT_EQ(brute_force_query(pts, 1, 0.03F), std::vector<PointIndex>{1});
}

TEST(BallQuery, CollinearChain) {
  const std::vector<Vec3f> pts = {{0.F, 0.F, 0.F}, {0.02F, 0.F, 0.F}, {0.04F, 0.F, 0.F}};
  const auto index = build_index(pts, 0.03F);
  EXPECT_EQ(ball_query(index, 1, 0.03F), (std::vector<PointIndex>{0, 1, 2}));
  EXPECT_EQ(ball_query(index, 0, 0.03F), (std::vector<PointIndex>{0, 1}));
}

TEST(BallQuery, ExactRadiusIsExcluded) {
  // 0.25 and 0.5 are exact in binary, so the distance is exactly r.
  const std::vector<Vec3f> pts = {{0.F, 0.F, 0.F}, {0.25F, 0.F, 0.F}};
  const auto index = build_index(pts, 0.25F);
  EXPECT_EQ(ball_query(index, 0, 0.25F), std::vector<PointIndex>{0});
  EXPECT_EQ(brute_force_query(pts, 0, 0.25F), std::vector<PointIndex>{0});
  const auto wide = build_index(pts, 0.5F);
  EXPECT_EQ(ball_query(wide, 0, 0.5F), (std::vector<PointIndex>{0, 1}));
}

TEST(BallQuery, MatchesBruteForceOnRandomClouds) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = random_points(100 + trial, 5000, 0.3F);
    const float r = trial % 2 == 0 ? 0.03F : 0.05F;
    const auto index = build_index(pts, r);
    for (int q = 0; q < 500; ++q) {
      const auto c = static_cast<PointIndex>(rng() % pts.size());
      ASSERT_EQ(ball_query(index, c, r), brute_force_query(pts, c, r)) << "trial " << trial << " center " << c;
    }
  }
}

TEST(BallQuery, InvariantUnderPointPermutation) {
  const auto pts = random_points(5, 2000, 0.2F);
  std::vector<PointIndex> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0U);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(6));
  std::vector<Vec3f> shuffled(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) shuffled[k] = pts[perm[k]];
  // shuffled[k] = pts[perm[k]], so original index i lives at inv[i].
  std::vector<PointIndex> inv(pts.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = static_cast<PointIndex>(k);

  const auto a = build_index(pts, 0.03F);
  const auto b = build_index(shuffled, 0.03F);
  for (PointIndex i = 0; i < 300; ++i) {
    auto got = ball_query(b, inv[i], 0.03F);
    for (auto& g : got) g = perm[g];
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, ball_query(a, i, 0.03F));
  }
}

}  // namespace
}  // namespace pgroup
