#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "strata/fixture.hpp"
#include "strata/knn.hpp"
#include "strata/sdf.hpp"
#include "support/helpers.hpp"

using namespace strata;

namespace {

std::vector<std::uint32_t> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, int k, std::int64_t exclude) {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    if (static_cast<std::int64_t>(i) != exclude) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double da = (pts[a] - q).squaredNorm(), db = (pts[b] - q).squaredNorm();
    return da != db ? da < db : a < b;
  });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(k)));
  return idx;
}

}  // namespace

TEST(GridIndex, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec3> pts;
    const int n = 50 + static_cast<int>(rng() % 400);
    for (int i = 0; i < n; ++i) pts.push_back(test::random_vec(rng, -1, 1).cwiseProduct(Vec3(1, 0.2, 3)));
    const GridIndex index(pts, trial % 2 ? 0.0 : 0.05);
    for (int q = 0; q < 40; ++q) {
      const Vec3 p = test::random_vec(rng, -1.5, 1.5);
      const int k = 1 + static_cast<int>(rng() % 8);
      EXPECT_EQ(index.nearest(p, k), brute_knn(pts, p, k, -1));
      const std::int64_t self = static_cast<std::int64_t>(rng() % pts.size());
      EXPECT_EQ(index.nearest(pts[self], k, self), brute_knn(pts, pts[self], k, self));
    }
  }
}

TEST(GridIndex, TiesAndSmallSets) {
  const std::vector<Vec3> pts = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 0}};
  const GridIndex index(pts);
  EXPECT_EQ(index.nearest({0, 0, 0}, 3, 3), (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(index.nearest({0, 0, 0}, 10).size(), 4u);
  const auto all = knn_all(pts, 2);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[3], (std::vector<std::uint32_t>{0, 1}));
}

TEST(ClosestPoint, RegionsOfATriangle) {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  Vec3 bary;
  EXPECT_TRUE(closest_point_on_triangle({0.2, 0.2, 1}, a, b, c, &bary).isApprox(Vec3(0.2, 0.2, 0)));
  EXPECT_NEAR(bary.sum(), 1.0, 1e-12);
  EXPECT_TRUE(closest_point_on_triangle({-1, -1, 0}, a, b, c).isApprox(a));
  EXPECT_TRUE(closest_point_on_triangle({0.5, -2, 0.3}, a, b, c).isApprox(Vec3(0.5, 0, 0)));
  EXPECT_TRUE(closest_point_on_triangle({1, 1, 0}, a, b, c).isApprox(Vec3(0.5, 0.5, 0)));
}

TEST(MeshSdf, CubeCenterAndVertices) {
  const SkinnedMesh cube = make_box(Vec3::Ones());
  const MeshSdf sdf(cube.vertices, cube.faces);
  EXPECT_NEAR(sdf.query({0, 0, 0}), -0.5, 1e-12);
  for (const Vec3& v : cube.vertices) EXPECT_NEAR(sdf.query(v), 0.0, 1e-9);
  EXPECT_NEAR(sdf.query({0.1, 0.2, 0.9}), 0.4, 1e-12);
  EXPECT_NEAR(sdf.query({1.5, 1.5, 0}), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(sdf.query(Vec3(1.5, 1.5, 1.5)), std::sqrt(3.0), 1e-12);
}

TEST(MeshSdf, BruteForceUnsignedDistance) {
  std::mt19937_64 rng(2);
  const SkinnedMesh sphere = make_icosphere(1.0, 2);
  const MeshSdf sdf(sphere.vertices, sphere.faces);
  for (int q = 0; q < 300; ++q) {
    const Vec3 p = test::random_vec(rng, -2, 2);
    double best = INFINITY;
    for (const auto& f : sphere.faces) {
      best = std::min(best, (closest_point_on_triangle(p, sphere.vertices[f[0]], sphere.vertices[f[1]],
                                                       sphere.vertices[f[2]]) - p).norm());
    }
    const SdfSample s = sdf.sample(p);
    EXPECT_NEAR(std::abs(s.distance), best, 1e-12);
    // Faceting error of a level-2 icosphere is well under 0.05.
    EXPECT_NEAR(s.distance, p.norm() - 1.0, 0.05);
  }
}

TEST(MeshSdf, SphereFarOutside) {
  const SkinnedMesh sphere = make_icosphere(1.0, 3);
  const MeshSdf sdf(sphere.vertices, sphere.faces);
  for (double d : {0.5, 2.0, 10.0}) {
    const Vec3 p = Vec3(0.3, -0.5, 0.81).normalized() * (1.0 + d);
    EXPECT_NEAR(sdf.query(p), d, 0.02);
  }
}

TEST(MeshSdf, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const SkinnedMesh sphere = make_icosphere(0.7, 2);
  const MeshSdf sdf(sphere.vertices, sphere.faces);
  for (int q = 0; q < 100; ++q) {
    const Vec3 p = test::random_vec(rng, -1.2, 1.2);
    const SdfSample s = sdf.sample(p);
    for (int a = 0; a < 3; ++a) {
      Vec3 hp = p, hm = p;
      hp[a] += 1e-7;
      hm[a] -= 1e-7;
      const SdfSample sp = sdf.sample(hp), sm = sdf.sample(hm);
      if (sp.feature_id != s.feature_id || sm.feature_id != s.feature_id || sp.feature != s.feature ||
          sm.feature != s.feature) {
        continue;
      }
      EXPECT_NEAR(s.gradient[a], (sp.distance - sm.distance) / 2e-7, 1e-5);
    }
  }
}
