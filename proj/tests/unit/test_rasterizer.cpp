#include <gtest/gtest.h>

#include <random>

#include "strata/error.hpp"
#include "strata/rasterizer.hpp"
#include "support/raster_oracle.hpp"

using namespace strata;

namespace {

Camera axis_camera(int size = 32, double focal = 100.0) {
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  return cam;
}

Splat2D pixel_splat(double opacity, const Vec3& color, int category, double depth, std::uint32_t source) {
  Splat2D s;
  s.mean = {16.5, 16.5};
  s.cov = {0.5, 0.0, 0.5};
  s.depth = depth;
  s.color = color;
  s.opacity = opacity;
  s.identity[category] = 1.0;
  s.source = source;
  return s;
}

}  // namespace

TEST(Project, OnAxisCovariance) {
  const Camera cam = axis_camera();
  RasterConfig cfg;
  ReposedGaussian g;
  g.position = {0, 0, 1};
  g.scale = Vec3::Constant(0.01);
  const std::vector<float> sh = {1, 1, 1};
  const auto s = project(g, 0.8, 0, sh, IdentityVector{}, 0, cam, cfg);
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(s->cov[0], 1.3, 1e-9);
  EXPECT_NEAR(s->cov[1], 0.0, 1e-12);
  EXPECT_NEAR(s->cov[2], 1.3, 1e-9);
  EXPECT_NEAR(s->mean.x(), 16.0, 1e-12);
  EXPECT_NEAR(s->depth, 1.0, 1e-12);
}

TEST(Project, BehindCameraCulled) {
  const Camera cam = axis_camera();
  ReposedGaussian g;
  g.position = {0, 0, -1};
  g.scale = Vec3::Constant(0.01);
  const std::vector<float> sh = {1, 1, 1};
  EXPECT_FALSE(project(g, 0.8, 0, sh, IdentityVector{}, 0, cam, RasterConfig{}).has_value());
}

TEST(Rasterize, SingleSplatBlend) {
  const Camera cam = axis_camera();
  RasterConfig cfg;
  const std::vector<Splat2D> splats = {pixel_splat(0.5, {0.2, 0.4, 0.8}, 4, 2.0, 0)};
  const RenderOutput out = rasterize(splats, cam, cfg);
  EXPECT_NEAR(out.color.at(16, 16, 0), 0.1, 1e-12);
  EXPECT_NEAR(out.color.at(16, 16, 2), 0.4, 1e-12);
  EXPECT_NEAR(out.alpha.at(16, 16), 0.5, 1e-12);
  EXPECT_NEAR(out.identity.at(16, 16, 4), 0.5, 1e-12);
  EXPECT_NEAR(out.identity.at(16, 16, 0), 0.5 * cfg.background_identity_logit, 1e-12);
}

TEST(Rasterize, TwoCoincidentSplats) {
  const Camera cam = axis_camera();
  const std::vector<Splat2D> splats = {pixel_splat(0.5, {0, 1, 0}, 6, 3.0, 0),
                                       pixel_splat(0.5, {1, 0, 0}, 4, 2.0, 1)};
  const RenderOutput out = rasterize(splats, cam, RasterConfig{});
  EXPECT_NEAR(out.color.at(16, 16, 0), 0.5, 1e-12);
  EXPECT_NEAR(out.color.at(16, 16, 1), 0.25, 1e-12);
  EXPECT_NEAR(out.color.at(16, 16, 2), 0.0, 1e-12);
  EXPECT_NEAR(out.alpha.at(16, 16), 0.75, 1e-12);
}

TEST(Rasterize, ClampAndBackground) {
  const Camera cam = axis_camera();
  RasterConfig cfg;
  cfg.background = {0.0, 0.0, 1.0};
  const std::vector<Splat2D> splats = {pixel_splat(1.0, {1, 1, 1}, 4, 2.0, 0)};
  const RenderOutput out = rasterize(splats, cam, cfg);
  EXPECT_NEAR(out.alpha.at(16, 16), cfg.alpha_clamp, 1e-12);
  EXPECT_NEAR(out.color.at(16, 16, 2), cfg.alpha_clamp + (1 - cfg.alpha_clamp), 1e-12);
  EXPECT_EQ(out.color.at(0, 0, 2), 1.0);
  EXPECT_EQ(out.alpha.at(0, 0), 0.0);
}

TEST(Rasterize, MatchesBruteForceOnRandomScenes) {
  std::mt19937_64 rng(1234);
  RasterConfig cfg;
  for (int trial = 0; trial < 40; ++trial) {
    cfg.tile_size = 4 + static_cast<int>(rng() % 13);
    const test::RandomScene scene = test::random_splat_scene(rng, 64, 32, cfg);
    const RenderOutput tiled = rasterize(scene.splats, scene.camera, cfg);
    EXPECT_LE(test::max_abs_diff(tiled, test::brute_force_render(scene.splats, scene.camera, cfg)), 1e-6);
    EXPECT_LE(test::max_abs_diff(tiled, rasterize_reference(scene.splats, scene.camera, cfg)), 1e-12);
  }
}

TEST(Rasterize, ThreadCountDoesNotChangePixels) {
  std::mt19937_64 rng(99);
  RasterConfig one;
  one.threads = 1;
  RasterConfig four = one;
  four.threads = 4;
  const test::RandomScene scene = test::random_splat_scene(rng, 64, 48, one);
  const RenderOutput a = rasterize(scene.splats, scene.camera, one);
  const RenderOutput b = rasterize(scene.splats, scene.camera, four);
  EXPECT_EQ(a.color.data, b.color.data);
  EXPECT_EQ(a.identity.data, b.identity.data);
}

TEST(Rasterize, EmptySceneIsBackground) {
  const Camera cam = axis_camera(8);
  RasterConfig cfg;
  cfg.background = {0.25, 0.5, 0.75};
  const RenderOutput out = rasterize({}, cam, cfg);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(out.color.at(x, y, 1), 0.5);
      EXPECT_EQ(out.identity.at(x, y, 0), cfg.background_identity_logit);
    }
  }
}

TEST(MaxBlendWeights, SingleSplat) {
  const Camera cam = axis_camera();
  const std::vector<Splat2D> splats = {pixel_splat(0.5, {1, 1, 1}, 4, 2.0, 0),
                                       pixel_splat(0.5, {1, 1, 1}, 4, 3.0, 1)};
  const auto w = max_blend_weights(splats, cam, RasterConfig{});
  EXPECT_NEAR(w[0], 0.5, 1e-12);
  EXPECT_NEAR(w[1], 0.25, 1e-12);
}
