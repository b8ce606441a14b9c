#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "strata/error.hpp"
#include "strata/fixture.hpp"
#include "strata/lifecycle.hpp"
#include "support/helpers.hpp"

using namespace strata;

namespace {

SkinnedMesh origin_triangle() {
  SkinnedMesh m;
  m.vertices = {{-1, -1, 0}, {1, -1, 0}, {0, 2, 0}};
  m.faces = {{0, 1, 2}};
  m.joints = {{"root", -1, Rigid::identity()}};
  m.skin_weights = {1, 1, 1};
  return m;
}

GaussianSet single_asset(float opacity_logit = 0.0f) {
  GaussianSet set;
  Gaussian g;
  g.sh = {0.5f, 0.5f, 0.5f};
  g.opacity_logit = opacity_logit;
  g.identity = test::one_hot(4);
  set.push_back(g);
  return set;
}

}  // namespace

TEST(Adam, ZeroGradientKeepsParameters) {
  std::mt19937_64 rng(1);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = test::random_set(rng, mesh, 5);
  const GaussianSet before = set;
  AdamState state = AdamState::for_set(set);
  state.m.opacity_logit.assign(5, 1.0);
  adam_step(set, ParamGradients::zeros_like(set), state, LearningRates{});
  EXPECT_NEAR(state.m.opacity_logit[0], kAdamBeta1, 1e-15);
  EXPECT_EQ(set.sh, before.sh);
  EXPECT_EQ(set.log_scale, before.log_scale);
}

TEST(Adam, FirstStepIsSignTimesRate) {
  GaussianSet set = single_asset();
  AdamState state = AdamState::for_set(set);
  ParamGradients g = ParamGradients::zeros_like(set);
  g.opacity_logit[0] = 3.7;
  g.sh[1] = -0.02;
  LearningRates lr;
  adam_step(set, g, state, lr);
  EXPECT_NEAR(set.opacity_logit[0], -lr.opacity, 1e-7);
  EXPECT_NEAR(set.sh[1], 0.5 + lr.sh, 1e-7);
  EXPECT_EQ(set.sh[0], 0.5f);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ConstantGradientStepsAtRate) {
  GaussianSet set = single_asset();
  AdamState state = AdamState::for_set(set);
  ParamGradients g = ParamGradients::zeros_like(set);
  g.opacity_logit[0] = -0.3;
  LearningRates lr;
  lr.opacity = 1e-3;
  double prev = set.opacity_logit[0];
  for (int s = 0; s < 200; ++s) {
    adam_step(set, g, state, lr);
    EXPECT_NEAR(set.opacity_logit[0] - prev, lr.opacity, 1e-6);
    prev = set.opacity_logit[0];
  }
  EXPECT_NEAR(set.opacity_logit[0], 0.2, 1e-4);
}

TEST(Adam, FrozenRowsUntouchedAndRotationNormalized) {
  std::mt19937_64 rng(2);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = test::random_set(rng, mesh, 4);
  set.frozen[1] = 1;
  const GaussianSet before = set;
  AdamState state = AdamState::for_set(set);
  ParamGradients g = ParamGradients::zeros_like(set);
  for (double& v : g.rotation) v = 0.3;
  for (double& v : g.offsets) v = 0.1;
  adam_step(set, g, state, LearningRates{});
  EXPECT_EQ(set.rotation[1], before.rotation[1]);
  EXPECT_EQ(set.embedding[1].sigma, before.embedding[1].sigma);
  for (std::size_t i = 0; i < set.size(); ++i) EXPECT_NEAR(set.rotation_of(i).norm(), 1.0, 1e-6);
  ParamGradients wrong = ParamGradients::zeros(3, 3);
  EXPECT_THROW(adam_step(set, wrong, state, LearningRates{}), Error);
}

TEST(PruneInside, CubeCenter) {
  const SkinnedMesh tri = origin_triangle();
  const SkinnedMesh cube = make_box(Vec3::Ones());
  const MeshSdf sdf(cube.vertices, cube.faces);
  const auto transports = face_transports(tri, tri.vertices);
  GaussianSet set = single_asset();
  set.push_back(set.get(0));
  set.embedding[1].gamma = 1.0f;
  GaussianSet copy = set;
  copy.embedding[0].gamma = 0.75f;
  EXPECT_EQ(prune_inside(copy, transports, sdf), 0u);
  EXPECT_EQ(copy.size(), 2u);
  AdamState state = AdamState::for_set(set);
  EXPECT_EQ(prune_inside(set, transports, sdf, &state), 1u);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.embedding[0].gamma, 1.0f);
  EXPECT_EQ(state.m.size(), 1u);
}

TEST(PruneTransparent, Thresholds) {
  GaussianSet set = single_asset(static_cast<float>(logit(0.6)));
  set.push_back(single_asset(static_cast<float>(logit(0.9))).get(0));
  EXPECT_EQ(prune_transparent(set, 0.005), 0u);
  set.push_back(single_asset(static_cast<float>(logit(1e-4))).get(0));
  EXPECT_EQ(prune_transparent(set, 0.0), 0u);
  EXPECT_EQ(prune_transparent(set, 0.005), 1u);
  EXPECT_EQ(set.size(), 2u);
}

TEST(Densify, ZeroIsNoOp) {
  std::mt19937_64 rng(3);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = test::random_set(rng, mesh, 12);
  const GaussianSet before = set;
  EXPECT_EQ(densify_category(set, mesh.vertices, mesh.faces, 4, 0, 3, 1), 0u);
  EXPECT_TRUE(bitwise_equal(set, before));
  EXPECT_THROW(densify_category(set, mesh.vertices, mesh.faces, 15, 1, 3, 1), Error);
  EXPECT_THROW(densify_category(set, mesh.vertices, mesh.faces, 9, 1, 3, 1), Error);
}

TEST(Densify, SingleTriangleClusterInheritsMeans) {
  std::mt19937_64 rng(4);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set(1);
  Gaussian proto = test::random_asset(rng, mesh.face_count(), 1, 6);
  proto.embedding.face_index = 17;
  for (int i = 0; i < 6; ++i) {
    Gaussian g = proto;
    g.embedding.sigma = 0.002f * static_cast<float>(i);
    g.embedding.beta = -0.001f * static_cast<float>(i);
    set.push_back(g);
  }
  AdamState state = AdamState::for_set(set);
  const std::size_t added = densify_category(set, mesh.vertices, mesh.faces, 6, 20, 4, 9, &state);
  ASSERT_EQ(added, 20u);
  ASSERT_EQ(set.size(), 26u);
  EXPECT_EQ(state.m.size(), 26u);
  for (std::size_t i = 6; i < set.size(); ++i) {
    EXPECT_EQ(set.embedding[i].face_index, 17u);
    EXPECT_NEAR(set.opacity_of(i), sigmoid(proto.opacity_logit), 1e-6);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(set.log_scale[i][a], proto.log_scale[a], 1e-6);
    for (int c = 0; c < 12; ++c) EXPECT_NEAR(set.sh_of(i)[c], proto.sh[c], 1e-6);
    EXPECT_EQ(category_of(set.identity[i]), 6);
  }
}

TEST(Densify, EmbeddingReproducesSampledPosition) {
  std::mt19937_64 rng(5);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = test::random_set(rng, mesh, 40);
  const std::size_t before = set.size();
  densify_category(set, mesh.vertices, mesh.faces, 4, 30, 3, 11);
  // The new position is whatever the embedding resolves to; it must sit near
  // existing members of the category.
  std::vector<Vec3> members;
  for (std::size_t i = 0; i < before; ++i) {
    if (category_of(set.identity[i]) == 4) members.push_back(resolve_position(set.embedding[i], mesh.vertices, mesh.faces));
  }
  for (std::size_t i = before; i < set.size(); ++i) {
    const Vec3 p = resolve_position(set.embedding[i], mesh.vertices, mesh.faces);
    const auto& f = mesh.faces[set.embedding[i].face_index];
    const TriangleFrame fr = triangle_frame(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    const Vec3 local = fr.to_local(p);
    EXPECT_NEAR(local.x(), set.embedding[i].sigma, 1e-6);
    EXPECT_NEAR(local.z(), set.embedding[i].gamma, 1e-6);
    double nearest = INFINITY;
    for (const Vec3& m : members) nearest = std::min(nearest, (m - p).norm());
    EXPECT_LT(nearest, 0.5);
  }
}

TEST(BodyGaussians, SingleFace) {
  const SkinnedMesh tri = origin_triangle();
  const GaussianSet body = build_body_gaussians(tri, 1);
  ASSERT_EQ(body.size(), 1u);
  EXPECT_EQ(body.embedding[0].gamma, 0.0f);
  EXPECT_LT(resolve_position(body.embedding[0], tri.vertices, tri.faces).norm(), 1e-7);
  EXPECT_EQ(body.layer[0], Layer::Body);
  EXPECT_TRUE(body.frozen[0]);
  EXPECT_EQ(category_of(body.identity[0]), category::kSkin);
}

TEST(BodyGaussians, UniformPerFace) {
  const SkinnedMesh sphere = make_icosphere(1.0, 2);
  const GaussianSet body = build_body_gaussians(sphere, 1);
  ASSERT_EQ(body.size(), sphere.face_count());
  for (std::size_t i = 0; i < body.size(); ++i) EXPECT_EQ(body.embedding[i].face_index, i);
  EXPECT_EQ(build_body_gaussians(sphere, 7).size(), 7 * sphere.face_count());
  EXPECT_THROW(build_body_gaussians(sphere, 8), Error);
}

TEST(BodyGaussians, FaceRegionLabel) {
  SkinnedMesh m = test::small_cylinder();
  m.face_regions["face"] = {0, 1};
  EXPECT_EQ(body_label(m, 0), category::kFace);
  EXPECT_EQ(body_label(m, 5), category::kSkin);
}

class InpaintTest : public ::testing::Test {
 protected:
  void SetUp() override {
    mesh = test::small_cylinder();
    body = build_body_gaussians(mesh, 1, 0, Vec3(0.3, 0.5, 0.7));
    transports = face_transports(mesh, mesh.vertices);
    for (const Camera& cam : ring_cameras(2, 3.0, Vec3(0, 0, 0.8), 0.8, 60.0, 24, 24)) {
      views.push_back(render_view(body, mesh, cam, cfg, "v"));
    }
  }
  SkinnedMesh mesh;
  GaussianSet body;
  std::vector<FaceTransport> transports;
  std::vector<View> views;
  RasterConfig cfg;
};

TEST_F(InpaintTest, OccludedTakeVisibleMean) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.2);
  std::vector<bool> visible(body.size());
  Vec3 mean = Vec3::Zero();
  std::size_t count = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    visible[i] = i % 2 == 0;
    for (int c = 0; c < 3; ++c) body.sh[3 * i + c] = static_cast<float>(1.0 + n(rng));
    if (visible[i]) {
      for (int c = 0; c < 3; ++c) mean[c] += body.sh[3 * i + c];
      ++count;
    }
  }
  mean /= static_cast<double>(count);
  const InpaintReport r = inpaint_body_color(body, transports, visible, views, cfg, 0);
  EXPECT_EQ(r.visible + r.occluded, body.size());
  for (std::size_t i = 1; i < body.size(); i += 2) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(body.sh[3 * i + c], mean[c], 1e-3);
  }
  EXPECT_LT(r.color_gap, 1e-3);
}

TEST_F(InpaintTest, VisibilityAndNoVisibleBody) {
  const auto visible = body_visibility(body, transports, views, cfg);
  const std::size_t seen = std::count(visible.begin(), visible.end(), true);
  EXPECT_GT(seen, 0u);
  EXPECT_LT(seen, body.size());
  const std::vector<bool> none(body.size(), false);
  try {
    inpaint_body_color(body, transports, none, views, cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoVisibleBody);
  }
}

TEST_F(InpaintTest, SharedColorIsKept) {
  const auto visible = body_visibility(body, transports, views, cfg);
  GaussianSet work = body;
  inpaint_body_color(work, transports, visible, views, cfg, 30);
  for (std::size_t i = 0; i < work.size(); ++i) {
    EXPECT_NEAR(work.sh[3 * i + 0], body.sh[3 * i + 0], 2e-2);
    EXPECT_NEAR(work.sh[3 * i + 2], body.sh[3 * i + 2], 2e-2);
  }
}

TEST(Fit, ZeroIterationsIsNoOp) {
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = build_body_gaussians(mesh, 1);
  const GaussianSet before = set;
  std::vector<View> views = {render_view(set, mesh, Camera::look_at({3, 0, 0.8}, {0, 0, 0.8}, Vec3::UnitZ(), 40, 16, 16),
                                         RasterConfig{}, "a")};
  FitOptions opt;
  opt.schedule.total_iters = 0;
  const FitResult r = fit(set, mesh, views, opt);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(bitwise_equal(set, before));
  EXPECT_THROW(fit(set, mesh, std::span<const View>{}, opt), Error);
}

TEST(Fit, RecoversSingleSplat) {
  const SkinnedMesh cube = make_box(Vec3::Ones());
  GaussianSet truth;
  Gaussian g;
  g.embedding.face_index = 0;
  g.embedding.gamma = 0.05f;
  g.log_scale = {std::log(0.15f), std::log(0.15f), std::log(0.05f)};
  g.opacity_logit = 2.0f;
  g.sh = {static_cast<float>(0.3 / kShC0), static_cast<float>(0.8 / kShC0), static_cast<float>(0.4 / kShC0)};
  g.identity = test::one_hot(4, 3.0f, 0.0f);
  truth.push_back(g);
  const auto transports = face_transports(cube, cube.vertices);
  const Vec3 center = repose_all(truth, transports)[0].position;
  const TriangleFrame fr = triangle_frame(cube.vertices[cube.faces[0][0]], cube.vertices[cube.faces[0][1]],
                                          cube.vertices[cube.faces[0][2]]);
  const Camera cam = Camera::look_at(center + 2.0 * fr.k, center, std::abs(fr.k.z()) > 0.9 ? Vec3::UnitY() : Vec3::UnitZ(),
                                     48.0, 32, 32);
  RasterConfig cfg;
  const std::vector<View> views = {render_view(truth, cube, cam, cfg, "only")};

  GaussianSet set = truth;
  set.sh = {0.5f / static_cast<float>(kShC0), 0.5f / static_cast<float>(kShC0), 0.5f / static_cast<float>(kShC0)};
  set.log_scale[0] = {std::log(0.1f), std::log(0.1f), std::log(0.05f)};
  set.opacity_logit[0] = 0.0f;
  FitOptions opt;
  opt.schedule.total_iters = 200;
  opt.raster = cfg;
  opt.weights.w_id2d = 0.0;
  const FitResult r = fit(set, cube, views, opt);
  EXPECT_EQ(r.log.size(), 200u);
  const RenderOutput out = render(set, transports, cam, cfg, false).output;
  EXPECT_LT(loss_l1(out.color, views[0].image), 1e-2);
}

TEST(InitAssets, VotesFollowMasks) {
  AvatarFixtureSpec spec;
  spec.views = 6;
  spec.image_size = 48;
  spec.focal = 70.0;
  const AvatarFixture fx = make_avatar_fixture(spec);
  AssetInitConfig cfg;
  cfg.candidates = 800;
  const GaussianSet assets = init_assets_from_views(fx.mesh, fx.views, cfg, 0, 2);
  ASSERT_GT(assets.size(), 50u);
  std::size_t consistent = 0;
  for (std::size_t i = 0; i < assets.size(); ++i) {
    EXPECT_EQ(assets.layer[i], Layer::Asset);
    const int cat = category_of(assets.identity[i]);
    EXPECT_TRUE(cat == category::kUpperClothes || cat == category::kPants);
    const Vec3 p = resolve_position(assets.embedding[i], fx.mesh.vertices, fx.mesh.faces);
    const bool upper = p.z() > 0.85;
    consistent += (cat == category::kUpperClothes) == upper;
  }
  EXPECT_GT(static_cast<double>(consistent) / assets.size(), 0.9);
}

TEST(Schedule, Validation) {
  Schedule s;
  EXPECT_NO_THROW(s.validate());
  s.prune_interval = 0;
  EXPECT_THROW(s.validate(), Error);
  s = Schedule{};
  s.total_iters = -1;
  EXPECT_THROW(s.validate(), Error);
}
