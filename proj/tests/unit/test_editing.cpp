#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "strata/editing.hpp"
#include "strata/error.hpp"
#include "support/raster_oracle.hpp"

using namespace strata;

namespace {

GaussianSet layered(const SkinnedMesh& mesh, std::mt19937_64& rng, std::size_t assets = 30) {
  GaussianSet set = build_body_gaussians(mesh, 1);
  set.append(test::random_set(rng, mesh, assets));
  return set;
}

bool same_bytes(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(GroupIndices, RangeAndContent) {
  std::mt19937_64 rng(1);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  for (std::size_t i : group_indices(set, 6)) EXPECT_EQ(category_of(set.identity[i]), 6);
  EXPECT_TRUE(group_indices(set, 9).empty());
  for (int bad : {0, 15, -1}) {
    try {
      group_indices(set, bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidCategory);
    }
  }
}

TEST(RemoveGroup, EqualsZeroOpacityRender) {
  std::mt19937_64 rng(2);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  const GaussianSet removed = remove_group(set, 6);
  EXPECT_EQ(removed.size(), set.size() - group_indices(set, 6).size());
  GaussianSet zeroed = set;
  for (std::size_t i : group_indices(set, 6)) zeroed.opacity_logit[i] = -INFINITY;
  const auto transports = face_transports(mesh, mesh.vertices);
  RasterConfig cfg;
  for (const Camera& cam : ring_cameras(4, 3.0, {0, 0, 0.8}, 0.6, 40, 24, 24)) {
    const RenderOutput a = render(removed, transports, cam, cfg, false).output;
    const RenderOutput b = render(zeroed, transports, cam, cfg, false).output;
    EXPECT_LE(test::max_abs_diff(a, b), 1e-12);
  }
}

TEST(RemoveGroup, AbsentAndAll) {
  std::mt19937_64 rng(3);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  EXPECT_TRUE(bitwise_equal(remove_group(set, 13), set));
  GaussianSet all = set;
  for (int c = 1; c <= 14; ++c) {
    if (is_asset_category(c)) all = remove_group(all, c);
  }
  EXPECT_EQ(all.size(), set.count(Layer::Body));
  EXPECT_EQ(all.count(Layer::Asset), 0u);
}

TEST(RecolorGroup, OnlyTargetShChanges) {
  std::mt19937_64 rng(4);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  GaussianSet edited = set;
  RecolorTarget target;
  target.color = Vec3(1.0, 0.4, 0.7);
  RecolorOptions opt;
  opt.iterations = 50;
  const std::size_t n = recolor_group(edited, mesh, 4, target, opt);
  EXPECT_EQ(n, group_indices(set, 4).size());
  GaussianSet a = edited, b = set;
  a.sh.clear();
  b.sh.clear();
  EXPECT_TRUE(bitwise_equal(a, b));
  const std::size_t stride = set.sh_stride();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool member = set.layer[i] == Layer::Asset && category_of(set.identity[i]) == 4;
    const std::vector<float> before(set.sh_of(i).begin(), set.sh_of(i).end());
    const std::vector<float> after(edited.sh_of(i).begin(), edited.sh_of(i).end());
    if (!member) EXPECT_TRUE(same_bytes(before, after)) << i;
    (void)stride;
  }
}

TEST(RecolorGroup, FlatTargetConverges) {
  std::mt19937_64 rng(5);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = layered(mesh, rng);
  RecolorTarget target;
  target.color = Vec3(1.0, 0.0, 0.0);
  recolor_group(set, mesh, 4, target, RecolorOptions{});
  Vec3 mean = Vec3::Zero();
  const auto idx = group_indices(set, 4);
  for (std::size_t i : idx) mean += eval_sh(set.sh_degree, set.sh_of(i), Vec3::UnitX());
  mean /= static_cast<double>(idx.size());
  EXPECT_LT((mean - Vec3(1, 0, 0)).cwiseAbs().maxCoeff(), 0.02);
}

TEST(RecolorGroup, ViewsTargetMovesRenderedColor) {
  std::mt19937_64 rng(6);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = layered(mesh, rng, 80);
  for (std::size_t i : group_indices(set, 4)) set.opacity_logit[i] = 3.0f;
  GaussianSet painted = set;
  RecolorTarget flat;
  flat.color = Vec3(0.1, 0.9, 0.2);
  recolor_group(painted, mesh, 4, flat, RecolorOptions{});
  RasterConfig cfg;
  std::vector<View> views;
  for (const Camera& cam : ring_cameras(3, 3.0, {0, 0, 0.8}, 0.6, 50, 32, 32)) {
    views.push_back(render_view(painted, mesh, cam, cfg, "v"));
  }
  GaussianSet edited = set;
  RecolorTarget from_views;
  from_views.views = views;
  RecolorOptions opt;
  opt.iterations = 150;
  const double before = loss_l1(render(edited, face_transports(mesh, mesh.vertices), views[0].camera, cfg, false).output.color,
                                views[0].image);
  recolor_group(edited, mesh, 4, from_views, opt);
  const double after = loss_l1(render(edited, face_transports(mesh, mesh.vertices), views[0].camera, cfg, false).output.color,
                               views[0].image);
  EXPECT_LT(after, 0.5 * before);
}

TEST(RecolorGroup, ZeroIterationsResetsToGray) {
  std::mt19937_64 rng(7);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = layered(mesh, rng);
  RecolorTarget target;
  target.color = Vec3(1, 0, 0);
  RecolorOptions opt;
  opt.iterations = 0;
  recolor_group(set, mesh, 6, target, opt);
  for (std::size_t i : group_indices(set, 6)) {
    const Vec3 c = eval_sh(set.sh_degree, set.sh_of(i), Vec3::UnitZ());
    EXPECT_NEAR(c.x(), 0.5, 1e-6);
    EXPECT_NEAR(c.z(), 0.5, 1e-6);
  }
  try {
    recolor_group(set, mesh, 9, target, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
}

TEST(ExtractMerge, BitExactPartition) {
  std::mt19937_64 rng(8);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  const ExtractedGroup g = extract_group(set, mesh, 4);
  EXPECT_EQ(g.group.size(), group_indices(set, 4).size());
  const GaussianSet rest = remove_group(set, 4);
  EXPECT_EQ(rest.size() + g.group.size(), set.size());
  EXPECT_TRUE(bitwise_equal(merge_group(rest, g), set));
  try {
    extract_group(set, mesh, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
}

TEST(Transfer, SameMeshIsIdentical) {
  std::mt19937_64 rng(9);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  EXPECT_TRUE(bitwise_equal(transfer_group(set, mesh, mesh), set));
}

TEST(Transfer, UniformScale) {
  std::mt19937_64 rng(10);
  const SkinnedMesh mesh = test::small_cylinder();
  const GaussianSet set = layered(mesh, rng);
  SkinnedMesh big = mesh;
  for (Vec3& v : big.vertices) v *= 1.2;
  const GaussianSet moved = transfer_group(set, mesh, big);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_NEAR(moved.embedding[i].gamma, 1.2 * set.embedding[i].gamma, 1e-6 * std::abs(set.embedding[i].gamma) + 1e-12);
    EXPECT_NEAR(moved.embedding[i].sigma, 1.2 * set.embedding[i].sigma, 1e-6 * std::abs(set.embedding[i].sigma) + 1e-12);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(std::exp(moved.log_scale[i][a]), 1.2 * std::exp(set.log_scale[i][a]), 1e-6);
  }
  SkinnedMesh other = mesh;
  other.faces.pop_back();
  try {
    transfer_group(set, mesh, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TopologyMismatch);
  }
}

TEST(Transfer, StretchedFaceIsLocal) {
  SkinnedMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 1, 0}};
  m.faces = {{0, 1, 2}, {1, 3, 2}};
  m.joints = {{"root", -1, Rigid::identity()}};
  m.skin_weights = {1, 1, 1, 1};
  std::mt19937_64 rng(11);
  GaussianSet set(0);
  for (int i = 0; i < 10; ++i) {
    Gaussian g = test::random_asset(rng, 2, 0, 4);
    g.embedding.face_index = i % 2;
    set.push_back(g);
  }
  SkinnedMesh stretched = m;
  stretched.vertices[3] = {3, 1.5, 0.2};
  const GaussianSet moved = transfer_group(set, m, stretched);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Gaussian a = set.get(i), b = moved.get(i);
    const bool same = std::memcmp(&a.embedding, &b.embedding, sizeof(TriangleEmbedding)) == 0 &&
                      a.log_scale == b.log_scale && a.rotation == b.rotation;
    EXPECT_EQ(same, set.embedding[i].face_index == 0) << i;
  }
}
