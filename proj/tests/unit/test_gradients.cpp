#include <gtest/gtest.h>

#include "strata/error.hpp"
#include "strata/gradcheck.hpp"
#include "strata/gradients.hpp"
#include "support/helpers.hpp"

using namespace strata;

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const GradCheckProblem p = make_gradcheck_problem(3);
  const auto transports = face_transports(p.mesh, pose_mesh(p.mesh, p.poses[0]));
  const ForwardPass pass = render(p.set, transports, p.camera, p.raster, true);
  const ParamGradients g = backward(p.set, transports, pass, p.camera, p.raster, RenderGradients{});
  EXPECT_TRUE(g.all_finite());
  EXPECT_TRUE(g.all_zero());
}

TEST(Backward, MissingRecordThrows) {
  const GradCheckProblem p = make_gradcheck_problem(3);
  const auto transports = face_transports(p.mesh, p.mesh.vertices);
  const ForwardPass pass = render(p.set, transports, p.camera, p.raster, false);
  RenderGradients up;
  up.color = Image(p.camera.width, p.camera.height, 3, 1.0);
  try {
    backward(p.set, transports, pass, p.camera, p.raster, up);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingForwardRecord);
  }
}

TEST(Backward, FrozenRowsGetExactZero) {
  GradCheckProblem p = make_gradcheck_problem(5);
  for (std::size_t i = 0; i < p.set.size(); i += 2) p.set.frozen[i] = 1;
  const auto transports = face_transports(p.mesh, p.mesh.vertices);
  const ForwardPass pass = render(p.set, transports, p.camera, p.raster, true);
  RenderGradients up;
  up.color = Image(p.camera.width, p.camera.height, 3, 1.0);
  up.identity = Image(p.camera.width, p.camera.height, kIdentityDim, 0.5);
  const ParamGradients g = backward(p.set, transports, pass, p.camera, p.raster, up);
  for (std::size_t i = 0; i < p.set.size(); i += 2) {
    for (int c = 0; c < 3; ++c) EXPECT_EQ(g.offsets[3 * i + c], 0.0);
    EXPECT_EQ(g.opacity_logit[i], 0.0);
  }
}

class GradCheck : public ::testing::TestWithParam<const char*> {};

TEST_P(GradCheck, AnalyticMatchesCentralDifferences) {
  const LossId id = parse_loss_id(GetParam());
  for (std::uint64_t seed : {1u, 2u}) {
    const GradCheckProblem p = make_gradcheck_problem(seed);
    const GradCheckReport r = check_gradients(p, id, 60, seed);
    EXPECT_TRUE(r.passed()) << r.to_string();
  }
}

INSTANTIATE_TEST_SUITE_P(Losses, GradCheck,
                         ::testing::Values("l1", "sumsq", "ori", "id2d", "id3d", "ani", "sdf", "ref"));

TEST(GradCheckNames, RoundTrip) {
  for (LossId id : all_loss_ids()) EXPECT_EQ(parse_loss_id(to_string(id)), id);
  EXPECT_THROW(parse_loss_id("nope"), Error);
}

TEST(GradCheckFlat, AniBelowTauIsZero) {
  GradCheckProblem p = make_gradcheck_problem(4);
  for (auto& s : p.set.log_scale) s = {-3.0f, -3.0f, -3.0f};
  const GradCheckReport r = check_gradients(p, LossId::Ani, 30, 4);
  EXPECT_EQ(r.max_rel_err, 0.0);
  EXPECT_EQ(r.analytic_norm, 0.0);
}
