#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "strata/error.hpp"
#include "strata/fixture.hpp"
#include "strata/losses.hpp"
#include "support/helpers.hpp"

using namespace strata;

namespace {

Image noise_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Direct 11x11 windowed SSIM, zero padding, no separability.
double reference_ssim(const Image& a, const Image& b) {
  constexpr int r = 5;
  double g1[2 * r + 1];
  double sum = 0.0;
  for (int k = -r; k <= r; ++k) sum += g1[k + r] = std::exp(-(k * k) / (2.0 * 1.5 * 1.5));
  for (double& v : g1) v /= sum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= a.width || yy >= a.height) continue;
            const double w = g1[dx + r] * g1[dy + r];
            const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
            mx += w * va;
            my += w * vb;
            sxx += w * va * va;
            syy += w * vb * vb;
            sxy += w * va * vb;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
  }
  return total / static_cast<double>(a.data.size());
}

// Triangle whose centroid is the origin, so a zero embedding sits there.
SkinnedMesh origin_triangle() {
  SkinnedMesh m;
  m.vertices = {{-1, -1, 0}, {1, -1, 0}, {0, 2, 0}};
  m.faces = {{0, 1, 2}};
  m.joints = {{"root", -1, Rigid::identity()}};
  m.skin_weights = {1, 1, 1};
  return m;
}

Gaussian asset_at_zero(int category = 4) {
  Gaussian g;
  g.sh = {0.0f, 0.0f, 0.0f};
  g.identity = test::one_hot(category, 1.0f, 0.0f);
  return g;
}

}  // namespace

TEST(LossOri, ZeroWhenEqual) {
  std::mt19937_64 rng(1);
  const Image a = noise_image(rng, 12, 9, 3);
  EXPECT_NEAR(loss_ori(a, a, 0.2), 0.0, 1e-12);
}

TEST(LossOri, PureL1Offset) {
  std::mt19937_64 rng(2);
  const Image a = noise_image(rng, 10, 10, 3);
  Image b = a;
  for (double& v : b.data) v += 0.1;
  EXPECT_NEAR(loss_ori(a, b, 0.0), 0.1, 1e-12);
}

TEST(LossOri, PureSsimMatchesDirectWindow) {
  std::mt19937_64 rng(3);
  const Image a = noise_image(rng, 23, 17, 3), b = noise_image(rng, 23, 17, 3);
  EXPECT_NEAR(loss_ori(a, b, 1.0), 1.0 - reference_ssim(a, b), 1e-6);
  EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-12);
}

TEST(LossOri, SsimGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Image a = noise_image(rng, 14, 13, 3), b = noise_image(rng, 14, 13, 3);
  Image grad;
  loss_ori(a, b, 0.4, &grad);
  for (std::size_t i = 0; i < a.data.size(); i += 17) {
    Image p = a, m = a;
    p.data[i] += 1e-6;
    m.data[i] -= 1e-6;
    const double fd = (loss_ori(p, b, 0.4) - loss_ori(m, b, 0.4)) / 2e-6;
    EXPECT_NEAR(grad.data[i], fd, 1e-8);
  }
}

TEST(LossOri, ShapeMismatch) {
  EXPECT_THROW(loss_ori(Image(2, 2, 3), Image(3, 2, 3), 0.2), Error);
}

TEST(LossId2d, SaturatedLogits) {
  Image id(4, 3, kIdentityDim, -10.0);
  MaskImage mask(4, 3, 6);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    mask.labels[p] = static_cast<std::uint8_t>(p % 15);
    id.data[p * kIdentityDim + mask.labels[p]] = 10.0;
  }
  EXPECT_LE(loss_id2d(id, mask), 1e-6);
}

TEST(LossId2d, UniformLogits) {
  const Image id(3, 3, kIdentityDim, 0.0);
  const MaskImage mask(3, 3, 4);
  EXPECT_NEAR(loss_id2d(id, mask), std::log(15.0), 1e-12);
  EXPECT_NEAR(std::log(15.0), 2.70805, 1e-5);
}

TEST(LossId2d, HandComputed) {
  Image id(2, 2, kIdentityDim, 0.0);
  MaskImage mask(2, 2);
  mask.labels = {0, 4, 6, 14};
  id.data[0 * kIdentityDim + 0] = 2.0;
  id.data[1 * kIdentityDim + 5] = 1.0;
  id.data[2 * kIdentityDim + 6] = -1.0;
  id.data[3 * kIdentityDim + 14] = 3.0;
  id.data[3 * kIdentityDim + 1] = 3.0;
  const double e = std::exp(1.0);
  const double want = (std::log(14 + e * e) - 2.0 + std::log(14 + e) + std::log(14 + 1 / e) + 1.0 +
                       std::log(13 + 2 * e * e * e) - 3.0) / 4.0;
  EXPECT_NEAR(loss_id2d(id, mask), want, 1e-9);
}

TEST(LossId2d, BoundedByLog15ForArgmaxLabels) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (double scale : {0.1, 1.0, 10.0, 100.0}) {
    Image id(6, 5, kIdentityDim);
    for (double& v : id.data) v = scale * n(rng);
    const MaskImage mask = label_map(id);
    const double loss = loss_id2d(id, mask);
    EXPECT_LE(loss, std::log(15.0));
    if (scale == 100.0) EXPECT_LT(loss, 0.05);
  }
}

TEST(LossId2d, Errors) {
  MaskImage bad(1, 1, 15);
  try {
    loss_id2d(Image(1, 1, kIdentityDim), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LabelOutOfRange);
  }
  EXPECT_THROW(loss_id2d(Image(2, 1, kIdentityDim), MaskImage(1, 1)), Error);
}

TEST(LossId3d, IdenticalAndShiftedEncodings) {
  std::mt19937_64 rng(6);
  const SkinnedMesh mesh = test::small_cylinder();
  GaussianSet set = test::random_set(rng, mesh, 12);
  std::vector<Vec3> pos;
  for (std::size_t i = 0; i < set.size(); ++i) {
    pos.push_back(resolve_position(set.embedding[i], mesh.vertices, mesh.faces));
    set.identity[i] = set.identity[0];
  }
  std::vector<double> grad;
  EXPECT_NEAR(loss_id3d(set, pos, 3, 12, 1, &grad), 0.0, 1e-15);
  for (double g : grad) EXPECT_NEAR(g, 0.0, 1e-15);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (auto& v : set.identity[i]) v += static_cast<float>(i) * 0.5f;
  }
  EXPECT_NEAR(loss_id3d(set, pos, 3, 12, 1), 0.0, 1e-12);
}

TEST(LossId3d, TwoGaussiansHandComputed) {
  GaussianSet set;
  Gaussian a = asset_at_zero(), b = asset_at_zero();
  a.identity = IdentityVector{};
  b.identity = IdentityVector{};
  a.identity[0] = 1.0f;
  a.identity[3] = -0.5f;
  b.identity[6] = 2.0f;
  set.push_back(a);
  set.push_back(b);
  const std::vector<Vec3> pos = {{0, 0, 0}, {0.1, 0, 0}};
  auto softmax = [](const IdentityVector& z) {
    std::array<double, 15> p;
    double s = 0;
    for (int c = 0; c < 15; ++c) s += p[c] = std::exp(static_cast<double>(z[c]));
    for (double& v : p) v /= s;
    return p;
  };
  const auto p = softmax(a.identity), q = softmax(b.identity);
  double kl_pq = 0, kl_qp = 0;
  for (int c = 0; c < 15; ++c) {
    kl_pq += p[c] * std::log(p[c] / q[c]);
    kl_qp += q[c] * std::log(q[c] / p[c]);
  }
  const double one = loss_id3d(set, pos, 1, 1, 7);
  EXPECT_TRUE(std::abs(one - kl_pq) < 1e-9 || std::abs(one - kl_qp) < 1e-9) << one;
  EXPECT_NEAR(loss_id3d(set, pos, 1, 2, 7), 0.5 * (kl_pq + kl_qp), 1e-9);
}

TEST(LossId3d, TooFewAssets) {
  GaussianSet set;
  set.push_back(asset_at_zero());
  const std::vector<Vec3> pos = {{0, 0, 0}};
  EXPECT_THROW(loss_id3d(set, pos, 1, 1, 0), Error);
}

TEST(LossAni, HandComputed) {
  GaussianSet set;
  Gaussian g = asset_at_zero();
  g.log_scale = {0.0f, 0.0f, 0.0f};
  set.push_back(g);
  EXPECT_EQ(loss_ani(set, 4.0), 0.0);
  set.log_scale[0] = {static_cast<float>(std::log(2.0)), 0.0f, 0.0f};
  EXPECT_NEAR(loss_ani(set, 1.5), 0.5, 1e-6);
  set.log_scale[0] = {static_cast<float>(std::log(3.0)), 0.0f, static_cast<float>(std::log(0.5))};
  EXPECT_NEAR(loss_ani(set, 4.0), 2.0, 1e-6);
}

TEST(LossAni, BodyIgnored) {
  GaussianSet set;
  Gaussian g = asset_at_zero();
  g.layer = Layer::Body;
  g.log_scale = {3.0f, -3.0f, 0.0f};
  set.push_back(g);
  set.push_back(asset_at_zero());
  EXPECT_EQ(loss_ani(set, 4.0), 0.0);
}

TEST(LossSdf, CubeCenterAndSurface) {
  const SkinnedMesh tri = origin_triangle();
  const SkinnedMesh cube = make_box(Vec3::Ones());
  const MeshSdf sdf(cube.vertices, cube.faces);
  const auto transports = face_transports(tri, tri.vertices);
  GaussianSet set;
  set.push_back(asset_at_zero());
  EXPECT_NEAR(loss_sdf(set, transports, sdf, 0.0), 0.25, 1e-12);
  set.embedding[0].gamma = 0.5f;
  EXPECT_NEAR(loss_sdf(set, transports, sdf, 0.0), 0.0, 1e-12);
  set.embedding[0].gamma = 2.0f;
  EXPECT_EQ(loss_sdf(set, transports, sdf, 0.0), 0.0);
}

TEST(LossRef, HandComputed) {
  const Image a(2, 2, 3, 0.25);
  EXPECT_EQ(loss_ref(std::vector<Image>{a}, std::vector<Image>{a}), 0.0);
  const Image b(2, 2, 3, 0.75);
  EXPECT_NEAR(loss_ref(std::vector<Image>{a}, std::vector<Image>{b}), 0.25, 1e-15);
  Image r0(2, 2, 1), r1(2, 2, 1), f0(2, 2, 1), f1(2, 2, 1);
  r0.data = {0.0, 0.5, 1.0, 0.25};
  f0.data = {0.5, 0.5, 0.0, 0.0};
  r1.data = {0.1, 0.2, 0.3, 0.4};
  f1.data = {0.4, 0.3, 0.2, 0.1};
  const double m0 = (0.25 + 0 + 1 + 0.0625) / 4.0;
  const double m1 = (0.09 + 0.01 + 0.01 + 0.09) / 4.0;
  EXPECT_NEAR(loss_ref(std::vector<Image>{r0, r1}, std::vector<Image>{f0, f1}), (m0 + m1) / 2.0, 1e-12);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.knn_k = 0;
  EXPECT_THROW(w.validate(), Error);
  w = LossWeights{};
  w.lambda_ssim = 1.5;
  EXPECT_THROW(w.validate(), Error);
}
