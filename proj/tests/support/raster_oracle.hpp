#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "strata/rasterizer.hpp"
#include "support/helpers.hpp"

namespace strata::test {

// Per-pixel brute force straight from the compositing definition: every splat
// at every pixel, one global depth sort, explicit 2x2 inverse.
inline RenderOutput brute_force_render(std::span<const Splat2D> splats, const Camera& cam,
                                       const RasterConfig& cfg) {
  RenderOutput out;
  out.color = Image(cam.width, cam.height, 3);
  out.alpha = Image(cam.width, cam.height, 1);
  out.identity = Image(cam.width, cam.height, kIdentityDim);
  out.depth = Image(cam.width, cam.height, 1);
  std::vector<std::size_t> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return splats[a].source < splats[b].source;
  });
  std::vector<Mat2> inverse(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    Mat2 c;
    c << splats[i].cov[0], splats[i].cov[1], splats[i].cov[1], splats[i].cov[2];
    inverse[i] = c.inverse();
  }
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec2 p(x + 0.5, y + 0.5);
      double t = 1.0;
      Vec3 color = Vec3::Zero();
      std::vector<double> id(kIdentityDim, 0.0);
      double depth = 0.0;
      for (std::size_t i : order) {
        const Splat2D& s = splats[i];
        const Vec2 d = p - s.mean;
        const double a = std::min(cfg.alpha_clamp, s.opacity * std::exp(-0.5 * d.dot(inverse[i] * d)));
        if (a < cfg.alpha_skip) continue;
        color += a * t * s.color;
        for (int c = 0; c < kIdentityDim; ++c) id[c] += a * t * s.identity[c];
        depth += a * t * s.depth;
        t *= 1.0 - a;
        if (t < cfg.transmittance_stop) break;
      }
      for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = color[c] + t * cfg.background[c];
      id[0] += t * cfg.background_identity_logit;
      for (int c = 0; c < kIdentityDim; ++c) out.identity.at(x, y, c) = id[c];
      out.depth.at(x, y) = depth;
      out.alpha.at(x, y) = 1.0 - t;
    }
  }
  return out;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  double m = a.same_shape(b) ? 0.0 : INFINITY;
  if (!a.same_shape(b)) return m;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline double max_abs_diff(const RenderOutput& a, const RenderOutput& b) {
  return std::max({max_abs_diff(a.color, b.color), max_abs_diff(a.alpha, b.alpha),
                   max_abs_diff(a.identity, b.identity), max_abs_diff(a.depth, b.depth)});
}

struct RandomScene {
  Camera camera;
  std::vector<Splat2D> splats;
};

// Up to max_gaussians world Gaussians around the origin seen by a random
// camera, projected to splats.
inline RandomScene random_splat_scene(std::mt19937_64& rng, int max_gaussians, int size,
                                      const RasterConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomScene scene;
  const Vec3 eye = random_vec(rng).normalized() * (2.5 + u(rng));
  scene.camera = Camera::look_at(eye, random_vec(rng, -0.1, 0.1), Vec3::UnitZ(), 25.0 + 20.0 * u(rng),
                                 size, size);
  const int count = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_gaussians));
  const int sh_degree = 1;
  for (int i = 0; i < count; ++i) {
    ReposedGaussian g;
    g.position = random_vec(rng, -0.6, 0.6);
    g.rotation = random_rotation(rng);
    g.scale = Vec3(0.02 + 0.15 * u(rng), 0.02 + 0.15 * u(rng), 0.02 + 0.15 * u(rng));
    std::vector<float> sh(sh_coeff_count(sh_degree));
    for (auto& c : sh) c = static_cast<float>(2.0 * u(rng) - 1.0);
    IdentityVector id;
    for (auto& v : id) v = static_cast<float>(4.0 * u(rng) - 2.0);
    const double opacity = 0.05 + 0.95 * u(rng);
    if (auto s = project(g, opacity, sh_degree, sh, id, static_cast<std::uint32_t>(i), scene.camera, cfg)) {
      scene.splats.push_back(*s);
    }
  }
  return scene;
}

}  // namespace strata::test
