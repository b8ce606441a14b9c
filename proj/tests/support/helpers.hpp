#pragma once

#include <cmath>
#include <random>

#include "strata/fixture.hpp"
#include "strata/geometry.hpp"
#include "strata/scene.hpp"

namespace strata::test {

inline Vec3 random_vec(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return UnitQuaternion::normalized(n(rng), n(rng), n(rng), n(rng));
}

inline IdentityVector one_hot(int category, float hi = 10.0f, float lo = -10.0f) {
  IdentityVector id;
  id.fill(lo);
  id[category] = hi;
  return id;
}

// Asset Gaussian with random offsets, rotation, scale, color on a random face.
inline Gaussian random_asset(std::mt19937_64& rng, std::size_t faces, int sh_degree, int category,
                             double gamma_max = 0.05) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Gaussian g;
  g.embedding.face_index = static_cast<std::uint32_t>(rng() % faces);
  g.embedding.sigma = static_cast<float>(0.02 * u(rng));
  g.embedding.beta = static_cast<float>(0.02 * u(rng));
  g.embedding.gamma = static_cast<float>(gamma_max * (0.5 + 0.5 * std::abs(u(rng))));
  const UnitQuaternion q = random_rotation(rng);
  g.rotation = {float(q.w), float(q.x), float(q.y), float(q.z)};
  for (auto& s : g.log_scale) s = static_cast<float>(std::log(0.02) + 0.3 * u(rng));
  g.opacity_logit = static_cast<float>(1.5 * u(rng));
  g.sh.resize(sh_coeff_count(sh_degree));
  for (auto& c : g.sh) c = static_cast<float>(u(rng));
  g.identity = one_hot(category, 3.0f, 0.0f);
  g.layer = Layer::Asset;
  return g;
}

inline GaussianSet random_set(std::mt19937_64& rng, const SkinnedMesh& mesh, std::size_t count,
                              int sh_degree = 0) {
  GaussianSet set(sh_degree);
  for (std::size_t i = 0; i < count; ++i) {
    const int cat = (i % 3 == 0) ? category::kPants : category::kUpperClothes;
    set.push_back(random_asset(rng, mesh.face_count(), sh_degree, cat));
  }
  return set;
}

inline SkinnedMesh small_cylinder() {
  CylinderSpec spec;
  spec.segments = 12;
  spec.rings = 6;
  return make_cylinder(spec);
}

}  // namespace strata::test
