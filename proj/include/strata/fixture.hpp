#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strata/deform.hpp"
#include "strata/image.hpp"
#include "strata/lifecycle.hpp"
#include "strata/rasterizer.hpp"
#include "strata/scene.hpp"

namespace strata {

/// Closed cylinder along +z with two joints ("root" at z = 0 and "knee" at
/// joint_z); weights blend linearly over [joint_z - blend, joint_z + blend].
struct CylinderSpec {
  double radius = 0.25;
  double height = 1.6;
  int segments = 32;
  int rings = 24;
  double joint_z = 0.8;
  double blend = 0.1;
};

SkinnedMesh make_cylinder(const CylinderSpec& spec);

/// Axis-aligned box centred at the origin, outward-facing, no joints.
SkinnedMesh make_box(const Vec3& size);

/// Subdivided icosahedron projected to the sphere, no joints.
SkinnedMesh make_icosphere(double radius, int subdivisions);

/// Cameras on a horizontal ring looking at `target`.
std::vector<Camera> ring_cameras(int count, double radius, const Vec3& target, double height,
                                 double focal, int width, int height_px, double phase = 0.0);

/// Procedural layered avatar: cylinder body with flat skin Gaussians and two
/// colored bands floating just off the surface.
struct AvatarFixtureSpec {
  CylinderSpec body;
  int body_per_face = 1;
  Vec3 skin_color{0.9, 0.7, 0.55};
  int views = 16;
  int image_size = 128;
  double camera_radius = 3.0;
  double camera_height = 0.4;
  double focal = 190.0;
  int band_per_face = 3;
  double band_gamma = 0.03;
  double band_opacity = 0.97;
  struct Band {
    int category;
    double z_min;
    double z_max;
    Vec3 color;
  };
  std::vector<Band> bands = {{category::kUpperClothes, 0.95, 1.35, {0.75, 0.15, 0.2}},
                             {category::kPants, 0.25, 0.7, {0.15, 0.25, 0.7}}};
  std::uint64_t seed = 1;
};

struct AvatarFixture {
  SkinnedMesh mesh;
  GaussianSet truth;        ///< body + bands
  std::vector<View> views;  ///< training views, masks from the truth identity render
  View held_out;            ///< novel view between two training cameras
  RasterConfig raster;
};

/// Band Gaussians on every face whose centroid z lies in [z_min, z_max].
GaussianSet make_band(const SkinnedMesh& mesh, const AvatarFixtureSpec::Band& band,
                      int per_face, double gamma, double opacity, std::uint64_t seed);

/// Renders a view of `set` with the mask taken as the per-pixel identity argmax.
View render_view(const GaussianSet& set, const SkinnedMesh& mesh, const Camera& cam,
                 const RasterConfig& cfg, std::string name);

AvatarFixture make_avatar_fixture(const AvatarFixtureSpec& spec = {});

/// A band that translates along +z by amplitude * sin(2 pi t) over a short
/// sequence, rendered from a reference camera plus auxiliary cameras.
struct OscillationSpec {
  CylinderSpec body;
  int frames = 14;
  double amplitude = 0.06;
  int aux_views = 3;
  int image_size = 96;
  double focal = 150.0;
  AvatarFixtureSpec::Band band{5, 0.3, 0.7, {0.2, 0.6, 0.3}};
};

struct OscillationFixture {
  SkinnedMesh mesh;
  GaussianSet scene;  ///< static body + band
  std::vector<FrameSample> frames;
  std::vector<Vec3> displacement;  ///< ground-truth band offset per frame
  RasterConfig raster;
};

OscillationFixture make_oscillation_fixture(const OscillationSpec& spec = {});

/// Per-pixel argmax of a 15-channel identity image; ties go to the lower label.
MaskImage label_map(const Image& identity);

}  // namespace strata
