#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "strata/image.hpp"
#include "strata/scene.hpp"
#include "strata/skinning.hpp"

namespace strata {

struct RasterConfig {
  int tile_size = 16;
  double low_pass = 0.3;             ///< px^2 added to the projected covariance diagonal
  double alpha_clamp = 0.99;         ///< per-pixel weight ceiling
  double alpha_skip = 1.0 / 255.0;   ///< weights below this are skipped
  double transmittance_stop = 1e-4;  ///< traversal stops once T drops below
  Vec3 background = Vec3::Zero();
  double background_identity_logit = 1.0;  ///< Background logit composited with T_final
  int threads = 0;                         ///< 0 = hardware concurrency
};

/// A Gaussian projected to the image plane.
struct Splat2D {
  Vec2 mean = Vec2::Zero();
  Vec3 cov = Vec3::Zero();  ///< (xx, xy, yy) in px^2, low-pass already added
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  std::array<double, kIdentityDim> identity{};
  std::uint32_t source = 0;
};

struct RenderOutput {
  Image color;     ///< 3 channels
  Image alpha;     ///< 1 channel
  Image identity;  ///< 15 channels (raw blended logits)
  Image depth;     ///< 1 channel
};

/// What a backward pass needs from the forward: per-tile sorted splat lists,
/// per-pixel traversal length and final transmittance.
struct ForwardRecord {
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::vector<std::uint32_t>> tile_lists;  ///< indices into the splat vector
  std::vector<std::uint32_t> traversed;                ///< per pixel: list prefix processed
  std::vector<double> final_transmittance;             ///< per pixel
  /// Hash of every pixel's ordered contributor list and clamp state; equal
  /// signatures mean the forward pass took the same discrete decisions.
  std::uint64_t signature = 0;
};

/// Projects a world-space Gaussian; std::nullopt when culled (behind the near
/// plane, or its possible footprint misses the image).
std::optional<Splat2D> project(const ReposedGaussian& g, double opacity, int sh_degree,
                               std::span<const float> sh, const IdentityVector& identity,
                               std::uint32_t source, const Camera& cam,
                               const RasterConfig& cfg);

/// Tiled front-to-back compositing.
RenderOutput rasterize(std::span<const Splat2D> splats, const Camera& cam,
                       const RasterConfig& cfg, ForwardRecord* record = nullptr);

/// Per-pixel brute force over a globally sorted list; same thresholds as
/// rasterize but no tiling or footprint bounds. Test oracle.
RenderOutput rasterize_reference(std::span<const Splat2D> splats, const Camera& cam,
                                 const RasterConfig& cfg);

/// Largest blend weight T_i * alpha_i each splat reaches over the pixels where
/// pixel_mask is true (empty mask = all pixels), indexed like `splats`.
std::vector<double> max_blend_weights(std::span<const Splat2D> splats, const Camera& cam,
                                      const RasterConfig& cfg,
                                      const std::vector<bool>& pixel_mask = {});

/// World-space Gaussians plus the render made from them.
struct ForwardPass {
  std::vector<ReposedGaussian> world;
  std::vector<Splat2D> splats;
  std::optional<ForwardRecord> record;
  RenderOutput output;
};

ForwardPass render_world(const GaussianSet& set, std::vector<ReposedGaussian> world,
                         const Camera& cam, const RasterConfig& cfg, bool keep_record = true);

ForwardPass render(const GaussianSet& set, std::span<const FaceTransport> transports,
                   const Camera& cam, const RasterConfig& cfg, bool keep_record = true);

}  // namespace strata
