#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "strata/gradients.hpp"
#include "strata/losses.hpp"
#include "strata/sdf.hpp"

namespace strata {

struct LearningRates {
  double offsets = 2e-4;
  double rotation = 1e-3;
  double log_scale = 5e-3;
  double opacity = 5e-2;
  double sh = 2.5e-2;
  double identity = 2.5e-2;
};

struct Schedule {
  int total_iters = 3000;
  int prune_interval = 300;
  int densify_interval = 300;
  int densify_start = 500;
  int densify_stop = 2500;
  int front_view_iters = 500;  ///< only view 0 is used for iterations 1..front_view_iters
  double opacity_prune_threshold = 0.005;
  double densify_rate = 0.1;
  std::size_t max_gaussians = 200000;
  int inpaint_iters = 100;
  LearningRates lr;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Adam moments shaped like the parameters they follow.
struct AdamState {
  ParamGradients m;
  ParamGradients v;
  std::int64_t step = 0;

  static AdamState for_set(const GaussianSet& set);
  void keep(const std::vector<bool>& mask);
  void append(std::size_t count);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-15;

/// One bias-corrected Adam update of every unfrozen parameter. Rotations are
/// renormalized afterwards. Throws ShapeMismatch on mismatched shapes.
void adam_step(GaussianSet& set, const ParamGradients& grads, AdamState& state,
               const LearningRates& lr);

/// Removes asset Gaussians whose reposed position has sdf < 0.
std::size_t prune_inside(GaussianSet& set, std::span<const FaceTransport> transports,
                         const MeshSdf& sdf, AdamState* state = nullptr);

/// Removes asset Gaussians with opacity below the threshold.
std::size_t prune_transparent(GaussianSet& set, double threshold, AdamState* state = nullptr);

/// Adds n_new Gaussians of `category` near existing members, inheriting the
/// mean properties of their k nearest members. Positions live in the space
/// given by `vertices` (canonical in training).
std::size_t densify_category(GaussianSet& set, std::span<const Vec3> vertices,
                             std::span<const std::array<std::uint32_t, 3>> faces, int category,
                             std::size_t n_new, int k, std::uint64_t seed,
                             AdamState* state = nullptr);

/// One training view.
struct View {
  std::string name;
  Camera camera;
  Image image;
  MaskImage mask;
};

struct InpaintReport {
  std::size_t visible = 0;
  std::size_t occluded = 0;
  double color_gap = 0.0;  ///< |mean occluded dc color - mean visible dc color|
};

/// Body Gaussian visible = blend weight >= 1/255 on some Skin (12) pixel of
/// some view when the body is rendered alone.
std::vector<bool> body_visibility(const GaussianSet& set, std::span<const FaceTransport> transports,
                                  std::span<const View> views, const RasterConfig& cfg);

/// Fits visible body SH to skin pixels, then pulls occluded body dc
/// coefficients to the visible mean. Throws NoVisibleBody.
InpaintReport inpaint_body_color(GaussianSet& set, std::span<const FaceTransport> transports,
                                 const std::vector<bool>& visible, std::span<const View> views,
                                 const RasterConfig& cfg, int iterations, double lr = 0.05);

/// Flat body Gaussians at fixed barycentric sites of every face: centroid,
/// then edge midpoints, then centroid-vertex midpoints (count <= 7).
GaussianSet build_body_gaussians(const SkinnedMesh& mesh, int per_face_count, int sh_degree = 0,
                                 const Vec3& color = Vec3::Constant(0.5));

/// Body identity label: Face (11) for faces tagged "face", else Skin (12).
int body_label(const SkinnedMesh& mesh, std::size_t face);

struct AssetInitConfig {
  int candidates = 3000;
  double gamma_min = 0.01;
  double gamma_max = 0.05;
  double opacity = 0.3;
  double scale = 0.0;           ///< <= 0: derived from candidate spacing
  double identity_logit = 2.0;  ///< initial logit of the voted category
};

/// Category-seeded sampling: random surface points lifted off the mesh,
/// labelled by majority vote of the masks of views facing them; points that
/// vote for an asset category become Gaussians colored by the mean target and
/// seeded with that category's identity logit.
GaussianSet init_assets_from_views(const SkinnedMesh& mesh, std::span<const View> views,
                                   const AssetInitConfig& cfg, int sh_degree, std::uint64_t seed);

struct FitOptions {
  Schedule schedule;
  LossWeights weights;
  RasterConfig raster;
  std::uint64_t seed = 0;
  bool inpaint = true;
  std::function<void(const std::string&)> on_log;
};

struct FitResult {
  std::vector<std::string> log;
  std::size_t pruned_inside = 0;
  std::size_t pruned_transparent = 0;
  std::size_t densified = 0;
  InpaintReport inpaint;
};

/// Optimizes the asset layer of `set` (canonical pose) against the views.
FitResult fit(GaussianSet& set, const SkinnedMesh& mesh, std::span<const View> views,
              const FitOptions& options);

}  // namespace strata
