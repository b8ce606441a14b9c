#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "strata/rasterizer.hpp"

namespace strata {

/// Upstream dL/d(render output). Any empty image counts as all zeros.
struct RenderGradients {
  Image color;
  Image alpha;
  Image identity;
  Image depth;
};

struct SplatGradient {
  Vec2 mean = Vec2::Zero();
  Vec3 cov = Vec3::Zero();  ///< w.r.t. (xx, xy, yy)
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  std::array<double, kIdentityDim> identity{};
  double depth = 0.0;
};

/// Gradients per splat (indexed like the splat vector). Requires the record
/// of the forward pass that produced `splats`.
std::vector<SplatGradient> rasterize_backward(std::span<const Splat2D> splats,
                                              const Camera& cam, const RasterConfig& cfg,
                                              const ForwardRecord& record,
                                              const RenderGradients& upstream);

/// Gradients with respect to world-space Gaussians (after reposing). Rotation
/// gradients are dL/dR for the world rotation matrix.
struct WorldGradients {
  std::vector<Vec3> position;
  std::vector<Mat3> rotation;
  std::vector<Vec3> scale;
  std::vector<double> opacity;  ///< w.r.t. sigmoid opacity, not the logit
  std::vector<double> sh;
  std::vector<std::array<double, kIdentityDim>> identity;

  void reset(std::size_t count, int sh_stride);
};

WorldGradients project_backward(const GaussianSet& set, const ForwardPass& pass,
                                const Camera& cam, std::span<const SplatGradient> splat_grads);

/// Gradients shaped like GaussianSet's optimizable fields, in double.
struct ParamGradients {
  int sh_stride = 1;
  std::vector<double> offsets;   ///< 3 per Gaussian (sigma, beta, gamma)
  std::vector<double> rotation;  ///< 4 per Gaussian, tangent to the unit sphere
  std::vector<double> log_scale;
  std::vector<double> opacity_logit;
  std::vector<double> sh;
  std::vector<double> identity;  ///< 15 per Gaussian

  static ParamGradients zeros(std::size_t count, int sh_stride);
  static ParamGradients zeros_like(const GaussianSet& set);
  std::size_t size() const { return opacity_logit.size(); }
  void keep(const std::vector<bool>& mask);
  void append_zeros(std::size_t count);
  void add(const ParamGradients& other, double scale = 1.0);
  void zero_rows(const std::vector<std::uint8_t>& frozen);
  bool all_finite() const;
  bool all_zero() const;
  /// All groups concatenated: offsets, rotation, log_scale, opacity, sh, identity.
  std::vector<double> flatten() const;
};

/// Chains world-space gradients through reposing into parameter gradients.
/// Frozen Gaussians receive exactly zero.
ParamGradients repose_backward(const GaussianSet& set, std::span<const FaceTransport> transports,
                               const WorldGradients& world);

/// Full chain: render upstream -> splats -> world Gaussians -> parameters.
/// Throws MissingForwardRecord if the pass was rendered without a record.
ParamGradients backward(const GaussianSet& set, std::span<const FaceTransport> transports,
                        const ForwardPass& pass, const Camera& cam, const RasterConfig& cfg,
                        const RenderGradients& upstream);

WorldGradients backward_world(const GaussianSet& set, const ForwardPass& pass,
                              const Camera& cam, const RasterConfig& cfg,
                              const RenderGradients& upstream);

/// Gradient of a world position with respect to the embedding offsets.
Vec3 offset_gradient(const FaceTransport& t, const Vec3& d_position);

}  // namespace strata
