#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "strata/rasterizer.hpp"

namespace strata::detail {

/// Conic form and conservative pixel bounds of a splat.
struct PreparedSplat {
  double mx = 0, my = 0;
  double con_a = 0, con_b = 0, con_c = 0;  ///< inverse covariance (xx, xy, yy)
  double opacity = 0;
  double min_power = 0;  ///< log(alpha_skip / opacity): below this the weight is skipped
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  ///< inclusive pixel bounds, empty when x1 < x0
};

/// Radius beyond which a splat cannot reach the skip threshold, and never
/// less than 3 sigma along the major axis.
inline double footprint_radius(const Vec3& cov, double opacity, double alpha_skip) {
  const double mid = 0.5 * (cov[0] + cov[2]);
  const double det = cov[0] * cov[2] - cov[1] * cov[1];
  const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
  const double cutoff = 2.0 * std::log(std::max(opacity / alpha_skip, 1.0));
  return std::sqrt(std::max(9.0, cutoff) * lambda_max);
}

inline PreparedSplat prepare(const Splat2D& s, int width, int height, const RasterConfig& cfg) {
  PreparedSplat p;
  p.mx = s.mean[0];
  p.my = s.mean[1];
  const double det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
  p.con_a = s.cov[2] / det;
  p.con_b = -s.cov[1] / det;
  p.con_c = s.cov[0] / det;
  p.opacity = s.opacity;
  if (!(s.opacity >= cfg.alpha_skip) || !(det > 0.0)) return p;
  p.min_power = std::log(cfg.alpha_skip / s.opacity);
  const double r = footprint_radius(s.cov, s.opacity, cfg.alpha_skip);
  // Pixel u has its center at u + 0.5; widen by one pixel for safety.
  p.x0 = std::max(0, static_cast<int>(std::floor(p.mx - r - 0.5)) - 1);
  p.x1 = std::min(width - 1, static_cast<int>(std::ceil(p.mx + r - 0.5)) + 1);
  p.y0 = std::max(0, static_cast<int>(std::floor(p.my - r - 0.5)) - 1);
  p.y1 = std::min(height - 1, static_cast<int>(std::ceil(p.my + r - 0.5)) + 1);
  return p;
}

struct PixelAlpha {
  double alpha = 0;     ///< weight after clamping
  double gaussian = 0;  ///< exp(power)
  bool clamped = false;
};

/// Per-pixel weight of a splat. Returns false when the weight is skipped.
/// Every forward, reference, and backward path goes through this function
/// so that all of them make identical skip/clamp decisions.
inline bool pixel_alpha(const PreparedSplat& p, double px, double py, const RasterConfig& cfg,
                        PixelAlpha& out) {
  const double dx = px - p.mx;
  const double dy = py - p.my;
  const double power = -0.5 * (p.con_a * dx * dx + p.con_c * dy * dy) - p.con_b * dx * dy;
  if (power > 0.0 || power < p.min_power) return false;
  out.gaussian = std::exp(power);
  double a = p.opacity * out.gaussian;
  out.clamped = a > cfg.alpha_clamp;
  if (out.clamped) a = cfg.alpha_clamp;
  if (a < cfg.alpha_skip) return false;
  out.alpha = a;
  return true;
}

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ull;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
  v ^= v >> 31;
  return (h ^ v) * 0x100000001b3ull + 0x9e3779b97f4a7c15ull;
}

inline bool depth_order(const Splat2D& a, const Splat2D& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.source < b.source;
}

}  // namespace strata::detail

namespace strata::detail {

std::vector<std::vector<std::uint32_t>> bin_tiles(std::span<const Splat2D> splats,
                                                  std::span<const PreparedSplat> prepared,
                                                  int tiles_x, int tiles_y, int tile_size);

}  // namespace strata::detail
