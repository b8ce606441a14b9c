#include "strata/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "raster_internal.hpp"
#include "strata/error.hpp"
#include "strata/parallel.hpp"

namespace strata {

using detail::PixelAlpha;
using detail::PreparedSplat;

std::optional<Splat2D> project(const ReposedGaussian& g, double opacity, int sh_degree,
                               std::span<const float> sh, const IdentityVector& identity,
                               std::uint32_t source, const Camera& cam,
                               const RasterConfig& cfg) {
  const Mat3& rcw = cam.world_to_camera.rotation;
  const Vec3 t = rcw * g.position + cam.world_to_camera.translation;
  if (!(t.z() > cam.near)) return std::nullopt;
  if (!(opacity >= cfg.alpha_skip)) return std::nullopt;

  const double z = t.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0.0, -cam.fx * t.x() / (z * z), 0.0, cam.fy / z, -cam.fy * t.y() / (z * z);
  const Eigen::Matrix<double, 2, 3> m = jac * rcw;
  const Mat3 rot = g.rotation.to_matrix();
  const Mat3 a = rot * g.scale.asDiagonal();
  const Mat3 sigma = a * a.transpose();
  const Mat2 cov = m * sigma * m.transpose();

  Splat2D s;
  s.mean = {cam.fx * t.x() / z + cam.cx, cam.fy * t.y() / z + cam.cy};
  s.cov = {cov(0, 0) + cfg.low_pass, 0.5 * (cov(0, 1) + cov(1, 0)), cov(1, 1) + cfg.low_pass};
  s.depth = z;
  s.opacity = opacity;
  s.source = source;
  for (int c = 0; c < kIdentityDim; ++c) s.identity[c] = identity[c];

  const double r = detail::footprint_radius(s.cov, opacity, cfg.alpha_skip);
  if (s.mean[0] + r < 0.0 || s.mean[0] - r > cam.width || s.mean[1] + r < 0.0 ||
      s.mean[1] - r > cam.height) {
    return std::nullopt;
  }
  const Vec3 dir = (g.position - cam.center()).normalized();
  s.color = eval_sh(sh_degree, sh, dir);
  return s;
}

namespace {

constexpr int kChannels = 3 + kIdentityDim + 1;  // color, identity, depth

RenderOutput make_output(const Camera& cam) {
  RenderOutput out;
  out.color = Image(cam.width, cam.height, 3);
  out.alpha = Image(cam.width, cam.height, 1);
  out.identity = Image(cam.width, cam.height, kIdentityDim);
  out.depth = Image(cam.width, cam.height, 1);
  return out;
}

struct PixelResult {
  std::uint32_t traversed = 0;
  double transmittance = 1.0;
  std::uint64_t hash = 0;
};

/// Front-to-back blend of one pixel over an ordered splat sequence.
/// `at(k)` yields the k-th splat index; shared by tiled and reference paths.
template <typename At>
PixelResult composite_pixel(std::size_t count, At&& at, std::span<const Splat2D> splats,
                            std::span<const PreparedSplat> prepared, int x, int y,
                            const RasterConfig& cfg, RenderOutput& out, bool want_hash) {
  const double px = x + 0.5;
  const double py = y + 0.5;
  double acc[kChannels] = {};
  PixelResult r;
  double t = 1.0;
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint32_t idx = at(k);
    PixelAlpha pa;
    if (!detail::pixel_alpha(prepared[idx], px, py, cfg, pa)) continue;
    const Splat2D& s = splats[idx];
    const double w = pa.alpha * t;
    acc[0] += w * s.color[0];
    acc[1] += w * s.color[1];
    acc[2] += w * s.color[2];
    for (int c = 0; c < kIdentityDim; ++c) acc[3 + c] += w * s.identity[c];
    acc[3 + kIdentityDim] += w * s.depth;
    t *= 1.0 - pa.alpha;
    r.traversed = static_cast<std::uint32_t>(k + 1);
    if (want_hash) {
      r.hash = detail::hash_mix(r.hash, (std::uint64_t{s.source} << 1) | (pa.clamped ? 1u : 0u));
    }
    if (t < cfg.transmittance_stop) break;
  }
  r.transmittance = t;
  if (want_hash) r.hash = detail::hash_mix(r.hash, r.traversed);
  for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = acc[c] + t * cfg.background[c];
  for (int c = 0; c < kIdentityDim; ++c) out.identity.at(x, y, c) = acc[3 + c];
  out.identity.at(x, y, 0) += t * cfg.background_identity_logit;
  out.depth.at(x, y) = acc[3 + kIdentityDim];
  out.alpha.at(x, y) = 1.0 - t;
  return r;
}

std::vector<PreparedSplat> prepare_all(std::span<const Splat2D> splats, const Camera& cam,
                                       const RasterConfig& cfg) {
  std::vector<PreparedSplat> prepared(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    prepared[i] = detail::prepare(splats[i], cam.width, cam.height, cfg);
  }
  return prepared;
}

}  // namespace

namespace detail {

std::vector<std::vector<std::uint32_t>> bin_tiles(std::span<const Splat2D> splats,
                                                  std::span<const PreparedSplat> prepared,
                                                  int tiles_x, int tiles_y, int tile_size) {
  std::vector<std::vector<std::uint32_t>> lists(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const PreparedSplat& p = prepared[i];
    if (p.x1 < p.x0 || p.y1 < p.y0) continue;
    for (int ty = p.y0 / tile_size; ty <= p.y1 / tile_size; ++ty) {
      for (int tx = p.x0 / tile_size; tx <= p.x1 / tile_size; ++tx) {
        lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  for (auto& list : lists) {
    std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
      return depth_order(splats[a], splats[b]);
    });
  }
  return lists;
}

}  // namespace detail

RenderOutput rasterize(std::span<const Splat2D> splats, const Camera& cam,
                       const RasterConfig& cfg, ForwardRecord* record) {
  cam.validate();
  if (cfg.tile_size < 1) throw Error(ErrorCode::InvalidArgument, "tile size must be >= 1");
  RenderOutput out = make_output(cam);
  const auto prepared = prepare_all(splats, cam, cfg);
  const int ts = cfg.tile_size;
  const int tiles_x = (cam.width + ts - 1) / ts;
  const int tiles_y = (cam.height + ts - 1) / ts;
  auto lists = detail::bin_tiles(splats, prepared, tiles_x, tiles_y, ts);

  const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
  std::vector<std::uint32_t> traversed(record ? npix : 0);
  std::vector<double> final_t(record ? npix : 0);
  std::vector<std::uint64_t> tile_hash(lists.size(), 0);
  const bool want_hash = record != nullptr;

  parallel_for(lists.size(), cfg.threads, [&](std::size_t tile) {
    const auto& list = lists[tile];
    const int tx = static_cast<int>(tile) % tiles_x;
    const int ty = static_cast<int>(tile) / tiles_x;
    std::uint64_t h = 0;
    for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
        const PixelResult r = composite_pixel(
            list.size(), [&](std::size_t k) { return list[k]; }, splats, prepared, x, y, cfg,
            out, want_hash);
        if (record) {
          const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
          traversed[p] = r.traversed;
          final_t[p] = r.transmittance;
          h = detail::hash_mix(h, r.hash);
        }
      }
    }
    tile_hash[tile] = h;
  });

  if (record) {
    record->tiles_x = tiles_x;
    record->tiles_y = tiles_y;
    record->tile_lists = std::move(lists);
    record->traversed = std::move(traversed);
    record->final_transmittance = std::move(final_t);
    std::uint64_t sig = detail::hash_mix(0, splats.size());
    for (auto th : tile_hash) sig = detail::hash_mix(sig, th);
    record->signature = sig;
  }
  return out;
}

RenderOutput rasterize_reference(std::span<const Splat2D> splats, const Camera& cam,
                                 const RasterConfig& cfg) {
  cam.validate();
  RenderOutput out = make_output(cam);
  std::vector<PreparedSplat> prepared(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    // No footprint bounds: every splat is evaluated at every pixel.
    prepared[i] = detail::prepare(splats[i], cam.width, cam.height, cfg);
  }
  std::vector<std::uint32_t> order(splats.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return detail::depth_order(splats[a], splats[b]);
  });
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      composite_pixel(
          order.size(), [&](std::size_t k) { return order[k]; }, splats, prepared, x, y, cfg,
          out, false);
    }
  }
  return out;
}

std::vector<double> max_blend_weights(std::span<const Splat2D> splats, const Camera& cam,
                                      const RasterConfig& cfg,
                                      const std::vector<bool>& pixel_mask) {
  const auto prepared = prepare_all(splats, cam, cfg);
  const int ts = cfg.tile_size;
  const int tiles_x = (cam.width + ts - 1) / ts;
  const int tiles_y = (cam.height + ts - 1) / ts;
  const auto lists = detail::bin_tiles(splats, prepared, tiles_x, tiles_y, ts);
  std::vector<std::vector<double>> tile_max(lists.size());

  parallel_for(lists.size(), cfg.threads, [&](std::size_t tile) {
    const auto& list = lists[tile];
    auto& local = tile_max[tile];
    local.assign(list.size(), 0.0);
    const int tx = static_cast<int>(tile) % tiles_x;
    const int ty = static_cast<int>(tile) / tiles_x;
    for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
        if (!pixel_mask.empty() && !pixel_mask[static_cast<std::size_t>(y) * cam.width + x]) {
          continue;
        }
        double t = 1.0;
        for (std::size_t k = 0; k < list.size(); ++k) {
          PixelAlpha pa;
          if (!detail::pixel_alpha(prepared[list[k]], x + 0.5, y + 0.5, cfg, pa)) continue;
          local[k] = std::max(local[k], pa.alpha * t);
          t *= 1.0 - pa.alpha;
          if (t < cfg.transmittance_stop) break;
        }
      }
    }
  });

  std::vector<double> result(splats.size(), 0.0);
  for (std::size_t tile = 0; tile < lists.size(); ++tile) {
    for (std::size_t k = 0; k < lists[tile].size(); ++k) {
      double& r = result[lists[tile][k]];
      r = std::max(r, tile_max[tile][k]);
    }
  }
  return result;
}

ForwardPass render_world(const GaussianSet& set, std::vector<ReposedGaussian> world,
                         const Camera& cam, const RasterConfig& cfg, bool keep_record) {
  if (world.size() != set.size()) {
    throw Error(ErrorCode::ShapeMismatch, "world Gaussian count does not match set");
  }
  ForwardPass pass;
  pass.world = std::move(world);
  pass.splats.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto s = project(pass.world[i], set.opacity_of(i), set.sh_degree, set.sh_of(i),
                     set.identity[i], static_cast<std::uint32_t>(i), cam, cfg);
    if (s) pass.splats.push_back(*s);
  }
  if (keep_record) {
    pass.record.emplace();
    pass.output = rasterize(pass.splats, cam, cfg, &*pass.record);
  } else {
    pass.output = rasterize(pass.splats, cam, cfg, nullptr);
  }
  return pass;
}

ForwardPass render(const GaussianSet& set, std::span<const FaceTransport> transports,
                   const Camera& cam, const RasterConfig& cfg, bool keep_record) {
  return render_world(set, repose_all(set, transports), cam, cfg, keep_record);
}

}  // namespace strata
