#include "strata/gradients.hpp"

#include <cmath>

#include "raster_internal.hpp"
#include "strata/error.hpp"
#include "strata/parallel.hpp"

namespace strata {

using detail::PixelAlpha;
using detail::PreparedSplat;

namespace {

struct Contribution {
  std::uint32_t index;
  PixelAlpha pa;
  double t_before;
};

struct ConicGradient {
  Vec2 mean = Vec2::Zero();
  Vec3 conic = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  std::array<double, kIdentityDim> identity{};
  double depth = 0.0;

  void add(const ConicGradient& o) {
    mean += o.mean;
    conic += o.conic;
    color += o.color;
    opacity += o.opacity;
    for (int c = 0; c < kIdentityDim; ++c) identity[c] += o.identity[c];
    depth += o.depth;
  }
};

double upstream_at(const Image& img, int x, int y, int c) {
  return img.empty() ? 0.0 : img.at(x, y, c);
}

void check_upstream(const Image& img, const Camera& cam, int channels, const char* name) {
  if (!img.empty() && (img.width != cam.width || img.height != cam.height || img.channels != channels)) {
    throw Error(ErrorCode::DimensionMismatch, std::string("upstream gradient shape: ") + name);
  }
}

}  // namespace

std::vector<SplatGradient> rasterize_backward(std::span<const Splat2D> splats,
                                              const Camera& cam, const RasterConfig& cfg,
                                              const ForwardRecord& record,
                                              const RenderGradients& up) {
  check_upstream(up.color, cam, 3, "color");
  check_upstream(up.alpha, cam, 1, "alpha");
  check_upstream(up.identity, cam, kIdentityDim, "identity");
  check_upstream(up.depth, cam, 1, "depth");
  const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
  if (record.traversed.size() != npix) {
    throw Error(ErrorCode::MissingForwardRecord, "forward record does not match camera");
  }

  std::vector<PreparedSplat> prepared(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    prepared[i] = detail::prepare(splats[i], cam.width, cam.height, cfg);
  }
  const int ts = cfg.tile_size;
  const auto& lists = record.tile_lists;
  std::vector<std::vector<ConicGradient>> tile_grads(lists.size());

  parallel_for(lists.size(), cfg.threads, [&](std::size_t tile) {
    const auto& list = lists[tile];
    auto& local = tile_grads[tile];
    local.assign(list.size(), ConicGradient{});
    if (list.empty()) return;
    const int tx = static_cast<int>(tile) % record.tiles_x;
    const int ty = static_cast<int>(tile) / record.tiles_x;
    std::vector<Contribution> contribs;
    for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
        const std::uint32_t traversed = record.traversed[pix];
        const double px = x + 0.5;
        const double py = y + 0.5;

        // Replay the forward traversal to recover each contributor's T.
        contribs.clear();
        double t = 1.0;
        for (std::uint32_t k = 0; k < traversed; ++k) {
          PixelAlpha pa;
          if (!detail::pixel_alpha(prepared[list[k]], px, py, cfg, pa)) continue;
          contribs.push_back({k, pa, t});
          t *= 1.0 - pa.alpha;
        }
        if (contribs.empty()) continue;

        double g_color[3], g_id[kIdentityDim];
        for (int c = 0; c < 3; ++c) g_color[c] = upstream_at(up.color, x, y, c);
        for (int c = 0; c < kIdentityDim; ++c) g_id[c] = upstream_at(up.identity, x, y, c);
        const double g_depth = upstream_at(up.depth, x, y, 0);
        const double g_alpha = upstream_at(up.alpha, x, y, 0);

        // Suffix values: what is seen behind the current splat.
        double r_color[3] = {cfg.background[0], cfg.background[1], cfg.background[2]};
        double r_id[kIdentityDim] = {};
        r_id[0] = cfg.background_identity_logit;
        double r_depth = 0.0;
        double r_alpha = 0.0;

        for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
          const std::uint32_t idx = list[it->index];
          const Splat2D& s = splats[idx];
          const PreparedSplat& p = prepared[idx];
          ConicGradient& g = local[it->index];
          const double a = it->pa.alpha;
          const double w = a * it->t_before;

          double d_alpha = 0.0;
          for (int c = 0; c < 3; ++c) {
            g.color[c] += g_color[c] * w;
            d_alpha += g_color[c] * (s.color[c] - r_color[c]);
            r_color[c] = a * s.color[c] + (1.0 - a) * r_color[c];
          }
          for (int c = 0; c < kIdentityDim; ++c) {
            g.identity[c] += g_id[c] * w;
            d_alpha += g_id[c] * (s.identity[c] - r_id[c]);
            r_id[c] = a * s.identity[c] + (1.0 - a) * r_id[c];
          }
          g.depth += g_depth * w;
          d_alpha += g_depth * (s.depth - r_depth);
          r_depth = a * s.depth + (1.0 - a) * r_depth;
          d_alpha += g_alpha * (1.0 - r_alpha);
          r_alpha = a + (1.0 - a) * r_alpha;
          d_alpha *= it->t_before;

          if (it->pa.clamped) continue;
          g.opacity += d_alpha * it->pa.gaussian;
          const double d_power = d_alpha * s.opacity * it->pa.gaussian;
          const double dx = px - p.mx;
          const double dy = py - p.my;
          g.mean[0] += d_power * (p.con_a * dx + p.con_b * dy);
          g.mean[1] += d_power * (p.con_c * dy + p.con_b * dx);
          g.conic[0] += d_power * (-0.5 * dx * dx);
          g.conic[1] += d_power * (-dx * dy);
          g.conic[2] += d_power * (-0.5 * dy * dy);
        }
      }
    }
  });

  // Deterministic merge in tile order.
  std::vector<ConicGradient> merged(splats.size());
  for (std::size_t tile = 0; tile < lists.size(); ++tile) {
    for (std::size_t k = 0; k < lists[tile].size(); ++k) merged[lists[tile][k]].add(tile_grads[tile][k]);
  }

  std::vector<SplatGradient> out(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const PreparedSplat& p = prepared[i];
    const ConicGradient& g = merged[i];
    Mat2 con;
    con << p.con_a, p.con_b, p.con_b, p.con_c;
    Mat2 g_con;
    g_con << g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2];
    const Mat2 g_cov = -con * g_con * con;
    SplatGradient& o = out[i];
    o.mean = g.mean;
    o.cov = {g_cov(0, 0), g_cov(0, 1) + g_cov(1, 0), g_cov(1, 1)};
    o.color = g.color;
    o.opacity = g.opacity;
    o.identity = g.identity;
    o.depth = g.depth;
  }
  return out;
}

void WorldGradients::reset(std::size_t n, int sh_stride) {
  position.assign(n, Vec3::Zero());
  rotation.assign(n, Mat3::Zero());
  scale.assign(n, Vec3::Zero());
  opacity.assign(n, 0.0);
  sh.assign(n * static_cast<std::size_t>(sh_stride), 0.0);
  identity.assign(n, std::array<double, kIdentityDim>{});
}

WorldGradients project_backward(const GaussianSet& set, const ForwardPass& pass,
                                const Camera& cam, std::span<const SplatGradient> splat_grads) {
  WorldGradients wg;
  wg.reset(set.size(), set.sh_stride());
  const Mat3& rcw = cam.world_to_camera.rotation;
  const Vec3 center = cam.center();
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());

  for (std::size_t s = 0; s < pass.splats.size(); ++s) {
    const SplatGradient& g = splat_grads[s];
    const std::uint32_t i = pass.splats[s].source;
    const ReposedGaussian& rg = pass.world[i];

    const Vec3 t = rcw * rg.position + cam.world_to_camera.translation;
    const double z = t.z(), z2 = z * z, z3 = z2 * z;
    const double fx = cam.fx, fy = cam.fy;
    Eigen::Matrix<double, 2, 3> jac;
    jac << fx / z, 0.0, -fx * t.x() / z2, 0.0, fy / z, -fy * t.y() / z2;
    const Eigen::Matrix<double, 2, 3> m = jac * rcw;
    const Mat3 rot = rg.rotation.to_matrix();
    const Mat3 a = rot * rg.scale.asDiagonal();
    const Mat3 sigma = a * a.transpose();

    Vec3 d_t = Vec3::Zero();
    d_t.x() += g.mean[0] * fx / z;
    d_t.y() += g.mean[1] * fy / z;
    d_t.z() += -g.mean[0] * fx * t.x() / z2 - g.mean[1] * fy * t.y() / z2;
    d_t.z() += g.depth;

    Mat2 g_cov;
    g_cov << g.cov[0], 0.5 * g.cov[1], 0.5 * g.cov[1], g.cov[2];
    const Eigen::Matrix<double, 2, 3> d_m = 2.0 * g_cov * m * sigma;
    const Mat3 d_sigma = m.transpose() * g_cov * m;
    const Eigen::Matrix<double, 2, 3> d_j = d_m * rcw.transpose();
    d_t.x() += d_j(0, 2) * (-fx / z2);
    d_t.y() += d_j(1, 2) * (-fy / z2);
    d_t.z() += d_j(0, 0) * (-fx / z2) + d_j(0, 2) * (2.0 * fx * t.x() / z3) +
               d_j(1, 1) * (-fy / z2) + d_j(1, 2) * (2.0 * fy * t.y() / z3);

    Vec3 d_pos = rcw.transpose() * d_t;

    const Mat3 d_a = 2.0 * d_sigma * a;
    Mat3 d_rot = d_a;
    for (int k = 0; k < 3; ++k) d_rot.col(k) *= rg.scale[k];
    Vec3 d_scale;
    for (int k = 0; k < 3; ++k) d_scale[k] = rot.col(k).dot(d_a.col(k));

    const Vec3 diff = rg.position - center;
    const double dist = diff.norm();
    const Vec3 dir = diff / dist;
    const Vec3 d_dir =
        eval_sh_backward(set.sh_degree, set.sh_of(i), dir, g.color,
                         std::span<double>(wg.sh.data() + i * stride, stride));
    d_pos += (d_dir - dir * dir.dot(d_dir)) / dist;

    wg.position[i] += d_pos;
    wg.rotation[i] += d_rot;
    wg.scale[i] += d_scale;
    wg.opacity[i] += g.opacity;
    for (int c = 0; c < kIdentityDim; ++c) wg.identity[i][c] += g.identity[c];
  }
  return wg;
}

// ---- ParamGradients ----------------------------------------------------------

ParamGradients ParamGradients::zeros(std::size_t n, int sh_stride) {
  ParamGradients g;
  g.sh_stride = sh_stride;
  g.offsets.assign(3 * n, 0.0);
  g.rotation.assign(4 * n, 0.0);
  g.log_scale.assign(3 * n, 0.0);
  g.opacity_logit.assign(n, 0.0);
  g.sh.assign(n * static_cast<std::size_t>(sh_stride), 0.0);
  g.identity.assign(kIdentityDim * n, 0.0);
  return g;
}

ParamGradients ParamGradients::zeros_like(const GaussianSet& set) {
  return zeros(set.size(), set.sh_stride());
}

namespace {

void compact_rows(std::vector<double>& v, std::size_t width, const std::vector<bool>& mask) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    if (w != r) std::copy_n(v.begin() + r * width, width, v.begin() + w * width);
    ++w;
  }
  v.resize(w * width);
}

}  // namespace

void ParamGradients::keep(const std::vector<bool>& mask) {
  if (mask.size() != size()) throw Error(ErrorCode::ShapeMismatch, "gradient keep mask length");
  compact_rows(offsets, 3, mask);
  compact_rows(rotation, 4, mask);
  compact_rows(log_scale, 3, mask);
  compact_rows(opacity_logit, 1, mask);
  compact_rows(sh, static_cast<std::size_t>(sh_stride), mask);
  compact_rows(identity, kIdentityDim, mask);
}

void ParamGradients::append_zeros(std::size_t n) {
  offsets.resize(offsets.size() + 3 * n, 0.0);
  rotation.resize(rotation.size() + 4 * n, 0.0);
  log_scale.resize(log_scale.size() + 3 * n, 0.0);
  opacity_logit.resize(opacity_logit.size() + n, 0.0);
  sh.resize(sh.size() + n * static_cast<std::size_t>(sh_stride), 0.0);
  identity.resize(identity.size() + kIdentityDim * n, 0.0);
}

void ParamGradients::add(const ParamGradients& o, double scale) {
  if (o.size() != size() || o.sh_stride != sh_stride) {
    throw Error(ErrorCode::ShapeMismatch, "adding gradients of different shapes");
  }
  const auto acc = [scale](std::vector<double>& d, const std::vector<double>& s) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  };
  acc(offsets, o.offsets);
  acc(rotation, o.rotation);
  acc(log_scale, o.log_scale);
  acc(opacity_logit, o.opacity_logit);
  acc(sh, o.sh);
  acc(identity, o.identity);
}

void ParamGradients::zero_rows(const std::vector<std::uint8_t>& frozen) {
  const std::size_t stride = static_cast<std::size_t>(sh_stride);
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    if (!frozen[i]) continue;
    std::fill_n(offsets.begin() + 3 * i, 3, 0.0);
    std::fill_n(rotation.begin() + 4 * i, 4, 0.0);
    std::fill_n(log_scale.begin() + 3 * i, 3, 0.0);
    opacity_logit[i] = 0.0;
    std::fill_n(sh.begin() + stride * i, stride, 0.0);
    std::fill_n(identity.begin() + kIdentityDim * i, kIdentityDim, 0.0);
  }
}

std::vector<double> ParamGradients::flatten() const {
  std::vector<double> out;
  for (const auto* v : {&offsets, &rotation, &log_scale, &opacity_logit, &sh, &identity}) {
    out.insert(out.end(), v->begin(), v->end());
  }
  return out;
}

bool ParamGradients::all_finite() const {
  for (double x : flatten()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool ParamGradients::all_zero() const {
  for (double x : flatten()) {
    if (x != 0.0) return false;
  }
  return true;
}

Vec3 offset_gradient(const FaceTransport& t, const Vec3& d_position) {
  return {t.ratios[0] * t.posed.i.dot(d_position), t.ratios[1] * t.posed.j.dot(d_position),
          t.ratios[2] * t.posed.k.dot(d_position)};
}

ParamGradients repose_backward(const GaussianSet& set, std::span<const FaceTransport> transports,
                               const WorldGradients& wg) {
  ParamGradients pg = ParamGradients::zeros_like(set);
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.frozen[i]) continue;
    const FaceTransport& t = transports[set.embedding[i].face_index];

    const Vec3 d_off = offset_gradient(t, wg.position[i]);
    for (int k = 0; k < 3; ++k) pg.offsets[3 * i + k] = d_off[k];

    // world = hamilton(frame, local) with local = +-normalize(raw).
    const auto& raw = set.rotation[i];
    const Vec4 q_raw(raw[0], raw[1], raw[2], raw[3]);
    const UnitQuaternion local = set.rotation_of(i);
    const UnitQuaternion world = hamilton(t.rotation, local);
    const Vec4 d_world = quaternion_matrix_backward(world.as_vector(), wg.rotation[i]);
    const UnitQuaternion& f = t.rotation;
    Mat4 left;
    left << f.w, -f.x, -f.y, -f.z,
            f.x, f.w, -f.z, f.y,
            f.y, f.z, f.w, -f.x,
            f.z, -f.y, f.x, f.w;
    const Vec4 d_local = left.transpose() * d_world;
    const double sign = raw[0] < 0.0f ? -1.0 : 1.0;
    const Vec4 d_raw = sign * normalize_backward(q_raw, d_local);
    for (int k = 0; k < 4; ++k) pg.rotation[4 * i + k] = d_raw[k];

    const Vec3 scale = set.scale_of(i).cwiseProduct(t.ratios);
    for (int k = 0; k < 3; ++k) pg.log_scale[3 * i + k] = wg.scale[i][k] * scale[k];

    const double alpha = set.opacity_of(i);
    pg.opacity_logit[i] = wg.opacity[i] * alpha * (1.0 - alpha);

    for (std::size_t c = 0; c < stride; ++c) pg.sh[i * stride + c] = wg.sh[i * stride + c];
    for (int c = 0; c < kIdentityDim; ++c) pg.identity[kIdentityDim * i + c] = wg.identity[i][c];
  }
  return pg;
}

WorldGradients backward_world(const GaussianSet& set, const ForwardPass& pass,
                              const Camera& cam, const RasterConfig& cfg,
                              const RenderGradients& upstream) {
  if (!pass.record) {
    throw Error(ErrorCode::MissingForwardRecord, "backward requires a forward pass with a record");
  }
  const auto splat_grads = rasterize_backward(pass.splats, cam, cfg, *pass.record, upstream);
  return project_backward(set, pass, cam, splat_grads);
}

ParamGradients backward(const GaussianSet& set, std::span<const FaceTransport> transports,
                        const ForwardPass& pass, const Camera& cam, const RasterConfig& cfg,
                        const RenderGradients& upstream) {
  return repose_backward(set, transports, backward_world(set, pass, cam, cfg, upstream));
}

}  // namespace strata
