#include "strata/lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "strata/error.hpp"
#include "strata/knn.hpp"

namespace strata {

void Schedule::validate() const {
  const auto fail = [](const char* msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (total_iters < 0) fail("schedule.total_iters must be >= 0");
  if (prune_interval < 1 || densify_interval < 1) fail("schedule intervals must be >= 1");
  if (densify_start > densify_stop) fail("schedule.densify_start must be <= densify_stop");
  if (densify_stop > total_iters && total_iters > 0 && densify_start <= total_iters) {
    // A stop past the end is harmless only when densification never starts.
    fail("schedule.densify_stop must be <= total_iters");
  }
  if (front_view_iters < 0) fail("schedule.front_view_iters must be >= 0");
  if (!(opacity_prune_threshold >= 0.0 && opacity_prune_threshold < 1.0)) {
    fail("schedule.opacity_prune_threshold must be in [0, 1)");
  }
  if (!(densify_rate >= 0.0)) fail("schedule.densify_rate must be >= 0");
  if (inpaint_iters < 0) fail("schedule.inpaint_iters must be >= 0");
  for (double r : {lr.offsets, lr.rotation, lr.log_scale, lr.opacity, lr.sh, lr.identity}) {
    if (!(r > 0.0) || !std::isfinite(r)) fail("learning rates must be positive");
  }
}

// ---- Adam -------------------------------------------------------------------

AdamState AdamState::for_set(const GaussianSet& set) {
  AdamState s;
  s.m = ParamGradients::zeros_like(set);
  s.v = ParamGradients::zeros_like(set);
  return s;
}

void AdamState::keep(const std::vector<bool>& mask) {
  m.keep(mask);
  v.keep(mask);
}

void AdamState::append(std::size_t count) {
  m.append_zeros(count);
  v.append_zeros(count);
}

void adam_step(GaussianSet& set, const ParamGradients& g, AdamState& st, const LearningRates& lr) {
  const std::size_t n = set.size();
  if (g.size() != n || st.m.size() != n || st.v.size() != n || g.sh_stride != set.sh_stride() ||
      st.m.sh_stride != set.sh_stride()) {
    throw Error(ErrorCode::ShapeMismatch, "adam_step: parameter, gradient and moment shapes differ");
  }
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  const auto update = [&](float& p, double grad, double& m, double& v, double rate) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
    const double mh = m / c1;
    const double vh = v / c2;
    p = static_cast<float>(double{p} - rate * mh / (std::sqrt(vh) + kAdamEpsilon));
  };
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());
  for (std::size_t i = 0; i < n; ++i) {
    if (set.frozen[i]) continue;
    auto& e = set.embedding[i];
    float* offs[3] = {&e.sigma, &e.beta, &e.gamma};
    for (int a = 0; a < 3; ++a) {
      update(*offs[a], g.offsets[3 * i + a], st.m.offsets[3 * i + a], st.v.offsets[3 * i + a],
             lr.offsets);
    }
    for (int a = 0; a < 4; ++a) {
      update(set.rotation[i][a], g.rotation[4 * i + a], st.m.rotation[4 * i + a],
             st.v.rotation[4 * i + a], lr.rotation);
    }
    for (int a = 0; a < 3; ++a) {
      update(set.log_scale[i][a], g.log_scale[3 * i + a], st.m.log_scale[3 * i + a],
             st.v.log_scale[3 * i + a], lr.log_scale);
    }
    update(set.opacity_logit[i], g.opacity_logit[i], st.m.opacity_logit[i], st.v.opacity_logit[i],
           lr.opacity);
    for (std::size_t c = 0; c < stride; ++c) {
      update(set.sh[i * stride + c], g.sh[i * stride + c], st.m.sh[i * stride + c],
             st.v.sh[i * stride + c], lr.sh);
    }
    for (int c = 0; c < kIdentityDim; ++c) {
      const std::size_t k = kIdentityDim * i + c;
      update(set.identity[i][c], g.identity[k], st.m.identity[k], st.v.identity[k], lr.identity);
    }
    auto& q = set.rotation[i];
    const double norm = std::sqrt(double{q[0]} * q[0] + double{q[1]} * q[1] +
                                  double{q[2]} * q[2] + double{q[3]} * q[3]);
    if (norm > 0.0) {
      for (auto& c : q) c = static_cast<float>(c / norm);
    } else {
      q = {1.0f, 0.0f, 0.0f, 0.0f};
    }
  }
}

// ---- pruning and densification ----------------------------------------------

namespace {

std::size_t apply_keep(GaussianSet& set, const std::vector<bool>& keep, AdamState* state) {
  const std::size_t removed =
      static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
  if (removed == 0) return 0;
  set.keep(keep);
  if (state) state->keep(keep);
  return removed;
}

}  // namespace

std::size_t prune_inside(GaussianSet& set, std::span<const FaceTransport> transports,
                         const MeshSdf& sdf, AdamState* state) {
  std::vector<bool> keep(set.size(), true);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] != Layer::Asset) continue;
    const Vec3 p = repose(set, i, transports[set.embedding[i].face_index]).position;
    if (sdf.query(p) < 0.0) keep[i] = false;
  }
  return apply_keep(set, keep, state);
}

std::size_t prune_transparent(GaussianSet& set, double threshold, AdamState* state) {
  std::vector<bool> keep(set.size(), true);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] == Layer::Asset && set.opacity_of(i) < threshold) keep[i] = false;
  }
  return apply_keep(set, keep, state);
}

std::size_t densify_category(GaussianSet& set, std::span<const Vec3> vertices,
                             std::span<const std::array<std::uint32_t, 3>> faces, int category,
                             std::size_t n_new, int k, std::uint64_t seed, AdamState* state) {
  if (category < 0 || category >= kCategoryCount) {
    throw Error(ErrorCode::InvalidCategory, "densify: category out of range");
  }
  if (n_new == 0) return 0;
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "densify: k must be >= 1");
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] == Layer::Asset && category_of(set.identity[i]) == category) {
      members.push_back(i);
    }
  }
  if (members.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewGaussians, "densify: category has fewer than k members");
  }
  std::vector<Vec3> pos;
  double jitter = 0.0;
  for (auto i : members) {
    pos.push_back(resolve_position(set.embedding[i], vertices, faces));
    jitter += set.scale_of(i).sum() / 3.0;
  }
  jitter /= static_cast<double>(members.size());
  const GridIndex index(pos);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());
  GaussianSet added(set.sh_degree);
  for (std::size_t n = 0; n < n_new; ++n) {
    const std::size_t src = static_cast<std::size_t>(rng() % members.size());
    Vec3 p = pos[src];
    for (int a = 0; a < 3; ++a) p[a] += jitter * normal(rng);
    const auto nn = index.nearest(p, k);

    // Majority face; ties go to the face of the nearer neighbour.
    std::map<std::uint32_t, int> votes;
    for (auto j : nn) ++votes[set.embedding[members[j]].face_index];
    std::uint32_t face = set.embedding[members[nn[0]]].face_index;
    for (auto j : nn) {
      const std::uint32_t f = set.embedding[members[j]].face_index;
      if (votes[f] > votes[face]) face = f;
    }

    Gaussian g;
    const auto& tri = faces[face];
    const TriangleFrame frame = triangle_frame(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    const Vec3 local = frame.to_local(p);
    g.embedding = {face, static_cast<float>(local[0]), static_cast<float>(local[1]),
                   static_cast<float>(local[2])};

    const double inv = 1.0 / static_cast<double>(nn.size());
    Vec3 scale = Vec3::Zero();
    Vec4 quat = Vec4::Zero();
    double opacity = 0.0;
    std::vector<double> sh(stride, 0.0);
    std::array<double, kIdentityDim> id{};
    const Vec4 ref = set.rotation_of(members[nn[0]]).as_vector();
    for (auto j : nn) {
      const std::size_t m = members[j];
      scale += set.scale_of(m);
      Vec4 q = set.rotation_of(m).as_vector();
      if (q.dot(ref) < 0.0) q = -q;
      quat += q;
      opacity += set.opacity_of(m);
      const auto s = set.sh_of(m);
      for (std::size_t c = 0; c < stride; ++c) sh[c] += s[c];
      for (int c = 0; c < kIdentityDim; ++c) id[c] += set.identity[m][c];
    }
    scale *= inv;
    opacity *= inv;
    const UnitQuaternion qm = UnitQuaternion::normalized(quat[0], quat[1], quat[2], quat[3]);
    g.rotation = {static_cast<float>(qm.w), static_cast<float>(qm.x), static_cast<float>(qm.y),
                  static_cast<float>(qm.z)};
    for (int a = 0; a < 3; ++a) g.log_scale[a] = static_cast<float>(std::log(scale[a]));
    g.opacity_logit = static_cast<float>(logit(std::clamp(opacity, 1e-6, 1.0 - 1e-6)));
    g.sh.resize(stride);
    for (std::size_t c = 0; c < stride; ++c) g.sh[c] = static_cast<float>(sh[c] * inv);
    for (int c = 0; c < kIdentityDim; ++c) g.identity[c] = static_cast<float>(id[c] * inv);
    if (category_of(g.identity) != category) {
      // Averaged logits can tip to another argmax; restore the category lead.
      float best_other = -std::numeric_limits<float>::infinity();
      for (int c = 0; c < kIdentityDim; ++c) {
        if (c != category) best_other = std::max(best_other, g.identity[c]);
      }
      g.identity[category] = best_other + 0.1f;
    }
    g.layer = Layer::Asset;
    g.frozen = false;
    added.push_back(g);
  }
  set.append(added);
  if (state) state->append(added.size());
  return added.size();
}

// ---- body layer -------------------------------------------------------------

int body_label(const SkinnedMesh& mesh, std::size_t face) {
  const auto it = mesh.face_regions.find("face");
  if (it != mesh.face_regions.end() &&
      std::find(it->second.begin(), it->second.end(), face) != it->second.end()) {
    return category::kFace;
  }
  return category::kSkin;
}

GaussianSet build_body_gaussians(const SkinnedMesh& mesh, int per_face_count, int sh_degree,
                                 const Vec3& color) {
  if (per_face_count < 1 || per_face_count > 7) {
    throw Error(ErrorCode::InvalidArgument, "body Gaussians per face must be in [1, 7]");
  }
  std::vector<bool> face_region(mesh.face_count(), false);
  if (const auto it = mesh.face_regions.find("face"); it != mesh.face_regions.end()) {
    for (auto f : it->second) face_region.at(f) = true;
  }
  // Barycentric sites: centroid, edge midpoints, centroid-vertex midpoints.
  const double third = 1.0 / 3.0;
  const std::array<Vec3, 7> sites = {
      Vec3(third, third, third),        Vec3(0.5, 0.5, 0.0),       Vec3(0.0, 0.5, 0.5),
      Vec3(0.5, 0.0, 0.5),              Vec3(2 * third, third / 2, third / 2),
      Vec3(third / 2, 2 * third, third / 2), Vec3(third / 2, third / 2, 2 * third)};
  GaussianSet set(sh_degree);
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const TriangleFrame frame = triangle_frame(a, b, c);
    const double area = triangle_area(a, b, c);
    const double perimeter = (b - a).norm() + (c - b).norm() + (a - c).norm();
    const double in_radius = 2.0 * area / perimeter;
    const double s = in_radius / std::sqrt(static_cast<double>(per_face_count));
    const UnitQuaternion q = UnitQuaternion::from_matrix(frame.basis());
    const int label = face_region[f] ? category::kFace : category::kSkin;
    for (int k = 0; k < per_face_count; ++k) {
      const Vec3& w = sites[static_cast<std::size_t>(k)];
      const Vec3 local = frame.to_local(w[0] * a + w[1] * b + w[2] * c);
      Gaussian g;
      g.embedding = {static_cast<std::uint32_t>(f), static_cast<float>(local[0]),
                     static_cast<float>(local[1]), 0.0f};
      g.rotation = {static_cast<float>(q.w), static_cast<float>(q.x), static_cast<float>(q.y),
                    static_cast<float>(q.z)};
      g.log_scale = {static_cast<float>(std::log(s)), static_cast<float>(std::log(s)),
                     static_cast<float>(std::log(0.1 * s))};
      g.opacity_logit = static_cast<float>(std::log(99.0));
      g.sh.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), 0.0f);
      for (int ch = 0; ch < 3; ++ch) g.sh[ch] = static_cast<float>(color[ch] / kShC0);
      g.identity[static_cast<std::size_t>(label)] = 10.0f;
      g.layer = Layer::Body;
      g.frozen = true;
      set.push_back(g);
    }
  }
  return set;
}

std::vector<bool> body_visibility(const GaussianSet& set, std::span<const FaceTransport> transports,
                                  std::span<const View> views, const RasterConfig& cfg) {
  std::vector<std::size_t> body;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] == Layer::Body) body.push_back(i);
  }
  const GaussianSet only = set.select(body);
  std::vector<bool> visible(set.size(), false);
  for (const View& view : views) {
    std::vector<bool> skin(view.mask.labels.size());
    for (std::size_t p = 0; p < skin.size(); ++p) skin[p] = view.mask.labels[p] == category::kSkin;
    const ForwardPass pass = render(only, transports, view.camera, cfg, false);
    const auto weights = max_blend_weights(pass.splats, view.camera, cfg, skin);
    for (std::size_t s = 0; s < pass.splats.size(); ++s) {
      if (weights[s] >= 1.0 / 255.0) visible[body[pass.splats[s].source]] = true;
    }
  }
  return visible;
}

InpaintReport inpaint_body_color(GaussianSet& set, std::span<const FaceTransport> transports,
                                 const std::vector<bool>& visible, std::span<const View> views,
                                 const RasterConfig& cfg, int iterations, double lr) {
  if (visible.size() != set.size()) throw Error(ErrorCode::ShapeMismatch, "visibility length");
  std::vector<std::size_t> body, vis, occ;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] != Layer::Body) continue;
    body.push_back(i);
    (visible[i] ? vis : occ).push_back(i);
  }
  if (vis.empty()) throw Error(ErrorCode::NoVisibleBody, "no body Gaussian is visible on skin");
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());

  // Visible body SH against skin pixels (body rendered alone, MSE).
  GaussianSet only = set.select(body);
  std::vector<bool> trainable(only.size(), false);
  for (std::size_t b = 0; b < body.size(); ++b) trainable[b] = visible[body[b]];
  ParamGradients m = ParamGradients::zeros_like(only), v = m;
  for (int it = 0; it < iterations && !views.empty(); ++it) {
    const View& view = views[static_cast<std::size_t>(it) % views.size()];
    const ForwardPass pass = render(only, transports, view.camera, cfg, true);
    RenderGradients up;
    up.color = Image(view.camera.width, view.camera.height, 3);
    std::size_t count = 0;
    for (auto l : view.mask.labels) count += l == category::kSkin ? 1 : 0;
    if (count == 0) continue;
    for (std::size_t p = 0; p < view.mask.labels.size(); ++p) {
      if (view.mask.labels[p] != category::kSkin) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = pass.output.color.data[3 * p + c] - view.image.data[3 * p + c];
        up.color.data[3 * p + c] = 2.0 * d / (3.0 * static_cast<double>(count));
      }
    }
    const WorldGradients wg = backward_world(only, pass, view.camera, cfg, up);
    const double t = it + 1.0;
    for (std::size_t b = 0; b < only.size(); ++b) {
      if (!trainable[b]) continue;
      for (std::size_t c = 0; c < stride; ++c) {
        const std::size_t k = b * stride + c;
        const double g = wg.sh[k];
        m.sh[k] = kAdamBeta1 * m.sh[k] + (1 - kAdamBeta1) * g;
        v.sh[k] = kAdamBeta2 * v.sh[k] + (1 - kAdamBeta2) * g * g;
        const double step = lr * (m.sh[k] / (1 - std::pow(kAdamBeta1, t))) /
                            (std::sqrt(v.sh[k] / (1 - std::pow(kAdamBeta2, t))) + kAdamEpsilon);
        only.sh[k] = static_cast<float>(only.sh[k] - step);
      }
    }
  }
  for (std::size_t b = 0; b < body.size(); ++b) {
    std::copy_n(only.sh.begin() + b * stride, stride, set.sh.begin() + body[b] * stride);
  }

  // Occluded dc coefficients descend on |dc - mean visible dc|^2.
  Vec3 mean = Vec3::Zero();
  for (auto i : vis) {
    for (int c = 0; c < 3; ++c) mean[c] += set.sh[i * stride + c];
  }
  mean /= static_cast<double>(vis.size());
  InpaintReport report;
  report.visible = vis.size();
  report.occluded = occ.size();
  for (int step = 0; step < 200 && !occ.empty(); ++step) {
    double worst = 0.0;
    for (auto i : occ) {
      for (int c = 0; c < 3; ++c) {
        float& dc = set.sh[i * stride + c];
        const double grad = 2.0 * (double{dc} - mean[c]);
        dc = static_cast<float>(dc - 0.25 * grad);
        worst = std::max(worst, std::abs(double{dc} - mean[c]));
      }
    }
    if (worst * kShC0 <= 1e-6) break;
  }
  if (!occ.empty()) {
    Vec3 occ_mean = Vec3::Zero();
    for (auto i : occ) {
      for (int c = 0; c < 3; ++c) occ_mean[c] += set.sh[i * stride + c];
    }
    occ_mean /= static_cast<double>(occ.size());
    report.color_gap = kShC0 * (occ_mean - mean).norm();
  }
  return report;
}

// ---- asset initialization ---------------------------------------------------

GaussianSet init_assets_from_views(const SkinnedMesh& mesh, std::span<const View> views,
                                   const AssetInitConfig& cfg, int sh_degree, std::uint64_t seed) {
  if (cfg.candidates < 0 || !(cfg.gamma_max >= cfg.gamma_min)) {
    throw Error(ErrorCode::ConfigError, "init: bad candidate count or gamma range");
  }
  std::vector<double> cumulative(mesh.face_count());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.faces[f];
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cumulative[f] = total;
  }
  const double scale = cfg.scale > 0.0
                           ? cfg.scale
                           : 0.6 * std::sqrt(total / std::max(1, cfg.candidates));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  GaussianSet out(sh_degree);
  for (int n = 0; n < cfg.candidates; ++n) {
    const double r = uni(rng) * total;
    const std::size_t face = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) -
                                 cumulative.begin()),
        mesh.face_count() - 1);
    const double u = std::sqrt(uni(rng)), w = uni(rng);
    const double gamma = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * uni(rng);
    const auto& tri = mesh.faces[face];
    const Vec3 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    const Vec3 surface = (1 - u) * a + u * (1 - w) * b + u * w * c;
    const TriangleFrame frame = triangle_frame(a, b, c);
    const Vec3 p = surface + gamma * frame.k;

    std::array<int, kCategoryCount> votes{};
    std::array<Vec3, kCategoryCount> colors;
    colors.fill(Vec3::Zero());
    for (const View& view : views) {
      const Camera& cam = view.camera;
      if (frame.k.dot(cam.center() - p) <= 0.0) continue;
      const Vec3 t = cam.world_to_camera.apply(p);
      if (!(t.z() > cam.near)) continue;
      const double px = cam.fx * t.x() / t.z() + cam.cx;
      const double py = cam.fy * t.y() / t.z() + cam.cy;
      const int x = static_cast<int>(std::floor(px)), y = static_cast<int>(std::floor(py));
      if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
      const int label = view.mask.at(x, y);
      if (label >= kCategoryCount) throw Error(ErrorCode::LabelOutOfRange, "mask label above 14");
      ++votes[label];
      for (int ch = 0; ch < 3; ++ch) colors[label][ch] += view.image.at(x, y, ch);
    }
    int best = 0;
    for (int l = 1; l < kCategoryCount; ++l) {
      if (votes[l] > votes[best]) best = l;
    }
    if (votes[best] == 0 || !is_asset_category(best)) continue;
    const Vec3 color = colors[best] / votes[best];
    const Vec3 local = frame.to_local(p);
    Gaussian g;
    g.embedding = {static_cast<std::uint32_t>(face), static_cast<float>(local[0]),
                   static_cast<float>(local[1]), static_cast<float>(local[2])};
    g.log_scale.fill(static_cast<float>(std::log(scale)));
    g.opacity_logit = static_cast<float>(logit(cfg.opacity));
    g.sh.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), 0.0f);
    for (int ch = 0; ch < 3; ++ch) g.sh[ch] = static_cast<float>(color[ch] / kShC0);
    g.identity[static_cast<std::size_t>(best)] = static_cast<float>(cfg.identity_logit);
    g.layer = Layer::Asset;
    out.push_back(g);
  }
  return out;
}

// ---- training loop ----------------------------------------------------------

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
  for (std::uint64_t v : {a, b}) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ull;
  }
  return h;
}

}  // namespace

FitResult fit(GaussianSet& set, const SkinnedMesh& mesh, std::span<const View> views,
              const FitOptions& opt) {
  opt.schedule.validate();
  opt.weights.validate();
  if (views.empty()) throw Error(ErrorCode::InvalidArgument, "fit: at least one view required");
  FitResult result;
  if (opt.schedule.total_iters == 0) return result;

  const Schedule& sch = opt.schedule;
  const LossWeights& w = opt.weights;
  const auto transports = face_transports(mesh, mesh.vertices);
  const MeshSdf sdf(mesh.vertices, mesh.faces);
  const auto emit = [&](std::string line) {
    if (opt.on_log) opt.on_log(line);
    result.log.push_back(std::move(line));
  };

  if (opt.inpaint && set.count(Layer::Body) > 0) {
    const auto visible = body_visibility(set, transports, views, opt.raster);
    result.inpaint =
        inpaint_body_color(set, transports, visible, views, opt.raster, sch.inpaint_iters);
    std::ostringstream os;
    os << "stage=inpaint visible=" << result.inpaint.visible
       << " occluded=" << result.inpaint.occluded << " color_gap=" << result.inpaint.color_gap;
    emit(os.str());
  }

  AdamState adam = AdamState::for_set(set);
  std::mt19937_64 rng(opt.seed);
  for (int it = 1; it <= sch.total_iters; ++it) {
    const std::size_t vi =
        it <= sch.front_view_iters ? 0 : static_cast<std::size_t>(rng() % views.size());
    const View& view = views[vi];

    const ForwardPass pass = render(set, transports, view.camera, opt.raster, true);
    RenderGradients up;
    Image g_ori, g_id;
    const double l_ori = loss_ori(pass.output.color, view.image, w.lambda_ssim, &g_ori);
    const double l_2d = loss_id2d(pass.output.identity, view.mask, &g_id);
    for (auto& x : g_ori.data) x *= w.w_ori;
    for (auto& x : g_id.data) x *= w.w_id2d;
    up.color = std::move(g_ori);
    up.identity = std::move(g_id);
    ParamGradients grads = backward(set, transports, pass, view.camera, opt.raster, up);

    double l_3d = 0.0;
    const auto assets = asset_indices(set);
    if (w.w_id3d > 0.0 && assets.size() > static_cast<std::size_t>(w.knn_k)) {
      std::vector<Vec3> positions;
      positions.reserve(set.size());
      for (const auto& g : pass.world) positions.push_back(g.position);
      std::vector<double> d_id;
      l_3d = loss_id3d(set, positions, w.knn_k, w.knn_m, mix_seed(opt.seed, 3, it), &d_id);
      for (std::size_t k = 0; k < d_id.size(); ++k) grads.identity[k] += w.w_id3d * d_id[k];
    }
    ParamGradients extra = ParamGradients::zeros_like(set);
    const double l_ani = loss_ani(set, w.tau, &extra);
    grads.add(extra, w.w_ani);
    extra = ParamGradients::zeros_like(set);
    const double l_sdf = loss_sdf(set, transports, sdf, w.sdf_margin, &extra);
    grads.add(extra, w.w_sdf);
    grads.zero_rows(set.frozen);
    adam_step(set, grads, adam, sch.lr);

    std::size_t pruned = 0, added = 0;
    if (it % sch.prune_interval == 0) {
      const std::size_t inside = prune_inside(set, transports, sdf, &adam);
      const std::size_t clear = prune_transparent(set, sch.opacity_prune_threshold, &adam);
      result.pruned_inside += inside;
      result.pruned_transparent += clear;
      pruned = inside + clear;
    }
    if (it >= sch.densify_start && it <= sch.densify_stop && it % sch.densify_interval == 0) {
      std::array<std::size_t, kCategoryCount> members{};
      for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.layer[i] == Layer::Asset) ++members[category_of(set.identity[i])];
      }
      for (int c = 0; c < kCategoryCount; ++c) {
        if (!is_asset_category(c) || members[c] < static_cast<std::size_t>(w.knn_k)) continue;
        if (set.size() >= sch.max_gaussians) break;
        std::size_t quota =
            static_cast<std::size_t>(std::ceil(sch.densify_rate * static_cast<double>(members[c])));
        quota = std::min(quota, sch.max_gaussians - set.size());
        added += densify_category(set, mesh.vertices, mesh.faces, c, quota, w.knn_k,
                                  mix_seed(opt.seed, 7, static_cast<std::uint64_t>(it) * 16 + c),
                                  &adam);
      }
      result.densified += added;
    }

    const double total = w.w_ori * l_ori + w.w_id2d * l_2d + w.w_id3d * l_3d + w.w_ani * l_ani +
                         w.w_sdf * l_sdf;
    std::array<std::size_t, kCategoryCount> counts{};
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.layer[i] == Layer::Asset) ++counts[category_of(set.identity[i])];
    }
    std::ostringstream os;
    os.precision(6);
    os << "iter=" << it << " view=" << view.name << " loss=" << total << " l_ori=" << l_ori
       << " l_id2d=" << l_2d << " l_id3d=" << l_3d << " l_ani=" << l_ani << " l_sdf=" << l_sdf
       << " gaussians=" << set.size() << " body=" << set.count(Layer::Body)
       << " assets=" << set.count(Layer::Asset) << " pruned=" << pruned << " added=" << added;
    for (int c = 0; c < kCategoryCount; ++c) {
      if (counts[c] > 0) os << " cat_" << c << "=" << counts[c];
    }
    emit(os.str());
  }
  result.pruned_inside += prune_inside(set, transports, sdf, &adam);
  return result;
}

}  // namespace strata
