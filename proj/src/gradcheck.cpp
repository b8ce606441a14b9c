#include "strata/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "raster_internal.hpp"
#include "strata/error.hpp"
#include "strata/fixture.hpp"
#include "strata/knn.hpp"

namespace strata {

namespace {

constexpr std::pair<LossId, std::string_view> kLossNames[] = {
    {LossId::Ori, "ori"},   {LossId::L1, "l1"},   {LossId::SumSq, "sumsq"},
    {LossId::Id2d, "id2d"}, {LossId::Id3d, "id3d"}, {LossId::Ani, "ani"},
    {LossId::Sdf, "sdf"},   {LossId::Ref, "ref"}};

float snap(double x) { return static_cast<float>(std::ldexp(std::round(std::ldexp(x, 20)), -20)); }

using detail::hash_mix;

}  // namespace

LossId parse_loss_id(std::string_view name) {
  for (const auto& [id, n] : kLossNames) {
    if (n == name) return id;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown loss '" + std::string(name) +
                                              "' (expected ori, l1, sumsq, id2d, id3d, ani, sdf, ref)");
}

std::string_view to_string(LossId id) {
  for (const auto& [i, n] : kLossNames) {
    if (i == id) return n;
  }
  return "unknown";
}

std::vector<LossId> all_loss_ids() {
  std::vector<LossId> out;
  for (const auto& entry : kLossNames) out.push_back(entry.first);
  return out;
}

GradCheckProblem make_gradcheck_problem(std::uint64_t seed, int asset_count, int image_size) {
  GradCheckProblem p;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  CylinderSpec spec;
  spec.radius = 0.3;
  spec.height = 1.0;
  spec.segments = 8;
  spec.rings = 4;
  spec.joint_z = 0.5;
  spec.blend = 0.25;
  p.mesh = make_cylinder(spec);

  const Rigid still = Rigid::identity();
  std::vector<Rigid> bend = {still, Rigid::from_quaternion(
                                        UnitQuaternion::from_axis_angle(Vec3(1, 0.3, 0), 0.35),
                                        Vec3(0.02, 0.0, 0.0))};
  std::vector<Rigid> twist = {still, Rigid::from_quaternion(
                                         UnitQuaternion::from_axis_angle(Vec3(0, 1, 0.2), -0.25),
                                         Vec3::Zero())};
  p.poses.push_back(forward_kinematics(p.mesh, bend));
  p.poses.push_back(forward_kinematics(
      p.mesh, twist,
      Rigid::from_quaternion(UnitQuaternion::from_axis_angle(Vec3::UnitZ(), 0.1), Vec3(0.01, 0, 0))));

  const double focal = 0.62 * image_size * 2.4;
  p.camera = Camera::look_at(Vec3(2.2, 0.6, 0.75), Vec3(0.0, 0.0, 0.5), Vec3::UnitZ(), focal,
                             image_size, image_size);
  p.raster.background = Vec3(0.1, 0.2, 0.3);
  p.raster.threads = 1;

  p.set = GaussianSet(1);
  const std::size_t faces = p.mesh.face_count();
  const auto add = [&](bool body) {
    Gaussian g;
    g.embedding.face_index = static_cast<std::uint32_t>(rng() % faces);
    g.embedding.sigma = snap(range(-0.05, 0.05));
    g.embedding.beta = snap(range(-0.04, 0.04));
    g.embedding.gamma = body ? 0.0f : snap(range(-0.04, 0.09));
    const double qn[4] = {normal(rng), normal(rng), normal(rng), normal(rng)};
    for (int a = 0; a < 4; ++a) g.rotation[a] = snap(qn[a] * 0.5);
    if (g.rotation[0] == 0.0f) g.rotation[0] = 0.25f;
    for (int a = 0; a < 3; ++a) g.log_scale[a] = snap(std::log(range(0.03, 0.11)));
    g.opacity_logit = snap(range(-0.5, 2.5));
    g.sh.resize(static_cast<std::size_t>(sh_coeff_count(1)));
    for (auto& c : g.sh) c = snap(range(-0.6, 1.2));
    for (auto& e : g.identity) e = snap(normal(rng));
    g.layer = body ? Layer::Body : Layer::Asset;
    g.frozen = body;
    p.set.push_back(g);
  };
  add(true);
  for (int i = 0; i < asset_count; ++i) add(false);
  add(true);

  for (std::size_t t = 0; t < p.poses.size(); ++t) {
    Image target(image_size, image_size, 3);
    for (auto& v : target.data) v = uni(rng);
    p.targets.push_back(std::move(target));
  }
  p.mask = MaskImage(image_size, image_size);
  for (auto& l : p.mask.labels) l = static_cast<std::uint8_t>(rng() % kIdentityDim);
  p.weights.tau = 1.4;
  p.weights.knn_k = 3;
  p.weights.knn_m = std::max(1, asset_count - 2);
  p.weights.lambda_ssim = 0.2;
  p.weights.sdf_margin = 0.02;
  p.loss_seed = seed ^ 0x5eedull;
  return p;
}

namespace {

std::uint64_t render_structure(const ForwardPass& pass) {
  std::uint64_t h = pass.record->signature;
  for (const auto& s : pass.splats) h = hash_mix(h, s.source);
  return h;
}

std::uint64_t sign_structure(std::uint64_t h, const Image& a, const Image& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    h = hash_mix(h, d > 0.0 ? 1 : (d < 0.0 ? 2 : 3));
  }
  return h;
}

/// One render, a scalar image loss, and its backward pass.
LossEvaluation image_term(const GradCheckProblem& p, const GaussianSet& set, const Pose& pose,
                          LossId id, const Image& target, ParamGradients* grads) {
  const auto posed = pose_mesh(p.mesh, pose);
  const auto transports = face_transports(p.mesh, posed);
  const ForwardPass pass = render(set, transports, p.camera, p.raster, true);
  LossEvaluation ev;
  ev.structure = render_structure(pass);
  RenderGradients up;
  Image* g_color = grads ? &up.color : nullptr;
  switch (id) {
    case LossId::Ori:
      ev.value = loss_ori(pass.output.color, target, p.weights.lambda_ssim, g_color);
      ev.structure = sign_structure(ev.structure, pass.output.color, target);
      break;
    case LossId::L1:
      ev.value = loss_l1(pass.output.color, target, g_color);
      ev.structure = sign_structure(ev.structure, pass.output.color, target);
      break;
    case LossId::SumSq: {
      ev.value = 0.0;
      for (double v : pass.output.color.data) ev.value += v * v;
      if (grads) {
        up.color = pass.output.color;
        for (auto& v : up.color.data) v *= 2.0;
      }
      break;
    }
    case LossId::Id2d:
      ev.value = loss_id2d(pass.output.identity, p.mask, grads ? &up.identity : nullptr);
      break;
    default:
      throw Error(ErrorCode::InvalidArgument, "not an image loss");
  }
  if (grads) grads->add(backward(set, transports, pass, p.camera, p.raster, up));
  return ev;
}

}  // namespace

LossEvaluation evaluate_loss(const GradCheckProblem& p, const GaussianSet& set, LossId id,
                             ParamGradients* grads) {
  if (grads) *grads = ParamGradients::zeros_like(set);
  LossEvaluation ev;
  switch (id) {
    case LossId::Ori:
    case LossId::L1:
    case LossId::SumSq:
    case LossId::Id2d:
      ev = image_term(p, set, p.poses[0], id, p.targets[0], grads);
      break;
    case LossId::Ref: {
      std::vector<Image> rendered;
      std::vector<ForwardPass> passes;
      std::vector<std::vector<FaceTransport>> transports;
      ev.structure = 0;
      for (const auto& pose : p.poses) {
        transports.push_back(face_transports(p.mesh, pose_mesh(p.mesh, pose)));
        passes.push_back(render(set, transports.back(), p.camera, p.raster, true));
        rendered.push_back(passes.back().output.color);
        ev.structure = hash_mix(ev.structure, render_structure(passes.back()));
      }
      std::vector<Image> g;
      ev.value = loss_ref(rendered, p.targets, grads ? &g : nullptr);
      if (grads) {
        for (std::size_t t = 0; t < passes.size(); ++t) {
          RenderGradients up;
          up.color = std::move(g[t]);
          grads->add(backward(set, transports[t], passes[t], p.camera, p.raster, up));
        }
      }
      break;
    }
    case LossId::Id3d: {
      const auto canonical = face_transports(p.mesh, p.mesh.vertices);
      std::vector<Vec3> positions;
      for (const auto& w : repose_all(set, canonical)) positions.push_back(w.position);
      std::vector<double> d_id;
      ev.value = loss_id3d(set, positions, p.weights.knn_k, p.weights.knn_m, p.loss_seed,
                           grads ? &d_id : nullptr);
      if (grads) grads->identity = d_id;
      std::vector<Vec3> assets;
      for (auto i : asset_indices(set)) assets.push_back(positions[i]);
      for (const auto& list : knn_all(assets, p.weights.knn_k)) {
        for (auto j : list) ev.structure = hash_mix(ev.structure, j);
      }
      break;
    }
    case LossId::Ani: {
      ev.value = loss_ani(set, p.weights.tau, grads);
      for (auto i : asset_indices(set)) {
        const auto& ls = set.log_scale[i];
        int hi = 0, lo = 0;
        for (int a = 1; a < 3; ++a) {
          if (ls[a] > ls[hi]) hi = a;
          if (ls[a] < ls[lo]) lo = a;
        }
        const bool active = std::exp(double{ls[hi]}) / std::exp(double{ls[lo]}) > p.weights.tau;
        ev.structure = hash_mix(ev.structure, static_cast<std::uint64_t>(hi * 8 + lo * 2 + active));
      }
      break;
    }
    case LossId::Sdf: {
      const auto posed = pose_mesh(p.mesh, p.poses[0]);
      const auto transports = face_transports(p.mesh, posed);
      const MeshSdf sdf(posed, p.mesh.faces);
      ev.value = loss_sdf(set, transports, sdf, p.weights.sdf_margin, grads);
      for (auto i : asset_indices(set)) {
        const Vec3 pos = repose(set, i, transports[set.embedding[i].face_index]).position;
        const SdfSample s = sdf.sample(pos);
        ev.structure = hash_mix(ev.structure, s.feature_id * 4 + static_cast<int>(s.feature));
        ev.structure = hash_mix(ev.structure, p.weights.sdf_margin - s.distance > 0.0 ? 1 : 0);
      }
      break;
    }
  }
  if (grads) grads->zero_rows(set.frozen);
  return ev;
}

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os.precision(6);
  os << "loss=" << strata::to_string(loss) << " checked=" << checked << " resampled=" << resampled
     << " max_rel_err=" << std::scientific << max_rel_err << " worst_coord=" << worst_coord
     << " analytic=" << worst_analytic << " numeric=" << worst_numeric
     << " grad_norm=" << analytic_norm;
  return os.str();
}

namespace {

struct Coord {
  int group;  // 0 offsets, 1 rotation, 2 log_scale, 3 opacity, 4 sh, 5 identity
  std::size_t gaussian;
  int component;
};

constexpr const char* kGroupNames[] = {"offsets", "rotation", "log_scale",
                                       "opacity_logit", "sh", "identity"};

float& param(GaussianSet& set, const Coord& c) {
  const std::size_t i = c.gaussian;
  switch (c.group) {
    case 0: return c.component == 0 ? set.embedding[i].sigma
                   : c.component == 1 ? set.embedding[i].beta
                                      : set.embedding[i].gamma;
    case 1: return set.rotation[i][static_cast<std::size_t>(c.component)];
    case 2: return set.log_scale[i][static_cast<std::size_t>(c.component)];
    case 3: return set.opacity_logit[i];
    case 4: return set.sh[i * set.sh_stride() + static_cast<std::size_t>(c.component)];
    default: return set.identity[i][static_cast<std::size_t>(c.component)];
  }
}

double analytic(const ParamGradients& g, const Coord& c) {
  const std::size_t i = c.gaussian;
  const auto k = static_cast<std::size_t>(c.component);
  switch (c.group) {
    case 0: return g.offsets[3 * i + k];
    case 1: return g.rotation[4 * i + k];
    case 2: return g.log_scale[3 * i + k];
    case 3: return g.opacity_logit[i];
    case 4: return g.sh[i * static_cast<std::size_t>(g.sh_stride) + k];
    default: return g.identity[kIdentityDim * i + k];
  }
}

}  // namespace

GradCheckReport check_gradients(const GradCheckProblem& problem, LossId id, int n_coords,
                                std::uint64_t seed, double step) {
  GradCheckReport report;
  report.loss = id;
  ParamGradients grads;
  const LossEvaluation base = evaluate_loss(problem, problem.set, id, &grads);
  for (double v : grads.flatten()) report.analytic_norm += v * v;
  report.analytic_norm = std::sqrt(report.analytic_norm);

  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < problem.set.size(); ++i) {
    if (!problem.set.frozen[i]) free.push_back(i);
  }
  if (free.empty()) return report;
  const int sizes[6] = {3, 4, 3, 1, problem.set.sh_stride(), kIdentityDim};
  int total = 0;
  for (int s : sizes) total += s;

  std::mt19937_64 rng(seed);
  GaussianSet work = problem.set;
  const int max_attempts = 20 * n_coords + 100;
  for (int attempt = 0; attempt < max_attempts && report.checked < n_coords; ++attempt) {
    Coord c{0, free[rng() % free.size()], 0};
    int slot = static_cast<int>(rng() % static_cast<std::uint64_t>(total));
    while (slot >= sizes[c.group]) slot -= sizes[c.group++];
    c.component = slot;

    float& x = param(work, c);
    const float x0 = x;
    const float xp = static_cast<float>(x0 + step);
    const float xm = static_cast<float>(x0 - step);
    x = xp;
    const LossEvaluation fp = evaluate_loss(problem, work, id);
    x = xm;
    const LossEvaluation fm = evaluate_loss(problem, work, id);
    x = x0;
    if (fp.structure != base.structure || fm.structure != base.structure) {
      ++report.resampled;
      continue;
    }
    const double numeric = (fp.value - fm.value) / (double{xp} - double{xm});
    const double a = analytic(grads, c);
    const double rel =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    ++report.checked;
    if (report.worst_coord.empty() || rel > report.max_rel_err) {
      report.max_rel_err = rel;
      char name[96];
      std::snprintf(name, sizeof name, "%s[%zu].%d", kGroupNames[c.group], c.gaussian,
                    c.component);
      report.worst_coord = name;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace strata
