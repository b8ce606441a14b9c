#include "strata/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "strata/error.hpp"

namespace strata {

SkinnedMesh make_cylinder(const CylinderSpec& spec) {
  if (spec.segments < 3 || spec.rings < 1 || !(spec.radius > 0.0) || !(spec.height > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "cylinder: bad dimensions");
  }
  SkinnedMesh mesh;
  const int seg = spec.segments;
  const auto ring_vertex = [seg](int r, int s) {
    return static_cast<std::uint32_t>(r * seg + (s % seg));
  };
  for (int r = 0; r <= spec.rings; ++r) {
    const double z = spec.height * r / spec.rings;
    for (int s = 0; s < seg; ++s) {
      const double a = 2.0 * std::numbers::pi * s / seg;
      mesh.vertices.emplace_back(spec.radius * std::cos(a), spec.radius * std::sin(a), z);
    }
  }
  const auto bottom = static_cast<std::uint32_t>(mesh.vertices.size());
  mesh.vertices.emplace_back(0.0, 0.0, 0.0);
  const auto top = static_cast<std::uint32_t>(mesh.vertices.size());
  mesh.vertices.emplace_back(0.0, 0.0, spec.height);

  for (int r = 0; r < spec.rings; ++r) {
    for (int s = 0; s < seg; ++s) {
      const auto v00 = ring_vertex(r, s), v01 = ring_vertex(r, s + 1);
      const auto v10 = ring_vertex(r + 1, s), v11 = ring_vertex(r + 1, s + 1);
      mesh.faces.push_back({v00, v01, v10});
      mesh.faces.push_back({v01, v11, v10});
    }
  }
  for (int s = 0; s < seg; ++s) {
    mesh.faces.push_back({bottom, ring_vertex(0, s + 1), ring_vertex(0, s)});
    mesh.faces.push_back({top, ring_vertex(spec.rings, s), ring_vertex(spec.rings, s + 1)});
  }

  mesh.joints.push_back({"root", -1, Rigid::identity()});
  mesh.joints.push_back({"knee", 0, Rigid{Mat3::Identity(), Vec3(0.0, 0.0, spec.joint_z)}});
  mesh.skin_weights.resize(mesh.vertices.size() * 2);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const double z = mesh.vertices[v].z();
    double w1 = spec.blend > 0.0 ? (z - (spec.joint_z - spec.blend)) / (2.0 * spec.blend)
                                 : (z >= spec.joint_z ? 1.0 : 0.0);
    w1 = std::clamp(w1, 0.0, 1.0);
    mesh.skin_weights[2 * v] = 1.0 - w1;
    mesh.skin_weights[2 * v + 1] = w1;
  }
  return mesh;
}

SkinnedMesh make_box(const Vec3& size) {
  SkinnedMesh mesh;
  const Vec3 h = 0.5 * size;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                               (i & 4) ? h.z() : -h.z());
  }
  // Quads listed counter-clockwise seen from outside.
  const std::uint32_t quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                     {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.faces.push_back({q[0], q[1], q[2]});
    mesh.faces.push_back({q[0], q[2], q[3]});
  }
  return mesh;
}

SkinnedMesh make_icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<std::uint32_t, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    const auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const auto id = static_cast<std::uint32_t>(v.size() - 1);
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<std::uint32_t, 3>> next;
    for (const auto& tri : f) {
      const auto a = midpoint(tri[0], tri[1]);
      const auto b = midpoint(tri[1], tri[2]);
      const auto c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  SkinnedMesh mesh;
  for (auto& p : v) mesh.vertices.push_back(radius * p);
  mesh.faces = std::move(f);
  return mesh;
}

std::vector<Camera> ring_cameras(int count, double radius, const Vec3& target, double height,
                                 double focal, int width, int height_px, double phase) {
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    const double a = phase + 2.0 * std::numbers::pi * i / count;
    const Vec3 eye = target + Vec3(radius * std::cos(a), radius * std::sin(a), height);
    cams.push_back(Camera::look_at(eye, target, Vec3::UnitZ(), focal, width, height_px));
  }
  return cams;
}

GaussianSet make_band(const SkinnedMesh& mesh, const AvatarFixtureSpec::Band& band,
                      int per_face, double gamma, double opacity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  GaussianSet set(0);
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    const Vec3 centroid = (a + b + c) / 3.0;
    if (centroid.z() < band.z_min || centroid.z() > band.z_max) continue;
    const TriangleFrame frame = triangle_frame(a, b, c);
    if (std::abs(frame.k.z()) > 0.5) continue;  // caps
    const double area = triangle_area(a, b, c);
    const double r_in = 2.0 * area / ((b - a).norm() + (c - b).norm() + (a - c).norm());
    const double s = 1.5 * r_in / std::sqrt(static_cast<double>(per_face));
    const UnitQuaternion q = UnitQuaternion::from_matrix(frame.basis());
    for (int n = 0; n < per_face; ++n) {
      const double u = std::sqrt(uni(rng)), w = uni(rng);
      const Vec3 p = (1 - u) * a + u * (1 - w) * b + u * w * c;
      const Vec3 local = frame.to_local(p);
      Gaussian g;
      g.embedding = {static_cast<std::uint32_t>(f), static_cast<float>(local[0]),
                     static_cast<float>(local[1]), static_cast<float>(gamma)};
      g.rotation = {static_cast<float>(q.w), static_cast<float>(q.x), static_cast<float>(q.y),
                    static_cast<float>(q.z)};
      g.log_scale = {static_cast<float>(std::log(s)), static_cast<float>(std::log(s)),
                     static_cast<float>(std::log(0.3 * s))};
      g.opacity_logit = static_cast<float>(logit(opacity));
      g.sh = {static_cast<float>(band.color[0] / kShC0), static_cast<float>(band.color[1] / kShC0),
              static_cast<float>(band.color[2] / kShC0)};
      g.identity[static_cast<std::size_t>(band.category)] = 10.0f;
      g.layer = Layer::Asset;
      set.push_back(g);
    }
  }
  return set;
}

MaskImage label_map(const Image& identity) {
  if (identity.channels != kIdentityDim) {
    throw Error(ErrorCode::DimensionMismatch, "label map needs a 15-channel identity image");
  }
  MaskImage mask(identity.width, identity.height);
  for (std::size_t p = 0; p < identity.pixel_count(); ++p) {
    int best = 0;
    for (int c = 1; c < kIdentityDim; ++c) {
      if (identity.data[p * kIdentityDim + c] > identity.data[p * kIdentityDim + best]) best = c;
    }
    mask.labels[p] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

View render_view(const GaussianSet& set, const SkinnedMesh& mesh, const Camera& cam,
                 const RasterConfig& cfg, std::string name) {
  const auto transports = face_transports(mesh, mesh.vertices);
  const ForwardPass pass = render(set, transports, cam, cfg, false);
  View view;
  view.name = std::move(name);
  view.camera = cam;
  view.image = pass.output.color;
  view.mask = label_map(pass.output.identity);
  return view;
}

AvatarFixture make_avatar_fixture(const AvatarFixtureSpec& spec) {
  AvatarFixture fx;
  fx.mesh = make_cylinder(spec.body);
  fx.truth = build_body_gaussians(fx.mesh, spec.body_per_face, 0, spec.skin_color);
  for (std::size_t b = 0; b < spec.bands.size(); ++b) {
    fx.truth.append(make_band(fx.mesh, spec.bands[b], spec.band_per_face, spec.band_gamma,
                              spec.band_opacity, spec.seed * 1000 + b));
  }
  const Vec3 target(0.0, 0.0, spec.body.height / 2.0);
  const auto cams = ring_cameras(spec.views, spec.camera_radius, target, spec.camera_height,
                                 spec.focal, spec.image_size, spec.image_size);
  for (std::size_t v = 0; v < cams.size(); ++v) {
    char name[16];
    std::snprintf(name, sizeof name, "%03zu", v);
    fx.views.push_back(render_view(fx.truth, fx.mesh, cams[v], fx.raster, name));
  }
  const auto novel = ring_cameras(1, spec.camera_radius, target, 0.5 * spec.camera_height,
                                  spec.focal, spec.image_size, spec.image_size,
                                  std::numbers::pi / std::max(1, spec.views));
  fx.held_out = render_view(fx.truth, fx.mesh, novel[0], fx.raster, "novel");
  return fx;
}

OscillationFixture make_oscillation_fixture(const OscillationSpec& spec) {
  if (spec.frames < 2) throw Error(ErrorCode::TooFewFrames, "oscillation needs >= 2 frames");
  OscillationFixture fx;
  fx.mesh = make_cylinder(spec.body);
  fx.scene = build_body_gaussians(fx.mesh, 1, 0, Vec3(0.9, 0.7, 0.55));
  fx.scene.append(make_band(fx.mesh, spec.band, 3, 0.03, 0.97, 11));
  const Vec3 target(0.0, 0.0, spec.body.height / 2.0);
  const auto cams = ring_cameras(1 + spec.aux_views, 3.0, target, 0.4, spec.focal,
                                 spec.image_size, spec.image_size);
  const Pose pose = Pose::identity(fx.mesh.joint_count());
  const auto transports = face_transports(fx.mesh, fx.mesh.vertices);
  const auto base = repose_all(fx.scene, transports);
  for (int f = 0; f < spec.frames; ++f) {
    const double t = static_cast<double>(f) / (spec.frames - 1);
    const Vec3 d(0.0, 0.0, spec.amplitude * std::sin(2.0 * std::numbers::pi * t));
    auto world = base;
    for (std::size_t i = 0; i < world.size(); ++i) {
      if (fx.scene.layer[i] == Layer::Asset) world[i].position += d;
    }
    FrameSample sample;
    sample.t = t;
    sample.pose = pose;
    sample.camera = cams[0];
    sample.image = render_world(fx.scene, world, cams[0], fx.raster, false).output.color;
    for (std::size_t c = 1; c < cams.size(); ++c) {
      View v;
      v.name = "aux" + std::to_string(c);
      v.camera = cams[c];
      v.image = render_world(fx.scene, world, cams[c], fx.raster, false).output.color;
      sample.aux.push_back(std::move(v));
    }
    fx.frames.push_back(std::move(sample));
    fx.displacement.push_back(d);
  }
  return fx;
}

}  // namespace strata
