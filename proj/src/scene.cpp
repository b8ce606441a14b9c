#include "strata/scene.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>

#include "strata/error.hpp"

namespace strata {

std::string_view category_name(int index) {
  if (index < 0 || index >= kCategoryCount) {
    throw Error(ErrorCode::InvalidCategory, "category index out of range");
  }
  return kCategoryNames[static_cast<std::size_t>(index)];
}

bool is_asset_category(int index) {
  return index > 0 && index < kCategoryCount && index != category::kFace &&
         index != category::kSkin;
}

Rigid Rigid::inverse() const {
  Rigid inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Mat4 Rigid::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Rigid operator*(const Rigid& a, const Rigid& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

int SkinnedMesh::joint_index(std::string_view name) const {
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (joints[j].name == name) return static_cast<int>(j);
  }
  return -1;
}

void SkinnedMesh::validate() const {
  const auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::InvalidArgument, "mesh: " + msg);
  };
  if (vertices.empty() || faces.empty()) fail("empty mesh");
  for (const auto& f : faces) {
    for (auto v : f) {
      if (v >= vertices.size()) fail("face index out of range");
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) fail("face repeats a vertex");
  }
  for (std::size_t j = 0; j < joints.size(); ++j) {
    const int p = joints[j].parent;
    if (p >= static_cast<int>(j)) fail("joint parents must precede children");
  }
  if (!joints.empty()) {
    if (skin_weights.size() != vertices.size() * joints.size()) fail("skin weight shape");
    for (std::size_t v = 0; v < vertices.size(); ++v) {
      double sum = 0.0;
      for (std::size_t j = 0; j < joints.size(); ++j) {
        const double w = weight(v, j);
        if (w < 0.0 || !std::isfinite(w)) fail("negative or non-finite skin weight");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-6) fail("skin weights do not sum to one");
    }
  }
  std::unordered_map<std::uint64_t, int> edge_use;
  for (const auto& f : faces) {
    for (int e = 0; e < 3; ++e) {
      std::uint64_t a = f[e], b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      if (++edge_use[(a << 32) | b] > 2) fail("edge shared by more than two faces");
    }
  }
  for (const auto& [name, ids] : face_regions) {
    for (auto id : ids) {
      if (id >= faces.size()) fail("face region '" + name + "' index out of range");
    }
  }
}

std::uint64_t SkinnedMesh::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  const std::uint64_t nv = vertices.size(), nf = faces.size();
  mix(&nv, sizeof nv);
  for (const auto& v : vertices) mix(v.data(), 3 * sizeof(double));
  mix(&nf, sizeof nf);
  for (const auto& f : faces) mix(f.data(), 3 * sizeof(std::uint32_t));
  return h;
}

TriangleFrame face_frame(std::span<const Vec3> vertices,
                         const std::array<std::uint32_t, 3>& face) {
  return triangle_frame(vertices[face[0]], vertices[face[1]], vertices[face[2]]);
}

Vec3 Camera::center() const {
  return -(world_to_camera.rotation.transpose() * world_to_camera.translation);
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera focal lengths must be positive");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::InvalidArgument, "camera image size must be at least 1x1");
  }
  if (!(near > 0.0)) throw Error(ErrorCode::InvalidArgument, "camera near plane must be > 0");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                       int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Camera cam;
  cam.world_to_camera.rotation = r;
  cam.world_to_camera.translation = -(r * eye);
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  return cam;
}

// ---- GaussianSet ------------------------------------------------------------

GaussianSet::GaussianSet(int degree) : sh_degree(degree) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw Error(ErrorCode::InvalidArgument, "SH degree must be in [0, 3]");
  }
}

void GaussianSet::push_back(const Gaussian& g) {
  if (static_cast<int>(g.sh.size()) != sh_stride()) {
    throw Error(ErrorCode::ShapeMismatch, "Gaussian SH length does not match set degree");
  }
  embedding.push_back(g.embedding);
  rotation.push_back(g.rotation);
  log_scale.push_back(g.log_scale);
  opacity_logit.push_back(g.opacity_logit);
  sh.insert(sh.end(), g.sh.begin(), g.sh.end());
  identity.push_back(g.identity);
  layer.push_back(g.layer);
  frozen.push_back(g.frozen ? 1 : 0);
}

Gaussian GaussianSet::get(std::size_t i) const {
  Gaussian g;
  g.embedding = embedding[i];
  g.rotation = rotation[i];
  g.log_scale = log_scale[i];
  g.opacity_logit = opacity_logit[i];
  const auto s = sh_of(i);
  g.sh.assign(s.begin(), s.end());
  g.identity = identity[i];
  g.layer = layer[i];
  g.frozen = frozen[i] != 0;
  return g;
}

void GaussianSet::append(const GaussianSet& other) {
  if (other.sh_degree != sh_degree) {
    throw Error(ErrorCode::ShapeMismatch, "cannot merge sets with different SH degree");
  }
  const auto cat = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
  cat(embedding, other.embedding);
  cat(rotation, other.rotation);
  cat(log_scale, other.log_scale);
  cat(opacity_logit, other.opacity_logit);
  cat(sh, other.sh);
  cat(identity, other.identity);
  cat(layer, other.layer);
  cat(frozen, other.frozen);
}

namespace {

template <typename T>
void compact(std::vector<T>& v, const std::vector<bool>& mask) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (mask[r]) v[w++] = v[r];
  }
  v.resize(w);
}

}  // namespace

void GaussianSet::keep(const std::vector<bool>& mask) {
  if (mask.size() != size()) throw Error(ErrorCode::ShapeMismatch, "keep mask length");
  const std::size_t stride = static_cast<std::size_t>(sh_stride());
  std::size_t w = 0;
  for (std::size_t r = 0; r < size(); ++r) {
    if (!mask[r]) continue;
    if (w != r) std::copy_n(sh.begin() + r * stride, stride, sh.begin() + w * stride);
    ++w;
  }
  sh.resize(w * stride);
  compact(embedding, mask);
  compact(rotation, mask);
  compact(log_scale, mask);
  compact(opacity_logit, mask);
  compact(identity, mask);
  compact(layer, mask);
  compact(frozen, mask);
}

GaussianSet GaussianSet::select(std::span<const std::size_t> indices) const {
  GaussianSet out(sh_degree);
  for (auto i : indices) out.push_back(get(i));
  return out;
}

UnitQuaternion GaussianSet::rotation_of(std::size_t i) const {
  const auto& q = rotation[i];
  return UnitQuaternion::normalized(q[0], q[1], q[2], q[3]);
}

Vec3 GaussianSet::scale_of(std::size_t i) const {
  const auto& s = log_scale[i];
  return {std::exp(double{s[0]}), std::exp(double{s[1]}), std::exp(double{s[2]})};
}

double GaussianSet::opacity_of(std::size_t i) const { return sigmoid(opacity_logit[i]); }

std::size_t GaussianSet::count(Layer l) const {
  std::size_t n = 0;
  for (auto x : layer) n += (x == l) ? 1 : 0;
  return n;
}

void GaussianSet::validate(std::size_t face_count) const {
  const std::size_t n = size();
  if (rotation.size() != n || log_scale.size() != n || opacity_logit.size() != n ||
      identity.size() != n || layer.size() != n || frozen.size() != n ||
      sh.size() != n * static_cast<std::size_t>(sh_stride())) {
    throw Error(ErrorCode::ShapeMismatch, "GaussianSet arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (embedding[i].face_index >= face_count) {
      throw Error(ErrorCode::InvalidArgument, "embedding face index out of range");
    }
    const auto& q = rotation[i];
    if (q[0] == 0 && q[1] == 0 && q[2] == 0 && q[3] == 0) {
      throw Error(ErrorCode::InvalidArgument, "zero rotation quaternion");
    }
  }
}

bool bitwise_equal(const GaussianSet& a, const GaussianSet& b) {
  const auto same = [](const auto& x, const auto& y) {
    using T = typename std::decay_t<decltype(x)>::value_type;
    return x.size() == y.size() &&
           (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(T)) == 0);
  };
  return a.sh_degree == b.sh_degree && same(a.embedding, b.embedding) &&
         same(a.rotation, b.rotation) && same(a.log_scale, b.log_scale) &&
         same(a.opacity_logit, b.opacity_logit) && same(a.sh, b.sh) &&
         same(a.identity, b.identity) && same(a.layer, b.layer) && same(a.frozen, b.frozen);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

Vec3 resolve_position(const TriangleEmbedding& e, std::span<const Vec3> vertices,
                      std::span<const std::array<std::uint32_t, 3>> faces) {
  const TriangleFrame f = face_frame(vertices, faces[e.face_index]);
  return f.origin + double{e.sigma} * f.i + double{e.beta} * f.j + double{e.gamma} * f.k;
}

Vec3 resolve_position(const Gaussian& g, const SkinnedMesh& mesh,
                      std::span<const Vec3> posed_vertices) {
  return resolve_position(g.embedding, posed_vertices, mesh.faces);
}

int category_of(const IdentityVector& identity) {
  int best = 0;
  for (int c = 1; c < kIdentityDim; ++c) {
    if (identity[static_cast<std::size_t>(c)] > identity[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

int category_of(const Gaussian& g) { return category_of(g.identity); }

}  // namespace strata
