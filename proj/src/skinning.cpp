#include "strata/skinning.hpp"

#include <cmath>

#include "strata/error.hpp"

namespace strata {

namespace {

bool is_exact_identity(const Rigid& r) {
  return r.rotation == Mat3::Identity() && r.translation == Vec3::Zero();
}

}  // namespace

Pose Pose::identity(std::size_t joint_count) {
  Pose p;
  p.joint_transforms.assign(joint_count, Rigid::identity());
  return p;
}

void Pose::validate(std::size_t joint_count) const {
  if (joint_transforms.size() != joint_count) {
    throw Error(ErrorCode::ShapeMismatch, "pose joint count does not match mesh");
  }
  const auto check = [](const Rigid& r) {
    if ((r.rotation * r.rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        r.rotation.determinant() < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "pose rotation is not orthonormal");
    }
  };
  for (const auto& t : joint_transforms) check(t);
  check(root);
}

Pose forward_kinematics(const SkinnedMesh& mesh, std::span<const Rigid> local,
                        const Rigid& root) {
  if (local.size() != mesh.joint_count()) {
    throw Error(ErrorCode::ShapeMismatch, "local transform count does not match joints");
  }
  Pose pose;
  pose.root = root;
  pose.joint_transforms.resize(mesh.joint_count());
  for (std::size_t j = 0; j < mesh.joint_count(); ++j) {
    const Joint& joint = mesh.joints[j];
    // Skinning transform T_j = T_parent * (B_j L_j B_j^-1).
    Rigid conjugated = is_exact_identity(local[j])
                           ? Rigid::identity()
                           : joint.bind * local[j] * joint.bind.inverse();
    pose.joint_transforms[j] =
        joint.parent < 0 ? conjugated
                         : pose.joint_transforms[static_cast<std::size_t>(joint.parent)] * conjugated;
  }
  return pose;
}

std::vector<Vec3> pose_mesh(const SkinnedMesh& mesh, const Pose& pose) {
  pose.validate(mesh.joint_count());
  std::vector<Vec3> out(mesh.vertex_count());
  const std::size_t nj = mesh.joint_count();
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3& p = mesh.vertices[v];
    // v + sum_j w_j ((R_j - I) v + t_j): identical to sum_j w_j T_j v for
    // partition-of-unity weights, and exact when every T_j is the identity.
    Vec3 delta = Vec3::Zero();
    for (std::size_t j = 0; j < nj; ++j) {
      const double w = mesh.weight(v, j);
      if (w == 0.0) continue;
      const Rigid& t = pose.joint_transforms[j];
      delta += w * ((t.rotation * p - p) + t.translation);
    }
    out[v] = pose.root.apply(p + delta);
  }
  return out;
}

FaceTransport face_transport(const Vec3& c0, const Vec3& c1, const Vec3& c2, const Vec3& p0,
                             const Vec3& p1, const Vec3& p2) {
  FaceTransport t;
  t.canonical = triangle_frame(c0, c1, c2);
  if (c0 == p0 && c1 == p1 && c2 == p2) {
    t.posed = t.canonical;
    return t;
  }
  t.posed = triangle_frame(p0, p1, p2);
  t.rotation = frame_rotation_quaternion(t.canonical, t.posed);
  const double edge = (c1 - c0).norm();
  const double edge_p = (p1 - p0).norm();
  const double area = triangle_area(c0, c1, c2);
  const double area_p = triangle_area(p0, p1, p2);
  t.ratios = {edge_p / edge, (2.0 * area_p / edge_p) / (2.0 * area / edge),
              std::sqrt(area_p / area)};
  return t;
}

std::vector<FaceTransport> face_transports(const SkinnedMesh& mesh,
                                           std::span<const Vec3> posed) {
  if (posed.size() != mesh.vertex_count()) {
    throw Error(ErrorCode::ShapeMismatch, "posed vertex count does not match mesh");
  }
  std::vector<FaceTransport> out;
  out.reserve(mesh.face_count());
  for (const auto& f : mesh.faces) {
    out.push_back(face_transport(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]],
                                 posed[f[0]], posed[f[1]], posed[f[2]]));
  }
  return out;
}

ReposedGaussian repose(const GaussianSet& set, std::size_t index, const FaceTransport& t) {
  const TriangleEmbedding& e = set.embedding[index];
  const Vec3& r = t.ratios;
  ReposedGaussian out;
  out.position = t.posed.origin + (r[0] * double{e.sigma}) * t.posed.i +
                 (r[1] * double{e.beta}) * t.posed.j + (r[2] * double{e.gamma}) * t.posed.k;
  out.rotation = hamilton(t.rotation, set.rotation_of(index));
  out.scale = set.scale_of(index).cwiseProduct(r);
  return out;
}

ReposedGaussian repose_gaussian(const Gaussian& g, const SkinnedMesh& mesh,
                                std::span<const Vec3> posed) {
  const auto& f = mesh.faces.at(g.embedding.face_index);
  const FaceTransport t = face_transport(mesh.vertices[f[0]], mesh.vertices[f[1]],
                                         mesh.vertices[f[2]], posed[f[0]], posed[f[1]],
                                         posed[f[2]]);
  GaussianSet one(static_cast<int>(std::lround(std::sqrt(g.sh.size() / 3.0))) - 1);
  one.push_back(g);
  return repose(one, 0, t);
}

std::vector<ReposedGaussian> repose_all(const GaussianSet& set,
                                        std::span<const FaceTransport> transports) {
  std::vector<ReposedGaussian> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    out[i] = repose(set, i, transports[set.embedding[i].face_index]);
  }
  return out;
}

}  // namespace strata
