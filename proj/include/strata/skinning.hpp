#pragma once

#include <span>
#include <vector>

#include "strata/scene.hpp"

namespace strata {

/// Skinning transforms relative to the canonical pose (one per joint) plus a
/// global root transform applied after blending.
struct Pose {
  std::vector<Rigid> joint_transforms;
  Rigid root;

  static Pose identity(std::size_t joint_count);
  /// Throws InvalidArgument if a rotation block is not orthonormal (1e-6).
  void validate(std::size_t joint_count) const;
};

/// Builds skinning transforms from per-joint local transforms expressed in
/// each joint's bind frame. An exactly-identity local transform contributes
/// an exactly-identity skinning transform.
Pose forward_kinematics(const SkinnedMesh& mesh, std::span<const Rigid> local_transforms,
                        const Rigid& root = Rigid::identity());

/// Linear blend skinning followed by the root transform.
std::vector<Vec3> pose_mesh(const SkinnedMesh& mesh, const Pose& pose);

/// How one face moved between canonical and posed space.
struct FaceTransport {
  TriangleFrame canonical;
  TriangleFrame posed;
  UnitQuaternion rotation;     ///< frame_rotation_quaternion(canonical, posed)
  Vec3 ratios = Vec3::Ones();  ///< per-axis length ratios along (i, j, k)
};

/// Per-axis ratios: tangent = first-edge length ratio, bitangent = triangle
/// height ratio, normal = sqrt(area ratio). Bitwise-identical inputs yield
/// the exact identity transport.
FaceTransport face_transport(const Vec3& c0, const Vec3& c1, const Vec3& c2, const Vec3& p0,
                             const Vec3& p1, const Vec3& p2);

std::vector<FaceTransport> face_transports(const SkinnedMesh& mesh,
                                           std::span<const Vec3> posed_vertices);

struct ReposedGaussian {
  Vec3 position = Vec3::Zero();
  UnitQuaternion rotation;
  Vec3 scale = Vec3::Ones();
};

ReposedGaussian repose(const GaussianSet& set, std::size_t index, const FaceTransport& t);

ReposedGaussian repose_gaussian(const Gaussian& g, const SkinnedMesh& mesh,
                                std::span<const Vec3> posed_vertices);

std::vector<ReposedGaussian> repose_all(const GaussianSet& set,
                                        std::span<const FaceTransport> transports);

}  // namespace strata
