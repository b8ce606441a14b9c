#pragma once

#include <array>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace strata {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rotation quaternion (w, x, y, z), Hamilton convention. Normalizing
/// constructors return the canonical representative with w >= 0.
struct UnitQuaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static UnitQuaternion identity() { return {}; }
  /// Normalizes (w, x, y, z); throws InvalidArgument on a zero vector.
  static UnitQuaternion normalized(double w, double x, double y, double z);
  static UnitQuaternion from_matrix(const Mat3& rotation);
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);

  Mat3 to_matrix() const;
  Vec3 rotate(const Vec3& v) const { return to_matrix() * v; }
  UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }
  double norm() const;
  Vec4 as_vector() const { return {w, x, y, z}; }

  bool operator==(const UnitQuaternion&) const = default;
};

/// Raw Hamilton product. No renormalization, so composing with the exact
/// identity reproduces the other operand bit for bit.
UnitQuaternion hamilton(const UnitQuaternion& a, const UnitQuaternion& b);

/// Normalized product a * b (canonical sign).
UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b);

/// Rotation matrix of an arbitrary (w, x, y, z) without normalizing it.
Mat3 quaternion_matrix(const Vec4& q);

/// Back-propagates dL/dR through R = quaternion_matrix(q).
Vec4 quaternion_matrix_backward(const Vec4& q, const Mat3& d_rotation);

/// Back-propagates through q_n = q / |q|.
Vec4 normalize_backward(const Vec4& q, const Vec4& d_normalized);

/// Orthonormal frame of a triangle: origin at the vertex mean, tangent along
/// the first edge, normal from the edge cross product, bitangent = k x i.
struct TriangleFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 i = Vec3::UnitX();
  Vec3 j = Vec3::UnitY();
  Vec3 k = Vec3::UnitZ();

  /// Columns [i | j | k].
  Mat3 basis() const;
  Vec3 to_world(const Vec3& local) const { return origin + basis() * local; }
  Vec3 to_local(const Vec3& world) const { return basis().transpose() * (world - origin); }
};

inline constexpr double kMinTriangleArea = 1e-12;

double triangle_area(const Vec3& v0, const Vec3& v1, const Vec3& v2);

/// Throws DegenerateTriangle when the area is at or below kMinTriangleArea.
TriangleFrame triangle_frame(const Vec3& v0, const Vec3& v1, const Vec3& v2);

/// Quaternion of basis(posed) * basis(canonical)^T.
UnitQuaternion frame_rotation_quaternion(const TriangleFrame& canonical,
                                         const TriangleFrame& posed);

// ---- spherical harmonics --------------------------------------------------

inline constexpr int kMaxShDegree = 3;
inline constexpr double kShC0 = 0.28209479177387814;

constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }
constexpr int sh_coeff_count(int degree) { return 3 * sh_basis_count(degree); }

/// Real SH basis values (Condon-Shortley phase, m = -l..l ordering) for a
/// unit direction. Entries past sh_basis_count(degree) are zero.
std::array<double, 16> sh_basis(int degree, const Vec3& dir);

/// Gradients of each basis function with respect to the (unnormalized)
/// Cartesian direction components.
std::array<Vec3, 16> sh_basis_gradient(int degree, const Vec3& dir);

/// Color from coefficients laid out [basis][channel]; coeffs.size() must be
/// sh_coeff_count(degree). No offset or clamp is applied.
Vec3 eval_sh(int degree, std::span<const float> coeffs, const Vec3& view_dir);
Vec3 eval_sh(int degree, std::span<const double> coeffs, const Vec3& view_dir);

/// Gradient of eval_sh with respect to coefficients (written to d_coeffs,
/// accumulated) and to the unit view direction (returned).
Vec3 eval_sh_backward(int degree, std::span<const float> coeffs, const Vec3& view_dir,
                      const Vec3& d_color, std::span<double> d_coeffs);

}  // namespace strata
