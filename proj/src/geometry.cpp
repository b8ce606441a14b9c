#include "strata/geometry.hpp"

#include <cmath>

#include "strata/error.hpp"

namespace strata {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooFewGaussians: return "TooFewGaussians";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::MissingForwardRecord: return "MissingForwardRecord";
    case ErrorCode::NoVisibleBody: return "NoVisibleBody";
    case ErrorCode::InvalidCategory: return "InvalidCategory";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::TopologyMismatch: return "TopologyMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::MeshHashMismatch: return "MeshHashMismatch";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

// ---- quaternions ------------------------------------------------------------

UnitQuaternion UnitQuaternion::normalized(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite quaternion");
  }
  if (w < 0.0) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
  return {w / n, x / n, y / n, z / n};
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& m) {
  // Shepperd: pick the largest diagonal combination for stability.
  const double trace = m.trace();
  double w, x, y, z;
  if (trace > m(0, 0) && trace > m(1, 1) && trace > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return normalized(w, x, y, z);
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return normalized(std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s);
}

double UnitQuaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Mat3 UnitQuaternion::to_matrix() const { return quaternion_matrix(as_vector()); }

UnitQuaternion hamilton(const UnitQuaternion& a, const UnitQuaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  const UnitQuaternion p = hamilton(a, b);
  return UnitQuaternion::normalized(p.w, p.x, p.y, p.z);
}

Mat3 quaternion_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 quaternion_matrix_backward(const Vec4& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 d;
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
              z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
              w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
              y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return d;
}

Vec4 normalize_backward(const Vec4& q, const Vec4& d_normalized) {
  const double n = q.norm();
  const Vec4 qn = q / n;
  return (d_normalized - qn * qn.dot(d_normalized)) / n;
}

// ---- triangle frames --------------------------------------------------------

Mat3 TriangleFrame::basis() const {
  Mat3 b;
  b.col(0) = i;
  b.col(1) = j;
  b.col(2) = k;
  return b;
}

double triangle_area(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  return 0.5 * (v1 - v0).cross(v2 - v0).norm();
}

TriangleFrame triangle_frame(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 n = e1.cross(e2);
  if (!(0.5 * n.norm() > kMinTriangleArea)) {
    throw Error(ErrorCode::DegenerateTriangle, "triangle area below 1e-12");
  }
  TriangleFrame f;
  f.origin = (v0 + v1 + v2) / 3.0;
  f.i = e1.normalized();
  f.k = n.normalized();
  f.j = f.k.cross(f.i);
  return f;
}

UnitQuaternion frame_rotation_quaternion(const TriangleFrame& canonical,
                                         const TriangleFrame& posed) {
  return UnitQuaternion::from_matrix(posed.basis() * canonical.basis().transpose());
}

// ---- spherical harmonics ----------------------------------------------------

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

template <typename T>
Vec3 eval_sh_impl(int degree, std::span<const T> coeffs, const Vec3& dir) {
  if (degree < 0 || degree > kMaxShDegree ||
      static_cast<int>(coeffs.size()) != sh_coeff_count(degree)) {
    throw Error(ErrorCode::ShapeMismatch, "SH coefficient count does not match degree");
  }
  const auto basis = sh_basis(degree, dir);
  Vec3 color = Vec3::Zero();
  const int n = sh_basis_count(degree);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) {
      color[c] += basis[b] * static_cast<double>(coeffs[3 * b + c]);
    }
  }
  return color;
}

}  // namespace

std::array<double, 16> sh_basis(int degree, const Vec3& d) {
  std::array<double, 16> y{};
  y[0] = kShC0;
  if (degree < 1) return y;
  const double x = d.x(), yy = d.y(), z = d.z();
  y[1] = -kC1 * yy;
  y[2] = kC1 * z;
  y[3] = -kC1 * x;
  if (degree < 2) return y;
  const double xx = x * x, y2 = yy * yy, zz = z * z;
  y[4] = kC2[0] * x * yy;
  y[5] = kC2[1] * yy * z;
  y[6] = kC2[2] * (2 * zz - xx - y2);
  y[7] = kC2[3] * x * z;
  y[8] = kC2[4] * (xx - y2);
  if (degree < 3) return y;
  y[9] = kC3[0] * yy * (3 * xx - y2);
  y[10] = kC3[1] * x * yy * z;
  y[11] = kC3[2] * yy * (4 * zz - xx - y2);
  y[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * y2);
  y[13] = kC3[4] * x * (4 * zz - xx - y2);
  y[14] = kC3[5] * z * (xx - y2);
  y[15] = kC3[6] * x * (xx - 3 * y2);
  return y;
}

std::array<Vec3, 16> sh_basis_gradient(int degree, const Vec3& d) {
  std::array<Vec3, 16> g;
  g.fill(Vec3::Zero());
  if (degree < 1) return g;
  const double x = d.x(), y = d.y(), z = d.z();
  g[1] = {0, -kC1, 0};
  g[2] = {0, 0, kC1};
  g[3] = {-kC1, 0, 0};
  if (degree < 2) return g;
  g[4] = kC2[0] * Vec3(y, x, 0);
  g[5] = kC2[1] * Vec3(0, z, y);
  g[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
  g[7] = kC2[3] * Vec3(z, 0, x);
  g[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
  if (degree < 3) return g;
  const double xx = x * x, yy = y * y, zz = z * z;
  g[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
  g[10] = kC3[1] * Vec3(y * z, x * z, x * y);
  g[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
  g[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
  g[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
  g[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
  g[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
  return g;
}

Vec3 eval_sh(int degree, std::span<const float> coeffs, const Vec3& view_dir) {
  return eval_sh_impl(degree, coeffs, view_dir);
}

Vec3 eval_sh(int degree, std::span<const double> coeffs, const Vec3& view_dir) {
  return eval_sh_impl(degree, coeffs, view_dir);
}

Vec3 eval_sh_backward(int degree, std::span<const float> coeffs, const Vec3& dir,
                      const Vec3& d_color, std::span<double> d_coeffs) {
  const int n = sh_basis_count(degree);
  const auto basis = sh_basis(degree, dir);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) d_coeffs[3 * b + c] += basis[b] * d_color[c];
  }
  Vec3 d_dir = Vec3::Zero();
  if (degree == 0) return d_dir;
  const auto grad = sh_basis_gradient(degree, dir);
  for (int b = 1; b < n; ++b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += static_cast<double>(coeffs[3 * b + c]) * d_color[c];
    d_dir += s * grad[b];
  }
  return d_dir;
}

}  // namespace strata
