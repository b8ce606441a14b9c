#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "strata/geometry.hpp"

namespace strata {

/// Closest-feature classification of a point-triangle query.
enum class Feature : std::uint8_t { Face, Edge, Vertex };

struct SdfSample {
  double distance = 0.0;  ///< signed, negative inside
  Vec3 closest = Vec3::Zero();
  Vec3 gradient = Vec3::Zero();  ///< d distance / d point
  std::uint32_t face = 0;
  Feature feature = Feature::Face;
  std::uint64_t feature_id = 0;  ///< face index, sorted vertex pair, or vertex index
};

/// Exact point-to-triangle closest point (Ericson, Real-Time Collision
/// Detection 5.1.5). `bary` receives barycentric weights of the closest point.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary = nullptr);

/// Signed distance to a closed triangle mesh using angle-weighted
/// pseudo-normals for the sign and an AABB tree for the search.
class MeshSdf {
 public:
  MeshSdf(std::span<const Vec3> vertices, std::span<const std::array<std::uint32_t, 3>> faces);

  double query(const Vec3& p) const { return sample(p).distance; }
  SdfSample sample(const Vec3& p) const;

 private:
  struct Node {
    Vec3 lo, hi;
    std::uint32_t left = 0, right = 0;  ///< children when count == 0
    std::uint32_t first = 0, count = 0;
  };

  std::uint32_t build(std::uint32_t first, std::uint32_t count);
  void search(std::uint32_t node, const Vec3& p, double& best_d2, std::uint32_t& best_face,
              Vec3& best_point, Vec3& best_bary) const;

  std::vector<Vec3> vertices_;
  std::vector<std::array<std::uint32_t, 3>> faces_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_normals_;
  std::vector<std::array<Vec3, 3>> edge_normals_;  ///< per face, edge (v_e, v_{e+1})
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace strata
