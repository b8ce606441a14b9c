#include "strata/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "strata/error.hpp"

namespace strata {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary) {
  const auto out = [&](double u, double v, double w) {
    if (bary) *bary = {u, v, w};
    return Vec3(u * a + v * b + w * c);
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return out(1, 0, 0);
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return out(0, 1, 0);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return out(1 - v, v, 0);
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return out(0, 0, 1);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return out(1 - w, 0, w);
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return out(0, 1 - w, w);
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return out(1 - v - w, v, w);
}

namespace {

double box_distance2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
  return d.squaredNorm();
}

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}

}  // namespace

MeshSdf::MeshSdf(std::span<const Vec3> vertices,
                 std::span<const std::array<std::uint32_t, 3>> faces)
    : vertices_(vertices.begin(), vertices.end()), faces_(faces.begin(), faces.end()) {
  if (faces_.empty()) throw Error(ErrorCode::InvalidArgument, "sdf: mesh has no faces");
  face_normals_.resize(faces_.size());
  vertex_normals_.assign(vertices_.size(), Vec3::Zero());
  std::map<std::uint64_t, Vec3> edge_sum;
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& t = faces_[f];
    const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
    face_normals_[f] = n.norm() > 0.0 ? Vec3(n.normalized()) : Vec3::Zero();
    for (int e = 0; e < 3; ++e) {
      const Vec3& v = vertices_[t[e]];
      const Vec3 u = vertices_[t[(e + 1) % 3]] - v;
      const Vec3 w = vertices_[t[(e + 2) % 3]] - v;
      const double denom = u.norm() * w.norm();
      const double angle = denom > 0.0 ? std::acos(std::clamp(u.dot(w) / denom, -1.0, 1.0)) : 0.0;
      vertex_normals_[t[e]] += angle * face_normals_[f];
      edge_sum.try_emplace(edge_key(t[e], t[(e + 1) % 3]), Vec3::Zero()).first->second += face_normals_[f];
    }
  }
  edge_normals_.resize(faces_.size());
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    for (int e = 0; e < 3; ++e) {
      edge_normals_[f][e] = edge_sum[edge_key(faces_[f][e], faces_[f][(e + 1) % 3])];
    }
  }
  order_.resize(faces_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * faces_.size());
  build(0, static_cast<std::uint32_t>(faces_.size()));
}

std::uint32_t MeshSdf::build(std::uint32_t first, std::uint32_t count) {
  const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (std::uint32_t i = first; i < first + count; ++i) {
    Vec3 centroid = Vec3::Zero();
    for (auto v : faces_[order_[i]]) {
      lo = lo.cwiseMin(vertices_[v]);
      hi = hi.cwiseMax(vertices_[v]);
      centroid += vertices_[v] / 3.0;
    }
    clo = clo.cwiseMin(centroid);
    chi = chi.cwiseMax(centroid);
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (count <= 4) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  const Vec3 ext = chi - clo;
  if (ext[1] > ext[axis]) axis = 1;
  if (ext[2] > ext[axis]) axis = 2;
  const auto centroid_of = [&](std::uint32_t f) {
    const auto& t = faces_[f];
    return vertices_[t[0]][axis] + vertices_[t[1]][axis] + vertices_[t[2]][axis];
  };
  const std::uint32_t mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroid_of(a), cb = centroid_of(b);
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::uint32_t left = build(first, mid - first);
  const std::uint32_t right = build(mid, first + count - mid);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void MeshSdf::search(std::uint32_t node, const Vec3& p, double& best_d2, std::uint32_t& best_face,
                     Vec3& best_point, Vec3& best_bary) const {
  const Node& n = nodes_[node];
  if (n.count > 0) {
    for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
      const std::uint32_t f = order_[i];
      const auto& t = faces_[f];
      Vec3 bary;
      const Vec3 q =
          closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]], &bary);
      const double d2 = (q - p).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && f < best_face)) {
        best_d2 = d2;
        best_face = f;
        best_point = q;
        best_bary = bary;
      }
    }
    return;
  }
  const double dl = box_distance2(p, nodes_[n.left].lo, nodes_[n.left].hi);
  const double dr = box_distance2(p, nodes_[n.right].lo, nodes_[n.right].hi);
  const std::uint32_t first = dl <= dr ? n.left : n.right;
  const std::uint32_t second = dl <= dr ? n.right : n.left;
  if (std::min(dl, dr) <= best_d2) search(first, p, best_d2, best_face, best_point, best_bary);
  if (std::max(dl, dr) <= best_d2) search(second, p, best_d2, best_face, best_point, best_bary);
}

SdfSample MeshSdf::sample(const Vec3& p) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t face = std::numeric_limits<std::uint32_t>::max();
  Vec3 point = Vec3::Zero(), bary = Vec3::Zero();
  search(0, p, best_d2, face, point, bary);

  SdfSample s;
  s.face = face;
  s.closest = point;
  const auto& t = faces_[face];
  Vec3 normal;
  int zeros = 0;
  for (int e = 0; e < 3; ++e) zeros += bary[e] == 0.0 ? 1 : 0;
  if (zeros == 2) {
    int v = 0;
    for (int e = 0; e < 3; ++e) {
      if (bary[e] != 0.0) v = e;
    }
    s.feature = Feature::Vertex;
    s.feature_id = t[v];
    normal = vertex_normals_[t[v]];
  } else if (zeros == 1) {
    int missing = 0;
    for (int e = 0; e < 3; ++e) {
      if (bary[e] == 0.0) missing = e;
    }
    // Edge opposite the missing vertex: (missing + 1, missing + 2).
    const int e = (missing + 1) % 3;
    s.feature = Feature::Edge;
    s.feature_id = edge_key(t[e], t[(e + 1) % 3]);
    normal = edge_normals_[face][e];
  } else {
    s.feature = Feature::Face;
    s.feature_id = face;
    normal = face_normals_[face];
  }
  const Vec3 diff = p - point;
  const double dist = std::sqrt(best_d2);
  const double sign = diff.dot(normal) < 0.0 ? -1.0 : 1.0;
  s.distance = sign * dist;
  if (dist > 0.0) {
    s.gradient = sign * diff / dist;
  } else {
    s.gradient = normal.norm() > 0.0 ? Vec3(normal.normalized()) : Vec3::Zero();
  }
  return s;
}

}  // namespace strata
