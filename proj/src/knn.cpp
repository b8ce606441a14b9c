#include "strata/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace strata {

std::size_t GridIndex::KeyHash::operator()(const Key& k) const {
  std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ull;
  h ^= static_cast<std::uint64_t>(k.y) * 19349663ull;
  h ^= static_cast<std::uint64_t>(k.z) * 83492791ull;
  return static_cast<std::size_t>(h);
}

GridIndex::GridIndex(std::span<const Vec3> points, double cell_size)
    : points_(points.begin(), points.end()) {
  if (points_.empty()) return;
  Vec3 lo = points_[0], hi = points_[0];
  for (const auto& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  if (cell_size > 0.0) {
    cell_ = cell_size;
  } else {
    // Size for the populated extent; flat or linear sets use fewer axes.
    const Vec3 ext = hi - lo;
    const double largest = std::max(ext.maxCoeff(), 1e-9);
    const double n = static_cast<double>(points_.size());
    double c = largest;
    for (int dims = 3; dims >= 1; --dims) {
      double vol = 1.0;
      int used = 0;
      for (int a = 0; a < 3; ++a) {
        if (ext[a] > 1e-6 * largest) {
          vol *= ext[a];
          ++used;
        }
      }
      if (used == dims) {
        c = std::pow(2.0 * vol / n, 1.0 / dims);
        break;
      }
    }
    cell_ = std::max(c, 1e-9 * largest + 1e-12);
  }
  lo_ = key_of(lo);
  hi_ = key_of(hi);
  for (std::uint32_t i = 0; i < points_.size(); ++i) cells_[key_of(points_[i])].push_back(i);
}

GridIndex::Key GridIndex::key_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

std::vector<std::uint32_t> GridIndex::nearest(const Vec3& q, int k, std::int64_t exclude) const {
  std::vector<std::pair<double, std::uint32_t>> best;
  if (k <= 0 || points_.empty()) return {};
  const auto better = [](const std::pair<double, std::uint32_t>& a,
                         const std::pair<double, std::uint32_t>& b) {
    return a.first < b.first || (a.first == b.first && a.second < b.second);
  };
  const Key c = key_of(q);
  const std::int64_t max_ring =
      std::max({std::abs(c.x - lo_.x), std::abs(c.x - hi_.x), std::abs(c.y - lo_.y),
                std::abs(c.y - hi_.y), std::abs(c.z - lo_.z), std::abs(c.z - hi_.z)});
  for (std::int64_t r = 0; r <= max_ring; ++r) {
    for (std::int64_t dz = -r; dz <= r; ++dz) {
      for (std::int64_t dy = -r; dy <= r; ++dy) {
        for (std::int64_t dx = -r; dx <= r; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          const auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (auto idx : it->second) {
            if (static_cast<std::int64_t>(idx) == exclude) continue;
            best.push_back({(points_[idx] - q).squaredNorm(), idx});
          }
        }
      }
    }
    if (static_cast<int>(best.size()) >= k) {
      std::sort(best.begin(), best.end(), better);
      best.resize(static_cast<std::size_t>(k));
      // Every unvisited cell is at least r * cell_ away from q.
      const double reach = static_cast<double>(r) * cell_;
      if (best.back().first < reach * reach) break;
    }
  }
  std::sort(best.begin(), best.end(), better);
  if (static_cast<int>(best.size()) > k) best.resize(static_cast<std::size_t>(k));
  std::vector<std::uint32_t> out;
  out.reserve(best.size());
  for (const auto& b : best) out.push_back(b.second);
  return out;
}

std::vector<std::vector<std::uint32_t>> knn_all(std::span<const Vec3> points, int k) {
  GridIndex index(points);
  std::vector<std::vector<std::uint32_t>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = index.nearest(points[i], k, static_cast<std::int64_t>(i));
  }
  return out;
}

}  // namespace strata
