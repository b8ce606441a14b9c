#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "strata/geometry.hpp"

namespace strata {

/// Uniform grid hash over a fixed point set. Query results are ordered by
/// (squared distance, index), so ties are deterministic.
class GridIndex {
 public:
  /// cell_size <= 0 picks a size giving roughly two points per occupied cell.
  explicit GridIndex(std::span<const Vec3> points, double cell_size = 0.0);

  /// Up to k nearest points to q; `exclude` (if >= 0) is skipped.
  std::vector<std::uint32_t> nearest(const Vec3& q, int k, std::int64_t exclude = -1) const;

  double cell_size() const { return cell_; }
  std::size_t size() const { return points_.size(); }

 private:
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };

  Key key_of(const Vec3& p) const;

  std::vector<Vec3> points_;
  double cell_ = 1.0;
  std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> cells_;
  Key lo_{0, 0, 0}, hi_{0, 0, 0};
};

/// k nearest neighbours (self excluded) of every point.
std::vector<std::vector<std::uint32_t>> knn_all(std::span<const Vec3> points, int k);

}  // namespace strata
