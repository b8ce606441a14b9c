#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "strata/lifecycle.hpp"

namespace strata {

/// Asset-layer Gaussians whose identity argmax is `category`, in index order.
std::vector<std::size_t> group_indices(const GaussianSet& set, int category);

/// Drops the group. Throws InvalidCategory outside 1..14.
GaussianSet remove_group(const GaussianSet& set, int category);

/// Either a flat color or a set of target views.
struct RecolorTarget {
  std::optional<Vec3> color;
  std::vector<View> views;
};

struct RecolorOptions {
  int iterations = 300;
  double lr = 0.05;
  RasterConfig raster;
};

/// Resets the group's SH to neutral gray and optimizes only those
/// coefficients: against the flat color directly, or by rendered L1 against
/// the views (canonical pose). Returns the group size. Throws EmptyGroup.
std::size_t recolor_group(GaussianSet& set, const SkinnedMesh& mesh, int category,
                          const RecolorTarget& target, const RecolorOptions& options = {});

struct ExtractedGroup {
  GaussianSet group;
  std::vector<std::size_t> source_indices;  ///< position of each member in the source set
  SkinnedMesh mesh;                         ///< mesh the embeddings refer to
};

/// Copies the group out. Throws EmptyGroup.
ExtractedGroup extract_group(const GaussianSet& set, const SkinnedMesh& mesh, int category);

/// Re-inserts an extracted group into the set it was removed from.
GaussianSet merge_group(const GaussianSet& remainder, const ExtractedGroup& extracted);

/// Re-embeds Gaussians on a mesh with the same faces: offsets and scales
/// follow the per-face axis ratios, rotations follow the face rotation.
/// Throws TopologyMismatch.
GaussianSet transfer_group(const GaussianSet& set, const SkinnedMesh& source,
                           const SkinnedMesh& target);

}  // namespace strata
