#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "strata/gradients.hpp"
#include "strata/losses.hpp"

namespace strata {

enum class LossId { Ori, L1, SumSq, Id2d, Id3d, Ani, Sdf, Ref };

/// Names: ori, l1, sumsq, id2d, id3d, ani, sdf, ref.
LossId parse_loss_id(std::string_view name);
std::string_view to_string(LossId id);
std::vector<LossId> all_loss_ids();

/// A small randomized scene with everything each loss needs.
struct GradCheckProblem {
  SkinnedMesh mesh;
  std::vector<Pose> poses;      ///< poses[0] drives single-frame losses
  Camera camera;
  std::vector<Image> targets;   ///< one per pose
  MaskImage mask;
  GaussianSet set;
  LossWeights weights;
  RasterConfig raster;
  std::uint64_t loss_seed = 0;
};

/// Parameters are snapped to multiples of 2^-20 so that x +- 2^-13 is exact
/// in float32 and central differences are symmetric.
GradCheckProblem make_gradcheck_problem(std::uint64_t seed, int asset_count = 12,
                                        int image_size = 16);

struct LossEvaluation {
  double value = 0.0;
  /// Hash of every discrete decision the loss made (contributor lists,
  /// neighbour lists, active hinges, sign patterns).
  std::uint64_t structure = 0;
};

LossEvaluation evaluate_loss(const GradCheckProblem& problem, const GaussianSet& set, LossId id,
                             ParamGradients* grads = nullptr);

struct GradCheckReport {
  LossId loss = LossId::Ori;
  int checked = 0;
  int resampled = 0;  ///< coordinates skipped because a step crossed a discontinuity
  double max_rel_err = 0.0;
  std::string worst_coord;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double analytic_norm = 0.0;

  bool passed(double tolerance = 1e-4) const { return checked > 0 && max_rel_err <= tolerance; }
  std::string to_string() const;
};

/// Compares analytic gradients with central differences on n_coords random
/// unfrozen coordinates. Relative error uses max(|a|, |b|, 1e-8).
GradCheckReport check_gradients(const GradCheckProblem& problem, LossId id, int n_coords,
                                std::uint64_t seed, double step = 0x1p-13);

}  // namespace strata
