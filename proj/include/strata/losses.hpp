#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "strata/gradients.hpp"
#include "strata/image.hpp"
#include "strata/scene.hpp"
#include "strata/sdf.hpp"
#include "strata/skinning.hpp"

namespace strata {

struct LossWeights {
  double w_ori = 1.0;
  double w_id2d = 1.0;
  double w_id3d = 1.0;
  double w_ani = 1.0;
  double w_sdf = 1.0;
  double w_ref = 1.0;
  double lambda_ssim = 0.2;
  double tau = 4.0;
  int knn_k = 5;
  int knn_m = 1000;
  double sdf_margin = 0.0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Mean absolute difference over all pixels and channels.
double loss_l1(const Image& rendered, const Image& target, Image* grad = nullptr);

/// Mean SSIM over pixels and channels with an 11x11 Gaussian window
/// (sigma 1.5), zero padding, C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

/// (1 - lambda) * L1 + lambda * (1 - SSIM).
double loss_ori(const Image& rendered, const Image& target, double lambda_ssim,
                Image* grad = nullptr);

/// Mean per-pixel cross-entropy of softmax(identity) against mask labels.
double loss_id2d(const Image& identity, const MaskImage& mask, Image* grad = nullptr);

/// k-NN KL regularizer over asset Gaussians. `positions` are canonical world
/// positions indexed like the set; m of the assets are sampled without
/// replacement under `seed`. d_identity (15 per Gaussian) is accumulated.
double loss_id3d(const GaussianSet& set, std::span<const Vec3> positions, int k, int m,
                 std::uint64_t seed, std::vector<double>* d_identity = nullptr);

/// Mean over asset Gaussians of max(max(s)/min(s), tau) - tau on
/// exp(log_scale). Gradient goes to log_scale.
double loss_ani(const GaussianSet& set, double tau, ParamGradients* grads = nullptr);

/// Mean over asset Gaussians of max(0, margin - sdf(position))^2 with
/// positions reposed through `transports`. Gradient goes to offsets.
double loss_sdf(const GaussianSet& set, std::span<const FaceTransport> transports,
                const MeshSdf& sdf, double margin, ParamGradients* grads = nullptr);

/// (1/T) sum_t mean squared error of frame t.
double loss_ref(std::span<const Image> rendered, std::span<const Image> frames,
                std::vector<Image>* grads = nullptr);

/// Asset-layer Gaussians in index order.
std::vector<std::size_t> asset_indices(const GaussianSet& set);

}  // namespace strata
