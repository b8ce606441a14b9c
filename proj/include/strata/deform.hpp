#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "strata/lifecycle.hpp"
#include "strata/rasterizer.hpp"
#include "strata/skinning.hpp"

namespace strata {

struct DeformConfig {
  int width = 128;
  int position_bands = 6;
  int time_bands = 4;
  int iterations = 1500;
  double lr = 1e-3;
  double w_ref = 1.0;
  double w_aux = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

/// Residual deformation of one Gaussian.
struct DeformDelta {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();  ///< applied as normalize((1,0,0,0) + rotation)
  Vec3 log_scale = Vec3::Zero();
};

/// Time-conditioned MLP: 4 SiLU hidden layers, the encoded input re-enters at
/// the third, and three linear heads start at exactly zero.
class DeformField {
 public:
  static constexpr int kHidden = 4;
  static constexpr int kSkipLayer = 2;
  static constexpr int kOutputs = 10;
  /// Layers 0..3 hidden, 4 position head, 5 rotation head, 6 scale head.
  static constexpr int kLayerCount = 7;

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit DeformField(const DeformConfig& cfg = {});

  const DeformConfig& config() const { return cfg_; }
  int input_dim() const { return 3 * (1 + 2 * cfg_.position_bands) + 1 + 2 * cfg_.time_bands; }
  int layer_inputs(int layer) const;
  int layer_outputs(int layer) const;

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  Eigen::Map<RowMatrix> weight(int layer);
  Eigen::Map<const RowMatrix> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  /// Frequency encoding: (p, sin(2^l pi p), cos(2^l pi p)) for each axis and
  /// band, then the same for t.
  void encode(const Vec3& p, double t, double* out) const;

  struct Cache {
    RowMatrix input;
    std::array<RowMatrix, kHidden> pre;
    std::array<RowMatrix, kHidden> act;
  };

  /// Rows of `inputs` are encoded samples; returns N x 10 head outputs.
  RowMatrix forward(const RowMatrix& inputs, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients into d_params and optionally returns
  /// dL/d(inputs).
  void backward(const Cache& cache, const RowMatrix& d_outputs, std::span<double> d_params,
                RowMatrix* d_inputs = nullptr) const;

  DeformDelta evaluate(const Vec3& p, double t) const;
  /// d(delta position)/dt through the network and the time encoding.
  Vec3 position_time_derivative(const Vec3& p, double t) const;

  /// JSON header line followed by little-endian float64 parameters.
  std::string to_blob() const;
  /// Throws MalformedHeader or VersionMismatch.
  static DeformField from_blob(const std::string& blob);

 private:
  DeformConfig cfg_;
  std::vector<std::size_t> offsets_;  ///< per layer: weights, then bias
  std::vector<double> params_;
};

/// Adds the field's residuals to asset-layer world Gaussians; body Gaussians
/// pass through untouched. Rotation residuals compose on the left.
std::vector<ReposedGaussian> apply_deform(const DeformField& field, const GaussianSet& set,
                                          std::vector<ReposedGaussian> world, double t);

/// One reference frame of a monocular sequence, with optional extra views
/// sharing its pose.
struct FrameSample {
  double t = 0.0;
  Pose pose;
  Camera camera;
  Image image;
  std::vector<View> aux;
};

struct DeformTrainReport {
  double initial_loss = 0.0;  ///< mean reference loss over frames before training
  double final_loss = 0.0;    ///< same after training
  std::vector<std::string> log;
};

/// Optimizes only the field against the frames (static scene untouched).
/// Throws TooFewFrames below 2 frames, InvalidArgument when times are not
/// strictly increasing in [0, 1].
DeformTrainReport train_deform(DeformField& field, const GaussianSet& set,
                               const SkinnedMesh& mesh, std::span<const FrameSample> frames,
                               const RasterConfig& raster,
                               const std::function<void(const std::string&)>& on_log = {});

/// Mean reference loss over frames for the current field.
double deform_reference_loss(const DeformField* field, const GaussianSet& set,
                             const SkinnedMesh& mesh, std::span<const FrameSample> frames,
                             const RasterConfig& raster);

/// Poses the mesh, reposes every Gaussian, applies the field (if any) and
/// renders each camera. Result is frames x cameras.
std::vector<std::vector<RenderOutput>> animate(const GaussianSet& set, const SkinnedMesh& mesh,
                                               std::span<const Pose> poses,
                                               std::span<const double> times,
                                               std::span<const Camera> cameras,
                                               const DeformField* field,
                                               const RasterConfig& raster);

}  // namespace strata
