#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strata/geometry.hpp"

namespace strata {

inline constexpr int kIdentityDim = 15;
inline constexpr int kCategoryCount = 15;

using IdentityVector = std::array<float, kIdentityDim>;

/// Fixed segmentation category list; index = label.
inline constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "Background", "Hat",       "Hair",       "Sunglasses", "Upper-clothes",
    "Skirt",      "Pants",     "Dress",      "Belt",       "Left-shoe",
    "Right-shoe", "Face",      "Skin",       "Bag",        "Scarf"};

namespace category {
inline constexpr int kBackground = 0;
inline constexpr int kUpperClothes = 4;
inline constexpr int kPants = 6;
inline constexpr int kFace = 11;
inline constexpr int kSkin = 12;
}  // namespace category

std::string_view category_name(int index);
/// Clothing/accessory categories: everything except Background, Face, Skin.
bool is_asset_category(int index);

/// Rigid transform x -> rotation * x + translation.
struct Rigid {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Rigid identity() { return {}; }
  static Rigid from_quaternion(const UnitQuaternion& q, const Vec3& t) {
    return {q.to_matrix(), t};
  }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Rigid inverse() const;
  Mat4 matrix() const;
};

Rigid operator*(const Rigid& a, const Rigid& b);

struct Joint {
  std::string name;
  int parent = -1;
  Rigid bind;  ///< canonical joint frame in world coordinates
};

/// Canonical skinned mesh. Skin weights are dense, row-major N x J.
struct SkinnedMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::vector<Joint> joints;
  std::vector<double> skin_weights;
  std::map<std::string, std::vector<std::uint32_t>> face_regions;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
  std::size_t joint_count() const { return joints.size(); }
  double weight(std::size_t vertex, std::size_t joint) const {
    return skin_weights[vertex * joints.size() + joint];
  }
  int joint_index(std::string_view name) const;

  /// Throws InvalidArgument on bad indices, weights, or non-manifold edges.
  void validate() const;

  /// FNV-1a over canonical vertices and faces; binds splat files to meshes.
  std::uint64_t content_hash() const;
};

TriangleFrame face_frame(std::span<const Vec3> vertices,
                         const std::array<std::uint32_t, 3>& face);

/// Pinhole camera. Camera space looks down +z with +y pointing down the
/// image; pixel (u, v) has its center at (u + 0.5, v + 0.5).
struct Camera {
  Rigid world_to_camera;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double near = 0.01;

  Vec3 center() const;
  void validate() const;

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int width, int height);
};

enum class Layer : std::uint8_t { Body = 0, Asset = 1 };

struct TriangleEmbedding {
  std::uint32_t face_index = 0;
  float sigma = 0.0f;
  float beta = 0.0f;
  float gamma = 0.0f;

  Vec3 offset() const { return {sigma, beta, gamma}; }
};

/// One Gaussian as a value. GaussianSet is the structure-of-arrays store.
struct Gaussian {
  TriangleEmbedding embedding;
  std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f};
  std::array<float, 3> log_scale{};
  float opacity_logit = 0.0f;
  std::vector<float> sh;
  IdentityVector identity{};
  Layer layer = Layer::Asset;
  bool frozen = false;
};

/// Splat parameters in unconstrained form, stored as float32 to match the
/// on-disk layout exactly. Computations promote to double.
struct GaussianSet {
  explicit GaussianSet(int sh_degree = 0);

  int sh_degree = 0;
  std::vector<TriangleEmbedding> embedding;
  std::vector<std::array<float, 4>> rotation;
  std::vector<std::array<float, 3>> log_scale;
  std::vector<float> opacity_logit;
  std::vector<float> sh;  ///< size() * sh_stride(), [basis][channel] per Gaussian
  std::vector<IdentityVector> identity;
  std::vector<Layer> layer;
  std::vector<std::uint8_t> frozen;

  std::size_t size() const { return embedding.size(); }
  bool empty() const { return embedding.empty(); }
  int sh_stride() const { return sh_coeff_count(sh_degree); }

  void push_back(const Gaussian& g);
  Gaussian get(std::size_t i) const;
  void append(const GaussianSet& other);
  /// Keeps entries whose mask value is true, preserving order.
  void keep(const std::vector<bool>& mask);
  GaussianSet select(std::span<const std::size_t> indices) const;

  std::span<const float> sh_of(std::size_t i) const {
    return {sh.data() + i * sh_stride(), static_cast<std::size_t>(sh_stride())};
  }
  std::span<float> sh_of(std::size_t i) {
    return {sh.data() + i * sh_stride(), static_cast<std::size_t>(sh_stride())};
  }
  UnitQuaternion rotation_of(std::size_t i) const;
  Vec3 scale_of(std::size_t i) const;
  double opacity_of(std::size_t i) const;

  std::size_t count(Layer l) const;

  /// Throws InvalidArgument when a field is inconsistent with the schema.
  void validate(std::size_t face_count) const;
};

/// Bitwise equality of every field (float bit patterns, not values).
bool bitwise_equal(const GaussianSet& a, const GaussianSet& b);

double sigmoid(double x);
double logit(double p);

/// origin + sigma*i + beta*j + gamma*k on the given vertex positions.
Vec3 resolve_position(const TriangleEmbedding& e, std::span<const Vec3> vertices,
                      std::span<const std::array<std::uint32_t, 3>> faces);
Vec3 resolve_position(const Gaussian& g, const SkinnedMesh& mesh,
                      std::span<const Vec3> posed_vertices);

/// Argmax of identity logits; ties resolve to the lower index.
int category_of(const IdentityVector& identity);
int category_of(const Gaussian& g);

}  // namespace strata
