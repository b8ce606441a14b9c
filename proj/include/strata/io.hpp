#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "strata/image.hpp"
#include "strata/lifecycle.hpp"
#include "strata/scene.hpp"
#include "strata/skinning.hpp"

namespace strata {

namespace fs = std::filesystem;

inline constexpr int kSplatFormatVersion = 1;
inline constexpr int kMeshFormatVersion = 1;
inline constexpr int kPoseFormatVersion = 1;
inline constexpr int kCameraFormatVersion = 1;

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

// ---- splat scenes -------------------------------------------------------------

struct SceneFile {
  GaussianSet set;
  std::uint64_t mesh_hash = 0;
};

/// Binary little-endian PLY with the mesh hash and format version in header
/// comments.
std::string encode_scene(const GaussianSet& set, std::uint64_t mesh_hash);
/// Throws MalformedHeader, VersionMismatch, or MeshHashMismatch (when
/// expected_hash is given and differs).
SceneFile decode_scene(const std::string& bytes,
                       std::optional<std::uint64_t> expected_hash = std::nullopt);

void save_scene(const fs::path& path, const GaussianSet& set, std::uint64_t mesh_hash);
SceneFile load_scene(const fs::path& path,
                     std::optional<std::uint64_t> expected_hash = std::nullopt);

// ---- meshes, poses, cameras (JSON) ------------------------------------------

std::string encode_mesh(const SkinnedMesh& mesh);
/// Sparse skin weights; rows within 1e-3 of unit sum are renormalized, others
/// rejected (InvalidArgument). Throws MalformedHeader on schema errors.
SkinnedMesh decode_mesh(const std::string& text);
void save_mesh(const fs::path& path, const SkinnedMesh& mesh);
SkinnedMesh load_mesh(const fs::path& path);

struct PoseSequence {
  std::vector<std::vector<Rigid>> local;  ///< per frame, per joint (bind-frame local)
  std::vector<Rigid> root;
  std::vector<double> times;              ///< in [0, 1], strictly increasing

  std::vector<Pose> poses(const SkinnedMesh& mesh) const;
};

/// Joints are named; unnamed joints stay at rest. Missing times default to
/// frame / (frames - 1). Throws InvalidArgument for unknown joint names.
PoseSequence decode_poses(const std::string& text, const SkinnedMesh& mesh);
std::string encode_poses(const PoseSequence& seq, const SkinnedMesh& mesh);
PoseSequence load_poses(const fs::path& path, const SkinnedMesh& mesh);
void save_poses(const fs::path& path, const PoseSequence& seq, const SkinnedMesh& mesh);

std::string encode_camera(const Camera& cam);
Camera decode_camera(const std::string& text);
void save_camera(const fs::path& path, const Camera& cam);
Camera load_camera(const fs::path& path);
/// A single .cam file, or every .cam file of a directory in name order.
std::vector<Camera> load_cameras(const fs::path& path);

// ---- images -------------------------------------------------------------------

/// 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) as linear RGB in [0, 1].
/// Alpha is dropped. Throws UnsupportedFormat for other bit depths.
Image load_image(const fs::path& path);
/// Writes 1, 3 or 4 channels as 8-bit PNG after clamping to [0, 1].
void save_image(const fs::path& path, const Image& image);
/// Palette or grayscale PNG whose values are labels. Throws LabelOutOfRange
/// above 14 and UnsupportedFormat for color images.
MaskImage load_mask(const fs::path& path);
/// Palette PNG, index = label.
void save_mask(const fs::path& path, const MaskImage& mask);

/// Training views from NNN.cam / NNN.png / NNN.mask.png triples. Throws
/// IoFailure naming the basename of any incomplete triple.
std::vector<View> load_views(const fs::path& dir);
void save_views(const fs::path& dir, const std::vector<View>& views);

}  // namespace strata
