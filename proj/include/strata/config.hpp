#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "strata/deform.hpp"
#include "strata/lifecycle.hpp"
#include "strata/losses.hpp"
#include "strata/rasterizer.hpp"

namespace strata {

/// Everything a run can be configured with. Defaults are the values below.
struct RunConfig {
  std::uint64_t seed = 0;
  LossWeights loss;
  Schedule schedule;
  RasterConfig raster;
  AssetInitConfig init;
  int body_per_face = 1;
  Vec3 body_color = Vec3::Constant(0.5);
  int sh_degree = 0;
  bool inpaint = true;
  DeformConfig deform;
  std::array<std::string, kCategoryCount> category_names;  ///< display names
  struct Paths {
    std::string mesh;
    std::string views;
    std::string init_splats;
    std::string out;
  } paths;

  RunConfig();
  /// Throws ConfigError.
  void validate() const;
};

/// Strict JSON: unknown keys and wrong types raise ConfigError. Missing keys
/// keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Resolved configuration as JSON (every key, defaults included).
std::string config_to_json(const RunConfig& cfg, int indent = -1);

}  // namespace strata
