#include "strata/config.hpp"

#include "json.hpp"
#include "strata/error.hpp"
#include "strata/io.hpp"

namespace strata {

using nlohmann::json;

RunConfig::RunConfig() {
  for (int c = 0; c < kCategoryCount; ++c) category_names[c] = std::string(kCategoryNames[c]);
}

void RunConfig::validate() const {
  loss.validate();
  schedule.validate();
  deform.validate();
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (body_per_face < 1 || body_per_face > 7) fail("body.per_face must be in [1, 7]");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) fail("sh_degree must be in [0, 3]");
  if (raster.tile_size < 1) fail("raster.tile_size must be >= 1");
  if (!(raster.alpha_clamp > 0.0 && raster.alpha_clamp <= 1.0)) fail("raster.alpha_clamp must be in (0, 1]");
  if (!(raster.alpha_skip >= 0.0) || !(raster.transmittance_stop >= 0.0) || !(raster.low_pass >= 0.0)) {
    fail("raster thresholds must be >= 0");
  }
  if (raster.threads < 0) fail("raster.threads must be >= 0");
  if (init.candidates < 0) fail("init.candidates must be >= 0");
  if (!(init.gamma_min <= init.gamma_max)) fail("init.gamma_min must be <= init.gamma_max");
  if (!(init.opacity > 0.0 && init.opacity < 1.0)) fail("init.opacity must be in (0, 1)");
  for (const auto& n : category_names) {
    if (n.empty()) fail("category names must be non-empty");
  }
}

namespace {

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

json to_json(const RunConfig& c) {
  const auto& l = c.loss;
  const auto& s = c.schedule;
  const auto& r = c.raster;
  json names = json::object();
  for (int k = 0; k < kCategoryCount; ++k) names[std::to_string(k)] = c.category_names[k];
  return {
      {"seed", c.seed},
      {"sh_degree", c.sh_degree},
      {"inpaint", c.inpaint},
      {"loss",
       {{"w_ori", l.w_ori}, {"w_id2d", l.w_id2d}, {"w_id3d", l.w_id3d}, {"w_ani", l.w_ani},
        {"w_sdf", l.w_sdf}, {"w_ref", l.w_ref}, {"lambda_ssim", l.lambda_ssim}, {"tau", l.tau},
        {"knn_k", l.knn_k}, {"knn_m", l.knn_m}, {"sdf_margin", l.sdf_margin}}},
      {"schedule",
       {{"total_iters", s.total_iters},
        {"prune_interval", s.prune_interval},
        {"densify_interval", s.densify_interval},
        {"densify_start", s.densify_start},
        {"densify_stop", s.densify_stop},
        {"front_view_iters", s.front_view_iters},
        {"opacity_prune_threshold", s.opacity_prune_threshold},
        {"densify_rate", s.densify_rate},
        {"max_gaussians", s.max_gaussians},
        {"inpaint_iters", s.inpaint_iters},
        {"lr",
         {{"offsets", s.lr.offsets}, {"rotation", s.lr.rotation}, {"log_scale", s.lr.log_scale},
          {"opacity", s.lr.opacity}, {"sh", s.lr.sh}, {"identity", s.lr.identity}}}}},
      {"raster",
       {{"tile_size", r.tile_size}, {"low_pass", r.low_pass}, {"alpha_clamp", r.alpha_clamp},
        {"alpha_skip", r.alpha_skip}, {"transmittance_stop", r.transmittance_stop},
        {"background", vec_json(r.background)},
        {"background_identity_logit", r.background_identity_logit}, {"threads", r.threads}}},
      {"init",
       {{"candidates", c.init.candidates}, {"gamma_min", c.init.gamma_min},
        {"gamma_max", c.init.gamma_max}, {"opacity", c.init.opacity}, {"scale", c.init.scale},
        {"identity_logit", c.init.identity_logit}}},
      {"body", {{"per_face", c.body_per_face}, {"color", vec_json(c.body_color)}}},
      {"deform",
       {{"width", c.deform.width}, {"position_bands", c.deform.position_bands},
        {"time_bands", c.deform.time_bands}, {"iterations", c.deform.iterations},
        {"lr", c.deform.lr}, {"w_ref", c.deform.w_ref}, {"w_aux", c.deform.w_aux},
        {"seed", c.deform.seed}}},
      {"categories", names},
      {"paths",
       {{"mesh", c.paths.mesh}, {"views", c.paths.views}, {"init_splats", c.paths.init_splats},
        {"out", c.paths.out}}},
  };
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integer slots reject fractional values.
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

// Overlays `user` onto `base`, rejecting keys `base` does not have.
void merge_strict(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw Error(ErrorCode::ConfigError, "config: " + where + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw Error(ErrorCode::ConfigError, "config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, path);
    } else if (slot.is_array()) {
      if (!value.is_array() || value.size() != slot.size()) {
        throw Error(ErrorCode::ConfigError, "config: '" + path + "' must be an array of " +
                                                std::to_string(slot.size()));
      }
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_number()) {
          throw Error(ErrorCode::ConfigError, "config: '" + path + "' must hold numbers");
        }
      }
      slot = value;
    } else {
      if (!same_kind(slot, value)) {
        throw Error(ErrorCode::ConfigError, "config: '" + path + "' has the wrong type");
      }
      if (slot.is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0) {
        throw Error(ErrorCode::ConfigError, "config: '" + path + "' must be non-negative");
      }
      slot = value;
    }
  }
}

Vec3 vec_from(const json& j) { return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()}; }

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = j["seed"].get<std::uint64_t>();
  c.sh_degree = j["sh_degree"].get<int>();
  c.inpaint = j["inpaint"].get<bool>();
  const json& l = j["loss"];
  c.loss.w_ori = l["w_ori"];
  c.loss.w_id2d = l["w_id2d"];
  c.loss.w_id3d = l["w_id3d"];
  c.loss.w_ani = l["w_ani"];
  c.loss.w_sdf = l["w_sdf"];
  c.loss.w_ref = l["w_ref"];
  c.loss.lambda_ssim = l["lambda_ssim"];
  c.loss.tau = l["tau"];
  c.loss.knn_k = l["knn_k"];
  c.loss.knn_m = l["knn_m"];
  c.loss.sdf_margin = l["sdf_margin"];
  const json& s = j["schedule"];
  c.schedule.total_iters = s["total_iters"];
  c.schedule.prune_interval = s["prune_interval"];
  c.schedule.densify_interval = s["densify_interval"];
  c.schedule.densify_start = s["densify_start"];
  c.schedule.densify_stop = s["densify_stop"];
  c.schedule.front_view_iters = s["front_view_iters"];
  c.schedule.opacity_prune_threshold = s["opacity_prune_threshold"];
  c.schedule.densify_rate = s["densify_rate"];
  c.schedule.max_gaussians = s["max_gaussians"];
  c.schedule.inpaint_iters = s["inpaint_iters"];
  const json& lr = s["lr"];
  c.schedule.lr.offsets = lr["offsets"];
  c.schedule.lr.rotation = lr["rotation"];
  c.schedule.lr.log_scale = lr["log_scale"];
  c.schedule.lr.opacity = lr["opacity"];
  c.schedule.lr.sh = lr["sh"];
  c.schedule.lr.identity = lr["identity"];
  const json& r = j["raster"];
  c.raster.tile_size = r["tile_size"];
  c.raster.low_pass = r["low_pass"];
  c.raster.alpha_clamp = r["alpha_clamp"];
  c.raster.alpha_skip = r["alpha_skip"];
  c.raster.transmittance_stop = r["transmittance_stop"];
  c.raster.background = vec_from(r["background"]);
  c.raster.background_identity_logit = r["background_identity_logit"];
  c.raster.threads = r["threads"];
  const json& i = j["init"];
  c.init.candidates = i["candidates"];
  c.init.gamma_min = i["gamma_min"];
  c.init.gamma_max = i["gamma_max"];
  c.init.opacity = i["opacity"];
  c.init.scale = i["scale"];
  c.init.identity_logit = i["identity_logit"];
  c.body_per_face = j["body"]["per_face"];
  c.body_color = vec_from(j["body"]["color"]);
  const json& d = j["deform"];
  c.deform.width = d["width"];
  c.deform.position_bands = d["position_bands"];
  c.deform.time_bands = d["time_bands"];
  c.deform.iterations = d["iterations"];
  c.deform.lr = d["lr"];
  c.deform.w_ref = d["w_ref"];
  c.deform.w_aux = d["w_aux"];
  c.deform.seed = d["seed"].get<std::uint64_t>();
  for (int k = 0; k < kCategoryCount; ++k) {
    c.category_names[k] = j["categories"][std::to_string(k)].get<std::string>();
  }
  const json& p = j["paths"];
  c.paths.mesh = p["mesh"];
  c.paths.views = p["views"];
  c.paths.init_splats = p["init_splats"];
  c.paths.out = p["out"];
  return c;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  json merged = to_json(RunConfig{});
  merge_strict(merged, user, "");
  RunConfig cfg;
  try {
    cfg = from_json(merged);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  try {
    return parse_config(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoFailure) throw Error(ErrorCode::ConfigError, e.what());
    throw;
  }
}

std::string config_to_json(const RunConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

}  // namespace strata
