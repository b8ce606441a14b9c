#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "strata/config.hpp"
#include "strata/deform.hpp"
#include "strata/editing.hpp"
#include "strata/error.hpp"
#include "strata/fixture.hpp"
#include "strata/gradcheck.hpp"
#include "strata/io.hpp"
#include "strata/lifecycle.hpp"

using namespace strata;

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out + "\"";
}

RunConfig resolve_config(const std::string& flag) {
  std::string path = flag;
  if (path.empty()) {
    if (const char* env = std::getenv("STRATA_CONFIG"); env && *env) path = env;
  }
  return path.empty() ? RunConfig{} : load_config(path);
}

void print_config(const RunConfig& cfg) { std::cout << "config " << config_to_json(cfg) << "\n"; }

Vec3 parse_color(const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  std::vector<double> v;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "color must be r,g,b: " + text);
    }
  }
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "color must be r,g,b: " + text);
  return {v[0], v[1], v[2]};
}

Image with_alpha(const RenderOutput& out) {
  Image rgba(out.color.width, out.color.height, 4);
  for (std::size_t p = 0; p < out.color.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) rgba.data[4 * p + c] = out.color.data[3 * p + c];
    rgba.data[4 * p + 3] = out.alpha.data[p];
  }
  return rgba;
}

Image contact_sheet(const std::vector<Image>& images, int columns) {
  if (images.empty()) return {};
  const int w = images[0].width, h = images[0].height;
  const int cols = std::min<int>(columns, static_cast<int>(images.size()));
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  Image sheet(cols * w, rows * h, 3);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const int ox = static_cast<int>(k % cols) * w, oy = static_cast<int>(k / cols) * h;
    for (int y = 0; y < std::min(h, images[k].height); ++y) {
      for (int x = 0; x < std::min(w, images[k].width); ++x) {
        for (int c = 0; c < 3; ++c) sheet.at(ox + x, oy + y, c) = images[k].at(x, y, c);
      }
    }
  }
  return sheet;
}

Pose first_pose(const std::string& path, const SkinnedMesh& mesh) {
  if (path.empty()) return Pose::identity(mesh.joint_count());
  const auto seq = load_poses(path, mesh);
  if (seq.local.empty()) throw Error(ErrorCode::InvalidArgument, "pose file has no frames");
  return seq.poses(mesh).front();
}

// ---- fit ----------------------------------------------------------------------

struct FitArgs {
  std::string mesh, views, config, init_splats, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
};

int run_fit(const FitArgs& a) {
  RunConfig cfg = resolve_config(a.config);
  if (!a.mesh.empty()) cfg.paths.mesh = a.mesh;
  if (!a.views.empty()) cfg.paths.views = a.views;
  if (!a.init_splats.empty()) cfg.paths.init_splats = a.init_splats;
  if (!a.out.empty()) cfg.paths.out = a.out;
  if (a.seed) cfg.seed = *a.seed;
  if (a.iters) {
    cfg.schedule.total_iters = *a.iters;
    cfg.schedule.densify_stop = std::min(cfg.schedule.densify_stop, *a.iters);
    cfg.schedule.densify_start = std::min(cfg.schedule.densify_start, cfg.schedule.densify_stop);
  }
  cfg.validate();
  if (cfg.paths.mesh.empty() || cfg.paths.views.empty() || cfg.paths.out.empty()) {
    throw Error(ErrorCode::InvalidArgument, "fit needs --mesh, --views and --out");
  }
  print_config(cfg);
  const SkinnedMesh mesh = load_mesh(cfg.paths.mesh);
  const std::vector<View> views = load_views(cfg.paths.views);
  GaussianSet set = build_body_gaussians(mesh, cfg.body_per_face, cfg.sh_degree, cfg.body_color);
  if (!cfg.paths.init_splats.empty()) {
    const SceneFile init = load_scene(cfg.paths.init_splats, mesh.content_hash());
    if (init.set.sh_degree != cfg.sh_degree) {
      throw Error(ErrorCode::InvalidArgument, "init splats SH degree differs from sh_degree");
    }
    std::vector<bool> assets(init.set.size());
    for (std::size_t i = 0; i < assets.size(); ++i) assets[i] = init.set.layer[i] == Layer::Asset;
    GaussianSet asset_layer = init.set;
    asset_layer.keep(assets);
    set.append(asset_layer);
  } else {
    set.append(init_assets_from_views(mesh, views, cfg.init, cfg.sh_degree, cfg.seed));
  }
  std::cout << "stage=init body=" << set.count(Layer::Body) << " assets=" << set.count(Layer::Asset)
            << "\n";

  const fs::path out = cfg.paths.out;
  fs::create_directories(out);
  std::ostringstream log;
  FitOptions opt;
  opt.schedule = cfg.schedule;
  opt.weights = cfg.loss;
  opt.raster = cfg.raster;
  opt.seed = cfg.seed;
  opt.inpaint = cfg.inpaint;
  opt.on_log = [&](const std::string& line) {
    log << line << "\n";
    std::cout << line << "\n";
  };
  const FitResult result = fit(set, mesh, views, opt);

  const auto transports = face_transports(mesh, mesh.vertices);
  std::vector<Image> renders;
  double psnr_sum = 0.0;
  std::size_t agree = 0, fg = 0;
  for (const View& v : views) {
    const RenderOutput r = render(set, transports, v.camera, cfg.raster, false).output;
    psnr_sum += psnr(r.color, v.image);
    const MaskImage labels = label_map(r.identity);
    for (std::size_t p = 0; p < labels.labels.size(); ++p) {
      if (v.mask.labels[p] == category::kBackground) continue;
      ++fg;
      agree += labels.labels[p] == v.mask.labels[p];
    }
    renders.push_back(r.color);
  }
  std::ostringstream fin;
  fin.precision(6);
  fin << "stage=final gaussians=" << set.size() << " body=" << set.count(Layer::Body)
      << " assets=" << set.count(Layer::Asset) << " psnr_train=" << psnr_sum / views.size()
      << " label_agreement=" << (fg ? static_cast<double>(agree) / fg : 1.0)
      << " pruned_inside=" << result.pruned_inside
      << " pruned_transparent=" << result.pruned_transparent << " densified=" << result.densified;
  opt.on_log(fin.str());
  save_scene(out / "scene.ply", set, mesh.content_hash());
  write_file_atomic(out / "metrics.log", log.str());
  save_image(out / "contact_sheet.png", contact_sheet(renders, 4));
  return 0;
}

// ---- render -------------------------------------------------------------------

struct RenderArgs {
  std::string scene, mesh, camera, pose, out, config;
  bool layers = false;
};

int run_render(const RenderArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  print_config(cfg);
  const SkinnedMesh mesh = load_mesh(a.mesh);
  const SceneFile scene = load_scene(a.scene, mesh.content_hash());
  const Camera cam = load_camera(a.camera);
  const Pose pose = first_pose(a.pose, mesh);
  const auto transports = face_transports(mesh, pose_mesh(mesh, pose));
  const RenderOutput r = render(scene.set, transports, cam, cfg.raster, false).output;
  const fs::path out = a.out;
  save_image(out, with_alpha(r));
  if (a.layers) {
    const fs::path stem = out.parent_path() / out.stem();
    for (int c = 1; c < kCategoryCount; ++c) {
      const auto members = group_indices(scene.set, c);
      if (members.empty()) continue;
      const GaussianSet group = scene.set.select(members);
      const RenderOutput g = render(group, transports, cam, cfg.raster, false).output;
      std::string name = cfg.category_names[c];
      std::replace(name.begin(), name.end(), ' ', '_');
      save_image(stem.string() + "_cat" + std::to_string(c) + "_" + name + ".png", with_alpha(g));
      std::cout << "layer category=" << c << " gaussians=" << members.size() << "\n";
    }
    save_mask(stem.string() + "_labels.png", label_map(r.identity));
  }
  std::cout << "rendered " << out.string() << "\n";
  return 0;
}

// ---- animate ------------------------------------------------------------------

struct AnimateArgs {
  std::string scene, mesh, poses, cameras, deform, out, frames, config;
  bool train = false;
};

int run_animate(const AnimateArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  print_config(cfg);
  const SkinnedMesh mesh = load_mesh(a.mesh);
  const SceneFile scene = load_scene(a.scene, mesh.content_hash());
  const PoseSequence seq = load_poses(a.poses, mesh);
  const std::vector<Pose> poses = seq.poses(mesh);
  const std::vector<Camera> cams = load_cameras(a.cameras);
  const fs::path out = a.out;
  fs::create_directories(out);
  std::optional<DeformField> field;
  if (a.train) {
    if (a.frames.empty()) throw Error(ErrorCode::InvalidArgument, "--train-deform needs --frames");
    std::vector<FrameSample> samples;
    for (std::size_t f = 0; f < poses.size(); ++f) {
      char name[16];
      std::snprintf(name, sizeof name, "%03zu", f);
      const fs::path img = fs::path(a.frames) / (std::string(name) + ".png");
      const fs::path cam = fs::path(a.frames) / (std::string(name) + ".cam");
      if (!fs::exists(img)) throw Error(ErrorCode::IoFailure, "frames: missing " + img.string());
      FrameSample s;
      s.t = seq.times[f];
      s.pose = poses[f];
      s.camera = fs::exists(cam) ? load_camera(cam) : cams.front();
      s.image = load_image(img);
      samples.push_back(std::move(s));
    }
    field.emplace(cfg.deform);
    std::ostringstream log;
    const auto report = train_deform(*field, scene.set, mesh, samples, cfg.raster,
                                     [&](const std::string& l) {
                                       log << l << "\n";
                                       std::cout << l << "\n";
                                     });
    write_file_atomic(out / "deform.bin", field->to_blob());
    write_file_atomic(out / "deform.log", log.str());
  } else if (!a.deform.empty()) {
    field = DeformField::from_blob(read_file(a.deform));
  }
  const auto frames = animate(scene.set, mesh, poses, seq.times, cams, field ? &*field : nullptr,
                              cfg.raster);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t c = 0; c < frames[f].size(); ++c) {
      char name[48];
      std::snprintf(name, sizeof name, "frame_%03zu_cam_%02zu.png", f, c);
      save_image(out / name, with_alpha(frames[f][c]));
    }
  }
  std::cout << "animated frames=" << frames.size() << " cameras=" << cams.size() << "\n";
  return 0;
}

// ---- edit ---------------------------------------------------------------------

struct EditArgs {
  std::string op, scene, mesh, target_mesh, out, color, views, config;
  int category = -1;
  int iters = 300;
};

int run_edit(const EditArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  print_config(cfg);
  const SkinnedMesh mesh = load_mesh(a.mesh);
  const SceneFile scene = load_scene(a.scene, mesh.content_hash());
  const fs::path out = a.out;
  if (a.op == "remove") {
    const GaussianSet edited = remove_group(scene.set, a.category);
    save_scene(out, edited, scene.mesh_hash);
    std::cout << "removed category=" << a.category << " count=" << scene.set.size() - edited.size()
              << "\n";
  } else if (a.op == "recolor") {
    RecolorTarget target;
    if (!a.color.empty()) target.color = parse_color(a.color);
    if (!a.views.empty()) target.views = load_views(a.views);
    if (!target.color && target.views.empty()) {
      throw Error(ErrorCode::InvalidArgument, "recolor needs --color or --views");
    }
    GaussianSet edited = scene.set;
    RecolorOptions opt;
    opt.iterations = a.iters;
    opt.raster = cfg.raster;
    const std::size_t n = recolor_group(edited, mesh, a.category, target, opt);
    save_scene(out, edited, scene.mesh_hash);
    std::cout << "recolored category=" << a.category << " count=" << n << "\n";
  } else if (a.op == "extract") {
    const ExtractedGroup g = extract_group(scene.set, mesh, a.category);
    save_scene(out, g.group, scene.mesh_hash);
    const fs::path mesh_out = out.parent_path() / (out.stem().string() + ".mesh.json");
    save_mesh(mesh_out, g.mesh);
    std::cout << "extracted category=" << a.category << " count=" << g.group.size()
              << " mesh=" << mesh_out.string() << "\n";
  } else if (a.op == "transfer") {
    const SkinnedMesh target = load_mesh(a.target_mesh);
    const GaussianSet moved = transfer_group(scene.set, mesh, target);
    save_scene(out, moved, target.content_hash());
    std::cout << "transferred count=" << moved.size() << "\n";
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown edit operation " + a.op);
  }
  return 0;
}

// ---- gradcheck / fixtures -------------------------------------------------------

int run_gradcheck(const std::string& loss, std::uint64_t seed, int coords) {
  std::cout << "config {\"loss\":\"" << loss << "\",\"seed\":" << seed << ",\"coords\":" << coords
            << "}\n";
  std::vector<LossId> ids;
  if (loss == "all") {
    ids = all_loss_ids();
  } else {
    ids.push_back(parse_loss_id(loss));
  }
  const GradCheckProblem problem = make_gradcheck_problem(seed);
  bool ok = true;
  for (LossId id : ids) {
    const GradCheckReport r = check_gradients(problem, id, coords, seed);
    std::cout << r.to_string() << " status=" << (r.passed() ? "pass" : "fail") << "\n";
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

int run_make_fixture(const std::string& kind, const std::string& out_dir) {
  const fs::path out = out_dir;
  fs::create_directories(out);
  std::cout << "config {\"kind\":\"" << kind << "\"}\n";
  if (kind == "avatar") {
    const AvatarFixture fx = make_avatar_fixture();
    save_mesh(out / "mesh.json", fx.mesh);
    save_views(out / "views", fx.views);
    save_views(out / "heldout", {fx.held_out});
    save_scene(out / "truth.ply", fx.truth, fx.mesh.content_hash());
    std::cout << "fixture avatar views=" << fx.views.size() << " truth=" << fx.truth.size() << "\n";
  } else if (kind == "oscillation") {
    const OscillationFixture fx = make_oscillation_fixture();
    save_mesh(out / "mesh.json", fx.mesh);
    save_scene(out / "scene.ply", fx.scene, fx.mesh.content_hash());
    PoseSequence seq;
    for (const FrameSample& f : fx.frames) {
      seq.local.emplace_back(fx.mesh.joint_count());
      seq.root.push_back(Rigid::identity());
      seq.times.push_back(f.t);
    }
    save_poses(out / "poses.json", seq, fx.mesh);
    for (std::size_t f = 0; f < fx.frames.size(); ++f) {
      char name[16];
      std::snprintf(name, sizeof name, "%03zu", f);
      save_image(out / "frames" / (std::string(name) + ".png"), fx.frames[f].image);
      save_camera(out / "frames" / (std::string(name) + ".cam"), fx.frames[f].camera);
    }
    save_camera(out / "camera.cam", fx.frames.front().camera);
    std::cout << "fixture oscillation frames=" << fx.frames.size() << "\n";
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown fixture kind " + kind);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strata: layered mesh-anchored Gaussian avatars"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "optimize the asset layer against views");
  fit_cmd->add_option("--mesh", fit_args.mesh, "skinned mesh (JSON)");
  fit_cmd->add_option("--views", fit_args.views, "directory of NNN.cam/NNN.png/NNN.mask.png");
  fit_cmd->add_option("--config", fit_args.config, "run configuration (JSON)");
  fit_cmd->add_option("--init-splats", fit_args.init_splats, "initial asset layer (splat file)");
  fit_cmd->add_option("--out", fit_args.out, "output directory");
  fit_cmd->add_option("--seed", fit_args.seed, "override config seed");
  fit_cmd->add_option("--iters", fit_args.iters, "override schedule.total_iters");

  RenderArgs render_args;
  auto* render_cmd = app.add_subcommand("render", "render a scene");
  render_cmd->add_option("--scene", render_args.scene)->required();
  render_cmd->add_option("--mesh", render_args.mesh)->required();
  render_cmd->add_option("--camera", render_args.camera)->required();
  render_cmd->add_option("--pose", render_args.pose, "pose file; first frame is used");
  render_cmd->add_option("--out", render_args.out)->required();
  render_cmd->add_option("--config", render_args.config);
  render_cmd->add_flag("--layers", render_args.layers, "per-category renders and label map");

  AnimateArgs anim_args;
  auto* anim_cmd = app.add_subcommand("animate", "render a pose sequence");
  anim_cmd->add_option("--scene", anim_args.scene)->required();
  anim_cmd->add_option("--mesh", anim_args.mesh)->required();
  anim_cmd->add_option("--poses", anim_args.poses)->required();
  anim_cmd->add_option("--cameras", anim_args.cameras, ".cam file or directory")->required();
  anim_cmd->add_option("--deform", anim_args.deform, "trained deformation field");
  anim_cmd->add_option("--out", anim_args.out)->required();
  anim_cmd->add_option("--config", anim_args.config);
  anim_cmd->add_flag("--train-deform", anim_args.train, "train a field on --frames first");
  anim_cmd->add_option("--frames", anim_args.frames, "reference frames NNN.png (+ NNN.cam)");

  EditArgs edit_args;
  auto* edit_cmd = app.add_subcommand("edit", "group-level edits");
  edit_cmd->add_option("op", edit_args.op, "remove | recolor | extract | transfer")
      ->required()
      ->check(CLI::IsMember({"remove", "recolor", "extract", "transfer"}));
  edit_cmd->add_option("--scene", edit_args.scene)->required();
  edit_cmd->add_option("--mesh", edit_args.mesh)->required();
  edit_cmd->add_option("--out", edit_args.out)->required();
  edit_cmd->add_option("--category", edit_args.category);
  edit_cmd->add_option("--color", edit_args.color, "r,g,b in [0,1]");
  edit_cmd->add_option("--views", edit_args.views, "target views for recolor");
  edit_cmd->add_option("--iters", edit_args.iters, "recolor iterations");
  edit_cmd->add_option("--target-mesh", edit_args.target_mesh, "mesh to transfer onto");
  edit_cmd->add_option("--config", edit_args.config);

  std::string gc_loss = "all";
  std::uint64_t gc_seed = 0;
  int gc_coords = 200;
  auto* gc_cmd = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  gc_cmd->add_option("--loss", gc_loss, "ori|l1|sumsq|id2d|id3d|ani|sdf|ref|all");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--coords", gc_coords);

  std::string fx_kind = "avatar", fx_out;
  auto* fx_cmd = app.add_subcommand("make-fixture", "write a synthetic dataset");
  fx_cmd->add_option("--kind", fx_kind, "avatar | oscillation");
  fx_cmd->add_option("--out", fx_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error code=InvalidArgument message=" << quote(e.what()) << "\n";
    return 1;
  }

  try {
    if (*fit_cmd) return run_fit(fit_args);
    if (*render_cmd) return run_render(render_args);
    if (*anim_cmd) return run_animate(anim_args);
    if (*edit_cmd) return run_edit(edit_args);
    if (*gc_cmd) return run_gradcheck(gc_loss, gc_seed, gc_coords);
    if (*fx_cmd) return run_make_fixture(fx_kind, fx_out);
  } catch (const Error& e) {
    std::cerr << "error code=" << to_string(e.code()) << " message=" << quote(e.what()) << "\n";
    return e.code() == ErrorCode::InvariantViolation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error code=InvariantViolation message=" << quote(e.what()) << "\n";
    return 2;
  }
  return 1;
}
