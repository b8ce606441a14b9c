#include "strata/deform.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "strata/error.hpp"
#include "strata/losses.hpp"

namespace strata {

namespace {

constexpr int kBlobVersion = 1;
constexpr const char* kBlobFormat = "strata_deform";

double sigmoid_d(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Right-multiplication matrix: hamilton(a, b) = right_matrix(b) * a.
Eigen::Matrix4d right_matrix(const Vec4& b) {
  Eigen::Matrix4d m;
  m << b[0], -b[1], -b[2], -b[3],
       b[1], b[0], b[3], -b[2],
       b[2], -b[3], b[0], b[1],
       b[3], b[2], -b[1], b[0];
  return m;
}

UnitQuaternion rotation_residual(const Vec4& delta) {
  const Vec4 q = Vec4(1.0, 0.0, 0.0, 0.0) + delta;
  const double n = q.norm();
  return {q[0] / n, q[1] / n, q[2] / n, q[3] / n};
}

}  // namespace

void DeformConfig::validate() const {
  if (width < 1) throw Error(ErrorCode::ConfigError, "deform.width must be >= 1");
  if (position_bands < 0 || time_bands < 0) {
    throw Error(ErrorCode::ConfigError, "deform band counts must be >= 0");
  }
  if (iterations < 0) throw Error(ErrorCode::ConfigError, "deform.iterations must be >= 0");
  if (!(lr > 0.0)) throw Error(ErrorCode::ConfigError, "deform.lr must be positive");
  if (!(w_ref >= 0.0) || !(w_aux >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "deform loss weights must be >= 0");
  }
}

DeformField::DeformField(const DeformConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::size_t total = 0;
  for (int l = 0; l < kLayerCount; ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(layer_outputs(l)) * (layer_inputs(l) + 1);
  }
  params_.assign(total, 0.0);
  std::mt19937_64 rng(cfg_.seed);
  for (int l = 0; l < kHidden; ++l) {
    const double bound = std::sqrt(6.0 / layer_inputs(l));
    std::uniform_real_distribution<double> uni(-bound, bound);
    auto w = weight(l);
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) w(r, c) = uni(rng);
    }
  }
}

int DeformField::layer_inputs(int layer) const {
  if (layer == 0) return input_dim();
  if (layer == kSkipLayer) return cfg_.width + input_dim();
  return cfg_.width;
}

int DeformField::layer_outputs(int layer) const {
  if (layer < kHidden) return cfg_.width;
  return layer == 5 ? 4 : 3;
}

Eigen::Map<DeformField::RowMatrix> DeformField::weight(int layer) {
  return {params_.data() + offsets_[layer], layer_outputs(layer), layer_inputs(layer)};
}
Eigen::Map<const DeformField::RowMatrix> DeformField::weight(int layer) const {
  return {params_.data() + offsets_[layer], layer_outputs(layer), layer_inputs(layer)};
}
Eigen::Map<Eigen::VectorXd> DeformField::bias(int layer) {
  return {params_.data() + offsets_[layer] +
              static_cast<std::size_t>(layer_outputs(layer)) * layer_inputs(layer),
          layer_outputs(layer)};
}
Eigen::Map<const Eigen::VectorXd> DeformField::bias(int layer) const {
  return {params_.data() + offsets_[layer] +
              static_cast<std::size_t>(layer_outputs(layer)) * layer_inputs(layer),
          layer_outputs(layer)};
}

void DeformField::encode(const Vec3& p, double t, double* out) const {
  int k = 0;
  for (int a = 0; a < 3; ++a) {
    out[k++] = p[a];
    for (int l = 0; l < cfg_.position_bands; ++l) {
      const double f = std::ldexp(std::numbers::pi, l) * p[a];
      out[k++] = std::sin(f);
      out[k++] = std::cos(f);
    }
  }
  out[k++] = t;
  for (int l = 0; l < cfg_.time_bands; ++l) {
    const double f = std::ldexp(std::numbers::pi, l) * t;
    out[k++] = std::sin(f);
    out[k++] = std::cos(f);
  }
}

DeformField::RowMatrix DeformField::forward(const RowMatrix& inputs, Cache* cache) const {
  if (inputs.cols() != input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "deform: input width does not match the encoding");
  }
  const auto n = inputs.rows();
  RowMatrix h = inputs;
  std::array<RowMatrix, kHidden> pre, act;
  for (int l = 0; l < kHidden; ++l) {
    RowMatrix in;
    if (l == kSkipLayer) {
      in.resize(n, layer_inputs(l));
      in << h, inputs;
    } else {
      in = std::move(h);
    }
    RowMatrix z = in * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    h = z.unaryExpr([](double v) { return v * sigmoid_d(v); });
    pre[l] = std::move(z);
    act[l] = h;
  }
  RowMatrix out(n, kOutputs);
  int col = 0;
  for (int l = kHidden; l < kLayerCount; ++l) {
    RowMatrix o = h * weight(l).transpose();
    o.rowwise() += bias(l).transpose();
    out.middleCols(col, o.cols()) = o;
    col += static_cast<int>(o.cols());
  }
  if (cache) {
    cache->input = inputs;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

void DeformField::backward(const Cache& cache, const RowMatrix& d_out, std::span<double> d_params,
                           RowMatrix* d_inputs) const {
  if (d_params.size() != params_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "deform: gradient buffer size");
  }
  const auto n = cache.input.rows();
  const auto grad_w = [&](int l) {
    return Eigen::Map<RowMatrix>(d_params.data() + offsets_[l], layer_outputs(l), layer_inputs(l));
  };
  const auto grad_b = [&](int l) {
    return Eigen::Map<Eigen::VectorXd>(
        d_params.data() + offsets_[l] + static_cast<std::size_t>(layer_outputs(l)) * layer_inputs(l),
        layer_outputs(l));
  };
  const RowMatrix& top = cache.act[kHidden - 1];
  RowMatrix dh = RowMatrix::Zero(n, cfg_.width);
  int col = 0;
  for (int l = kHidden; l < kLayerCount; ++l) {
    const int w = layer_outputs(l);
    const RowMatrix g = d_out.middleCols(col, w);
    grad_w(l) += g.transpose() * top;
    grad_b(l) += g.colwise().sum().transpose();
    dh += g * weight(l);
    col += w;
  }
  RowMatrix dx = RowMatrix::Zero(n, input_dim());
  for (int l = kHidden - 1; l >= 0; --l) {
    const RowMatrix& z = cache.pre[l];
    const RowMatrix dz = dh.cwiseProduct(z.unaryExpr([](double v) {
      const double s = sigmoid_d(v);
      return s * (1.0 + v * (1.0 - s));
    }));
    RowMatrix in;
    if (l == 0) {
      in = cache.input;
    } else if (l == kSkipLayer) {
      in.resize(n, layer_inputs(l));
      in << cache.act[l - 1], cache.input;
    } else {
      in = cache.act[l - 1];
    }
    grad_w(l) += dz.transpose() * in;
    grad_b(l) += dz.colwise().sum().transpose();
    const RowMatrix din = dz * weight(l);
    if (l == 0) {
      dx += din;
    } else if (l == kSkipLayer) {
      dh = din.leftCols(cfg_.width);
      dx += din.rightCols(input_dim());
    } else {
      dh = din;
    }
  }
  if (d_inputs) *d_inputs = std::move(dx);
}

DeformDelta DeformField::evaluate(const Vec3& p, double t) const {
  RowMatrix x(1, input_dim());
  encode(p, t, x.data());
  const RowMatrix o = forward(x);
  DeformDelta d;
  d.position = Vec3(o(0, 0), o(0, 1), o(0, 2));
  d.rotation = Vec4(o(0, 3), o(0, 4), o(0, 5), o(0, 6));
  d.log_scale = Vec3(o(0, 7), o(0, 8), o(0, 9));
  return d;
}

Vec3 DeformField::position_time_derivative(const Vec3& p, double t) const {
  RowMatrix x(1, input_dim());
  encode(p, t, x.data());
  Cache cache;
  forward(x, &cache);
  // d(encoding)/dt
  const int base = 3 * (1 + 2 * cfg_.position_bands);
  Eigen::VectorXd de = Eigen::VectorXd::Zero(input_dim());
  de[base] = 1.0;
  for (int l = 0; l < cfg_.time_bands; ++l) {
    const double w = std::ldexp(std::numbers::pi, l);
    de[base + 1 + 2 * l] = w * std::cos(w * t);
    de[base + 2 + 2 * l] = -w * std::sin(w * t);
  }
  std::vector<double> scratch(params_.size());
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    RowMatrix g = RowMatrix::Zero(1, kOutputs);
    g(0, a) = 1.0;
    RowMatrix dx;
    backward(cache, g, scratch, &dx);
    out[a] = dx.row(0).dot(de.transpose());
  }
  return out;
}

std::string DeformField::to_blob() const {
  nlohmann::json h = {{"format", kBlobFormat},
                      {"version", kBlobVersion},
                      {"width", cfg_.width},
                      {"hidden_layers", kHidden},
                      {"skip_layer", kSkipLayer},
                      {"position_bands", cfg_.position_bands},
                      {"time_bands", cfg_.time_bands},
                      {"iterations", cfg_.iterations},
                      {"lr", cfg_.lr},
                      {"w_ref", cfg_.w_ref},
                      {"w_aux", cfg_.w_aux},
                      {"seed", cfg_.seed},
                      {"parameter_count", params_.size()}};
  std::string out = h.dump() + "\n";
  const std::size_t header = out.size();
  out.resize(header + 8 * params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(params_[i]);
    for (int b = 0; b < 8; ++b) out[header + 8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

DeformField DeformField::from_blob(const std::string& blob) {
  const auto nl = blob.find('\n');
  if (nl == std::string::npos) throw Error(ErrorCode::MalformedHeader, "deform blob: no header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(blob.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("deform blob header: ") + e.what());
  }
  DeformConfig cfg;
  std::size_t count = 0;
  try {
    if (h.at("format").get<std::string>() != kBlobFormat) {
      throw Error(ErrorCode::MalformedHeader, "deform blob: wrong format tag");
    }
    if (h.at("version").get<int>() != kBlobVersion) {
      throw Error(ErrorCode::VersionMismatch, "deform blob: unsupported version");
    }
    if (h.at("hidden_layers").get<int>() != kHidden || h.at("skip_layer").get<int>() != kSkipLayer) {
      throw Error(ErrorCode::MalformedHeader, "deform blob: unsupported layer layout");
    }
    cfg.width = h.at("width").get<int>();
    cfg.position_bands = h.at("position_bands").get<int>();
    cfg.time_bands = h.at("time_bands").get<int>();
    cfg.iterations = h.at("iterations").get<int>();
    cfg.lr = h.at("lr").get<double>();
    cfg.w_ref = h.at("w_ref").get<double>();
    cfg.w_aux = h.at("w_aux").get<double>();
    cfg.seed = h.at("seed").get<std::uint64_t>();
    count = h.at("parameter_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("deform blob header: ") + e.what());
  }
  DeformField field(cfg);
  if (count != field.params_.size() || blob.size() != nl + 1 + 8 * count) {
    throw Error(ErrorCode::MalformedHeader, "deform blob: parameter block size mismatch");
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[nl + 1 + 8 * i + b]))
              << (8 * b);
    }
    field.params_[i] = std::bit_cast<double>(bits);
  }
  return field;
}

// ---- application ------------------------------------------------------------

namespace {

DeformField::RowMatrix encode_assets(const DeformField& field,
                                     std::span<const std::size_t> assets,
                                     std::span<const ReposedGaussian> world, double t) {
  DeformField::RowMatrix x(static_cast<Eigen::Index>(assets.size()), field.input_dim());
  for (std::size_t r = 0; r < assets.size(); ++r) {
    field.encode(world[assets[r]].position, t, x.row(static_cast<Eigen::Index>(r)).data());
  }
  return x;
}

void apply_outputs(std::span<const std::size_t> assets, const DeformField::RowMatrix& out,
                   std::vector<ReposedGaussian>& world) {
  for (std::size_t r = 0; r < assets.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    ReposedGaussian& g = world[assets[r]];
    for (int a = 0; a < 3; ++a) g.position[a] += out(row, a);
    const UnitQuaternion dq =
        rotation_residual(Vec4(out(row, 3), out(row, 4), out(row, 5), out(row, 6)));
    g.rotation = hamilton(dq, g.rotation);
    for (int a = 0; a < 3; ++a) g.scale[a] *= std::exp(out(row, 7 + a));
  }
}

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "deform: t outside [0, 1]");
}

}  // namespace

std::vector<ReposedGaussian> apply_deform(const DeformField& field, const GaussianSet& set,
                                          std::vector<ReposedGaussian> world, double t) {
  check_time(t);
  if (world.size() != set.size()) throw Error(ErrorCode::ShapeMismatch, "deform: world size");
  const auto assets = asset_indices(set);
  if (assets.empty()) return world;
  const auto out = field.forward(encode_assets(field, assets, world, t));
  apply_outputs(assets, out, world);
  return world;
}

namespace {

struct PreparedFrame {
  std::vector<ReposedGaussian> world;
  DeformField::RowMatrix inputs;
};

std::vector<PreparedFrame> prepare(const DeformField& field, const GaussianSet& set,
                                   const SkinnedMesh& mesh, std::span<const FrameSample> frames,
                                   std::span<const std::size_t> assets) {
  std::vector<PreparedFrame> out;
  for (const FrameSample& f : frames) {
    check_time(f.t);
    const auto transports = face_transports(mesh, pose_mesh(mesh, f.pose));
    PreparedFrame p;
    p.world = repose_all(set, transports);
    p.inputs = encode_assets(field, assets, p.world, f.t);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

double deform_reference_loss(const DeformField* field, const GaussianSet& set,
                             const SkinnedMesh& mesh, std::span<const FrameSample> frames,
                             const RasterConfig& raster) {
  if (frames.empty()) return 0.0;
  std::vector<Image> rendered, targets;
  for (const FrameSample& f : frames) {
    const auto transports = face_transports(mesh, pose_mesh(mesh, f.pose));
    auto world = repose_all(set, transports);
    if (field) world = apply_deform(*field, set, std::move(world), f.t);
    rendered.push_back(render_world(set, std::move(world), f.camera, raster, false).output.color);
    targets.push_back(f.image);
  }
  return loss_ref(rendered, targets);
}

DeformTrainReport train_deform(DeformField& field, const GaussianSet& set,
                               const SkinnedMesh& mesh, std::span<const FrameSample> frames,
                               const RasterConfig& raster,
                               const std::function<void(const std::string&)>& on_log) {
  const DeformConfig& cfg = field.config();
  if (frames.size() < 2) throw Error(ErrorCode::TooFewFrames, "deform training needs >= 2 frames");
  for (std::size_t f = 1; f < frames.size(); ++f) {
    if (!(frames[f].t > frames[f - 1].t)) {
      throw Error(ErrorCode::InvalidArgument, "frame times must be strictly increasing");
    }
  }
  DeformTrainReport report;
  const auto emit = [&](std::string line) {
    if (on_log) on_log(line);
    report.log.push_back(std::move(line));
  };
  report.initial_loss = deform_reference_loss(&field, set, mesh, frames, raster);

  const auto assets = asset_indices(set);
  const auto prepared = prepare(field, set, mesh, frames, assets);
  auto& params = field.parameters();
  std::vector<double> grad(params.size()), m(params.size(), 0.0), v(params.size(), 0.0);
  std::mt19937_64 rng(cfg.seed);
  const auto n = static_cast<Eigen::Index>(assets.size());

  for (int it = 1; it <= cfg.iterations && n > 0; ++it) {
    const std::size_t fi = static_cast<std::size_t>(rng() % frames.size());
    const FrameSample& frame = frames[fi];
    const PreparedFrame& prep = prepared[fi];
    DeformField::Cache cache;
    const auto out = field.forward(prep.inputs, &cache);
    std::vector<ReposedGaussian> world = prep.world;
    apply_outputs(assets, out, world);

    struct Target {
      const Camera* camera;
      const Image* image;
      double weight;
    };
    std::vector<Target> targets = {{&frame.camera, &frame.image, cfg.w_ref}};
    if (!frame.aux.empty() && cfg.w_aux > 0.0) {
      const View& aux = frame.aux[static_cast<std::size_t>(rng() % frame.aux.size())];
      targets.push_back({&aux.camera, &aux.image, cfg.w_aux});
    }

    DeformField::RowMatrix d_out = DeformField::RowMatrix::Zero(n, DeformField::kOutputs);
    double loss = 0.0;
    for (const Target& target : targets) {
      const ForwardPass pass = render_world(set, world, *target.camera, raster, true);
      std::vector<Image> g;
      const Image* rendered = &pass.output.color;
      const double l = loss_ref(std::span(rendered, 1), std::span(target.image, 1), &g);
      loss += target.weight * l;
      for (auto& x : g[0].data) x *= target.weight;
      RenderGradients up;
      up.color = std::move(g[0]);
      const WorldGradients wg = backward_world(set, pass, *target.camera, raster, up);
      for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t i = assets[static_cast<std::size_t>(r)];
        for (int a = 0; a < 3; ++a) d_out(r, a) += wg.position[i][a];
        const Vec4 delta(out(r, 3), out(r, 4), out(r, 5), out(r, 6));
        const Vec4 q0 = prep.world[i].rotation.as_vector();
        const Vec4 qf = world[i].rotation.as_vector();
        const Vec4 dqf = quaternion_matrix_backward(qf, wg.rotation[i]);
        const Vec4 dqn = right_matrix(q0).transpose() * dqf;
        const Vec4 dd = normalize_backward(Vec4(1.0, 0.0, 0.0, 0.0) + delta, dqn);
        for (int a = 0; a < 4; ++a) d_out(r, 3 + a) += dd[a];
        for (int a = 0; a < 3; ++a) d_out(r, 7 + a) += wg.scale[i][a] * world[i].scale[a];
      }
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    field.backward(cache, d_out, grad);
    const double c1 = 1.0 - std::pow(kAdamBeta1, it);
    const double c2 = 1.0 - std::pow(kAdamBeta2, it);
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * grad[k];
      v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * grad[k] * grad[k];
      params[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEpsilon);
    }
    std::ostringstream os;
    os.precision(6);
    os << "stage=deform iter=" << it << " frame=" << fi << " t=" << frame.t << " loss=" << loss;
    emit(os.str());
  }
  report.final_loss = deform_reference_loss(&field, set, mesh, frames, raster);
  std::ostringstream os;
  os.precision(6);
  os << "stage=deform_done initial_loss=" << report.initial_loss
     << " final_loss=" << report.final_loss;
  emit(os.str());
  return report;
}

std::vector<std::vector<RenderOutput>> animate(const GaussianSet& set, const SkinnedMesh& mesh,
                                               std::span<const Pose> poses,
                                               std::span<const double> times,
                                               std::span<const Camera> cameras,
                                               const DeformField* field,
                                               const RasterConfig& raster) {
  if (field && times.size() != poses.size()) {
    throw Error(ErrorCode::ShapeMismatch, "animate: one time per pose required");
  }
  std::vector<std::vector<RenderOutput>> out;
  for (std::size_t f = 0; f < poses.size(); ++f) {
    poses[f].validate(mesh.joint_count());
    const auto transports = face_transports(mesh, pose_mesh(mesh, poses[f]));
    auto world = repose_all(set, transports);
    if (field) world = apply_deform(*field, set, std::move(world), times[f]);
    std::vector<RenderOutput> row;
    for (const Camera& cam : cameras) {
      row.push_back(render_world(set, world, cam, raster, false).output);
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace strata
