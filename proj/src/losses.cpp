#include "strata/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "strata/error.hpp"
#include "strata/knn.hpp"

namespace strata {

void LossWeights::validate() const {
  const auto fail = [](const char* msg) { throw Error(ErrorCode::ConfigError, msg); };
  for (double w : {w_ori, w_id2d, w_id3d, w_ani, w_sdf, w_ref}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("loss weights must be finite and non-negative");
  }
  if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) fail("lambda_ssim must be in [0, 1]");
  if (!(tau >= 1.0)) fail("tau must be >= 1");
  if (knn_k < 1) fail("knn_k must be >= 1");
  if (knn_m < 1) fail("knn_m must be >= 1");
  if (!std::isfinite(sdf_margin)) fail("sdf_margin must be finite");
}

std::vector<std::size_t> asset_indices(const GaussianSet& set) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] == Layer::Asset) out.push_back(i);
  }
  return out;
}

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": image dimensions differ");
  }
}

Image zeros_like(const Image& img) { return Image(img.width, img.height, img.channels); }

// ---- SSIM -------------------------------------------------------------------

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kRadius;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

/// Separable "same" convolution of one channel plane with zero padding.
std::vector<double> blur(const std::vector<double>& in, int w, int h) {
  static const auto kW = gaussian_window();
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) s += kW[k + kRadius] * in[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) s += kW[k + kRadius] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

}  // namespace

double loss_l1(const Image& rendered, const Image& target, Image* grad) {
  require_same_shape(rendered, target, "l1");
  const double n = static_cast<double>(rendered.data.size());
  if (grad) *grad = zeros_like(rendered);
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    sum += std::abs(d);
    if (grad) grad->data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
  }
  return sum / n;
}

double ssim(const Image& a, const Image& b, Image* grad_a) {
  require_same_shape(a, b, "ssim");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int w = a.width, h = a.height;
  const std::size_t np = a.pixel_count();
  const double n = static_cast<double>(a.data.size());
  if (grad_a) *grad_a = zeros_like(a);
  double total = 0.0;
  std::vector<double> x(np), y(np), xx(np), yy(np), xy(np);
  for (int c = 0; c < a.channels; ++c) {
    for (std::size_t p = 0; p < np; ++p) {
      x[p] = a.data[p * a.channels + c];
      y[p] = b.data[p * b.channels + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = blur(x, w, h), my = blur(y, w, h);
    const auto exx = blur(xx, w, h), eyy = blur(yy, w, h), exy = blur(xy, w, h);
    std::vector<double> d_mx(np), d_exx(np), d_exy(np);
    for (std::size_t p = 0; p < np; ++p) {
      const double a1 = 2.0 * mx[p] * my[p] + c1;
      const double a2 = 2.0 * (exy[p] - mx[p] * my[p]) + c2;
      const double b1 = mx[p] * mx[p] + my[p] * my[p] + c1;
      const double b2 = (exx[p] - mx[p] * mx[p]) + (eyy[p] - my[p] * my[p]) + c2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (!grad_a) continue;
      d_mx[p] = (2.0 * my[p] * a2 - 2.0 * my[p] * a1) / (b1 * b2) -
                s * (2.0 * mx[p] / b1 - 2.0 * mx[p] / b2);
      d_exx[p] = -s / b2;
      d_exy[p] = 2.0 * a1 / (b1 * b2);
    }
    if (!grad_a) continue;
    // The window is symmetric, so the adjoint of the blur is the blur.
    const auto g_mx = blur(d_mx, w, h), g_exx = blur(d_exx, w, h), g_exy = blur(d_exy, w, h);
    for (std::size_t p = 0; p < np; ++p) {
      grad_a->data[p * a.channels + c] = (g_mx[p] + 2.0 * x[p] * g_exx[p] + y[p] * g_exy[p]) / n;
    }
  }
  return total / n;
}

double loss_ori(const Image& rendered, const Image& target, double lambda, Image* grad) {
  require_same_shape(rendered, target, "loss_ori");
  Image g1, g2;
  const double l1 = loss_l1(rendered, target, grad ? &g1 : nullptr);
  double s = 1.0;
  if (lambda != 0.0) s = ssim(rendered, target, grad ? &g2 : nullptr);
  if (grad) {
    *grad = zeros_like(rendered);
    for (std::size_t i = 0; i < grad->data.size(); ++i) {
      grad->data[i] = (1.0 - lambda) * g1.data[i] - (lambda != 0.0 ? lambda * g2.data[i] : 0.0);
    }
  }
  return (1.0 - lambda) * l1 + lambda * (1.0 - s);
}

double loss_id2d(const Image& identity, const MaskImage& mask, Image* grad) {
  if (identity.channels != kIdentityDim || identity.width != mask.width ||
      identity.height != mask.height) {
    throw Error(ErrorCode::DimensionMismatch, "loss_id2d: feature and mask dimensions differ");
  }
  const std::size_t np = identity.pixel_count();
  const double n = static_cast<double>(np);
  if (grad) *grad = zeros_like(identity);
  double total = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    const int label = mask.labels[p];
    if (label >= kIdentityDim) throw Error(ErrorCode::LabelOutOfRange, "mask label above 14");
    const double* z = identity.data.data() + p * kIdentityDim;
    const double zmax = *std::max_element(z, z + kIdentityDim);
    double sum = 0.0;
    for (int c = 0; c < kIdentityDim; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    total += lse - z[label];
    if (!grad) continue;
    for (int c = 0; c < kIdentityDim; ++c) {
      const double prob = std::exp(z[c] - lse);
      grad->data[p * kIdentityDim + c] = (prob - (c == label ? 1.0 : 0.0)) / n;
    }
  }
  return total / n;
}

namespace {

std::array<double, kIdentityDim> log_softmax(const IdentityVector& z) {
  double zmax = z[0];
  for (float v : z) zmax = std::max(zmax, double{v});
  double sum = 0.0;
  for (float v : z) sum += std::exp(double{v} - zmax);
  const double lse = zmax + std::log(sum);
  std::array<double, kIdentityDim> out{};
  for (int c = 0; c < kIdentityDim; ++c) out[c] = double{z[c]} - lse;
  return out;
}

}  // namespace

double loss_id3d(const GaussianSet& set, std::span<const Vec3> positions, int k, int m,
                 std::uint64_t seed, std::vector<double>* d_identity) {
  if (positions.size() != set.size()) {
    throw Error(ErrorCode::ShapeMismatch, "loss_id3d: one position per Gaussian required");
  }
  if (k < 1 || m < 1) throw Error(ErrorCode::InvalidArgument, "loss_id3d: k and m must be >= 1");
  const auto assets = asset_indices(set);
  if (assets.size() < static_cast<std::size_t>(k) + 1) {
    throw Error(ErrorCode::TooFewGaussians, "loss_id3d: need at least k + 1 asset Gaussians");
  }
  if (d_identity && d_identity->size() != set.size() * kIdentityDim) {
    d_identity->assign(set.size() * kIdentityDim, 0.0);
  }
  std::vector<Vec3> pts;
  pts.reserve(assets.size());
  for (auto i : assets) pts.push_back(positions[i]);
  const GridIndex index(pts);

  // Partial Fisher-Yates: the first m entries are the sample.
  std::vector<std::uint32_t> order(assets.size());
  std::iota(order.begin(), order.end(), 0u);
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(m), assets.size());
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < count; ++s) {
    std::uniform_int_distribution<std::size_t> pick(s, order.size() - 1);
    std::swap(order[s], order[pick(rng)]);
  }

  const double norm = 1.0 / (static_cast<double>(count) * k);
  double total = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const std::uint32_t local = order[s];
    const std::size_t j = assets[local];
    const auto log_p = log_softmax(set.identity[j]);
    const auto neighbours = index.nearest(pts[local], k, local);
    for (auto nb : neighbours) {
      const std::size_t i = assets[nb];
      const auto log_q = log_softmax(set.identity[i]);
      double kl = 0.0;
      for (int c = 0; c < kIdentityDim; ++c) kl += std::exp(log_p[c]) * (log_p[c] - log_q[c]);
      total += kl;
      if (!d_identity) continue;
      for (int c = 0; c < kIdentityDim; ++c) {
        const double p = std::exp(log_p[c]);
        const double q = std::exp(log_q[c]);
        (*d_identity)[j * kIdentityDim + c] += norm * p * (log_p[c] - log_q[c] - kl);
        (*d_identity)[i * kIdentityDim + c] += norm * (q - p);
      }
    }
  }
  return total * norm;
}

double loss_ani(const GaussianSet& set, double tau, ParamGradients* grads) {
  const auto assets = asset_indices(set);
  if (assets.empty()) return 0.0;
  const double n = static_cast<double>(assets.size());
  double total = 0.0;
  for (auto i : assets) {
    const auto& ls = set.log_scale[i];
    int hi = 0, lo = 0;
    for (int a = 1; a < 3; ++a) {
      if (ls[a] > ls[hi]) hi = a;
      if (ls[a] < ls[lo]) lo = a;
    }
    const double ratio = std::exp(double{ls[hi]}) / std::exp(double{ls[lo]});
    if (!(ratio > tau)) continue;
    total += ratio - tau;
    if (grads && !set.frozen[i]) {
      grads->log_scale[3 * i + hi] += ratio / n;
      grads->log_scale[3 * i + lo] -= ratio / n;
    }
  }
  return total / n;
}

double loss_sdf(const GaussianSet& set, std::span<const FaceTransport> transports,
                const MeshSdf& sdf, double margin, ParamGradients* grads) {
  const auto assets = asset_indices(set);
  if (assets.empty()) return 0.0;
  const double n = static_cast<double>(assets.size());
  double total = 0.0;
  for (auto i : assets) {
    const FaceTransport& t = transports[set.embedding[i].face_index];
    const Vec3 p = repose(set, i, t).position;
    const SdfSample s = sdf.sample(p);
    const double h = margin - s.distance;
    if (!(h > 0.0)) continue;
    total += h * h;
    if (grads && !set.frozen[i]) {
      const Vec3 d_off = offset_gradient(t, (-2.0 * h / n) * s.gradient);
      for (int a = 0; a < 3; ++a) grads->offsets[3 * i + a] += d_off[a];
    }
  }
  return total / n;
}

double loss_ref(std::span<const Image> rendered, std::span<const Image> frames,
                std::vector<Image>* grads) {
  if (rendered.size() != frames.size() || rendered.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "loss_ref: frame counts differ or are zero");
  }
  const double t_count = static_cast<double>(rendered.size());
  if (grads) grads->clear();
  double total = 0.0;
  for (std::size_t t = 0; t < rendered.size(); ++t) {
    require_same_shape(rendered[t], frames[t], "loss_ref");
    const double n = static_cast<double>(rendered[t].data.size());
    Image g = grads ? zeros_like(rendered[t]) : Image();
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered[t].data.size(); ++i) {
      const double d = rendered[t].data[i] - frames[t].data[i];
      sum += d * d;
      if (grads) g.data[i] = 2.0 * d / (n * t_count);
    }
    total += sum / n;
    if (grads) grads->push_back(std::move(g));
  }
  return total / t_count;
}

}  // namespace strata
