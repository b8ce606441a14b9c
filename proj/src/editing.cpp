#include "strata/editing.hpp"

#include <cmath>

#include "strata/error.hpp"
#include "strata/gradients.hpp"
#include "strata/losses.hpp"

namespace strata {

namespace {

void check_category(int category) {
  if (category < 1 || category >= kCategoryCount) {
    throw Error(ErrorCode::InvalidCategory, "category must be in 1..14");
  }
}

}  // namespace

std::vector<std::size_t> group_indices(const GaussianSet& set, int category) {
  check_category(category);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.layer[i] == Layer::Asset && category_of(set.identity[i]) == category) out.push_back(i);
  }
  return out;
}

GaussianSet remove_group(const GaussianSet& set, int category) {
  std::vector<bool> keep(set.size(), true);
  for (auto i : group_indices(set, category)) keep[i] = false;
  GaussianSet out = set;
  out.keep(keep);
  return out;
}

std::size_t recolor_group(GaussianSet& set, const SkinnedMesh& mesh, int category,
                          const RecolorTarget& target, const RecolorOptions& opt) {
  const auto group = group_indices(set, category);
  if (group.empty()) throw Error(ErrorCode::EmptyGroup, "recolor: no Gaussians in category");
  if (!target.color && target.views.empty() && opt.iterations > 0) {
    throw Error(ErrorCode::InvalidArgument, "recolor: need a color or target views");
  }
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());
  for (auto i : group) {
    auto sh = set.sh_of(i);
    std::fill(sh.begin(), sh.end(), 0.0f);
    for (int c = 0; c < 3; ++c) sh[c] = static_cast<float>(0.5 / kShC0);
  }
  std::vector<double> m(group.size() * stride, 0.0), v(m.size(), 0.0), g(m.size(), 0.0);
  const auto transports = face_transports(mesh, mesh.vertices);
  for (int it = 1; it <= opt.iterations; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    if (target.color) {
      // Squared error of the view-independent color plus decay of the rest.
      const double inv = 1.0 / static_cast<double>(group.size());
      for (std::size_t r = 0; r < group.size(); ++r) {
        const auto sh = set.sh_of(group[r]);
        for (int c = 0; c < 3; ++c) {
          g[r * stride + c] = 2.0 * (kShC0 * sh[c] - (*target.color)[c]) * kShC0 * inv;
        }
        for (std::size_t k = 3; k < stride; ++k) g[r * stride + k] = 2.0 * sh[k] * inv;
      }
    } else {
      const View& view = target.views[static_cast<std::size_t>(it - 1) % target.views.size()];
      const ForwardPass pass = render(set, transports, view.camera, opt.raster, true);
      RenderGradients up;
      loss_l1(pass.output.color, view.image, &up.color);
      const WorldGradients wg = backward_world(set, pass, view.camera, opt.raster, up);
      for (std::size_t r = 0; r < group.size(); ++r) {
        for (std::size_t k = 0; k < stride; ++k) g[r * stride + k] = wg.sh[group[r] * stride + k];
      }
    }
    const double c1 = 1.0 - std::pow(kAdamBeta1, it);
    const double c2 = 1.0 - std::pow(kAdamBeta2, it);
    for (std::size_t r = 0; r < group.size(); ++r) {
      auto sh = set.sh_of(group[r]);
      for (std::size_t k = 0; k < stride; ++k) {
        const std::size_t q = r * stride + k;
        m[q] = kAdamBeta1 * m[q] + (1.0 - kAdamBeta1) * g[q];
        v[q] = kAdamBeta2 * v[q] + (1.0 - kAdamBeta2) * g[q] * g[q];
        sh[k] = static_cast<float>(sh[k] - opt.lr * (m[q] / c1) / (std::sqrt(v[q] / c2) + kAdamEpsilon));
      }
    }
  }
  return group.size();
}

ExtractedGroup extract_group(const GaussianSet& set, const SkinnedMesh& mesh, int category) {
  ExtractedGroup out;
  out.source_indices = group_indices(set, category);
  if (out.source_indices.empty()) {
    throw Error(ErrorCode::EmptyGroup, "extract: no Gaussians in category");
  }
  out.group = set.select(out.source_indices);
  out.mesh = mesh;
  return out;
}

GaussianSet merge_group(const GaussianSet& remainder, const ExtractedGroup& extracted) {
  if (remainder.sh_degree != extracted.group.sh_degree ||
      extracted.source_indices.size() != extracted.group.size()) {
    throw Error(ErrorCode::ShapeMismatch, "merge: group does not fit the remainder");
  }
  const std::size_t total = remainder.size() + extracted.group.size();
  GaussianSet out(remainder.sh_degree);
  std::size_t next_group = 0, next_rest = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (next_group < extracted.source_indices.size() &&
        extracted.source_indices[next_group] == i) {
      out.push_back(extracted.group.get(next_group++));
    } else {
      if (next_rest >= remainder.size()) {
        throw Error(ErrorCode::ShapeMismatch, "merge: source indices out of range");
      }
      out.push_back(remainder.get(next_rest++));
    }
  }
  if (next_group != extracted.group.size()) {
    throw Error(ErrorCode::ShapeMismatch, "merge: source indices out of range");
  }
  return out;
}

GaussianSet transfer_group(const GaussianSet& set, const SkinnedMesh& source,
                           const SkinnedMesh& target) {
  if (source.faces != target.faces) {
    throw Error(ErrorCode::TopologyMismatch, "transfer: meshes do not share face topology");
  }
  GaussianSet out = set;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& f = source.faces.at(out.embedding[i].face_index);
    const FaceTransport t =
        face_transport(source.vertices[f[0]], source.vertices[f[1]], source.vertices[f[2]],
                       target.vertices[f[0]], target.vertices[f[1]], target.vertices[f[2]]);
    auto& e = out.embedding[i];
    e.sigma = static_cast<float>(t.ratios[0] * e.sigma);
    e.beta = static_cast<float>(t.ratios[1] * e.beta);
    e.gamma = static_cast<float>(t.ratios[2] * e.gamma);
    if (t.ratios != Vec3::Ones()) {
      for (int a = 0; a < 3; ++a) {
        out.log_scale[i][a] = static_cast<float>(out.log_scale[i][a] + std::log(t.ratios[a]));
      }
    }
    if (!(t.rotation == UnitQuaternion::identity())) {
      const UnitQuaternion q = hamilton(t.rotation, out.rotation_of(i));
      out.rotation[i] = {static_cast<float>(q.w), static_cast<float>(q.x),
                         static_cast<float>(q.y), static_cast<float>(q.z)};
    }
  }
  return out;
}

}  // namespace strata
