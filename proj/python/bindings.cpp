#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "strata/editing.hpp"
#include "strata/error.hpp"
#include "strata/fixture.hpp"
#include "strata/gradcheck.hpp"
#include "strata/io.hpp"
#include "strata/lifecycle.hpp"

namespace py = pybind11;
using namespace strata;

namespace {

py::array_t<double> image_array(const Image& img) {
  py::array_t<double> out({img.height, img.width, img.channels});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

Image array_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw Error(ErrorCode::DimensionMismatch, "expected an H x W x C array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::array_t<std::uint8_t> mask_array(const MaskImage& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

template <typename T, std::size_t N>
py::array_t<float> rows_array(const std::vector<std::array<T, N>>& rows) {
  py::array_t<float> out({rows.size(), N});
  float* p = out.mutable_data();
  for (const auto& r : rows) p = std::copy(r.begin(), r.end(), p);
  return out;
}

py::dict render_dict(const RenderOutput& r) {
  py::dict d;
  d["color"] = image_array(r.color);
  d["alpha"] = image_array(r.alpha);
  d["identity"] = image_array(r.identity);
  d["depth"] = image_array(r.depth);
  d["labels"] = mask_array(label_map(r.identity));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "strata core bindings";

  static PyObject* error = py::exception<Error>(m, "StrataError").release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.code())) + ": " + e.what();
      PyErr_SetString(error, msg.c_str());
    }
  });

  m.attr("CATEGORY_NAMES") = [] {
    std::vector<std::string> names;
    for (auto n : kCategoryNames) names.emplace_back(n);
    return names;
  }();

  py::class_<Camera>(m, "Camera")
      .def_static("look_at",
                  [](std::array<double, 3> eye, std::array<double, 3> target, double focal,
                     int width, int height) {
                    return Camera::look_at(Vec3(eye[0], eye[1], eye[2]),
                                           Vec3(target[0], target[1], target[2]), Vec3::UnitZ(),
                                           focal, width, height);
                  },
                  py::arg("eye"), py::arg("target"), py::arg("focal"), py::arg("width"),
                  py::arg("height"))
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def_readwrite("fx", &Camera::fx)
      .def_readwrite("fy", &Camera::fy)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy);

  py::class_<SkinnedMesh>(m, "SkinnedMesh")
      .def_property_readonly("vertices", [](const SkinnedMesh& mesh) {
        py::array_t<double> out({mesh.vertex_count(), std::size_t{3}});
        double* p = out.mutable_data();
        for (const Vec3& v : mesh.vertices) p = std::copy(v.data(), v.data() + 3, p);
        return out;
      })
      .def_property_readonly("faces", [](const SkinnedMesh& mesh) {
        py::array_t<std::uint32_t> out({mesh.face_count(), std::size_t{3}});
        std::uint32_t* p = out.mutable_data();
        for (const auto& f : mesh.faces) p = std::copy(f.begin(), f.end(), p);
        return out;
      })
      .def_property_readonly("joint_names", [](const SkinnedMesh& mesh) {
        std::vector<std::string> names;
        for (const Joint& j : mesh.joints) names.push_back(j.name);
        return names;
      })
      .def("content_hash", &SkinnedMesh::content_hash);

  py::class_<GaussianSet>(m, "GaussianSet")
      .def(py::init<int>(), py::arg("sh_degree") = 0)
      .def("__len__", &GaussianSet::size)
      .def_readonly("sh_degree", &GaussianSet::sh_degree)
      .def_property_readonly("face_index", [](const GaussianSet& s) {
        std::vector<std::uint32_t> out;
        for (const auto& e : s.embedding) out.push_back(e.face_index);
        return out;
      })
      .def_property_readonly("offsets", [](const GaussianSet& s) {
        std::vector<std::array<float, 3>> rows;
        for (const auto& e : s.embedding) rows.push_back({e.sigma, e.beta, e.gamma});
        return rows_array(rows);
      })
      .def_property_readonly("rotation", [](const GaussianSet& s) { return rows_array(s.rotation); })
      .def_property_readonly("log_scale", [](const GaussianSet& s) { return rows_array(s.log_scale); })
      .def_property_readonly("identity", [](const GaussianSet& s) { return rows_array(s.identity); })
      .def_property_readonly("opacity_logit", [](const GaussianSet& s) { return s.opacity_logit; })
      .def_property_readonly("layer", [](const GaussianSet& s) {
        std::vector<int> out;
        for (Layer l : s.layer) out.push_back(static_cast<int>(l));
        return out;
      })
      .def_property_readonly("categories", [](const GaussianSet& s) {
        std::vector<int> out;
        for (const auto& id : s.identity) out.push_back(category_of(id));
        return out;
      })
      .def("count_body", [](const GaussianSet& s) { return s.count(Layer::Body); })
      .def("count_assets", [](const GaussianSet& s) { return s.count(Layer::Asset); })
      .def("bitwise_equal", [](const GaussianSet& a, const GaussianSet& b) { return bitwise_equal(a, b); });

  m.def("make_cylinder",
        [](double radius, double height, int segments, int rings) {
          CylinderSpec spec;
          spec.radius = radius;
          spec.height = height;
          spec.segments = segments;
          spec.rings = rings;
          spec.joint_z = height / 2.0;
          return make_cylinder(spec);
        },
        py::arg("radius") = 0.25, py::arg("height") = 1.6, py::arg("segments") = 32,
        py::arg("rings") = 24);
  m.def("load_mesh", [](const std::string& path) { return load_mesh(path); });
  m.def("save_mesh", [](const std::string& path, const SkinnedMesh& mesh) { save_mesh(path, mesh); });
  m.def("load_scene", [](const std::string& path, const SkinnedMesh* mesh) {
          std::optional<std::uint64_t> hash;
          if (mesh) hash = mesh->content_hash();
          return load_scene(path, hash).set;
        },
        py::arg("path"), py::arg("mesh") = nullptr);
  m.def("save_scene", [](const std::string& path, const GaussianSet& set, const SkinnedMesh& mesh) {
    save_scene(path, set, mesh.content_hash());
  });
  m.def("load_camera", [](const std::string& path) { return load_camera(path); });
  m.def("load_image", [](const std::string& path) { return image_array(load_image(path)); });
  m.def("save_image", [](const std::string& path,
                         const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    save_image(path, array_image(a));
  });
  m.def("load_mask", [](const std::string& path) { return mask_array(load_mask(path)); });

  m.def("build_body_gaussians",
        [](const SkinnedMesh& mesh, int per_face, std::array<double, 3> color) {
          return build_body_gaussians(mesh, per_face, 0, Vec3(color[0], color[1], color[2]));
        },
        py::arg("mesh"), py::arg("per_face") = 1, py::arg("color") = std::array<double, 3>{0.5, 0.5, 0.5});

  m.def("render",
        [](const GaussianSet& set, const SkinnedMesh& mesh, const Camera& cam,
           std::array<double, 3> background) {
          RasterConfig cfg;
          cfg.background = Vec3(background[0], background[1], background[2]);
          const auto transports = face_transports(mesh, mesh.vertices);
          return render_dict(render(set, transports, cam, cfg, false).output);
        },
        py::arg("set"), py::arg("mesh"), py::arg("camera"),
        py::arg("background") = std::array<double, 3>{0.0, 0.0, 0.0});

  m.def("psnr", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                   const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
    return psnr(array_image(a), array_image(b));
  });

  m.def("remove_group", &remove_group);
  m.def("recolor_group",
        [](GaussianSet set, const SkinnedMesh& mesh, int category, std::array<double, 3> color,
           int iterations) {
          RecolorTarget target;
          target.color = Vec3(color[0], color[1], color[2]);
          RecolorOptions opt;
          opt.iterations = iterations;
          recolor_group(set, mesh, category, target, opt);
          return set;
        },
        py::arg("set"), py::arg("mesh"), py::arg("category"), py::arg("color"),
        py::arg("iterations") = 300);
  m.def("transfer_group", &transfer_group);

  m.def("avatar_fixture", [] {
    AvatarFixture fx = make_avatar_fixture();
    py::dict d;
    d["mesh"] = fx.mesh;
    d["truth"] = fx.truth;
    py::list views;
    for (const View& v : fx.views) {
      py::dict vd;
      vd["name"] = v.name;
      vd["camera"] = v.camera;
      vd["image"] = image_array(v.image);
      vd["mask"] = mask_array(v.mask);
      views.append(vd);
    }
    d["views"] = views;
    return d;
  });

  m.def("gradcheck",
        [](const std::string& loss, std::uint64_t seed, int coords) {
          const GradCheckProblem problem = make_gradcheck_problem(seed);
          const GradCheckReport r = check_gradients(problem, parse_loss_id(loss), coords, seed);
          py::dict d;
          d["loss"] = std::string(to_string(r.loss));
          d["checked"] = r.checked;
          d["resampled"] = r.resampled;
          d["max_rel_err"] = r.max_rel_err;
          d["passed"] = r.passed();
          return d;
        },
        py::arg("loss"), py::arg("seed") = 0, py::arg("coords") = 50);
}
