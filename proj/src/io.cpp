#include "strata/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <png.h>
#include <unistd.h>

#include "json.hpp"
#include "strata/error.hpp"

namespace strata {

using nlohmann::json;

// ---- files --------------------------------------------------------------------

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoFailure, "cannot replace " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- splat scenes -------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> splat_properties(int sh_degree) {
  std::vector<std::pair<std::string, std::string>> p = {{"uint", "face_index"}};
  for (const char* n : {"sigma", "beta", "gamma", "rot_w", "rot_x", "rot_y", "rot_z",
                        "log_scale_0", "log_scale_1", "log_scale_2", "opacity_logit"}) {
    p.emplace_back("float", n);
  }
  for (int k = 0; k < sh_coeff_count(sh_degree); ++k) p.emplace_back("float", "sh_" + std::to_string(k));
  for (int k = 0; k < kIdentityDim; ++k) p.emplace_back("float", "identity_" + std::to_string(k));
  p.emplace_back("uchar", "layer");
  p.emplace_back("uchar", "frozen");
  return p;
}

std::size_t record_size(int sh_degree) {
  return 4 + 4 * (11 + static_cast<std::size_t>(sh_coeff_count(sh_degree)) + kIdentityDim) + 2;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return v;
}
float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string encode_scene(const GaussianSet& set, std::uint64_t mesh_hash) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\n"
    << "comment strata_splat_version " << kSplatFormatVersion << "\n"
    << "comment sh_degree " << set.sh_degree << "\n"
    << "comment mesh_hash " << hex64(mesh_hash) << "\n"
    << "element vertex " << set.size() << "\n";
  for (const auto& [type, name] : splat_properties(set.sh_degree)) {
    h << "property " << type << " " << name << "\n";
  }
  h << "end_header\n";
  std::string out = h.str();
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());
  out.reserve(out.size() + set.size() * record_size(set.sh_degree));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set.embedding[i];
    put_u32(out, e.face_index);
    put_f32(out, e.sigma);
    put_f32(out, e.beta);
    put_f32(out, e.gamma);
    for (float q : set.rotation[i]) put_f32(out, q);
    for (float s : set.log_scale[i]) put_f32(out, s);
    put_f32(out, set.opacity_logit[i]);
    for (std::size_t k = 0; k < stride; ++k) put_f32(out, set.sh[i * stride + k]);
    for (float c : set.identity[i]) put_f32(out, c);
    out.push_back(static_cast<char>(set.layer[i]));
    out.push_back(static_cast<char>(set.frozen[i]));
  }
  return out;
}

SceneFile decode_scene(const std::string& bytes, std::optional<std::uint64_t> expected_hash) {
  const auto malformed = [](const std::string& msg) {
    return Error(ErrorCode::MalformedHeader, "splat file: " + msg);
  };
  const std::string end_marker = "end_header\n";
  const auto end = bytes.find(end_marker);
  if (bytes.rfind("ply\n", 0) != 0 || end == std::string::npos) {
    throw malformed("missing ply header");
  }
  std::istringstream header(bytes.substr(0, end));
  std::string line;
  std::getline(header, line);
  int version = -1, degree = -1;
  std::optional<std::uint64_t> hash;
  std::optional<std::size_t> count;
  bool format_ok = false;
  std::vector<std::pair<std::string, std::string>> props;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      format_ok = fmt == "binary_little_endian" && ver == "1.0";
    } else if (word == "comment") {
      std::string key, value;
      ls >> key >> value;
      try {
        if (key == "strata_splat_version") version = std::stoi(value);
        else if (key == "sh_degree") degree = std::stoi(value);
        else if (key == "mesh_hash") hash = std::stoull(value, nullptr, 16);
      } catch (const std::exception&) {
        throw malformed("bad comment value for " + key);
      }
    } else if (word == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      if (name != "vertex" || n < 0 || count) throw malformed("unexpected element line");
      count = static_cast<std::size_t>(n);
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.emplace_back(type, name);
    } else {
      throw malformed("unknown header line '" + line + "'");
    }
  }
  if (!format_ok) throw malformed("format must be binary_little_endian 1.0");
  if (version < 0) throw malformed("missing format version");
  if (version != kSplatFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "splat file version " + std::to_string(version) + " is not supported");
  }
  if (degree < 0 || degree > kMaxShDegree) throw malformed("missing or invalid sh_degree");
  if (!hash) throw malformed("missing mesh_hash");
  if (!count) throw malformed("missing vertex element");
  if (props != splat_properties(degree)) throw malformed("property list does not match schema");
  const std::size_t rec = record_size(degree);
  const std::size_t body = end + end_marker.size();
  if (bytes.size() - body != *count * rec) throw malformed("payload size does not match count");
  if (expected_hash && *expected_hash != *hash) {
    throw Error(ErrorCode::MeshHashMismatch, "splat file was made for mesh " + hex64(*hash) +
                                                 ", not " + hex64(*expected_hash));
  }
  SceneFile out{GaussianSet(degree), *hash};
  GaussianSet& set = out.set;
  const std::size_t stride = static_cast<std::size_t>(set.sh_stride());
  set.embedding.resize(*count);
  set.rotation.resize(*count);
  set.log_scale.resize(*count);
  set.opacity_logit.resize(*count);
  set.sh.resize(*count * stride);
  set.identity.resize(*count);
  set.layer.resize(*count);
  set.frozen.resize(*count);
  for (std::size_t i = 0; i < *count; ++i) {
    const char* p = bytes.data() + body + i * rec;
    set.embedding[i] = {get_u32(p), get_f32(p + 4), get_f32(p + 8), get_f32(p + 12)};
    p += 16;
    for (auto& q : set.rotation[i]) { q = get_f32(p); p += 4; }
    for (auto& s : set.log_scale[i]) { s = get_f32(p); p += 4; }
    set.opacity_logit[i] = get_f32(p);
    p += 4;
    for (std::size_t k = 0; k < stride; ++k) { set.sh[i * stride + k] = get_f32(p); p += 4; }
    for (auto& c : set.identity[i]) { c = get_f32(p); p += 4; }
    const auto layer = static_cast<std::uint8_t>(p[0]);
    const auto frozen = static_cast<std::uint8_t>(p[1]);
    if (layer > 1 || frozen > 1) throw malformed("layer/frozen flag out of range");
    set.layer[i] = static_cast<Layer>(layer);
    set.frozen[i] = frozen;
  }
  return out;
}

void save_scene(const fs::path& path, const GaussianSet& set, std::uint64_t mesh_hash) {
  write_file_atomic(path, encode_scene(set, mesh_hash));
}

SceneFile load_scene(const fs::path& path, std::optional<std::uint64_t> expected_hash) {
  return decode_scene(read_file(path), expected_hash);
}

// ---- JSON helpers ---------------------------------------------------------------

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string(what) + ": " + e.what());
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* what) {
  if (!obj.is_object()) throw Error(ErrorCode::MalformedHeader, std::string(what) + ": expected object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      throw Error(ErrorCode::MalformedHeader, std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

void check_header(const json& doc, const char* format, int version, const char* what) {
  if (!doc.contains("format") || doc["format"] != format) {
    throw Error(ErrorCode::MalformedHeader, std::string(what) + ": format must be " + format);
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw Error(ErrorCode::MalformedHeader, std::string(what) + ": missing version");
  }
  if (doc["version"].get<int>() != version) {
    throw Error(ErrorCode::VersionMismatch, std::string(what) + ": unsupported version");
  }
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string(what) + ": " + e.what());
  }
}

Vec3 vec3(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorCode::MalformedHeader, "expected 3 numbers");
  return {v[0], v[1], v[2]};
}

json rigid_json(const Rigid& r) {
  const UnitQuaternion q = UnitQuaternion::from_matrix(r.rotation);
  return {{"rotation", {q.w, q.x, q.y, q.z}},
          {"translation", {r.translation.x(), r.translation.y(), r.translation.z()}}};
}

Rigid rigid_from(const json& j, const char* what) {
  check_keys(j, {"rotation", "translation"}, what);
  Rigid r;
  if (j.contains("rotation")) {
    const auto q = j["rotation"].get<std::vector<double>>();
    if (q.size() != 4) throw Error(ErrorCode::MalformedHeader, std::string(what) + ": rotation needs 4 numbers");
    if (!(q[0] == 1.0 && q[1] == 0.0 && q[2] == 0.0 && q[3] == 0.0)) {
      r.rotation = UnitQuaternion::normalized(q[0], q[1], q[2], q[3]).to_matrix();
    }
  }
  if (j.contains("translation")) r.translation = vec3(j["translation"]);
  return r;
}

}  // namespace

// ---- meshes ---------------------------------------------------------------------

std::string encode_mesh(const SkinnedMesh& mesh) {
  json doc = {{"format", "strata_mesh"}, {"version", kMeshFormatVersion}};
  json verts = json::array(), faces = json::array(), joints = json::array(), weights = json::array();
  for (const Vec3& v : mesh.vertices) verts.push_back({v.x(), v.y(), v.z()});
  for (const auto& f : mesh.faces) faces.push_back({f[0], f[1], f[2]});
  for (const Joint& j : mesh.joints) {
    json e = rigid_json(j.bind);
    e["name"] = j.name;
    e["parent"] = j.parent < 0 ? json(nullptr) : json(mesh.joints[j.parent].name);
    joints.push_back(e);
  }
  for (std::size_t v = 0; v < mesh.vertex_count() && mesh.joint_count() > 0; ++v) {
    json row = json::array();
    for (std::size_t j = 0; j < mesh.joint_count(); ++j) {
      if (mesh.weight(v, j) != 0.0) row.push_back({j, mesh.weight(v, j)});
    }
    weights.push_back(row);
  }
  doc["vertices"] = verts;
  doc["faces"] = faces;
  doc["joints"] = joints;
  doc["skin_weights"] = weights;
  json regions = json::object();
  for (const auto& [name, ids] : mesh.face_regions) regions[name] = ids;
  doc["regions"] = regions;
  return doc.dump() + "\n";
}

SkinnedMesh decode_mesh(const std::string& text) {
  const json doc = parse_json(text, "mesh");
  check_keys(doc, {"format", "version", "vertices", "faces", "joints", "skin_weights", "regions"},
             "mesh");
  check_header(doc, "strata_mesh", kMeshFormatVersion, "mesh");
  SkinnedMesh mesh = guarded("mesh", [&] {
    SkinnedMesh m;
    for (const auto& v : doc.at("vertices")) m.vertices.push_back(vec3(v));
    for (const auto& f : doc.at("faces")) {
      const auto idx = f.get<std::vector<std::uint32_t>>();
      if (idx.size() != 3) throw Error(ErrorCode::MalformedHeader, "mesh: faces need 3 indices");
      m.faces.push_back({idx[0], idx[1], idx[2]});
    }
    if (doc.contains("joints")) {
      for (const auto& j : doc["joints"]) {
        check_keys(j, {"name", "parent", "rotation", "translation"}, "mesh joint");
        Joint joint;
        joint.name = j.at("name").get<std::string>();
        if (m.joint_index(joint.name) >= 0) {
          throw Error(ErrorCode::MalformedHeader, "mesh: duplicate joint " + joint.name);
        }
        if (j.contains("parent") && !j["parent"].is_null()) {
          const auto parent = j["parent"].get<std::string>();
          joint.parent = m.joint_index(parent);
          if (joint.parent < 0) {
            throw Error(ErrorCode::MalformedHeader,
                        "mesh: parent '" + parent + "' must be listed before " + joint.name);
          }
        }
        json rigid = json::object();
        if (j.contains("rotation")) rigid["rotation"] = j["rotation"];
        if (j.contains("translation")) rigid["translation"] = j["translation"];
        joint.bind = rigid_from(rigid, "mesh joint");
        m.joints.push_back(joint);
      }
    }
    const std::size_t nj = m.joint_count();
    if (nj > 0) {
      const auto& rows = doc.at("skin_weights");
      if (rows.size() != m.vertex_count()) {
        throw Error(ErrorCode::MalformedHeader, "mesh: one skin weight row per vertex required");
      }
      m.skin_weights.assign(m.vertex_count() * nj, 0.0);
      for (std::size_t v = 0; v < rows.size(); ++v) {
        double sum = 0.0;
        for (const auto& pair : rows[v]) {
          const auto j = pair.at(0).get<std::size_t>();
          const auto w = pair.at(1).get<double>();
          if (j >= nj || pair.size() != 2 || !(w >= 0.0)) {
            throw Error(ErrorCode::MalformedHeader, "mesh: bad skin weight entry at vertex " +
                                                        std::to_string(v));
          }
          m.skin_weights[v * nj + j] += w;
          sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-3) {
          throw Error(ErrorCode::InvalidArgument,
                      "mesh: skin weights of vertex " + std::to_string(v) + " sum to " +
                          std::to_string(sum));
        }
        if (std::abs(sum - 1.0) > 1e-6) {
          for (std::size_t j = 0; j < nj; ++j) m.skin_weights[v * nj + j] /= sum;
        }
      }
    }
    if (doc.contains("regions")) {
      for (const auto& [name, ids] : doc["regions"].items()) {
        m.face_regions[name] = ids.get<std::vector<std::uint32_t>>();
      }
    }
    return m;
  });
  mesh.validate();
  for (const auto& [name, ids] : mesh.face_regions) {
    for (auto f : ids) {
      if (f >= mesh.face_count()) {
        throw Error(ErrorCode::InvalidArgument, "mesh: region '" + name + "' has bad face index");
      }
    }
  }
  return mesh;
}

void save_mesh(const fs::path& path, const SkinnedMesh& mesh) {
  write_file_atomic(path, encode_mesh(mesh));
}

SkinnedMesh load_mesh(const fs::path& path) { return decode_mesh(read_file(path)); }

// ---- poses ----------------------------------------------------------------------

std::vector<Pose> PoseSequence::poses(const SkinnedMesh& mesh) const {
  std::vector<Pose> out;
  for (std::size_t f = 0; f < local.size(); ++f) {
    out.push_back(forward_kinematics(mesh, local[f], root[f]));
  }
  return out;
}

PoseSequence decode_poses(const std::string& text, const SkinnedMesh& mesh) {
  const json doc = parse_json(text, "poses");
  check_keys(doc, {"format", "version", "frames"}, "poses");
  check_header(doc, "strata_poses", kPoseFormatVersion, "poses");
  PoseSequence seq = guarded("poses", [&] {
    PoseSequence s;
    bool any_time = false, all_time = true;
    for (const auto& frame : doc.at("frames")) {
      check_keys(frame, {"t", "joints", "root"}, "pose frame");
      std::vector<Rigid> local(mesh.joint_count());
      if (frame.contains("joints")) {
        for (const auto& [name, value] : frame["joints"].items()) {
          const int j = mesh.joint_index(name);
          if (j < 0) throw Error(ErrorCode::InvalidArgument, "poses: unknown joint '" + name + "'");
          local[static_cast<std::size_t>(j)] = rigid_from(value, "pose joint");
        }
      }
      s.local.push_back(std::move(local));
      s.root.push_back(frame.contains("root") ? rigid_from(frame["root"], "pose root")
                                              : Rigid::identity());
      if (frame.contains("t")) {
        any_time = true;
        s.times.push_back(frame["t"].get<double>());
      } else {
        all_time = false;
        s.times.push_back(0.0);
      }
    }
    if (any_time && !all_time) {
      throw Error(ErrorCode::MalformedHeader, "poses: give t for every frame or for none");
    }
    if (!any_time) {
      const std::size_t n = s.times.size();
      for (std::size_t f = 0; f < n; ++f) s.times[f] = n > 1 ? static_cast<double>(f) / (n - 1) : 0.0;
    }
    return s;
  });
  for (std::size_t f = 0; f < seq.times.size(); ++f) {
    if (!(seq.times[f] >= 0.0 && seq.times[f] <= 1.0) || (f > 0 && !(seq.times[f] > seq.times[f - 1]))) {
      throw Error(ErrorCode::InvalidArgument, "poses: times must increase strictly within [0, 1]");
    }
  }
  return seq;
}

std::string encode_poses(const PoseSequence& seq, const SkinnedMesh& mesh) {
  json frames = json::array();
  for (std::size_t f = 0; f < seq.local.size(); ++f) {
    json joints = json::object();
    for (std::size_t j = 0; j < mesh.joint_count(); ++j) joints[mesh.joints[j].name] = rigid_json(seq.local[f][j]);
    frames.push_back({{"t", seq.times[f]}, {"joints", joints}, {"root", rigid_json(seq.root[f])}});
  }
  json doc = {{"format", "strata_poses"}, {"version", kPoseFormatVersion}, {"frames", frames}};
  return doc.dump(1) + "\n";
}

PoseSequence load_poses(const fs::path& path, const SkinnedMesh& mesh) {
  return decode_poses(read_file(path), mesh);
}

void save_poses(const fs::path& path, const PoseSequence& seq, const SkinnedMesh& mesh) {
  write_file_atomic(path, encode_poses(seq, mesh));
}

// ---- cameras --------------------------------------------------------------------

std::string encode_camera(const Camera& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({cam.world_to_camera.rotation(r, 0), cam.world_to_camera.rotation(r, 1),
                   cam.world_to_camera.rotation(r, 2)});
  }
  const Vec3& t = cam.world_to_camera.translation;
  json doc = {{"format", "strata_camera"}, {"version", kCameraFormatVersion},
              {"width", cam.width},        {"height", cam.height},
              {"fx", cam.fx},              {"fy", cam.fy},
              {"cx", cam.cx},              {"cy", cam.cy},
              {"near", cam.near},          {"rotation", rot},
              {"translation", {t.x(), t.y(), t.z()}}};
  return doc.dump(1) + "\n";
}

Camera decode_camera(const std::string& text) {
  const json doc = parse_json(text, "camera");
  check_keys(doc, {"format", "version", "width", "height", "fx", "fy", "cx", "cy", "near",
                   "rotation", "translation"},
             "camera");
  check_header(doc, "strata_camera", kCameraFormatVersion, "camera");
  Camera cam = guarded("camera", [&] {
    Camera c;
    c.width = doc.at("width").get<int>();
    c.height = doc.at("height").get<int>();
    c.fx = doc.at("fx").get<double>();
    c.fy = doc.at("fy").get<double>();
    c.cx = doc.at("cx").get<double>();
    c.cy = doc.at("cy").get<double>();
    if (doc.contains("near")) c.near = doc["near"].get<double>();
    const auto& rot = doc.at("rotation");
    if (rot.size() != 3) throw Error(ErrorCode::MalformedHeader, "camera: rotation must be 3x3");
    for (int r = 0; r < 3; ++r) {
      const Vec3 row = vec3(rot.at(r));
      c.world_to_camera.rotation.row(r) = row.transpose();
    }
    c.world_to_camera.translation = vec3(doc.at("translation"));
    return c;
  });
  cam.validate();
  return cam;
}

void save_camera(const fs::path& path, const Camera& cam) {
  write_file_atomic(path, encode_camera(cam));
}

Camera load_camera(const fs::path& path) { return decode_camera(read_file(path)); }

std::vector<Camera> load_cameras(const fs::path& path) {
  if (!fs::is_directory(path)) return {load_camera(path)};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.path().extension() == ".cam") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::IoFailure, "no .cam files in " + path.string());
  std::vector<Camera> out;
  for (const auto& f : files) out.push_back(load_camera(f));
  return out;
}

// ---- PNG ------------------------------------------------------------------------

namespace {

struct PngRead {
  int width = 0;
  int height = 0;
  int color_type = 0;
  int bit_depth = 0;
  int channels = 0;  ///< after transforms
  std::vector<png_color> palette;
  std::vector<std::uint8_t> pixels;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// expand_palette: map palette indices to RGB (images) or keep indices (masks).
PngRead read_png(const fs::path& path, bool expand_palette) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a PNG file");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  struct Cursor {
    const std::string* data;
    std::size_t pos;
  } cursor{&bytes, 0};
  PngRead out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": " + message);
  }
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep dst, png_size_t n) {
    auto* c = static_cast<Cursor*>(png_get_io_ptr(p));
    if (c->pos + n > c->data->size()) png_error(p, "truncated PNG");
    std::memcpy(dst, c->data->data() + c->pos, n);
    c->pos += n;
  });
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.color_type = png_get_color_type(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if (out.bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": 16-bit PNG is not supported");
  }
  if (out.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_colorp pal = nullptr;
    int n = 0;
    if (png_get_PLTE(png, info, &pal, &n)) out.palette.assign(pal, pal + n);
    if (expand_palette) {
      png_set_palette_to_rgb(png);
    } else if (out.bit_depth < 8) {
      png_set_packing(png);
    }
  } else if (out.color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) {
    if (expand_palette) png_set_expand_gray_1_2_4_to_8(png);
    else png_set_packing(png);
  }
  if (expand_palette && png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  out.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.pixels.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const fs::path& path, int width, int height, int color_type,
               const std::vector<std::uint8_t>& pixels, int channels,
               const std::vector<png_color>& palette = {}) {
  std::string message;
  std::string buffer;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<png_const_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, path.string() + ": " + message);
  }
  png_set_write_fn(
      png, &buffer,
      [](png_structp p, png_bytep src, png_size_t n) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(src), n);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_PLTE(png, info, palette.data(), static_cast<int>(palette.size()));
  }
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * channels;
  }
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  write_file_atomic(path, buffer);
}

}  // namespace

Image load_image(const fs::path& path) {
  const PngRead r = read_png(path, true);
  Image img(r.width, r.height, 3);
  const int ch = r.channels;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const std::uint8_t* px = r.pixels.data() + p * ch;
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t v = ch >= 3 ? px[c] : px[0];
      img.data[3 * p + c] = v / 255.0;
    }
  }
  return img;
}

void save_image(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3 && image.channels != 4) {
    throw Error(ErrorCode::UnsupportedFormat, "save_image: 1, 3 or 4 channels required");
  }
  std::vector<std::uint8_t> px(image.data.size());
  for (std::size_t k = 0; k < px.size(); ++k) {
    const double v = std::clamp(image.data[k], 0.0, 1.0);
    px[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  const int type = image.channels == 1   ? PNG_COLOR_TYPE_GRAY
                   : image.channels == 3 ? PNG_COLOR_TYPE_RGB
                                         : PNG_COLOR_TYPE_RGBA;
  write_png(path, image.width, image.height, type, px, image.channels);
}

MaskImage load_mask(const fs::path& path) {
  const PngRead r = read_png(path, false);
  if (r.color_type != PNG_COLOR_TYPE_PALETTE && r.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(ErrorCode::UnsupportedFormat,
                path.string() + ": masks must be palette or grayscale PNG");
  }
  MaskImage mask(r.width, r.height);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    const std::uint8_t v = r.pixels[p * r.channels];
    if (v >= kCategoryCount) {
      throw Error(ErrorCode::LabelOutOfRange,
                  path.string() + ": label " + std::to_string(v) + " is above 14");
    }
    mask.labels[p] = v;
  }
  return mask;
}

void save_mask(const fs::path& path, const MaskImage& mask) {
  static const std::uint8_t colors[kCategoryCount][3] = {
      {0, 0, 0},     {128, 0, 0},   {255, 0, 0},   {0, 85, 0},    {170, 0, 51},
      {255, 85, 0},  {0, 0, 85},    {0, 119, 221}, {85, 85, 0},   {0, 85, 85},
      {85, 51, 0},   {52, 86, 128}, {0, 128, 0},   {0, 0, 255},   {51, 170, 221}};
  std::vector<png_color> palette;
  for (const auto& c : colors) palette.push_back({c[0], c[1], c[2]});
  for (auto l : mask.labels) {
    if (l >= kCategoryCount) throw Error(ErrorCode::LabelOutOfRange, "save_mask: label above 14");
  }
  write_png(path, mask.width, mask.height, PNG_COLOR_TYPE_PALETTE, mask.labels, 1, palette);
}

// ---- view directories -------------------------------------------------------------

std::vector<View> load_views(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "views: not a directory: " + dir.string());
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string file = e.path().filename().string();
    for (const char* suffix : {".mask.png", ".png", ".cam"}) {
      const std::string s = suffix;
      if (file.size() > s.size() && file.compare(file.size() - s.size(), s.size(), s) == 0) {
        names.insert(file.substr(0, file.size() - s.size()));
        break;
      }
    }
  }
  if (names.empty()) throw Error(ErrorCode::IoFailure, "views: no views in " + dir.string());
  std::vector<View> views;
  for (const std::string& name : names) {
    for (const char* suffix : {".cam", ".png", ".mask.png"}) {
      if (!fs::exists(dir / (name + suffix))) {
        throw Error(ErrorCode::IoFailure, "views: " + name + " is missing " + name + suffix);
      }
    }
    View v;
    v.name = name;
    v.camera = load_camera(dir / (name + ".cam"));
    v.image = load_image(dir / (name + ".png"));
    v.mask = load_mask(dir / (name + ".mask.png"));
    if (v.image.width != v.camera.width || v.image.height != v.camera.height ||
        v.mask.width != v.camera.width || v.mask.height != v.camera.height) {
      throw Error(ErrorCode::DimensionMismatch, "views: " + name + " image/mask/camera sizes differ");
    }
    views.push_back(std::move(v));
  }
  return views;
}

void save_views(const fs::path& dir, const std::vector<View>& views) {
  for (const View& v : views) {
    save_camera(dir / (v.name + ".cam"), v.camera);
    save_image(dir / (v.name + ".png"), v.image);
    save_mask(dir / (v.name + ".mask.png"), v.mask);
  }
}

}  // namespace strata
