#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sys/wait.h>

#include "strata/editing.hpp"
#include "strata/io.hpp"

using namespace strata;

namespace {

struct RunResult {
  int status = -1;
  std::string output;
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + STRATA_CLI + std::string(" ") + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "strata_unit_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const RunResult r = run("make-fixture --kind avatar --out " + (root / "fx").string());
    ASSERT_EQ(r.status, 0) << r.output;
  }
  static fs::path root;
  fs::path fx() const { return root / "fx"; }
  std::string mesh() const { return (fx() / "mesh.json").string(); }
  std::string truth() const { return (fx() / "truth.ply").string(); }
};

fs::path Cli::root;

}  // namespace

TEST_F(Cli, FitWritesOutputs) {
  const fs::path out = root / "fit";
  const RunResult r = run("fit --mesh " + mesh() + " --views " + (fx() / "views").string() + " --out " +
                          out.string() + " --iters 4 --seed 3");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(r.output.rfind("config {", 0), 0u);
  EXPECT_TRUE(fs::exists(out / "scene.ply"));
  EXPECT_TRUE(fs::exists(out / "contact_sheet.png"));
  const std::string log = read_file(out / "metrics.log");
  EXPECT_NE(log.find("stage=final"), std::string::npos);
  EXPECT_NE(log.find("psnr_train="), std::string::npos);
  EXPECT_NE(log.find("label_agreement="), std::string::npos);
}

TEST_F(Cli, FitFromInitSplats) {
  const fs::path out = root / "fit_init";
  const RunResult r = run("fit --mesh " + mesh() + " --views " + (fx() / "views").string() + " --out " +
                          out.string() + " --iters 1 --init-splats " + truth());
  ASSERT_EQ(r.status, 0) << r.output;
  const GaussianSet t = load_scene(truth()).set;
  EXPECT_NE(r.output.find("stage=init body=" + std::to_string(t.count(Layer::Body)) +
                          " assets=" + std::to_string(t.count(Layer::Asset))),
            std::string::npos)
      << r.output;
}

TEST_F(Cli, MissingMaskNamesView) {
  const fs::path views = root / "broken_views";
  fs::remove_all(views);
  fs::copy(fx() / "views", views);
  fs::remove(views / "003.mask.png");
  const RunResult r = run("fit --mesh " + mesh() + " --views " + views.string() + " --out " +
                          (root / "broken").string() + " --iters 1");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error code="), std::string::npos);
  EXPECT_NE(r.output.find("003"), std::string::npos) << r.output;
}

TEST_F(Cli, ConfigErrors) {
  const fs::path cfg = root / "bad.json";
  std::ofstream(cfg) << R"({"schedule": {"totl_iters": 3}})";
  RunResult r = run("fit --mesh " + mesh() + " --views " + (fx() / "views").string() + " --out " +
                    (root / "x").string() + " --config " + cfg.string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error code=ConfigError"), std::string::npos) << r.output;
  r = run("render --scene " + truth() + " --mesh " + mesh() + " --camera " + (fx() / "views" / "000.cam").string() +
              " --out " + (root / "env.png").string(),
          "STRATA_CONFIG=" + cfg.string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("ConfigError"), std::string::npos);
}

TEST_F(Cli, RenderLayers) {
  const fs::path out = root / "layers" / "view.png";
  fs::create_directories(out.parent_path());
  const RunResult r = run("render --layers --scene " + truth() + " --mesh " + mesh() + " --camera " +
                          (fx() / "views" / "000.cam").string() + " --out " + out.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const GaussianSet t = load_scene(truth()).set;
  std::set<int> cats;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.layer[i] == Layer::Asset) cats.insert(category_of(t.identity[i]));
  }
  std::size_t layers = 0;
  for (const auto& e : fs::directory_iterator(out.parent_path())) {
    layers += e.path().filename().string().find("view_cat") == 0;
  }
  EXPECT_EQ(layers, cats.size());

  EXPECT_TRUE(fs::exists(out.parent_path() / "view_labels.png"));
  EXPECT_TRUE(fs::exists(out.parent_path() / "view_cat6_Pants.png"));
}

TEST_F(Cli, EditRemoveDropsPants) {
  const fs::path scene = root / "no_pants.ply";
  RunResult r = run("edit remove --category 6 --scene " + truth() + " --mesh " + mesh() + " --out " + scene.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const fs::path png = root / "no_pants.png";
  r = run("render --layers --scene " + scene.string() + " --mesh " + mesh() + " --camera " +
          (fx() / "views" / "000.cam").string() + " --out " + png.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const MaskImage before = load_mask(fx() / "views" / "000.mask.png");
  const MaskImage after = load_mask(root / "no_pants_labels.png");
  EXPECT_GT(std::count(before.labels.begin(), before.labels.end(), category::kPants), 0);
  EXPECT_EQ(std::count(after.labels.begin(), after.labels.end(), category::kPants), 0);
}

TEST_F(Cli, EditRecolorKeepsGeometry) {
  const fs::path scene = root / "pink.ply";
  const RunResult r = run("edit recolor --category 4 --color 1,0.4,0.7 --iters 20 --scene " + truth() + " --mesh " +
                          mesh() + " --out " + scene.string());
  ASSERT_EQ(r.status, 0) << r.output;
  GaussianSet a = load_scene(truth()).set, b = load_scene(scene).set;
  EXPECT_NE(a.sh, b.sh);
  a.sh.clear();
  b.sh.clear();
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST_F(Cli, EditBadCategory) {
  const RunResult r = run("edit remove --category 15 --scene " + truth() + " --mesh " + mesh() + " --out " +
                          (root / "bad.ply").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error code=InvalidCategory"), std::string::npos) << r.output;
}

TEST_F(Cli, ExtractWritesMesh) {
  const fs::path scene = root / "top.ply";
  const RunResult r = run("edit extract --category 4 --scene " + truth() + " --mesh " + mesh() + " --out " + scene.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "top.mesh.json"));
  const GaussianSet g = load_scene(scene).set;
  for (const auto& id : g.identity) EXPECT_EQ(category_of(id), 4);
}

TEST_F(Cli, GradcheckAni) {
  const RunResult r = run("gradcheck --loss ani --seed 7");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("status=pass"), std::string::npos);
}

TEST_F(Cli, AnimateOscillation) {
  const fs::path osc = root / "osc";
  RunResult r = run("make-fixture --kind oscillation --out " + osc.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const fs::path cfg = root / "short_deform.json";
  std::ofstream(cfg) << R"({"deform": {"iterations": 3, "width": 16}})";
  r = run("animate --scene " + (osc / "scene.ply").string() + " --mesh " + (osc / "mesh.json").string() + " --poses " +
          (osc / "poses.json").string() + " --cameras " + (osc / "camera.cam").string() + " --out " +
          (root / "anim").string() + " --train-deform --frames " + (osc / "frames").string() + " --config " +
          cfg.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "anim" / "deform.bin"));
  EXPECT_TRUE(fs::exists(root / "anim" / "frame_000_cam_00.png"));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(run("").status, 0);
  EXPECT_EQ(run("render --scene nope.ply --mesh " + mesh() + " --camera x.cam --out y.png").status, 1);
}
