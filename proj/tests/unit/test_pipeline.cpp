#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "planegeo/pipeline/pipeline.hpp"

using namespace planegeo;
using namespace planegeo::pipeline;
using namespace testing_util;

namespace {

template <class F>
std::optional<ErrorKind> kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.ransac_inlier_dist = 0.001;
  c.max_resolution = 24;
  c.views_per_loop = 3;
  c.q_samples = 16;
  return c;
}

synth::SceneSpec small_scene() { return synth::half_room(0, synth::Intrinsics{60, 60, 40, 30, 80, 60}); }

class Throwing : public InpainterAdapter {
 public:
  ColorImage inpaint(const std::vector<ViewData>&, const Camera&, const ColorImage&, const VisibilityMask&) override {
    throw std::runtime_error("model offline");
  }
};

class Painter : public InpainterAdapter {
 public:
  ColorImage inpaint(const std::vector<ViewData>&, const Camera&, const ColorImage& raw, const VisibilityMask&) override {
    ColorImage out = raw;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = Rgb{1, 2, 3};
    return out;
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PLANEGEO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Config, JsonRoundTripAndValidation) {
  auto c = small_config();
  c.seed = 77;
  const auto j = config_json(c);
  EXPECT_EQ(config_json(config_from_json(j)), j);
  EXPECT_EQ(kind_of([] { config_from_json(io::Json{{"no_such_key", 1}}); }), ErrorKind::Input);
  EXPECT_EQ(kind_of([] { config_from_json(io::Json{{"k", 0}}); }), ErrorKind::Input);
  EXPECT_EQ(kind_of([] { config_from_json(io::Json{{"k", "six"}}); }), ErrorKind::Input);
  EXPECT_EQ(kind_of([] { config_from_json(io::Json::array()); }), ErrorKind::Input);
  EXPECT_EQ(kind_of([] { config_from_json(io::Json{{"mono_a", 0.0}}); }), ErrorKind::Input);
}

TEST(Pipeline, InitRejectsEmptyInput) {
  EXPECT_EQ(kind_of([] { run_init(small_config(), ViewSet{}); }), ErrorKind::Input);
  PipelineConfig bad = small_config();
  bad.q_samples = 0;
  EXPECT_EQ(kind_of([&] { run_init(bad, synth_inputs(small_scene(), 1, 0, 0, 0)); }), ErrorKind::Input);
}

TEST(Pipeline, LoopAddsViewsAndGrowsVisibility) {
  const auto cfg = small_config();
  const auto scene = small_scene();
  const State init = run_init(cfg, synth_inputs(scene, 1, 0, 0, 0));
  EXPECT_EQ(init.plane_depths.size(), scene.cameras.size());
  EXPECT_FALSE(init.planes.empty());
  StubInpainter inpaint(scene);
  SynthAnnotator annotate(scene, 1, 0, 0);
  const State one = run_loop(cfg, init, inpaint, &annotate);
  ASSERT_EQ(one.history.size(), 1u);
  EXPECT_GT(one.history[0].visible_after, one.history[0].visible_before);
  EXPECT_GT(one.history[0].views_added, 0u);
  EXPECT_EQ(one.views.views.size(), scene.cameras.size() + one.history[0].views_added);
  EXPECT_EQ(one.supervision.size(), one.views.views.size());
  for (const auto& nv : one.novel)
    for (std::size_t i = 0; i < nv.visibility.size(); ++i)
      if (nv.visibility[i]) EXPECT_EQ(nv.inpainted[i], nv.raw[i]);
  EXPECT_EQ(init.loop, 0);
  EXPECT_EQ(init.views.views.size(), scene.cameras.size());
}

TEST(Pipeline, InpainterFailuresAreAdapterErrors) {
  const auto cfg = small_config();
  const auto scene = small_scene();
  const State init = run_init(cfg, synth_inputs(scene, 1, 0, 0, 0));
  SynthAnnotator annotate(scene, 1, 0, 0);
  Throwing thrower;
  Painter painter;
  EXPECT_EQ(kind_of([&] { run_loop(cfg, init, thrower, &annotate); }), ErrorKind::Adapter);
  EXPECT_EQ(kind_of([&] { run_loop(cfg, init, painter, &annotate); }), ErrorKind::Adapter);
  StubInpainter stub(scene);
  EXPECT_EQ(kind_of([&] { run_loop(cfg, init, stub, nullptr); }), ErrorKind::Dependency);
  EXPECT_EQ(kind_of([&] { run_loop(cfg, State{}, stub, &annotate); }), ErrorKind::Dependency);
  EXPECT_EQ(init.loop, 0);
  EXPECT_TRUE(init.history.empty());
}

TEST(Pipeline, LoopDirectoryRoundTrip) {
  const auto cfg = small_config();
  const auto scene = small_scene();
  StubInpainter inpaint(scene);
  SynthAnnotator annotate(scene, 1, 0, 0);
  const State one = run_loop(cfg, run_init(cfg, synth_inputs(scene, 1, 0, 0, 0)), inpaint, &annotate);
  const fs::path dir = temp_dir("pipeline_loopdir");
  write_loop_dir(dir.string(), one);
  const State back = read_loop_dir((dir / "loop_1").string());
  EXPECT_EQ(back.loop, 1);
  EXPECT_EQ(back.voxel_size, one.voxel_size);
  ASSERT_EQ(back.views.views.size(), one.views.views.size());
  ASSERT_EQ(back.planes.size(), one.planes.size());
  for (std::size_t i = 0; i < one.planes.size(); ++i) {
    EXPECT_EQ(back.planes[i].id, one.planes[i].id);
    EXPECT_NEAR((back.planes[i].normal - one.planes[i].normal).norm(), 0.0, 1e-12);
    EXPECT_NEAR(back.planes[i].offset, one.planes[i].offset, 1e-12);
  }
  ASSERT_TRUE(back.grid.has_value());
  EXPECT_TRUE(*back.grid == *one.grid);
  ASSERT_EQ(back.history.size(), 1u);
  EXPECT_EQ(back.history[0].visible_after, one.history[0].visible_after);
  for (std::size_t v = 0; v < one.plane_depths.size(); ++v)
    EXPECT_EQ(back.plane_depths[v].plane_id.data(), one.plane_depths[v].plane_id.data());
}

TEST(Pipeline, ExportScoresAgainstGroundTruth) {
  const auto cfg = small_config();
  const auto scene = small_scene();
  const State init = run_init(cfg, synth_inputs(scene, 1, 0, 0, 0));
  const auto ex = export_scene(init, cfg);
  ASSERT_TRUE(ex.metrics.has_value());
  EXPECT_FALSE(ex.cloud.empty());
  EXPECT_LT(ex.metrics->chamfer, 0.02);
  EXPECT_EQ(kind_of([&] { export_scene(State{}, cfg); }), ErrorKind::Dependency);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = temp_dir("pipeline_cli");
  EXPECT_EQ(run_cli("synth --scene box_room --out " + (dir / "s").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "s" / "views.json"));
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("synth --scene nowhere --out " + (dir / "t").string()), 2);
  EXPECT_EQ(run_cli("extract-planes -i " + (dir / "missing").string() + " --out " + (dir / "u").string()), 2);
  std::ofstream(dir / "bad.json") << "{\"k\": 0}";
  EXPECT_EQ(run_cli("--config " + (dir / "bad.json").string() + " synth --scene box_room --out " + (dir / "v").string()), 2);
  EXPECT_EQ(run_cli("select-views -i " + (dir / "s").string() + " --out " + (dir / "w").string()), 2);  // no depth yet
  std::ofstream(dir / "empty.ply", std::ios::binary)
      << "ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\n"
         "end_header\n";
  const std::string empty = (dir / "empty.ply").string();
  EXPECT_EQ(run_cli("eval --pred " + empty + " --gt " + empty + " --out " + (dir / "e").string()), 3);
}

TEST(Cli, SynthIsSeededAndThreadIndependent) {
  const fs::path dir = temp_dir("pipeline_threads");
  ASSERT_EQ(run_cli("--threads 1 --seed 4 synth --scene random --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("--threads 3 --seed 4 synth --scene random --out " + (dir / "b").string()), 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
}
