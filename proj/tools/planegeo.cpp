// planegeo: stage-wise command line front end over a workspace directory.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "planegeo/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace planegeo;
using namespace planegeo::pipeline;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitStage = 3;

struct Globals {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int loops = 0;
  int threads = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* loops_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

struct StageArgs {
  std::string input;
  std::string scene = "box_room";
  std::string scene_file;
  std::string cameras;
  std::string resume;
  std::string pred;
  std::string gt;
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig cfg;
  if (!g.config.empty()) cfg = config_from_json(io::read_json(g.config));
  if (g.seed_opt->count()) cfg.seed = g.seed;
  if (g.out_opt->count()) cfg.out = g.out;
  if (g.loops_opt->count()) cfg.n_loops = g.loops;
  if (g.threads_opt->count()) cfg.threads = g.threads;
  cfg.validate();
  if (cfg.out.empty()) throw Error(ErrorKind::Input, "an output directory is required (--out or config 'out')");
  set_num_threads(cfg.threads);
  return cfg;
}

std::string input_dir(const PipelineConfig& cfg, const StageArgs& a) {
  if (!a.input.empty()) return a.input;
  if (!cfg.input.empty()) return cfg.input;
  return cfg.out;
}

bool empty_dir(const fs::path& p) { return !fs::is_directory(p) || fs::is_empty(p); }

fs::path out_path(const PipelineConfig& cfg, const std::string& rel) { return fs::path(cfg.out) / rel; }

synth::SceneSpec scene_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "box_room") return synth::box_room(seed);
  if (name == "two_room") return synth::two_room(seed);
  if (name == "half_room") return synth::half_room(seed);
  if (name == "corridor") return synth::corridor(seed);
  if (name == "random") return synth::random_room(seed);
  throw Error(ErrorKind::Input, "unknown scene '" + name + "'");
}

synth::SceneSpec load_scene(const PipelineConfig& cfg, const StageArgs& a) {
  if (!a.scene_file.empty()) return io::json_scene(io::read_json(a.scene_file));
  return scene_by_name(a.scene, cfg.seed);
}

/// Stage state assembled from the files earlier stages left in the workspace.
struct StageLoad {
  bool masks = false;
  bool planes = false;
  bool depth = false;
};

State load_stage_state(const PipelineConfig& cfg, const StageArgs& a, StageLoad need) {
  State s;
  s.views = read_view_set(input_dir(cfg, a));
  if (s.views.views.empty()) throw Error(ErrorKind::Input, "view set has no views");
  const fs::path out(cfg.out);
  auto require = [](const fs::path& p, const char* stage) {
    if (!fs::exists(p)) throw Error(ErrorKind::Input, "missing " + p.string() + " (run " + stage + " first)");
  };
  for (std::size_t v = 0; v < s.views.views.size(); ++v) {
    const auto& name = s.views.views[v].name;
    if (need.masks) {
      require(out / "masks" / (name + ".png"), "extract-planes");
      s.masks.push_back(read_masks((out / "masks").string(), name, static_cast<int>(v)));
    }
    if (need.depth) {
      require(out / "depth" / (name + ".pfm"), "plane-depth");
      s.plane_depths.push_back(read_plane_depth((out / "depth").string(), name));
    }
  }
  if (need.planes) {
    require(out / "planes.json", "fit-planes");
    s.planes = read_planes(out.string());
  }
  if (fs::exists(out / "grid.bin")) s.grid = io::read_grid((out / "grid.bin").string());
  s.voxel_size = s.grid ? s.grid->voxel_size() : cfg.voxel_size;
  return s;
}

VisibilityGrid require_grid(const State& s) {
  if (!s.grid) throw Error(ErrorKind::Input, "missing grid.bin (run build-grid first)");
  return *s.grid;
}

std::vector<Camera> read_cameras(const std::string& path) {
  const auto j = io::read_json(path);
  std::vector<Camera> out;
  io::parse_guard(path, [&] {
    if (j.contains("proposals"))
      for (const auto& p : j.at("proposals")) out.push_back(io::json_camera(p.at("camera")));
    else if (j.contains("views"))
      for (const auto& v : j.at("views")) out.push_back(io::json_camera(v.at("camera")));
    else
      for (const auto& c : j.at("cameras")) out.push_back(io::json_camera(c));
    return 0;
  });
  if (out.empty()) throw Error(ErrorKind::Input, path + " lists no cameras");
  return out;
}

io::Json grid_summary(const VisibilityGrid& g) {
  return io::Json{{"origin", io::vec_json(g.origin())},
                  {"voxel_size", g.voxel_size()},
                  {"dims", {g.dims()[0], g.dims()[1], g.dims()[2]}},
                  {"visible", g.visible_count()}};
}

void write_export(const std::string& dir, const ExportResult& e) {
  io::write_ply((fs::path(dir) / "cloud.ply").string(), e.cloud);
  if (e.ground_truth) io::write_ply((fs::path(dir) / "gt.ply").string(), *e.ground_truth);
  if (e.metrics) io::write_json((fs::path(dir) / "metrics.json").string(), metrics_json(*e.metrics));
}

// ---------------------------------------------------------------------------

void cmd_synth(const PipelineConfig& cfg, const StageArgs& a) {
  const auto spec = load_scene(cfg, a);
  write_view_set(cfg.out, synth_inputs(spec, cfg.mono_a, cfg.mono_b, cfg.mono_noise, cfg.seed));
  std::cout << "synth: " << spec.cameras.size() << " views -> " << cfg.out << "\n";
}

void cmd_extract_planes(const PipelineConfig& cfg, const StageArgs& a) {
  const auto set = read_view_set(input_dir(cfg, a));
  std::size_t total = 0;
  for (std::size_t v = 0; v < set.views.size(); ++v) {
    const auto& view = set.views[v];
    const auto masks = run_stage("extract-planes", [&] { return extract_view_masks(view, static_cast<int>(v), cfg); });
    write_masks(out_path(cfg, "masks").string(), view.name, masks, view.camera.width(), view.camera.height());
    total += masks.size();
  }
  std::cout << "extract-planes: " << total << " masks over " << set.views.size() << " views\n";
}

void cmd_fit_planes(const PipelineConfig& cfg, const StageArgs& a) {
  State s = load_stage_state(cfg, a, {true, false, false});
  estimate_planes(s, cfg);
  write_planes(cfg.out, s.planes);
  io::Json rej = io::Json::array();
  for (const auto& r : s.rejected) rej.push_back(io::plane_json(r));
  io::write_json(out_path(cfg, "rejected.json").string(), io::Json{{"planes", rej}});
  std::cout << "fit-planes: " << s.planes.size() << " planes, " << s.rejected.size() << " rejected\n";
}

void cmd_plane_depth(const PipelineConfig& cfg, const StageArgs& a) {
  State s = load_stage_state(cfg, a, {true, true, false});
  compute_plane_depths(s, cfg);
  for (std::size_t v = 0; v < s.views.views.size(); ++v)
    write_plane_depth(out_path(cfg, "depth").string(), s.views.views[v].name, s.plane_depths[v]);
  std::cout << "plane-depth: " << s.plane_depths.size() << " views\n";
}

void cmd_build_grid(const PipelineConfig& cfg, const StageArgs& a) {
  const bool have_depth = !empty_dir(out_path(cfg, "depth"));
  State s = load_stage_state(cfg, a, {false, false, have_depth});
  if (!have_depth)
    for (const auto& v : s.views.views) s.plane_depths.push_back(PlaneAwareDepth{v.depth});
  s.voxel_size = cfg.voxel_size;
  const auto grid = training_grid(s, cfg);
  io::write_grid(out_path(cfg, "grid.bin").string(), grid);
  io::write_json(out_path(cfg, "grid.json").string(), grid_summary(grid));
  std::cout << "build-grid: " << grid.dims()[0] << "x" << grid.dims()[1] << "x" << grid.dims()[2] << ", "
            << grid.visible_count() << " visible voxels\n";
}

void cmd_render_visibility(const PipelineConfig& cfg, const StageArgs& a) {
  State s = load_stage_state(cfg, a, {false, true, false});
  const auto grid = require_grid(s);
  const std::string cam_file = a.cameras.empty() ? out_path(cfg, "proposals.json").string() : a.cameras;
  if (!fs::exists(cam_file)) throw Error(ErrorKind::Input, "missing " + cam_file + " (run select-views or pass --cameras)");
  const auto cams = read_cameras(cam_file);
  const PlaneSetCaster caster(s.planes, cfg.footprint_cell, cfg.footprint_close);
  std::optional<SynthAnnotator> annotator;
  if (s.views.scene) annotator.emplace(*s.views.scene, cfg.mono_a, cfg.mono_b, cfg.mono_noise);
  std::size_t visible = 0;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const Camera& cam = cams[i];
    DepthMap mono(cam.width(), cam.height());
    if (annotator) mono = annotator->annotate(cam, ColorImage(cam.width(), cam.height()), mix_seed(cfg.seed, 0x1000ULL + i)).mono;
    const auto render = run_stage("render-visibility", [&] { return render_novel_depth(caster, cam, mono); });
    const auto mask =
        run_stage("render-visibility", [&] { return render_visibility(grid, cam, render.depth, cfg.q_samples); });
    char name[32];
    std::snprintf(name, sizeof(name), "cam%03zu", i);
    io::write_depth_pfm(out_path(cfg, std::string("novel/") + name + "_rendered.pfm").string(), render.depth);
    io::write_png8(out_path(cfg, std::string("novel/") + name + "_visibility.png").string(), visibility_mask_image(mask));
    for (auto m : mask.data()) visible += m;
  }
  std::cout << "render-visibility: " << cams.size() << " cameras, " << visible << " visible pixels\n";
}

void cmd_select_views(const PipelineConfig& cfg, const StageArgs& a) {
  State s = load_stage_state(cfg, a, {false, true, true});
  const auto grid = require_grid(s);
  std::vector<ViewData> inputs;
  for (const auto& v : s.views.views)
    if (!v.generated) inputs.push_back(v);
  if (inputs.empty()) inputs = s.views.views;
  const auto props = run_stage("select-views", [&] { return propose_views(s, grid, cfg, inputs); });
  io::write_json(out_path(cfg, "proposals.json").string(), io::proposals_json(props));
  std::cout << "select-views: " << props.size() << " proposals\n";
}

void cmd_assign_supervision(const PipelineConfig& cfg, const StageArgs& a) {
  State s = load_stage_state(cfg, a, {false, true, true});
  compute_supervision(s, cfg);
  for (std::size_t v = 0; v < s.supervision.size(); ++v)
    write_supervision(out_path(cfg, "supervision").string(), s.views.views[v].name, s.supervision[v]);
  std::cout << "assign-supervision: " << s.supervision.size() << " views\n";
}

void cmd_run(const PipelineConfig& cfg, const StageArgs& a) {
  State s;
  if (!a.resume.empty()) {
    s = read_loop_dir(a.resume);
  } else {
    const std::string in = !a.input.empty() ? a.input : cfg.input;
    ViewSet inputs = in.empty() ? synth_inputs(load_scene(cfg, a), cfg.mono_a, cfg.mono_b, cfg.mono_noise, cfg.seed)
                                : read_view_set(in);
    s = run_init(cfg, std::move(inputs));
    s.grid = training_grid(s, cfg);
    compute_supervision(s, cfg);
    write_loop_dir(cfg.out, s);
  }
  io::Json used = config_json(cfg);
  used.erase("out");
  used.erase("threads");
  used.erase("input");
  io::write_json(out_path(cfg, "config.json").string(), used);
  std::optional<StubInpainter> stub;
  std::optional<SynthAnnotator> annotator;
  stub.emplace(s.views.scene);
  if (s.views.scene) annotator.emplace(*s.views.scene, cfg.mono_a, cfg.mono_b, cfg.mono_noise);
  std::cout << "loop " << s.loop << ": " << s.views.views.size() << " views, " << s.planes.size() << " planes\n";
  const int target = s.loop + cfg.n_loops;
  while (s.loop < target) {
    s = run_loop(cfg, s, *stub, annotator ? &*annotator : nullptr);
    write_loop_dir(cfg.out, s);
    const auto& h = s.history.back();
    std::cout << "loop " << s.loop << ": " << s.views.views.size() << " views, " << s.planes.size()
              << " planes, visible voxels " << h.visible_before << " -> " << h.visible_after << ", skipped "
              << h.views_skipped << "\n";
  }
  const auto e = export_scene(s, cfg);
  write_export(out_path(cfg, "export").string(), e);
  if (e.metrics)
    std::cout << "chamfer " << e.metrics->chamfer << " m, F-score " << e.metrics->fscore << "\n";
}

void cmd_eval(const PipelineConfig& cfg, const StageArgs& a) {
  ReconstructionMetrics m;
  if (!a.pred.empty() || !a.gt.empty()) {
    if (a.pred.empty() || a.gt.empty()) throw Error(ErrorKind::Input, "eval needs both --pred and --gt");
    m = run_stage("eval", [&] { return eval_reconstruction(io::read_ply(a.pred), io::read_ply(a.gt), cfg.fscore_thresh); });
    io::write_json(out_path(cfg, "metrics.json").string(), metrics_json(m));
  } else {
    const std::string in = input_dir(cfg, a);
    if (!fs::exists(fs::path(in) / "state.json")) throw Error(ErrorKind::Input, in + " is not a loop directory");
    const auto e = run_stage("eval", [&] { return export_scene(read_loop_dir(in), cfg); });
    if (!e.metrics) throw Error(ErrorKind::Input, "eval of a loop directory needs a synthetic scene");
    write_export(cfg.out, e);
    m = *e.metrics;
  }
  std::cout << metrics_json(m).dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plane-aware geometry modeling and geometry-guided view generation"};
  app.require_subcommand(1);
  Globals g;
  StageArgs a;
  app.add_option("-c,--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  g.seed_opt = app.add_option("--seed", g.seed, "random seed");
  g.out_opt = app.add_option("-o,--out", g.out, "output / workspace directory");
  g.loops_opt = app.add_option("--loops", g.loops, "number of geometry-guided loops")->check(CLI::NonNegativeNumber);
  g.threads_opt = app.add_option("--threads", g.threads, "worker threads (0: hardware)")->check(CLI::NonNegativeNumber);

  using Cmd = void (*)(const PipelineConfig&, const StageArgs&);
  struct Sub {
    const char* name;
    const char* help;
    Cmd fn;
  };
  const Sub subs[] = {
      {"synth", "ray-cast a synthetic scene into a view set", cmd_synth},
      {"extract-planes", "per-view 2D plane masks", cmd_extract_planes},
      {"fit-planes", "global 3D planes from the masks", cmd_fit_planes},
      {"plane-depth", "plane-aware depth maps", cmd_plane_depth},
      {"build-grid", "visibility grid over the views", cmd_build_grid},
      {"render-visibility", "visibility masks for novel cameras", cmd_render_visibility},
      {"select-views", "plane-aware novel view proposals", cmd_select_views},
      {"assign-supervision", "per-pixel supervision source views", cmd_assign_supervision},
      {"run", "initialization plus geometry-guided loops", cmd_run},
      {"eval", "reconstruction metrics", cmd_eval},
  };
  std::vector<std::pair<CLI::App*, Cmd>> registered;
  for (const auto& sub : subs) {
    CLI::App* c = app.add_subcommand(sub.name, sub.help);
    c->fallthrough();
    c->add_option("-i,--input", a.input, "input view set directory");
    const std::string n = sub.name;
    if (n == "synth" || n == "run") {
      c->add_option("--scene", a.scene, "box_room | two_room | half_room | corridor | random");
      c->add_option("--scene-file", a.scene_file, "scene spec JSON")->check(CLI::ExistingFile);
    }
    if (n == "render-visibility") c->add_option("--cameras", a.cameras, "proposals.json, views.json or {cameras: [...]}");
    if (n == "run") c->add_option("--resume", a.resume, "continue from a loop directory")->check(CLI::ExistingDirectory);
    if (n == "eval") {
      c->add_option("--pred", a.pred, "predicted point cloud (PLY)")->check(CLI::ExistingFile);
      c->add_option("--gt", a.gt, "ground-truth point cloud (PLY)")->check(CLI::ExistingFile);
    }
    registered.emplace_back(c, sub.fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const PipelineConfig cfg = load_config(g);
    for (const auto& [c, fn] : registered)
      if (c->parsed()) fn(cfg, a);
  } catch (const Error& e) {
    std::cerr << "planegeo: " << e.what() << "\n";
    return e.kind() == ErrorKind::Input || e.kind() == ErrorKind::Io ? kExitInput : kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "planegeo: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitOk;
}
