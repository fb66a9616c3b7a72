#pragma once

// Initialization, geometry-guided loops and export. Each loop rebuilds the
// visibility grid, proposes novel views, renders and inpaints them, merges
// them into the training set and re-estimates planes and plane-aware depth.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/metrics.hpp"
#include "planegeo/pipeline/workspace.hpp"
#include "planegeo/plane_depth.hpp"
#include "planegeo/plane_global.hpp"
#include "planegeo/plane_render.hpp"
#include "planegeo/plane_seg.hpp"
#include "planegeo/supervision.hpp"
#include "planegeo/synth.hpp"
#include "planegeo/view_select.hpp"
#include "planegeo/vis_grid.hpp"

namespace planegeo::pipeline {

struct PipelineConfig {
  // plane-seg
  int k = 6;
  int kmeans_iterations = 50;
  int min_mask_pixels = 0;  // 0: 0.5% of the image area
  // plane-global
  double depth_tol_rel = 0.01;
  double overlap_thresh = 0.3;
  double normal_angle_thresh_deg = 15.0;
  double ransac_inlier_dist = 0.02;
  int ransac_iterations = 1000;
  double min_inlier_ratio = 0.5;
  int cloud_stride = 1;
  double coplanar_angle_deg = 2.0;  // 0: no coplanar consolidation
  double coplanar_dist = 0.03;
  // plane-depth
  double grazing_angle_deg = 85.0;
  // vis-grid
  double voxel_size = 0.0;  // 0: derived once from the input views, then fixed
  int max_resolution = 48;
  double depth_margin_rel = 0.01;
  int q_samples = 32;
  // view-select
  int per_plane = 1;
  int candidate_stride = 2;
  double near_surface_dist = 0.2;
  double footprint_cell = 0.02;
  int footprint_close = 2;
  double dedup_angle_deg = 5.0;
  double dedup_dist = 0.0;
  int coverage_samples = 128;
  int ellipse_views = 2;
  // loop
  int n_loops = 3;
  int views_per_loop = 10;
  std::uint64_t seed = 0;
  // generated-view annotation (synthetic scenes)
  double mono_a = 1.0;
  double mono_b = 0.0;
  double mono_noise = 0.0;
  // export
  double export_voxel = 0.02;
  int export_stride = 2;
  double fscore_thresh = 0.05;
  int threads = 0;
  // paths
  std::string input;
  std::string out;

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw Error(ErrorKind::Input, std::string("config: ") + what);
    };
    need(k >= 1 && k <= 64, "k must be in [1, 64]");
    need(kmeans_iterations >= 1, "kmeans_iterations must be >= 1");
    need(min_mask_pixels >= 0, "min_mask_pixels must be >= 0");
    need(depth_tol_rel > 0.0 && depth_tol_rel < 1.0, "depth_tol_rel must be in (0, 1)");
    need(overlap_thresh > 0.0 && overlap_thresh <= 1.0, "overlap_thresh must be in (0, 1]");
    need(normal_angle_thresh_deg > 0.0 && normal_angle_thresh_deg < 90.0, "normal_angle_thresh_deg must be in (0, 90)");
    need(ransac_inlier_dist > 0.0, "ransac_inlier_dist must be > 0");
    need(grazing_angle_deg > 0.0 && grazing_angle_deg <= 90.0, "grazing_angle_deg must be in (0, 90]");
    need(ransac_iterations >= 1, "ransac_iterations must be >= 1");
    need(min_inlier_ratio >= 0.0 && min_inlier_ratio <= 1.0, "min_inlier_ratio must be in [0, 1]");
    need(cloud_stride >= 1, "cloud_stride must be >= 1");
    need(coplanar_angle_deg >= 0.0 && coplanar_angle_deg < 90.0, "coplanar_angle_deg must be in [0, 90)");
    need(coplanar_dist >= 0.0, "coplanar_dist must be >= 0");
    need(voxel_size >= 0.0, "voxel_size must be >= 0");
    need(max_resolution >= 3 && max_resolution <= 1024, "max_resolution must be in [3, 1024]");
    need(depth_margin_rel >= 0.0 && depth_margin_rel < 1.0, "depth_margin_rel must be in [0, 1)");
    need(q_samples >= 1, "q_samples must be >= 1");
    need(per_plane >= 1, "per_plane must be >= 1");
    need(candidate_stride >= 1, "candidate_stride must be >= 1");
    need(near_surface_dist >= 0.0, "near_surface_dist must be >= 0");
    need(footprint_cell > 0.0, "footprint_cell must be > 0");
    need(footprint_close >= 0 && footprint_close <= 16, "footprint_close must be in [0, 16]");
    need(dedup_angle_deg >= 0.0 && dedup_dist >= 0.0, "dedup thresholds must be >= 0");
    need(coverage_samples >= 0, "coverage_samples must be >= 0");
    need(ellipse_views >= 0, "ellipse_views must be >= 0");
    need(n_loops >= 0, "n_loops must be >= 0");
    need(views_per_loop >= 0, "views_per_loop must be >= 0");
    need(mono_a != 0.0, "mono_a must be non-zero");
    need(mono_noise >= 0.0, "mono_noise must be >= 0");
    need(export_voxel >= 0.0, "export_voxel must be >= 0");
    need(export_stride >= 1, "export_stride must be >= 1");
    need(fscore_thresh > 0.0, "fscore_thresh must be > 0");
    need(threads >= 0, "threads must be >= 0");
  }

  PlaneEstimationOptions plane_options() const {
    PlaneEstimationOptions o;
    o.depth_tol_rel = depth_tol_rel;
    o.overlap_thresh = overlap_thresh;
    o.normal_angle_thresh_deg = normal_angle_thresh_deg;
    o.ransac.inlier_dist = ransac_inlier_dist;
    o.ransac.iterations = ransac_iterations;
    o.ransac.seed = seed;
    o.ransac.min_inlier_ratio = min_inlier_ratio;
    o.cloud_stride = cloud_stride;
    o.coplanar_angle_deg = coplanar_angle_deg;
    o.coplanar_dist = coplanar_dist;
    return o;
  }

  SelectionOptions selection_options() const {
    SelectionOptions o;
    o.per_plane = per_plane;
    o.stride = candidate_stride;
    o.near_surface_dist = near_surface_dist;
    o.footprint_cell = footprint_cell;
    o.footprint_close = footprint_close;
    o.dedup_angle_deg = dedup_angle_deg;
    o.dedup_dist = dedup_dist;
    return o;
  }
};

inline PipelineConfig config_from_json(const io::Json& j) {
  PipelineConfig c;
  if (!j.is_object()) throw Error(ErrorKind::Input, "config must be a JSON object");
  io::parse_guard("config", [&] {
    for (const auto& [key, value] : j.items()) {
      auto set = [&](const char* name, auto& field) {
        if (key != name) return false;
        field = value.get<std::decay_t<decltype(field)>>();
        return true;
      };
      const bool known =
          set("k", c.k) || set("kmeans_iterations", c.kmeans_iterations) || set("min_mask_pixels", c.min_mask_pixels) ||
          set("depth_tol_rel", c.depth_tol_rel) || set("overlap_thresh", c.overlap_thresh) ||
          set("normal_angle_thresh_deg", c.normal_angle_thresh_deg) || set("ransac_inlier_dist", c.ransac_inlier_dist) ||
          set("ransac_iterations", c.ransac_iterations) || set("min_inlier_ratio", c.min_inlier_ratio) ||
          set("cloud_stride", c.cloud_stride) || set("coplanar_angle_deg", c.coplanar_angle_deg) ||
          set("coplanar_dist", c.coplanar_dist) || set("grazing_angle_deg", c.grazing_angle_deg) || set("voxel_size", c.voxel_size) ||
          set("max_resolution", c.max_resolution) || set("depth_margin_rel", c.depth_margin_rel) ||
          set("q_samples", c.q_samples) || set("per_plane", c.per_plane) ||
          set("candidate_stride", c.candidate_stride) || set("near_surface_dist", c.near_surface_dist) ||
          set("footprint_cell", c.footprint_cell) || set("footprint_close", c.footprint_close) || set("dedup_angle_deg", c.dedup_angle_deg) ||
          set("dedup_dist", c.dedup_dist) || set("coverage_samples", c.coverage_samples) ||
          set("ellipse_views", c.ellipse_views) || set("n_loops", c.n_loops) ||
          set("views_per_loop", c.views_per_loop) || set("seed", c.seed) || set("mono_a", c.mono_a) ||
          set("mono_b", c.mono_b) || set("mono_noise", c.mono_noise) || set("export_voxel", c.export_voxel) ||
          set("export_stride", c.export_stride) || set("fscore_thresh", c.fscore_thresh) ||
          set("threads", c.threads) || set("input", c.input) || set("out", c.out);
      if (!known) throw Error(ErrorKind::Input, "unknown config key '" + key + "'");
    }
    return 0;
  });
  c.validate();
  return c;
}

inline io::Json config_json(const PipelineConfig& c) {
  return io::Json{{"k", c.k},
                  {"kmeans_iterations", c.kmeans_iterations},
                  {"min_mask_pixels", c.min_mask_pixels},
                  {"depth_tol_rel", c.depth_tol_rel},
                  {"overlap_thresh", c.overlap_thresh},
                  {"normal_angle_thresh_deg", c.normal_angle_thresh_deg},
                  {"ransac_inlier_dist", c.ransac_inlier_dist},
                  {"ransac_iterations", c.ransac_iterations},
                  {"min_inlier_ratio", c.min_inlier_ratio},
                  {"cloud_stride", c.cloud_stride},
                  {"coplanar_angle_deg", c.coplanar_angle_deg},
                  {"coplanar_dist", c.coplanar_dist},
                  {"grazing_angle_deg", c.grazing_angle_deg},
                  {"voxel_size", c.voxel_size},
                  {"max_resolution", c.max_resolution},
                  {"depth_margin_rel", c.depth_margin_rel},
                  {"q_samples", c.q_samples},
                  {"per_plane", c.per_plane},
                  {"candidate_stride", c.candidate_stride},
                  {"near_surface_dist", c.near_surface_dist},
                  {"footprint_cell", c.footprint_cell},
                  {"footprint_close", c.footprint_close},
                  {"dedup_angle_deg", c.dedup_angle_deg},
                  {"dedup_dist", c.dedup_dist},
                  {"coverage_samples", c.coverage_samples},
                  {"ellipse_views", c.ellipse_views},
                  {"n_loops", c.n_loops},
                  {"views_per_loop", c.views_per_loop},
                  {"seed", c.seed},
                  {"mono_a", c.mono_a},
                  {"mono_b", c.mono_b},
                  {"mono_noise", c.mono_noise},
                  {"export_voxel", c.export_voxel},
                  {"export_stride", c.export_stride},
                  {"fscore_thresh", c.fscore_thresh},
                  {"input", c.input},
                  {"out", c.out}};
}

// ---------------------------------------------------------------------------
// Adapters.

/// Completes the invisible (mask = 0) pixels of a raw novel-view render.
class InpainterAdapter {
 public:
  virtual ~InpainterAdapter() = default;
  virtual ColorImage inpaint(const std::vector<ViewData>& references, const Camera& camera, const ColorImage& raw,
                             const VisibilityMask& mask) = 0;
};

/// Copies ground-truth color from a synthetic scene when one is given;
/// otherwise fills with the mean color of the reference view nearest to the
/// camera.
class StubInpainter : public InpainterAdapter {
 public:
  explicit StubInpainter(std::optional<synth::SceneSpec> scene = std::nullopt) {
    if (scene) scene_.emplace(*scene);
  }

  ColorImage inpaint(const std::vector<ViewData>& references, const Camera& camera, const ColorImage& raw,
                     const VisibilityMask& mask) override {
    ColorImage out = raw;
    if (scene_) {
      const auto gt = synth::raycast_view(*scene_, camera);
      for (std::size_t i = 0; i < out.size(); ++i)
        if (!mask[i]) out[i] = gt.color[i];
      return out;
    }
    if (references.empty()) throw Error(ErrorKind::Adapter, "stub inpainter needs a reference view");
    std::size_t best = 0;
    for (std::size_t v = 1; v < references.size(); ++v)
      if ((references[v].camera.center() - camera.center()).norm() <
          (references[best].camera.center() - camera.center()).norm())
        best = v;
    double s[3] = {0, 0, 0};
    for (const auto& c : references[best].color.data()) {
      s[0] += c.r;
      s[1] += c.g;
      s[2] += c.b;
    }
    const double n = std::max<double>(1.0, static_cast<double>(references[best].color.size()));
    const Rgb mean{static_cast<std::uint8_t>(std::lround(s[0] / n)), static_cast<std::uint8_t>(std::lround(s[1] / n)),
                   static_cast<std::uint8_t>(std::lround(s[2] / n))};
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!mask[i]) out[i] = mean;
    return out;
  }

 private:
  std::optional<synth::CompiledScene> scene_;
};

/// Normals, instance labels and relative depth for a generated view, the
/// stand-in for running segmentation and monocular networks on it.
struct Annotation {
  NormalMap normals;
  InstanceMaskMap instances;
  DepthMap mono;
};

class ViewAnnotator {
 public:
  virtual ~ViewAnnotator() = default;
  virtual Annotation annotate(const Camera& camera, const ColorImage& color, std::uint64_t seed) = 0;
};

class SynthAnnotator : public ViewAnnotator {
 public:
  SynthAnnotator(const synth::SceneSpec& scene, double a, double b, double noise)
      : scene_(scene), a_(a), b_(b), noise_(noise) {}

  Annotation annotate(const Camera& camera, const ColorImage&, std::uint64_t seed) override {
    auto gt = synth::raycast_view(scene_, camera);
    return Annotation{std::move(gt.normals), std::move(gt.instances), synth::corrupt_mono(gt.depth, a_, b_, noise_, seed)};
  }

 private:
  synth::CompiledScene scene_;
  double a_, b_, noise_;
};

// ---------------------------------------------------------------------------
// State and stages.

struct NovelView {
  ViewProposal proposal;
  DepthMap rendered_depth;
  VisibilityMask visibility;
  ColorImage raw;
  ColorImage inpainted;
};

struct LoopRecord {
  int loop = 0;
  std::size_t visible_before = 0;
  std::size_t visible_after = 0;
  std::size_t views_added = 0;
  std::size_t views_skipped = 0;  // no visible plane anchor for the depth
};

struct State {
  int loop = 0;
  ViewSet views;
  std::vector<std::vector<PlaneMask2D>> masks;
  std::vector<GlobalPlane> planes;
  std::vector<GlobalPlane> rejected;
  std::vector<PlaneAwareDepth> plane_depths;
  double voxel_size = 0.0;
  std::optional<VisibilityGrid> grid;  // over the current training set
  std::vector<NovelView> novel;        // views added by the last loop
  std::vector<SupervisionMap> supervision;
  std::vector<LoopRecord> history;

  std::vector<DepthMap> geometry_depths() const {
    std::vector<DepthMap> out;
    for (const auto& d : plane_depths) out.push_back(d.depth);
    return out;
  }
};

/// Stage failures carry the stage name; input errors keep their kind.
template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t h = seed ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  h ^= h >> 31;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 29;
  return h;
}

inline std::vector<PlaneMask2D> extract_view_masks(const ViewData& v, int view_id, const PipelineConfig& cfg) {
  KMeansOptions km;
  km.k = cfg.k;
  km.max_iterations = cfg.kmeans_iterations;
  km.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(view_id));
  if (v.normals.raster().empty()) return {};
  std::size_t valid = 0;
  for (int y = 0; y < v.normals.height(); ++y)
    for (int x = 0; x < v.normals.width(); ++x) valid += v.normals.valid(x, y);
  if (valid == 0) return {};
  const auto clusters = cluster_normals(v.normals, km);
  const int min_px = cfg.min_mask_pixels > 0 ? cfg.min_mask_pixels : default_min_mask_pixels(v.camera.width(), v.camera.height());
  return extract_plane_masks(clusters.labels, v.instances, v.normals, min_px, view_id);
}

inline void estimate_planes(State& s, const PipelineConfig& cfg) {
  auto est = run_stage("fit-planes", [&] {
    return estimate_global_planes(s.views.cameras(), s.views.depths(), s.masks, cfg.plane_options());
  });
  s.planes = std::move(est.planes);
  s.rejected = std::move(est.rejected);
}

inline void compute_plane_depths(State& s, const PipelineConfig& cfg) {
  s.plane_depths.clear();
  for (std::size_t v = 0; v < s.views.views.size(); ++v) {
    const auto& view = s.views.views[v];
    const auto assign = mask_assignment_for_view(s.planes, static_cast<int>(v), s.masks[v].size());
    s.plane_depths.push_back(run_stage(
        "plane-depth",
        [&] { return build_plane_aware_depth(view.camera, s.planes, s.masks[v], assign, view.mono, cfg.grazing_angle_deg); }));
  }
}

/// Masks for every view, global planes and plane-aware depths.
inline State run_init(const PipelineConfig& cfg, ViewSet inputs) {
  cfg.validate();
  if (inputs.views.empty()) throw Error(ErrorKind::Input, "no input views");
  State s;
  s.views = std::move(inputs);
  for (std::size_t v = 0; v < s.views.views.size(); ++v)
    s.masks.push_back(
        run_stage("extract-planes", [&] { return extract_view_masks(s.views.views[v], static_cast<int>(v), cfg); }));
  estimate_planes(s, cfg);
  compute_plane_depths(s, cfg);
  s.voxel_size = cfg.voxel_size;
  return s;
}

inline GridOptions grid_options(const PipelineConfig& cfg, double voxel_size) {
  GridOptions g;
  g.voxel_size = voxel_size;
  g.max_resolution = cfg.max_resolution;
  g.depth_margin_rel = cfg.depth_margin_rel;
  return g;
}

/// Grid over the current training set; fixes the voxel size on first use.
inline VisibilityGrid training_grid(State& s, const PipelineConfig& cfg) {
  auto grid = run_stage("build-grid",
                        [&] { return build_grid(s.geometry_depths(), s.views.cameras(), grid_options(cfg, s.voxel_size)); });
  s.voxel_size = grid.voxel_size();
  return grid;
}

struct NovelRender {
  DepthMap depth;
  Raster<std::int32_t> plane_id;  // -1 where the plane set is missed
};

/// Plane-set ray cast with monocular depth aligned on the plane hits filling
/// the rest.
inline NovelRender render_novel_depth(const PlaneSetCaster& caster, const Camera& camera, const DepthMap& mono) {
  auto r = caster.render(camera);
  NovelRender out{std::move(r.depth), std::move(r.plane_id)};
  Raster<std::uint8_t> hits(camera.width(), camera.height(), 0);
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i] = out.plane_id[i] >= 0;
  MonoAlignment al;
  try {
    al = align_monocular(mono, out.depth, hits);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientData && e.kind() != ErrorKind::Degenerate) throw;
    return out;
  }
  for (int y = 0; y < camera.height(); ++y)
    for (int x = 0; x < camera.width(); ++x) {
      if (hits(x, y) || !mono.valid(x, y)) continue;
      const double d = al.a * mono(x, y) + al.b;
      if (d > 0.0) out.depth.set(x, y, d);
    }
  return out;
}

/// Depth of a generated view: plane hits on visible pixels that agree with
/// the aligned monocular depth, elsewhere that aligned depth. The alignment
/// is refit with residuals above max(3 MAD, tol_rel·depth) excluded until the
/// anchor set is stable. Nullopt with fewer than `min_anchor` anchors, when
/// under half of the visible hits survive, or for a non-positive scale.
inline std::optional<DepthMap> anchored_depth(const NovelRender& render, const VisibilityMask& visibility,
                                              const DepthMap& mono, std::size_t min_anchor, double tol_rel) {
  const int w = render.depth.width(), h = render.depth.height();
  Raster<std::uint8_t> candidate(w, h, 0);
  for (std::size_t i = 0; i < candidate.size(); ++i)
    candidate[i] = render.plane_id[i] >= 0 && visibility[i] != 0 && mono.raster()[i] > 0.0;
  Raster<std::uint8_t> anchor = candidate;
  std::size_t n_candidates = 0;
  for (auto a : candidate.data()) n_candidates += a;
  MonoAlignment al;
  for (int iter = 0; iter < 10; ++iter) {
    std::size_t n = 0;
    for (auto a : anchor.data()) n += a;
    if (n < std::max<std::size_t>(min_anchor, 2)) return std::nullopt;
    try {
      al = align_monocular(mono, render.depth, anchor);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientData && e.kind() != ErrorKind::Degenerate) throw;
      return std::nullopt;
    }
    std::vector<double> res;
    for (std::size_t i = 0; i < anchor.size(); ++i)
      if (anchor[i]) res.push_back(std::abs(al.a * mono.raster()[i] + al.b - render.depth.raster()[i]));
    std::nth_element(res.begin(), res.begin() + static_cast<std::ptrdiff_t>(res.size() / 2), res.end());
    const double mad = 1.4826 * res[res.size() / 2];
    Raster<std::uint8_t> next(w, h, 0);
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (!candidate[i]) continue;
      const double r = std::abs(al.a * mono.raster()[i] + al.b - render.depth.raster()[i]);
      next[i] = r <= std::max(3.0 * mad, tol_rel * render.depth.raster()[i]);
    }
    if (next == anchor) break;
    anchor = std::move(next);
  }
  std::size_t n_anchor = 0;
  for (auto a : anchor.data()) n_anchor += a;
  if (!(al.a > 0.0) || 2 * n_anchor < n_candidates || n_anchor < min_anchor) return std::nullopt;
  DepthMap out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (anchor(x, y)) {
        out.set(x, y, render.depth(x, y));
      } else if (mono.valid(x, y)) {
        const double d = al.a * mono(x, y) + al.b;
        if (d > 0.0) out.set(x, y, d);
      }
    }
  return out;
}

/// Colors of pixels marked visible, taken from the first training view that
/// observes the surface point.
inline ColorImage render_visible_color(const Camera& camera, const DepthMap& depth, const VisibilityMask& mask,
                                       const std::vector<ViewData>& views, const std::vector<DepthMap>& view_depths,
                                       double tol_rel) {
  ColorImage out(camera.width(), camera.height());
  parallel_for(0, static_cast<std::size_t>(camera.height()), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < camera.width(); ++x) {
      if (!mask(x, y) || !depth.valid(x, y)) continue;
      const Ray r = camera.unchecked_ray(Vec2(x, y));
      const Vec3 p = r.origin + depth(x, y) * r.dir;
      for (std::size_t v = 0; v < views.size(); ++v) {
        if (!view_observes(views[v].camera, view_depths[v], p, tol_rel)) continue;
        const auto px = views[v].camera.nearest_pixel(views[v].camera.project(p)->pixel);
        out(x, y) = views[v].color(px->x, px->y);
        break;
      }
    }
  });
  return out;
}

/// Inpainter call with the visible-pixel preservation contract enforced.
inline ColorImage checked_inpaint(InpainterAdapter& inpainter, const std::vector<ViewData>& refs, const Camera& camera,
                                  const ColorImage& raw, const VisibilityMask& mask) {
  ColorImage out;
  try {
    out = inpainter.inpaint(refs, camera, raw, mask);
  } catch (const Error& e) {
    throw Error(ErrorKind::Adapter, std::string("inpainter failed: ") + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Adapter, std::string("inpainter failed: ") + e.what());
  }
  if (!out.same_shape(raw)) throw Error(ErrorKind::Adapter, "inpainter changed the image size");
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i] && !(out[i] == raw[i])) throw Error(ErrorKind::Adapter, "inpainter altered a visible pixel");
  return out;
}

/// Plane-aware proposals (best scores first) plus elliptical views, capped
/// at views_per_loop and de-duplicated against the training cameras.
inline std::vector<ViewProposal> propose_views(const State& s, const VisibilityGrid& grid, const PipelineConfig& cfg,
                                               const std::vector<ViewData>& inputs_only) {
  std::vector<Camera> existing = s.views.cameras();
  std::vector<Camera> input_cams;
  for (const auto& v : inputs_only) input_cams.push_back(v.camera);
  const Bounds3 bounds = depth_bounds(s.geometry_depths(), s.views.cameras());
  const PlaneSetCaster caster(s.planes, cfg.footprint_cell, cfg.footprint_close);
  ScoringContext ctx;
  ctx.intrinsics = input_cams.front();
  ctx.up = mean_up(input_cams);
  ctx.scene_diagonal = bounds.diagonal();
  ctx.occluder = [&caster](const Ray& r) -> std::optional<double> {
    const auto h = caster.first_hit(r);
    if (!h) return std::nullopt;
    return h->t;
  };
  ctx.depth_tol_rel = cfg.depth_tol_rel;
  ctx.coverage_samples = static_cast<std::size_t>(cfg.coverage_samples);

  const int n_ellipse = std::min(cfg.ellipse_views, cfg.views_per_loop);
  const int n_plane = cfg.views_per_loop - n_ellipse;
  std::vector<ViewProposal> out;
  if (n_plane > 0 && !s.planes.empty()) {
    auto props = select_novel_views(s.planes, grid, ctx, cfg.selection_options(), existing);
    std::stable_sort(props.begin(), props.end(), [](const ViewProposal& a, const ViewProposal& b) { return a.score > b.score; });
    if (props.size() > static_cast<std::size_t>(n_plane)) props.resize(static_cast<std::size_t>(n_plane));
    out = std::move(props);
  }
  if (n_ellipse > 0) {
    const double phase = 2.399963229728653 * static_cast<double>(s.loop);  // golden angle
    const double dedup = cfg.dedup_dist > 0.0 ? cfg.dedup_dist : grid.voxel_size();
    for (auto& e : elliptical_trajectory(bounds, n_ellipse, input_cams, phase)) {
      bool dup = false;
      for (const auto& c : existing) dup = dup || poses_close(e.camera, c, dedup, cfg.dedup_angle_deg);
      for (const auto& p : out) dup = dup || poses_close(e.camera, p.camera, dedup, cfg.dedup_angle_deg);
      if (!dup) out.push_back(std::move(e));
    }
  }
  return out;
}

inline void compute_supervision(State& s, const PipelineConfig& cfg) {
  const auto cams = s.views.cameras();
  const auto depths = s.geometry_depths();
  const auto best = run_stage("assign-supervision",
                              [&] { return best_view_per_plane(s.planes, cams, depths, cfg.depth_tol_rel); });
  s.supervision.clear();
  for (std::size_t v = 0; v < cams.size(); ++v)
    s.supervision.push_back(run_stage("assign-supervision", [&] {
      return build_supervision_map(static_cast<int>(v), s.plane_depths[v], best, cams, depths, cfg.depth_tol_rel);
    }));
}

/// One geometry-guided loop. On any failure the input state is untouched.
inline State run_loop(const PipelineConfig& cfg, const State& state, InpainterAdapter& inpainter,
                      ViewAnnotator* annotator) {
  cfg.validate();
  if (state.views.views.empty()) throw Error(ErrorKind::Dependency, "loop needs an initialized workspace");
  State s = state;
  s.loop = state.loop + 1;
  s.novel.clear();
  LoopRecord rec;
  rec.loop = s.loop;
  const VisibilityGrid grid = s.grid ? *s.grid : training_grid(s, cfg);
  if (!s.grid) s.voxel_size = grid.voxel_size();
  rec.visible_before = grid.visible_count();

  std::vector<ViewData> inputs;
  for (const auto& v : s.views.views)
    if (!v.generated) inputs.push_back(v);
  if (inputs.empty()) inputs = s.views.views;
  const auto proposals = run_stage("select-views", [&] { return propose_views(s, grid, cfg, inputs); });

  const PlaneSetCaster caster(s.planes, cfg.footprint_cell, cfg.footprint_close);
  const auto train_depths = s.geometry_depths();
  std::vector<ViewData> added;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const Camera& cam = proposals[i].camera;
    if (!annotator) throw Error(ErrorKind::Dependency, "generated views need an annotator (synthetic scene)");
    const std::uint64_t vseed = mix_seed(cfg.seed, 0x1000ULL * static_cast<std::uint64_t>(s.loop) + i);
    Annotation ann = annotator->annotate(cam, ColorImage(cam.width(), cam.height()), vseed);
    NovelView nv;
    nv.proposal = proposals[i];
    const auto render = run_stage("render-visibility", [&] { return render_novel_depth(caster, cam, ann.mono); });
    nv.rendered_depth = render.depth;
    nv.visibility = run_stage("render-visibility", [&] { return render_visibility(grid, cam, nv.rendered_depth, cfg.q_samples); });
    nv.raw = render_visible_color(cam, nv.rendered_depth, nv.visibility, s.views.views, train_depths, cfg.depth_tol_rel);
    nv.inpainted = checked_inpaint(inpainter, s.views.views, cam, nv.raw, nv.visibility);
    const std::size_t min_anchor =
        static_cast<std::size_t>(cfg.min_mask_pixels > 0 ? cfg.min_mask_pixels : default_min_mask_pixels(cam.width(), cam.height()));
    auto depth = anchored_depth(render, nv.visibility, ann.mono, min_anchor, cfg.depth_tol_rel);
    if (!depth) {
      ++rec.views_skipped;
      continue;
    }
    ViewData vd;
    vd.name = "gen" + std::to_string(s.loop) + "_" + std::to_string(i);
    vd.camera = cam;
    vd.color = nv.inpainted;
    vd.depth = std::move(*depth);
    vd.normals = std::move(ann.normals);
    vd.instances = std::move(ann.instances);
    vd.mono = std::move(ann.mono);
    vd.generated = true;
    added.push_back(std::move(vd));
    s.novel.push_back(std::move(nv));
  }

  for (auto& v : added) {
    const int id = static_cast<int>(s.views.views.size());
    s.masks.push_back(run_stage("extract-planes", [&] { return extract_view_masks(v, id, cfg); }));
    s.views.views.push_back(std::move(v));
  }
  estimate_planes(s, cfg);
  compute_plane_depths(s, cfg);
  compute_supervision(s, cfg);
  s.grid = training_grid(s, cfg);
  rec.visible_after = s.grid->visible_count();
  rec.views_added = added.size();
  s.history.push_back(rec);
  return s;
}

// ---------------------------------------------------------------------------
// Export.

/// Voxel-averaged points and normals, in ascending voxel-key order.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) return cloud;
  struct Acc {
    Vec3 p = Vec3::Zero(), n = Vec3::Zero();
    std::size_t count = 0;
  };
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Acc> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const auto key = std::make_tuple(static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                                     static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                                     static_cast<std::int64_t>(std::floor(p.z() / voxel)));
    auto& a = cells[key];
    a.p += p;
    if (cloud.has_normals()) a.n += cloud.normals[i];
    ++a.count;
  }
  PointCloud out;
  for (const auto& [key, a] : cells) {
    out.points.push_back(a.p / static_cast<double>(a.count));
    if (cloud.has_normals()) {
      out.normals.push_back(a.n.norm() > 1e-9 ? Vec3(a.n.normalized()) : cloud.normals.front());
    }
  }
  return out;
}

/// World-frame normals for a depth map: the given per-pixel normal where
/// available, else finite differences, oriented toward the camera.
inline PointCloud depth_cloud_with_normals(const Camera& cam, const DepthMap& depth, int stride,
                                           const std::function<std::optional<Vec3>(int, int)>& known_normal) {
  PointCloud out;
  auto point = [&](int x, int y) -> std::optional<Vec3> {
    if (!depth.raster().in_bounds(x, y) || !depth.valid(x, y)) return std::nullopt;
    const Ray r = cam.unchecked_ray(Vec2(x, y));
    return r.origin + depth(x, y) * r.dir;
  };
  for (int y = 0; y < cam.height(); y += stride)
    for (int x = 0; x < cam.width(); x += stride) {
      const auto p = point(x, y);
      if (!p) continue;
      std::optional<Vec3> n = known_normal(x, y);
      if (!n) {
        const auto px = point(x + 1, y) ? point(x + 1, y) : point(x - 1, y);
        const auto py = point(x, y + 1) ? point(x, y + 1) : point(x, y - 1);
        if (px && py) {
          const Vec3 c = (*px - *p).cross(*py - *p);
          if (c.norm() > 1e-12) n = c.normalized();
        }
      }
      Vec3 nn = n ? *n : Vec3(-cam.unchecked_ray(Vec2(x, y)).dir.normalized());
      if (nn.dot(cam.center() - *p) < 0.0) nn = -nn;
      out.points.push_back(*p);
      out.normals.push_back(nn);
      out.sources.push_back(PointSource{-1, x, y});
    }
  return out;
}

struct ExportResult {
  PointCloud cloud;
  std::optional<PointCloud> ground_truth;
  std::optional<ReconstructionMetrics> metrics;
};

inline ExportResult export_scene(const State& s, const PipelineConfig& cfg) {
  if (s.views.views.empty() || s.plane_depths.empty()) throw Error(ErrorKind::Dependency, "export needs processed views");
  std::map<int, const GlobalPlane*> by_id;
  for (const auto& p : s.planes) by_id[p.id] = &p;
  PointCloud fused;
  for (std::size_t v = 0; v < s.views.views.size(); ++v) {
    const auto& pd = s.plane_depths[v];
    auto c = depth_cloud_with_normals(s.views.views[v].camera, pd.depth, cfg.export_stride,
                                      [&](int x, int y) -> std::optional<Vec3> {
                                        if (pd.source_at(x, y) != DepthSource::Plane) return std::nullopt;
                                        return by_id.at(pd.plane_id(x, y))->normal;
                                      });
    for (auto& src : c.sources) src.view = static_cast<int>(v);
    fused.append(c);
  }
  ExportResult out;
  out.cloud = voxel_downsample(fused, cfg.export_voxel);
  if (s.views.scene) {
    const synth::CompiledScene scene(*s.views.scene);
    PointCloud gt;
    for (const auto& view : s.views.views) {
      const auto b = synth::raycast_view(scene, view.camera);
      const Mat3 rt = view.camera.rotation().transpose();
      gt.append(depth_cloud_with_normals(view.camera, b.depth, cfg.export_stride, [&](int x, int y) -> std::optional<Vec3> {
        if (!b.normals.valid(x, y)) return std::nullopt;
        return Vec3(rt * b.normals(x, y));
      }));
    }
    out.ground_truth = voxel_downsample(gt, cfg.export_voxel);
    if (!out.cloud.empty() && !out.ground_truth->empty())
      out.metrics = eval_reconstruction(out.cloud, *out.ground_truth, cfg.fscore_thresh);
  }
  return out;
}

inline io::Json metrics_json(const ReconstructionMetrics& m) {
  io::Json j{{"chamfer", m.chamfer},   {"accuracy", m.accuracy}, {"completeness", m.completeness},
             {"fscore", m.fscore},     {"precision", m.precision}, {"recall", m.recall}};
  if (m.has_normals) {
    j["normal_consistency"] = m.normal_consistency;
    j["normal_accuracy"] = m.normal_accuracy;
    j["normal_completeness"] = m.normal_completeness;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Workspace writing.

inline void write_loop_dir(const std::string& out, const State& s) {
  const fs::path dir = fs::path(out) / ("loop_" + std::to_string(s.loop));
  write_view_set(dir.string(), s.views);
  write_planes(dir.string(), s.planes);
  for (std::size_t v = 0; v < s.views.views.size(); ++v) {
    const auto& view = s.views.views[v];
    write_masks((dir / "masks").string(), view.name, s.masks[v], view.camera.width(), view.camera.height());
    write_plane_depth((dir / "depth").string(), view.name, s.plane_depths[v]);
  }
  if (s.loop > 0) {
    std::vector<ViewProposal> props;
    for (const auto& nv : s.novel) props.push_back(nv.proposal);
    io::write_json((dir / "proposals.json").string(), io::proposals_json(props));
    const std::size_t first = s.views.views.size() - s.novel.size();
    for (std::size_t i = 0; i < s.novel.size(); ++i) {
      const std::string name = s.views.views[first + i].name;
      const auto& nv = s.novel[i];
      io::write_depth_pfm((dir / "novel" / (name + "_rendered.pfm")).string(), nv.rendered_depth);
      io::write_png8((dir / "novel" / (name + "_visibility.png")).string(), visibility_mask_image(nv.visibility));
      io::write_png_rgb((dir / "novel" / (name + "_raw.png")).string(), nv.raw);
      io::write_png_rgb((dir / "novel" / (name + "_inpainted.png")).string(), nv.inpainted);
    }
  }
  for (std::size_t v = 0; v < s.supervision.size(); ++v)
    write_supervision((dir / "supervision").string(), s.views.views[v].name, s.supervision[v]);
  if (s.grid) io::write_grid((dir / "grid.bin").string(), *s.grid);
  io::Json hist = io::Json::array();
  for (const auto& h : s.history)
    hist.push_back(io::Json{{"loop", h.loop},
                            {"visible_before", h.visible_before},
                            {"visible_after", h.visible_after},
                            {"views_added", h.views_added},
                            {"views_skipped", h.views_skipped}});
  io::write_json((dir / "state.json").string(), io::Json{{"loop", s.loop},
                                                         {"voxel_size", s.voxel_size},
                                                         {"n_views", s.views.views.size()},
                                                         {"n_planes", s.planes.size()},
                                                         {"history", hist}});
}

/// Reloads a loop directory written by write_loop_dir.
inline State read_loop_dir(const std::string& dir) {
  State s;
  s.views = read_view_set(dir);
  s.planes = read_planes(dir);
  for (std::size_t v = 0; v < s.views.views.size(); ++v) {
    const auto& name = s.views.views[v].name;
    s.masks.push_back(read_masks((fs::path(dir) / "masks").string(), name, static_cast<int>(v)));
    s.plane_depths.push_back(read_plane_depth((fs::path(dir) / "depth").string(), name));
  }
  const auto st = io::read_json((fs::path(dir) / "state.json").string());
  io::parse_guard("state.json", [&] {
    s.loop = st.at("loop").get<int>();
    s.voxel_size = st.at("voxel_size").get<double>();
    for (const auto& h : st.at("history"))
      s.history.push_back(LoopRecord{h.at("loop").get<int>(), h.at("visible_before").get<std::size_t>(),
                                     h.at("visible_after").get<std::size_t>(), h.at("views_added").get<std::size_t>(),
                                     h.value("views_skipped", std::size_t{0})});
    return 0;
  });
  if (fs::exists(fs::path(dir) / "grid.bin")) s.grid = io::read_grid((fs::path(dir) / "grid.bin").string());
  return s;
}

/// Synthetic inputs: ray-cast every scene camera, mono corrupted per view.
inline ViewSet synth_inputs(const synth::SceneSpec& spec, double mono_a, double mono_b, double mono_noise,
                            std::uint64_t seed) {
  const synth::CompiledScene scene(spec);
  ViewSet set;
  set.scene = spec;
  for (std::size_t i = 0; i < spec.cameras.size(); ++i) {
    auto b = synth::raycast_view(scene, spec.cameras[i]);
    ViewData v;
    char name[16];
    std::snprintf(name, sizeof(name), "view%03zu", i);
    v.name = name;
    v.camera = spec.cameras[i];
    v.color = std::move(b.color);
    v.mono = synth::corrupt_mono(b.depth, mono_a, mono_b, mono_noise, mix_seed(seed, 0x5000 + i));
    v.depth = std::move(b.depth);
    v.normals = std::move(b.normals);
    v.instances = std::move(b.instances);
    set.views.push_back(std::move(v));
  }
  return set;
}

}  // namespace planegeo::pipeline
