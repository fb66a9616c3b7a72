#pragma once

// Novel view proposals. Plane-aware: for each plane, every visible voxel
// center is scored by R + |cos θ| - D looking at the plane centroid. Also an
// elliptical orbit around the scene center for diversity.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/plane_global.hpp"
#include "planegeo/plane_render.hpp"
#include "planegeo/vis_grid.hpp"

namespace planegeo {

/// First-hit z-depth along a z-normalized ray, or nullopt when nothing is hit.
using OccluderFn = std::function<std::optional<double>(const Ray&)>;

struct ScoreComponents {
  double coverage = 0.0;   // R
  double cos_theta = 0.0;  // |cos θ|
  double distance = 0.0;   // D, normalized by the scene diagonal
};

struct ViewProposal {
  Camera camera;
  int target_plane_id = -1;  // -1 for trajectory views
  double score = 0.0;
  ScoreComponents components;
  std::int64_t voxel = -1;
};

struct ScoringContext {
  Camera intrinsics;                 // only fx, fy, cx, cy, size are used
  Vec3 up = Vec3::UnitY();
  double scene_diagonal = 1.0;
  OccluderFn occluder;               // empty: no occlusion
  double depth_tol_rel = 0.01;
  std::size_t coverage_samples = 0;  // 0: every support point
};

/// Mean world up over reference cameras (camera -y axis).
inline Vec3 mean_up(const std::vector<Camera>& cameras) {
  Vec3 s = Vec3::Zero();
  for (const auto& c : cameras) s += c.up();
  if (s.norm() < 1e-9) return Vec3::UnitY();
  return s.normalized();
}

/// Deterministic subsample of a plane's support used for the coverage term.
inline std::vector<Vec3> coverage_points(const GlobalPlane& plane, std::size_t max_samples) {
  const auto& pts = plane.support.points;
  if (max_samples == 0 || pts.size() <= max_samples) return pts;
  const std::size_t step = (pts.size() + max_samples - 1) / max_samples;
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < pts.size(); i += step) out.push_back(pts[i]);
  return out;
}

inline Camera candidate_camera(const Vec3& c, const GlobalPlane& plane, const ScoringContext& ctx) {
  const Camera& k = ctx.intrinsics;
  return Camera::look_at(k.fx(), k.fy(), k.cx(), k.cy(), k.width(), k.height(), c, plane.centroid, ctx.up);
}

/// Score of one candidate center against a precomputed coverage sample.
inline ViewProposal score_candidate(const Vec3& c, const GlobalPlane& plane, const std::vector<Vec3>& samples,
                                    const ScoringContext& ctx) {
  const Vec3 view = plane.centroid - c;
  if (view.norm() < 1e-9) throw Error(ErrorKind::Degenerate, "candidate coincides with the plane centroid");
  ViewProposal out;
  out.camera = candidate_camera(c, plane, ctx);
  out.target_plane_id = plane.id;
  std::size_t covered = 0;
  for (const auto& p : samples) {
    const auto proj = out.camera.project(p);
    if (!proj || !out.camera.pixel_in_bounds(proj->pixel)) continue;
    if (ctx.occluder) {
      const Ray ray{c, (p - c) / proj->z};
      const auto hit = ctx.occluder(ray);
      if (hit && !depth_agrees(proj->z, *hit, ctx.depth_tol_rel)) continue;
    }
    ++covered;
  }
  out.components.coverage = samples.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(samples.size());
  out.components.cos_theta = std::abs(view.dot(plane.normal)) / view.norm();
  out.components.distance = std::abs(plane.signed_distance(c)) / std::max(ctx.scene_diagonal, 1e-12);
  out.score = out.components.coverage + out.components.cos_theta - out.components.distance;
  return out;
}

inline ViewProposal score_candidate(const Vec3& c, const GlobalPlane& plane, const ScoringContext& ctx) {
  return score_candidate(c, plane, coverage_points(plane, ctx.coverage_samples), ctx);
}

struct Candidate {
  Vec3 center;
  std::int64_t id = -1;  // tie-break key: lower wins
};

struct SelectionOptions {
  int per_plane = 1;
  int stride = 1;
  double near_surface_dist = 0.2;
  double footprint_cell = 0.02;
  int footprint_close = 2;
  double dedup_angle_deg = 5.0;
  double dedup_dist = 0.0;  // <= 0: the grid voxel size
};

/// True when the two poses are within `dist` of each other and their viewing
/// directions differ by at most `angle_deg`.
inline bool poses_close(const Camera& a, const Camera& b, double dist, double angle_deg) {
  return (a.center() - b.center()).norm() <= dist && angle_between_deg(a.forward(), b.forward()) <= angle_deg;
}

/// Best `per_plane` candidates for every plane (score descending, candidate
/// id ascending on ties), then pose de-duplication in plane order; proposals
/// close to an `existing` camera are dropped too.
inline std::vector<ViewProposal> select_from_candidates(const std::vector<GlobalPlane>& planes,
                                                        const std::vector<Candidate>& candidates,
                                                        const ScoringContext& ctx, const SelectionOptions& options,
                                                        double dedup_dist,
                                                        const std::vector<Camera>& existing = {}) {
  const PlaneSetCaster surfaces(planes, options.footprint_cell, options.footprint_close);
  std::vector<ViewProposal> ranked;
  for (const auto& plane : planes) {
    const auto samples = coverage_points(plane, ctx.coverage_samples);
    std::vector<std::optional<ViewProposal>> scored(candidates.size());
    parallel_for(0, candidates.size(), [&](std::size_t i) {
      const Vec3& c = candidates[i].center;
      if ((plane.centroid - c).norm() < 1e-9) return;
      if (options.near_surface_dist > 0.0 && surfaces.near_surface(c, options.near_surface_dist)) return;
      scored[i] = score_candidate(c, plane, samples, ctx);
      scored[i]->voxel = candidates[i].id;
    });
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < scored.size(); ++i)
      if (scored[i]) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scored[a]->score != scored[b]->score) return scored[a]->score > scored[b]->score;
      return candidates[a].id < candidates[b].id;
    });
    const std::size_t keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(0, options.per_plane)));
    for (std::size_t r = 0; r < keep; ++r) ranked.push_back(*scored[order[r]]);
  }
  std::vector<ViewProposal> out;
  for (auto& p : ranked) {
    bool dup = false;
    for (const auto& q : out) dup = dup || poses_close(p.camera, q.camera, dedup_dist, options.dedup_angle_deg);
    for (const auto& e : existing) dup = dup || poses_close(p.camera, e, dedup_dist, options.dedup_angle_deg);
    if (!dup) out.push_back(std::move(p));
  }
  return out;
}

/// Visible voxel centers on the stride lattice, keyed by linear index.
inline std::vector<Candidate> grid_candidates(const VisibilityGrid& grid, int stride) {
  if (stride < 1) throw Error(ErrorKind::Input, "stride must be >= 1");
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < grid.voxel_count(); ++i) {
    if (!grid.visible(i)) continue;
    const auto c = grid.coords(i);
    if (c[0] % stride || c[1] % stride || c[2] % stride) continue;
    out.push_back(Candidate{grid.center(i), static_cast<std::int64_t>(i)});
  }
  return out;
}

inline std::vector<ViewProposal> select_novel_views(const std::vector<GlobalPlane>& planes, const VisibilityGrid& grid,
                                                    const ScoringContext& ctx, const SelectionOptions& options = {},
                                                    const std::vector<Camera>& existing = {}) {
  if (planes.empty()) throw Error(ErrorKind::Input, "view selection needs at least one plane");
  const auto candidates = grid_candidates(grid, options.stride);
  if (grid.visible_count() == 0) throw Error(ErrorKind::EmptyScene, "no visible voxels");
  const double dedup = options.dedup_dist > 0.0 ? options.dedup_dist : grid.voxel_size();
  return select_from_candidates(planes, candidates, ctx, options, dedup, existing);
}

/// n poses evenly spaced in angle (starting at `phase` radians) on an
/// axis-aligned x/z ellipse at the mean camera height, semi-axes 0.4x the
/// scene extent, all looking at the scene center. Assumes a y-up world.
inline std::vector<ViewProposal> elliptical_trajectory(const Bounds3& scene, int n_views,
                                                       const std::vector<Camera>& reference, double phase = 0.0) {
  if (n_views < 1) throw Error(ErrorKind::Input, "n_views must be >= 1");
  if (reference.empty()) throw Error(ErrorKind::Input, "elliptical trajectory needs a reference camera");
  const Vec3 ext = scene.extent();
  if (scene.empty() || !(ext.x() > 0.0) || !(ext.z() > 0.0))
    throw Error(ErrorKind::Degenerate, "scene bounds have zero extent");
  double height = 0.0;
  for (const auto& c : reference) height += c.center().y();
  height /= static_cast<double>(reference.size());
  const Vec3 target = scene.center();
  const Vec3 up = mean_up(reference);
  const Camera& k = reference.front();
  std::vector<ViewProposal> out;
  for (int i = 0; i < n_views; ++i) {
    const double theta = phase + 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_views);
    const Vec3 eye(target.x() + 0.4 * ext.x() * std::cos(theta), height, target.z() + 0.4 * ext.z() * std::sin(theta));
    ViewProposal p;
    p.camera = Camera::look_at(k.fx(), k.fy(), k.cx(), k.cy(), k.width(), k.height(), eye, target, up);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace planegeo
