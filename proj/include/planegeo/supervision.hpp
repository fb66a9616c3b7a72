#pragma once

// Single-source color supervision per pixel. Planar pixels take the view
// that observes their plane most completely; other pixels take the first
// view in order that observes their surface point.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/plane_depth.hpp"
#include "planegeo/plane_global.hpp"

namespace planegeo {

/// True when `view` sees x as its first surface (nearest pixel depth agrees
/// within tol_rel).
inline bool view_observes(const Camera& camera, const DepthMap& depth, const Vec3& x, double tol_rel) {
  const auto proj = camera.project(x);
  if (!proj) return false;
  const auto px = camera.nearest_pixel(proj->pixel);
  if (!px || !depth.valid(px->x, px->y)) return false;
  return depth_agrees(proj->z, depth(px->x, px->y), tol_rel);
}

struct BestViews {
  std::map<int, int> best;                     // plane id -> view
  std::map<int, std::vector<std::size_t>> counts;  // plane id -> per-view observed support count
  std::vector<int> unobservable;               // planes seen by no view
};

/// Views are indexed in supervision order (inputs first, then generated);
/// ties go to the lower index.
inline BestViews best_view_per_plane(const std::vector<GlobalPlane>& planes, const std::vector<Camera>& cameras,
                                     const std::vector<DepthMap>& depths, double tol_rel = 0.01) {
  if (depths.size() != cameras.size()) throw Error(ErrorKind::Input, "camera/depth count mismatch");
  BestViews out;
  std::vector<std::vector<std::size_t>> counts(planes.size(), std::vector<std::size_t>(cameras.size(), 0));
  parallel_for(0, planes.size() * cameras.size(), [&](std::size_t job) {
    const std::size_t k = job / cameras.size();
    const std::size_t v = job % cameras.size();
    std::size_t n = 0;
    for (const auto& p : planes[k].support.points) n += view_observes(cameras[v], depths[v], p, tol_rel);
    counts[k][v] = n;
  });
  for (std::size_t k = 0; k < planes.size(); ++k) {
    int best = -1;
    std::size_t best_n = 0;
    for (std::size_t v = 0; v < cameras.size(); ++v)
      if (counts[k][v] > best_n) {
        best_n = counts[k][v];
        best = static_cast<int>(v);
      }
    if (best < 0) out.unobservable.push_back(planes[k].id);
    else out.best[planes[k].id] = best;
    out.counts[planes[k].id] = std::move(counts[k]);
  }
  return out;
}

enum class RegionKind : std::uint8_t { Unassigned, NonPlanar, Planar };

struct SupervisionMap {
  int view_id = -1;
  Raster<std::int32_t> source_view;  // -1: unassigned (self-supervised)
  Raster<std::uint8_t> region_kind;  // RegionKind
  Raster<std::int32_t> plane_id;     // set for Planar pixels

  int width() const { return source_view.width(); }
  int height() const { return source_view.height(); }
  RegionKind kind_at(int x, int y) const { return static_cast<RegionKind>(region_kind(x, y)); }

  /// 16-bit source image: view id + 1, 0 = unassigned.
  Raster<std::uint16_t> source_image() const {
    Raster<std::uint16_t> img(width(), height(), 0);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint16_t>(source_view[i] + 1);
    return img;
  }
  /// 16-bit kind image: 0 unassigned, 1 non-planar, 1000 + plane id planar.
  Raster<std::uint16_t> kind_image() const {
    Raster<std::uint16_t> img(width(), height(), 0);
    for (std::size_t i = 0; i < img.size(); ++i) {
      switch (static_cast<RegionKind>(region_kind[i])) {
        case RegionKind::Unassigned: img[i] = 0; break;
        case RegionKind::NonPlanar: img[i] = 1; break;
        case RegionKind::Planar: img[i] = static_cast<std::uint16_t>(kPlaneTagBase + plane_id[i]); break;
      }
    }
    return img;
  }
};

/// `cameras` / `depths` are all views in supervision order; `view` indexes
/// them. A plane pixel whose surface point the plane's best view does not
/// observe is resolved by the first-observer rule like a non-planar pixel.
inline SupervisionMap build_supervision_map(int view, const PlaneAwareDepth& plane_depth, const BestViews& best_views,
                                            const std::vector<Camera>& cameras, const std::vector<DepthMap>& depths,
                                            double tol_rel = 0.01) {
  if (view < 0 || view >= static_cast<int>(cameras.size()) || depths.size() != cameras.size())
    throw Error(ErrorKind::Dependency, "supervision view has no depth");
  const Camera& cam = cameras[view];
  require_camera_shape(cam, plane_depth.depth, "plane-aware depth");
  const int w = cam.width(), h = cam.height();
  SupervisionMap out;
  out.view_id = view;
  out.source_view = Raster<std::int32_t>(w, h, -1);
  out.region_kind = Raster<std::uint8_t>(w, h, static_cast<std::uint8_t>(RegionKind::Unassigned));
  out.plane_id = Raster<std::int32_t>(w, h, -1);
  parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < w; ++x) {
      if (!plane_depth.depth.valid(x, y)) continue;
      const Ray r = cam.unchecked_ray(Vec2(x, y));
      const Vec3 p = r.origin + plane_depth.depth(x, y) * r.dir;
      if (plane_depth.source_at(x, y) == DepthSource::Plane) {
        const auto it = best_views.best.find(plane_depth.plane_id(x, y));
        if (it != best_views.best.end() && view_observes(cameras[it->second], depths[it->second], p, tol_rel)) {
          out.source_view(x, y) = it->second;
          out.region_kind(x, y) = static_cast<std::uint8_t>(RegionKind::Planar);
          out.plane_id(x, y) = it->first;
          continue;
        }
      }
      for (std::size_t v = 0; v < cameras.size(); ++v) {
        if (!view_observes(cameras[v], depths[v], p, tol_rel)) continue;
        out.source_view(x, y) = static_cast<std::int32_t>(v);
        out.region_kind(x, y) = static_cast<std::uint8_t>(RegionKind::NonPlanar);
        break;
      }
    }
  });
  return out;
}

}  // namespace planegeo
