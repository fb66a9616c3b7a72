#pragma once

// Plane-aware depth: ray/plane intersection on planar pixels, affinely
// aligned monocular depth on the rest.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/plane_global.hpp"

namespace planegeo {

inline constexpr double kParallelEps = 1e-8;

enum class DepthHit { Hit, Parallel, Behind };

struct RayPlaneResult {
  DepthHit status = DepthHit::Parallel;
  double depth = 0.0;
  explicit operator bool() const noexcept { return status == DepthHit::Hit; }
};

/// t = (-n·o - d) / (n·r) for a z-normalized ray, so t is z-depth.
inline RayPlaneResult intersect_ray_plane(const Ray& ray, const Vec3& normal, double offset) {
  const double denom = normal.dot(ray.dir);
  if (std::abs(denom) < kParallelEps) return {DepthHit::Parallel, 0.0};
  const double t = (-normal.dot(ray.origin) - offset) / denom;
  if (!(t > 0.0)) return {DepthHit::Behind, t};
  return {DepthHit::Hit, t};
}

inline RayPlaneResult ray_plane_depth(const GlobalPlane& plane, const Camera& camera, const Vec2& pixel) {
  return intersect_ray_plane(camera.pixel_ray(pixel), plane.normal, plane.offset);
}

struct MonoAlignment {
  double a = 1.0;
  double b = 0.0;
  double rms = 0.0;
  std::size_t samples = 0;
};

/// Least squares a·mono + b ≈ target over pixels where `use` is set and both
/// maps are valid. Solved in centred form (same normal equations).
inline MonoAlignment align_monocular(const DepthMap& mono, const DepthMap& target, const Raster<std::uint8_t>& use) {
  require_same_shape(mono.raster(), target.raster(), "alignment target");
  require_same_shape(mono.raster(), use, "alignment mask");
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  const int w = mono.width(), h = mono.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (use(x, y) && mono.valid(x, y) && target.valid(x, y)) {
        sx += mono(x, y);
        sy += target(x, y);
        ++n;
      }
  if (n < 2) throw Error(ErrorKind::InsufficientData, "fewer than 2 planar pixels for mono alignment");
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (use(x, y) && mono.valid(x, y) && target.valid(x, y)) {
        const double dx = mono(x, y) - mx;
        sxx += dx * dx;
        sxy += dx * (target(x, y) - my);
      }
  if (!(sxx > 0.0) || sxx <= 1e-24 * std::max(1.0, mx * mx) * static_cast<double>(n))
    throw Error(ErrorKind::Degenerate, "monocular depth has zero variance on planar pixels");
  MonoAlignment out;
  out.a = sxy / sxx;
  out.b = my - out.a * mx;
  out.samples = n;
  double sq = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (use(x, y) && mono.valid(x, y) && target.valid(x, y)) {
        const double r = out.a * mono(x, y) + out.b - target(x, y);
        sq += r * r;
      }
  out.rms = std::sqrt(sq / static_cast<double>(n));
  return out;
}

/// Per-pixel provenance: 0 invalid, 1 aligned mono, kPlaneTagBase + id plane.
enum class DepthSource : std::uint8_t { Invalid, AlignedMono, Plane };
inline constexpr std::uint16_t kPlaneTagBase = 1000;

struct PlaneAwareDepth {
  DepthMap depth;
  Raster<std::int32_t> plane_id;  // -1 unless the pixel is PLANE-tagged
  Raster<std::uint8_t> source;    // DepthSource
  MonoAlignment alignment;
  bool alignment_failed = false;

  DepthSource source_at(int x, int y) const { return static_cast<DepthSource>(source(x, y)); }

  /// 16-bit tag image: 0 invalid, 1 aligned mono, 1000 + plane id.
  Raster<std::uint16_t> tag_image() const {
    Raster<std::uint16_t> tags(depth.width(), depth.height(), 0);
    for (std::size_t i = 0; i < tags.size(); ++i) {
      switch (static_cast<DepthSource>(source[i])) {
        case DepthSource::Invalid: tags[i] = 0; break;
        case DepthSource::AlignedMono: tags[i] = 1; break;
        case DepthSource::Plane: tags[i] = static_cast<std::uint16_t>(kPlaneTagBase + plane_id[i]); break;
      }
    }
    return tags;
  }

  static PlaneAwareDepth from_tags(DepthMap depth, const Raster<std::uint16_t>& tags, MonoAlignment alignment) {
    require_same_shape(depth.raster(), tags, "plane-aware tag image");
    PlaneAwareDepth out;
    out.plane_id = Raster<std::int32_t>(tags.width(), tags.height(), -1);
    out.source = Raster<std::uint8_t>(tags.width(), tags.height(), 0);
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i] >= kPlaneTagBase) {
        out.source[i] = static_cast<std::uint8_t>(DepthSource::Plane);
        out.plane_id[i] = tags[i] - kPlaneTagBase;
      } else if (tags[i] == 1) {
        out.source[i] = static_cast<std::uint8_t>(DepthSource::AlignedMono);
      }
    }
    out.depth = std::move(depth);
    out.alignment = alignment;
    return out;
  }
};

/// Plane pixels come from the plane assigned to their mask; grazing rays
/// (|n·r| < 1e-8, or an incidence angle above `grazing_angle_deg`) fall back
/// to aligned mono, hits behind the camera are
/// invalid. (a, b) are fit on all valid plane pixels; if that fails the
/// alignment is (1, 0) and every non-plane pixel is invalid.
inline PlaneAwareDepth build_plane_aware_depth(const Camera& camera, const std::vector<GlobalPlane>& planes,
                                               const std::vector<PlaneMask2D>& masks,
                                               const std::vector<int>& mask_plane, const DepthMap& mono,
                                               double grazing_angle_deg = 90.0) {
  require_camera_shape(camera, mono, "monocular depth");
  const double min_cos = grazing_angle_deg >= 90.0 ? 0.0 : std::cos(grazing_angle_deg * M_PI / 180.0);
  if (mask_plane.size() != masks.size()) throw Error(ErrorKind::Input, "mask/plane assignment size mismatch");
  std::map<int, const GlobalPlane*> by_id;
  for (const auto& p : planes) by_id[p.id] = &p;

  const int w = camera.width(), h = camera.height();
  PlaneAwareDepth out;
  out.depth = DepthMap(w, h);
  out.plane_id = Raster<std::int32_t>(w, h, -1);
  out.source = Raster<std::uint8_t>(w, h, static_cast<std::uint8_t>(DepthSource::Invalid));
  Raster<std::int32_t> pixel_plane(w, h, -1);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    if (mask_plane[m] < 0) continue;
    if (!by_id.count(mask_plane[m])) throw Error(ErrorKind::Input, "mask references an unknown plane");
    for (const auto& p : masks[m].pixels) pixel_plane(p.x, p.y) = mask_plane[m];
  }

  Raster<std::uint8_t> planar(w, h, 0);
  Raster<std::uint8_t> grazing(w, h, 0);
  parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < w; ++x) {
      const int id = pixel_plane(x, y);
      if (id < 0) continue;
      const GlobalPlane& plane = *by_id.at(id);
      const Ray ray = camera.unchecked_ray(Vec2(x, y));
      const auto hit = intersect_ray_plane(ray, plane.normal, plane.offset);
      if (hit && std::abs(plane.normal.dot(ray.dir)) < min_cos * ray.dir.norm()) {
        grazing(x, y) = 1;
      } else if (hit) {
        out.depth.set(x, y, hit.depth);
        out.plane_id(x, y) = id;
        out.source(x, y) = static_cast<std::uint8_t>(DepthSource::Plane);
        planar(x, y) = 1;
      } else if (hit.status == DepthHit::Parallel) {
        grazing(x, y) = 1;
      }
    }
  });

  try {
    out.alignment = align_monocular(mono, out.depth, planar);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientData && e.kind() != ErrorKind::Degenerate) throw;
    out.alignment = MonoAlignment{};
    out.alignment_failed = true;
  }
  if (!out.alignment_failed) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (planar(x, y)) continue;
        if (pixel_plane(x, y) >= 0 && !grazing(x, y)) continue;  // behind the camera
        if (!mono.valid(x, y)) continue;
        const double d = out.alignment.a * mono(x, y) + out.alignment.b;
        if (!(d > 0.0)) continue;
        out.depth.set(x, y, d);
        out.source(x, y) = static_cast<std::uint8_t>(DepthSource::AlignedMono);
      }
    }
  }
  return out;
}

/// Mask -> plane id through plane membership (-1 for masks in no plane).
inline std::vector<int> mask_assignment_for_view(const std::vector<GlobalPlane>& planes, int view, std::size_t n_masks) {
  std::vector<int> out(n_masks, -1);
  for (const auto& p : planes)
    for (const auto& m : p.members)
      if (m.view == view && m.mask >= 0 && static_cast<std::size_t>(m.mask) < n_masks) out[m.mask] = p.id;
  return out;
}

}  // namespace planegeo
