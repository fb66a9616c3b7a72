#pragma once

// Bounded global planes: each plane is limited to the in-plane footprint of
// its support points, so the plane set can be ray-cast like a surface model.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/plane_depth.hpp"
#include "planegeo/plane_global.hpp"

namespace planegeo {

/// Occupancy of a plane's support on a square in-plane lattice, closed
/// (dilated then eroded) by `close` cells so sampling gaps fill in without
/// growing the outline.
class PlaneFootprint {
 public:
  PlaneFootprint() = default;
  PlaneFootprint(const GlobalPlane& plane, double cell_size, int close = 1)
      : normal_(plane.normal), offset_(plane.offset), cell_(cell_size) {
    if (!(cell_size > 0.0)) throw Error(ErrorKind::Input, "footprint cell size must be positive");
    if (close < 0) throw Error(ErrorKind::Input, "footprint closing radius must be >= 0");
    origin_ = plane.centroid;
    const Vec3 ref = std::abs(normal_.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    u_ = normal_.cross(ref).normalized();
    v_ = normal_.cross(u_).normalized();
    if (plane.support.empty()) return;
    std::int64_t imin = INT64_MAX, jmin = INT64_MAX, imax = INT64_MIN, jmax = INT64_MIN;
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    cells.reserve(plane.support.size());
    for (const auto& p : plane.support.points) {
      const auto c = cell_of(p);
      cells.push_back(c);
      imin = std::min(imin, c.first);
      imax = std::max(imax, c.first);
      jmin = std::min(jmin, c.second);
      jmax = std::max(jmax, c.second);
    }
    i0_ = imin - close;
    j0_ = jmin - close;
    ni_ = imax - imin + 1 + 2 * close;
    nj_ = jmax - jmin + 1 + 2 * close;
    std::vector<std::uint8_t> base(static_cast<std::size_t>(ni_ * nj_), 0);
    for (const auto& c : cells) base[static_cast<std::size_t>((c.first - i0_) * nj_ + (c.second - j0_))] = 1;
    auto at = [&](const std::vector<std::uint8_t>& g, std::int64_t i, std::int64_t j) {
      return i >= 0 && j >= 0 && i < ni_ && j < nj_ && g[static_cast<std::size_t>(i * nj_ + j)] != 0;
    };
    std::vector<std::uint8_t> dilated(base.size(), 0);
    for (std::int64_t i = 0; i < ni_; ++i)
      for (std::int64_t j = 0; j < nj_; ++j) {
        bool any = false;
        for (int di = -close; di <= close && !any; ++di)
          for (int dj = -close; dj <= close && !any; ++dj) any = at(base, i + di, j + dj);
        dilated[static_cast<std::size_t>(i * nj_ + j)] = any;
      }
    occupied_.assign(base.size(), 0);
    for (std::int64_t i = 0; i < ni_; ++i)
      for (std::int64_t j = 0; j < nj_; ++j) {
        bool all = true;
        for (int di = -close; di <= close && all; ++di)
          for (int dj = -close; dj <= close && all; ++dj) all = at(dilated, i + di, j + dj);
        occupied_[static_cast<std::size_t>(i * nj_ + j)] = all;
      }
  }

  /// True when the in-plane projection of x lands on an occupied cell.
  bool contains(const Vec3& x) const {
    if (occupied_.empty()) return false;
    const auto c = cell_of(x);
    const std::int64_t i = c.first - i0_, j = c.second - j0_;
    if (i < 0 || j < 0 || i >= ni_ || j >= nj_) return false;
    return occupied_[static_cast<std::size_t>(i * nj_ + j)] != 0;
  }

  double distance(const Vec3& x) const { return std::abs(normal_.dot(x) + offset_); }
  const Vec3& normal() const noexcept { return normal_; }
  double offset() const noexcept { return offset_; }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(const Vec3& x) const {
    const Vec3 q = x - origin_;
    return {static_cast<std::int64_t>(std::floor(u_.dot(q) / cell_)),
            static_cast<std::int64_t>(std::floor(v_.dot(q) / cell_))};
  }

  Vec3 normal_ = Vec3::UnitZ();
  double offset_ = 0.0;
  double cell_ = 0.05;
  Vec3 origin_ = Vec3::Zero(), u_ = Vec3::UnitX(), v_ = Vec3::UnitY();
  std::int64_t i0_ = 0, j0_ = 0, ni_ = 0, nj_ = 0;
  std::vector<std::uint8_t> occupied_;
};

struct PlaneHit {
  double t = 0.0;
  int plane_id = -1;
};

/// Nearest-hit ray caster over bounded planes.
class PlaneSetCaster {
 public:
  PlaneSetCaster() = default;
  PlaneSetCaster(const std::vector<GlobalPlane>& planes, double cell_size, int close = 1) {
    for (const auto& p : planes) {
      ids_.push_back(p.id);
      footprints_.emplace_back(p, cell_size, close);
    }
  }

  std::optional<PlaneHit> first_hit(const Ray& ray) const {
    std::optional<PlaneHit> best;
    for (std::size_t k = 0; k < footprints_.size(); ++k) {
      const auto hit = intersect_ray_plane(ray, footprints_[k].normal(), footprints_[k].offset());
      if (!hit) continue;
      if (best && hit.depth >= best->t) continue;
      if (!footprints_[k].contains(ray.origin + hit.depth * ray.dir)) continue;
      best = PlaneHit{hit.depth, ids_[k]};
    }
    return best;
  }

  /// True when x lies within `dist` of a plane and over its footprint.
  bool near_surface(const Vec3& x, double dist) const {
    for (const auto& f : footprints_)
      if (f.distance(x) < dist && f.contains(x)) return true;
    return false;
  }

  struct Rendered {
    DepthMap depth;
    Raster<std::int32_t> plane_id;
  };

  Rendered render(const Camera& camera) const {
    Rendered out{DepthMap(camera.width(), camera.height()), Raster<std::int32_t>(camera.width(), camera.height(), -1)};
    parallel_for(0, static_cast<std::size_t>(camera.height()), [&](std::size_t yy) {
      const int y = static_cast<int>(yy);
      for (int x = 0; x < camera.width(); ++x) {
        const auto hit = first_hit(camera.unchecked_ray(Vec2(x, y)));
        if (!hit) continue;
        out.depth.set(x, y, hit->t);
        out.plane_id(x, y) = hit->plane_id;
      }
    });
    return out;
  }

  std::size_t size() const noexcept { return footprints_.size(); }

 private:
  std::vector<int> ids_;
  std::vector<PlaneFootprint> footprints_;
};

}  // namespace planegeo
