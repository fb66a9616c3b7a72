#pragma once

// Synthetic box-room scenes with analytic ray casting. Every planar face
// carries a ground-truth plane id; spheres carry plane id 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/core/random.hpp"
#include "planegeo/core/raster.hpp"

namespace planegeo::synth {

/// Rectangle {center + a·u + b·v : |a| <= half_u, |b| <= half_v}; its front
/// normal is u × v.
struct RectFace {
  Vec3 center = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  double half_u = 0.5;
  double half_v = 0.5;
  int instance = 0;
  int plane_group = -1;  // faces sharing a group >= 0 share one plane id

  Vec3 normal() const { return u.cross(v).normalized(); }
};

struct BoxSpec {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Constant(0.5);
  int instance = 0;
};

struct SphereSpec {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  int instance = 0;
};

struct GtPlane {
  int id = 0;
  Vec3 normal;   // front side
  double offset = 0.0;
  int instance = 0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  Vec3 room_min = Vec3::Zero();
  Vec3 room_max = Vec3(6.0, 3.0, 5.0);
  bool room_walls = true;
  std::vector<RectFace> faces;  // extra planar faces, e.g. partitions
  std::vector<BoxSpec> boxes;
  std::vector<SphereSpec> spheres;
  std::vector<Camera> cameras;
  std::map<int, Rgb> albedo;  // instance -> color; missing ids get a hashed color
};

struct ViewBundle {
  ColorImage color;
  DepthMap depth;
  NormalMap normals;  // camera frame, facing the camera
  InstanceMaskMap instances;
  Raster<std::uint16_t> plane_ids;  // 0 = no plane
};

/// Axis-aligned face on the `axis` side `sign` of a box, normal = sign·e_axis.
inline RectFace axis_face(const Vec3& box_center, const Vec3& half, int axis, int sign, int instance) {
  static const Vec3 e[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;  // e[a1] × e[a2] = e[axis]
  RectFace f;
  f.center = box_center + sign * half[axis] * e[axis];
  f.u = sign > 0 ? e[a1] : e[a2];
  f.v = sign > 0 ? e[a2] : e[a1];
  f.half_u = sign > 0 ? half[a1] : half[a2];
  f.half_v = sign > 0 ? half[a2] : half[a1];
  f.instance = instance;
  return f;
}

/// A scene flattened into rectangles and spheres with resolved plane ids.
class CompiledScene {
 public:
  explicit CompiledScene(const SceneSpec& spec) : spec_(spec) {
    validate();
    int next_plane = 1;
    std::map<int, int> group_ids;
    auto add = [&](RectFace f) {
      int id;
      if (f.plane_group >= 0) {
        auto it = group_ids.find(f.plane_group);
        if (it == group_ids.end()) {
          id = next_plane++;
          group_ids[f.plane_group] = id;
          planes_.push_back(GtPlane{id, f.normal(), -f.normal().dot(f.center), f.instance});
        } else {
          id = it->second;
        }
      } else {
        id = next_plane++;
        planes_.push_back(GtPlane{id, f.normal(), -f.normal().dot(f.center), f.instance});
      }
      rects_.push_back(f);
      rect_plane_.push_back(id);
    };
    if (spec.room_walls) {
      const Vec3 c = 0.5 * (spec.room_min + spec.room_max);
      const Vec3 h = 0.5 * (spec.room_max - spec.room_min);
      int inst = 1;
      for (int axis = 0; axis < 3; ++axis) {
        for (int sign : {+1, -1}) {
          // Inward-facing wall on the `-sign` side of the room.
          RectFace f = axis_face(c, h, axis, -sign, inst++);
          std::swap(f.u, f.v);
          std::swap(f.half_u, f.half_v);
          add(f);
        }
      }
    }
    for (const auto& f : spec.faces) add(f);
    for (const auto& b : spec.boxes) {
      const bool on_floor = b.center.y() - b.half.y() <= spec.room_min.y() + 1e-9;
      for (int axis = 0; axis < 3; ++axis)
        for (int sign : {+1, -1}) {
          if (axis == 1 && sign < 0 && on_floor) continue;
          add(axis_face(b.center, b.half, axis, sign, b.instance));
        }
    }
  }

  const SceneSpec& spec() const noexcept { return spec_; }
  const std::vector<GtPlane>& planes() const noexcept { return planes_; }
  const std::vector<RectFace>& rects() const noexcept { return rects_; }
  int rect_plane(std::size_t i) const { return rect_plane_[i]; }

  const GtPlane* plane(int id) const {
    for (const auto& p : planes_)
      if (p.id == id) return &p;
    return nullptr;
  }

  struct Hit {
    double t = 0.0;
    Vec3 normal;  // world, unoriented
    int instance = 0;
    int plane_id = 0;
  };

  /// Nearest intersection with t > 1e-9 along o + t·dir.
  std::optional<Hit> intersect(const Vec3& o, const Vec3& dir) const {
    std::optional<Hit> best;
    for (std::size_t i = 0; i < rects_.size(); ++i) {
      const RectFace& f = rects_[i];
      const Vec3 n = f.normal();
      const double denom = n.dot(dir);
      if (std::abs(denom) < 1e-15) continue;
      const double t = n.dot(f.center - o) / denom;
      if (!(t > 1e-9) || (best && t >= best->t)) continue;
      const Vec3 local = o + t * dir - f.center;
      if (std::abs(local.dot(f.u)) > f.half_u + 1e-9 || std::abs(local.dot(f.v)) > f.half_v + 1e-9) continue;
      best = Hit{t, n, f.instance, rect_plane_[i]};
    }
    for (const auto& s : spec_.spheres) {
      const Vec3 oc = o - s.center;
      const double a = dir.squaredNorm();
      const double b = oc.dot(dir);
      const double c = oc.squaredNorm() - s.radius * s.radius;
      const double disc = b * b - a * c;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      double t = (-b - sq) / a;
      if (!(t > 1e-9)) t = (-b + sq) / a;
      if (!(t > 1e-9) || (best && t >= best->t)) continue;
      best = Hit{t, (o + t * dir - s.center).normalized(), s.instance, 0};
    }
    return best;
  }

  Rgb albedo(int instance) const {
    const auto it = spec_.albedo.find(instance);
    if (it != spec_.albedo.end()) return it->second;
    std::uint64_t h = static_cast<std::uint64_t>(instance) * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return Rgb{static_cast<std::uint8_t>(64 + (h & 0x7f)), static_cast<std::uint8_t>(64 + ((h >> 8) & 0x7f)),
               static_cast<std::uint8_t>(64 + ((h >> 16) & 0x7f))};
  }

  /// Uniform-ish samples of every front-facing planar surface and sphere,
  /// with normals; `spacing` in meters.
  PointCloud surface_samples(double spacing) const {
    PointCloud cloud;
    for (const auto& f : rects_) {
      const int nu = std::max(1, static_cast<int>(std::ceil(2.0 * f.half_u / spacing)));
      const int nv = std::max(1, static_cast<int>(std::ceil(2.0 * f.half_v / spacing)));
      for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
          const double a = -f.half_u + (i + 0.5) * 2.0 * f.half_u / nu;
          const double b = -f.half_v + (j + 0.5) * 2.0 * f.half_v / nv;
          cloud.points.push_back(f.center + a * f.u + b * f.v);
          cloud.normals.push_back(f.normal());
        }
    }
    return cloud;
  }

 private:
  void validate() const {
    if (!((spec_.room_max - spec_.room_min).minCoeff() > 0.0)) throw Error(ErrorKind::Input, "room extents must be > 0");
    std::vector<int> ids;
    if (spec_.room_walls)
      for (int i = 1; i <= 6; ++i) ids.push_back(i);
    std::map<int, int> face_instances;
    for (const auto& f : spec_.faces) {
      if (f.half_u <= 0.0 || f.half_v <= 0.0) throw Error(ErrorKind::Input, "face extents must be > 0");
      face_instances[f.instance] = 1;
    }
    for (const auto& [inst, _] : face_instances) ids.push_back(inst);
    for (const auto& b : spec_.boxes) {
      if (b.half.minCoeff() <= 0.0) throw Error(ErrorKind::Input, "box extents must be > 0");
      ids.push_back(b.instance);
    }
    for (const auto& s : spec_.spheres) {
      if (s.radius <= 0.0) throw Error(ErrorKind::Input, "sphere radius must be > 0");
      ids.push_back(s.instance);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw Error(ErrorKind::Input, "duplicate instance ids");
    for (int id : ids)
      if (id <= 0 || id >= 65536) throw Error(ErrorKind::Input, "instance ids must be in [1, 65535]");
    for (const auto& c : spec_.cameras) {
      const Vec3 p = c.center();
      if ((p - spec_.room_min).minCoeff() <= 0.0 || (spec_.room_max - p).minCoeff() <= 0.0)
        throw Error(ErrorKind::Input, "camera outside the room");
    }
  }

  SceneSpec spec_;
  std::vector<RectFace> rects_;
  std::vector<int> rect_plane_;
  std::vector<GtPlane> planes_;
};

/// Per-pixel nearest analytic hit: z-depth, camera-frame normal facing the
/// camera, flat albedo, instance id and ground-truth plane id.
inline ViewBundle raycast_view(const CompiledScene& scene, const Camera& camera) {
  const int w = camera.width(), h = camera.height();
  ViewBundle out{ColorImage(w, h), DepthMap(w, h), NormalMap(w, h), InstanceMaskMap(w, h, 0),
                 Raster<std::uint16_t>(w, h, 0)};
  parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < w; ++x) {
      const Ray r = camera.unchecked_ray(Vec2(x, y));
      const auto hit = scene.intersect(r.origin, r.dir);
      if (!hit) continue;
      Vec3 n = hit->normal;
      if (n.dot(r.dir) > 0.0) n = -n;
      out.depth.set(x, y, hit->t);
      out.normals.set(x, y, camera.rotation() * n);
      out.instances(x, y) = static_cast<std::uint16_t>(hit->instance);
      out.plane_ids(x, y) = static_cast<std::uint16_t>(hit->plane_id);
      out.color(x, y) = scene.albedo(hit->instance);
    }
  });
  return out;
}

inline ViewBundle raycast_view(const SceneSpec& spec, const Camera& camera) {
  return raycast_view(CompiledScene(spec), camera);
}

/// Relative depth D̂ = (D - b) / a + N(0, sigma), clamped to stay positive.
inline DepthMap corrupt_mono(const DepthMap& depth, double a, double b, double noise_sigma, std::uint64_t seed) {
  if (a == 0.0) throw Error(ErrorKind::Input, "mono scale a must be non-zero");
  Rng rng(seed);
  DepthMap out(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      double v = (depth(x, y) - b) / a;
      if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
      out.set(x, y, std::max(v, 1e-6));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Preset scenes.

struct Intrinsics {
  double fx = 120.0, fy = 120.0, cx = 80.0, cy = 60.0;
  int width = 160, height = 120;
};

inline Camera make_camera(const Intrinsics& k, const Vec3& eye, const Vec3& target) {
  return Camera::look_at(k.fx, k.fy, k.cx, k.cy, k.width, k.height, eye, target, Vec3::UnitY());
}

/// 6 x 3 x 5 m room, two boxes, five views from the corners and one wall.
inline SceneSpec box_room(std::uint64_t seed = 0, const Intrinsics& k = {}) {
  SceneSpec s;
  s.seed = seed;
  s.room_min = Vec3::Zero();
  s.room_max = Vec3(6.0, 3.0, 5.0);
  s.boxes.push_back(BoxSpec{Vec3(1.8, 0.4, 3.2), Vec3(0.5, 0.4, 0.4), 7});
  s.boxes.push_back(BoxSpec{Vec3(4.1, 0.6, 1.7), Vec3(0.4, 0.6, 0.5), 8});
  const Vec3 target(3.0, 1.0, 2.5);
  s.cameras.push_back(make_camera(k, Vec3(0.4, 1.6, 0.4), target));
  s.cameras.push_back(make_camera(k, Vec3(5.6, 1.5, 0.4), target));
  s.cameras.push_back(make_camera(k, Vec3(5.6, 1.6, 4.6), target));
  s.cameras.push_back(make_camera(k, Vec3(0.4, 1.5, 4.6), target));
  s.cameras.push_back(make_camera(k, Vec3(3.0, 1.3, 0.3), Vec3(3.0, 2.0, 5.0)));
  return s;
}

/// 8 x 3 x 4 m space split at x = 4 by a partition wall with a doorway;
/// training views live in the x < 4 room.
inline SceneSpec two_room(std::uint64_t seed = 0, const Intrinsics& k = {}) {
  SceneSpec s;
  s.seed = seed;
  s.room_min = Vec3::Zero();
  s.room_max = Vec3(8.0, 3.0, 4.0);
  // Partition at x = 4, facing -x (toward the first room), doorway z in [1.5, 2.5], y < 2.2.
  auto part = [&](double z0, double z1, double y0, double y1) {
    RectFace f;
    f.center = Vec3(4.0, 0.5 * (y0 + y1), 0.5 * (z0 + z1));
    f.u = Vec3::UnitZ();
    f.v = Vec3::UnitY();  // z × y = -x
    f.half_u = 0.5 * (z1 - z0);
    f.half_v = 0.5 * (y1 - y0);
    f.instance = 9;
    f.plane_group = 0;
    return f;
  };
  s.faces.push_back(part(0.0, 1.5, 0.0, 3.0));
  s.faces.push_back(part(2.5, 4.0, 0.0, 3.0));
  s.faces.push_back(part(1.5, 2.5, 2.2, 3.0));
  s.boxes.push_back(BoxSpec{Vec3(1.2, 0.35, 1.0), Vec3(0.4, 0.35, 0.4), 7});
  s.boxes.push_back(BoxSpec{Vec3(6.2, 0.5, 2.8), Vec3(0.5, 0.5, 0.4), 8});
  s.cameras.push_back(make_camera(k, Vec3(0.4, 1.6, 0.4), Vec3(3.0, 1.0, 3.0)));
  s.cameras.push_back(make_camera(k, Vec3(0.4, 1.5, 3.6), Vec3(3.0, 1.0, 1.0)));
  s.cameras.push_back(make_camera(k, Vec3(3.6, 1.6, 3.6), Vec3(0.5, 1.0, 1.0)));
  return s;
}

/// 6 x 3 x 6 m room with two boxes and a sphere; the input views all look
/// into the z < 3 half.
inline SceneSpec half_room(std::uint64_t seed = 0, const Intrinsics& k = {}) {
  SceneSpec s;
  s.seed = seed;
  s.room_min = Vec3::Zero();
  s.room_max = Vec3(6.0, 3.0, 6.0);
  s.boxes.push_back(BoxSpec{Vec3(1.5, 0.4, 1.5), Vec3(0.5, 0.4, 0.4), 7});
  s.boxes.push_back(BoxSpec{Vec3(4.3, 0.5, 4.4), Vec3(0.5, 0.5, 0.5), 8});
  s.spheres.push_back(SphereSpec{Vec3(4.5, 0.5, 1.2), 0.5, 9});
  s.cameras.push_back(make_camera(k, Vec3(3.0, 1.6, 3.4), Vec3(1.0, 0.8, 0.2)));
  s.cameras.push_back(make_camera(k, Vec3(3.0, 1.6, 3.4), Vec3(5.0, 0.8, 0.2)));
  s.cameras.push_back(make_camera(k, Vec3(2.0, 1.5, 3.2), Vec3(3.0, 0.8, 0.0)));
  s.cameras.push_back(make_camera(k, Vec3(4.0, 1.7, 3.2), Vec3(2.0, 0.6, 0.3)));
  s.cameras.push_back(make_camera(k, Vec3(3.0, 2.4, 3.0), Vec3(3.0, 0.0, 0.8)));
  return s;
}

/// Long hallway (4 x 3 x 40 m) with a single 100 x 100 view looking down it;
/// depths span roughly 4.5 to 40 m.
inline SceneSpec corridor(std::uint64_t seed = 0, const Intrinsics& k = {150.0, 150.0, 50.0, 50.0, 100, 100}) {
  SceneSpec s;
  s.seed = seed;
  s.room_min = Vec3::Zero();
  s.room_max = Vec3(4.0, 3.0, 40.0);
  s.cameras.push_back(make_camera(k, Vec3(2.0, 1.5, 0.5), Vec3(2.0, 1.5, 40.0)));
  return s;
}

/// Random room with up to three boxes and 3-5 inward-looking views.
inline SceneSpec random_room(std::uint64_t seed, const Intrinsics& k = {}) {
  Rng rng(seed);
  SceneSpec s;
  s.seed = seed;
  s.room_min = Vec3::Zero();
  s.room_max = Vec3(rng.uniform(4.0, 7.0), rng.uniform(2.5, 3.2), rng.uniform(4.0, 7.0));
  const Vec3 ext = s.room_max;
  const int n_boxes = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n_boxes; ++i) {
    const Vec3 half(rng.uniform(0.25, 0.6), rng.uniform(0.2, 0.6), rng.uniform(0.25, 0.6));
    const Vec3 c(rng.uniform(1.0 + half.x(), ext.x() - 1.0 - half.x()), half.y(),
                 rng.uniform(1.0 + half.z(), ext.z() - 1.0 - half.z()));
    bool overlaps = false;
    for (const auto& b : s.boxes)
      overlaps = overlaps || ((c - b.center).cwiseAbs() - (half + b.half)).maxCoeff() < 0.1;
    if (!overlaps) s.boxes.push_back(BoxSpec{c, half, 7 + i});
  }
  const int n_views = 3 + static_cast<int>(rng.below(3));
  const Vec3 mid(0.5 * ext.x(), 0.9, 0.5 * ext.z());
  for (int i = 0; i < n_views; ++i) {
    const double ang = 2.0 * M_PI * (static_cast<double>(i) + rng.uniform(0.0, 0.3)) / n_views;
    const Vec3 eye(mid.x() + 0.4 * ext.x() * std::cos(ang), rng.uniform(1.3, 1.8), mid.z() + 0.4 * ext.z() * std::sin(ang));
    s.cameras.push_back(make_camera(k, eye, mid));
  }
  return s;
}

}  // namespace planegeo::synth
