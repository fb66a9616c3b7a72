#pragma once

// Global 3D planes: occlusion-aware association of per-view masks with the
// scene point cloud, union-find merging on shared support, and RANSAC +
// total-least-squares fitting.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/core/random.hpp"
#include "planegeo/plane_seg.hpp"

namespace planegeo {

struct MaskKey {
  int view = -1;
  int mask = -1;
  friend auto operator<=>(const MaskKey&, const MaskKey&) = default;
};

/// Relative z-depth agreement used for every occlusion test in the library.
inline bool depth_agrees(double z, double reference, double tol_rel) {
  return reference > 0.0 && std::abs(z - reference) <= tol_rel * reference;
}

/// Associated scene points per (view, mask). `scene` is the concatenation of
/// all per-view clouds; entries hold indices into it, in ascending order.
struct MaskAssociation {
  struct Entry {
    MaskKey key;
    Vec3 world_normal = Vec3::UnitZ();
    std::size_t pixel_count = 0;
    std::vector<std::uint32_t> points;
  };
  PointCloud scene;
  std::vector<Entry> entries;  // sorted by key

  const Entry* find(const MaskKey& key) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), key,
                               [](const Entry& e, const MaskKey& k) { return e.key < k; });
    return (it != entries.end() && it->key == key) ? &*it : nullptr;
  }
};

/// A point associates to mask m of view v iff it projects to a pixel of m
/// and its z agrees with that view's depth at the pixel within depth_tol_rel.
inline MaskAssociation associate_points(const std::vector<std::vector<PlaneMask2D>>& masks,
                                        const std::vector<PointCloud>& clouds, const std::vector<Camera>& cameras,
                                        const std::vector<DepthMap>& depths, double depth_tol_rel = 0.01) {
  const std::size_t n_views = cameras.size();
  if (masks.size() != n_views || clouds.size() != n_views || depths.size() != n_views)
    throw Error(ErrorKind::Input, "inconsistent view counts for association");
  MaskAssociation assoc;
  for (const auto& c : clouds) assoc.scene.append(c);
  if (assoc.scene.size() > UINT32_MAX) throw Error(ErrorKind::Capacity, "scene cloud too large");

  std::vector<std::vector<MaskAssociation::Entry>> per_view(n_views);
  parallel_for(0, n_views, [&](std::size_t v) {
    const Camera& cam = cameras[v];
    require_camera_shape(cam, depths[v], "association depth map");
    Raster<std::int32_t> label(cam.width(), cam.height(), -1);
    auto& entries = per_view[v];
    entries.resize(masks[v].size());
    for (std::size_t m = 0; m < masks[v].size(); ++m) {
      entries[m].key = MaskKey{static_cast<int>(v), static_cast<int>(m)};
      entries[m].world_normal = (cam.rotation().transpose() * masks[v][m].mean_normal).normalized();
      entries[m].pixel_count = masks[v][m].pixels.size();
      for (const auto& p : masks[v][m].pixels) {
        if (!label.in_bounds(p.x, p.y)) throw Error(ErrorKind::Shape, "mask pixel outside its view");
        label(p.x, p.y) = static_cast<std::int32_t>(m);
      }
    }
    for (std::size_t i = 0; i < assoc.scene.size(); ++i) {
      const auto proj = cam.project(assoc.scene.points[i]);
      if (!proj) continue;
      const auto px = cam.nearest_pixel(proj->pixel);
      if (!px) continue;
      const std::int32_t m = label(px->x, px->y);
      if (m < 0) continue;
      if (!depth_agrees(proj->z, depths[v](px->x, px->y), depth_tol_rel)) continue;
      entries[m].points.push_back(static_cast<std::uint32_t>(i));
    }
  });
  for (auto& v : per_view)
    for (auto& e : v) assoc.entries.push_back(std::move(e));
  return assoc;
}

/// Φ: n·x + d = 0 with provenance.
struct GlobalPlane {
  int id = -1;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::vector<MaskKey> members;
  PointCloud support;
  PointCloud confident_support;
  Vec3 centroid = Vec3::Zero();
  bool fitted = false;
  bool used_full_support = false;  // confident set too small, fitted on all support
  std::size_t inlier_count = 0;
  double rms = 0.0;

  double signed_distance(const Vec3& x) const { return normal.dot(x) + offset; }
};

inline double angle_between_deg(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;  // smallest index is the root
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Pairwise test: shared / min(|A|, |B|) >= overlap_thresh and normal angle
/// <= normal_angle_thresh_deg; transitive closure by union-find. Output
/// planes are unfitted and ordered by their smallest member key.
inline std::vector<GlobalPlane> merge_masks(const MaskAssociation& assoc, double overlap_thresh = 0.3,
                                            double normal_angle_thresh_deg = 15.0) {
  const std::size_t n = assoc.entries.size();
  std::vector<std::vector<std::uint32_t>> point_entries(assoc.scene.size());
  for (std::size_t e = 0; e < n; ++e)
    for (auto p : assoc.entries[e].points) point_entries[p].push_back(static_cast<std::uint32_t>(e));
  std::vector<std::uint32_t> shared(n * n, 0);
  for (const auto& list : point_entries)
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b) {
        const auto i = std::min(list[a], list[b]);
        const auto j = std::max(list[a], list[b]);
        ++shared[i * n + j];
      }

  detail::UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::uint32_t s = shared[i * n + j];
      if (s == 0) continue;
      const std::size_t smaller = std::min(assoc.entries[i].points.size(), assoc.entries[j].points.size());
      if (static_cast<double>(s) < overlap_thresh * static_cast<double>(smaller)) continue;
      if (angle_between_deg(assoc.entries[i].world_normal, assoc.entries[j].world_normal) > normal_angle_thresh_deg)
        continue;
      uf.unite(i, j);
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t e = 0; e < n; ++e) groups[uf.find(e)].push_back(e);

  std::vector<GlobalPlane> planes;
  for (const auto& [root, members] : groups) {
    GlobalPlane plane;
    plane.id = static_cast<int>(planes.size());
    std::vector<std::uint32_t> support;
    Vec3 normal_sum = Vec3::Zero();
    for (auto e : members) {
      const auto& entry = assoc.entries[e];
      plane.members.push_back(entry.key);
      support.insert(support.end(), entry.points.begin(), entry.points.end());
      normal_sum += entry.world_normal * static_cast<double>(std::max<std::size_t>(1, entry.points.size()));
    }
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    if (support.empty()) continue;
    for (auto p : support) {
      plane.support.points.push_back(assoc.scene.points[p]);
      if (assoc.scene.has_sources()) plane.support.sources.push_back(assoc.scene.sources[p]);
      // Observers: distinct views among this plane's masks that contain p.
      int views_seen[2] = {-1, -1};
      int distinct = 0;
      for (auto e : point_entries[p]) {
        if (uf.find(e) != root) continue;
        const int v = assoc.entries[e].key.view;
        if (distinct == 0) views_seen[distinct++] = v;
        else if (distinct == 1 && v != views_seen[0]) views_seen[distinct++] = v;
        if (distinct == 2) break;
      }
      if (distinct >= 2) {
        plane.confident_support.points.push_back(assoc.scene.points[p]);
        if (assoc.scene.has_sources()) plane.confident_support.sources.push_back(assoc.scene.sources[p]);
      }
    }
    plane.normal = normal_sum.norm() > 0 ? normal_sum.normalized() : Vec3::UnitZ();
    Vec3 c = Vec3::Zero();
    for (const auto& p : plane.support.points) c += p;
    plane.centroid = c / static_cast<double>(plane.support.size());
    plane.offset = -plane.normal.dot(plane.centroid);
    planes.push_back(std::move(plane));
  }
  for (std::size_t i = 0; i < planes.size(); ++i) planes[i].id = static_cast<int>(i);
  return planes;
}

struct RansacOptions {
  double inlier_dist = 0.02;
  int iterations = 1000;
  std::uint64_t seed = 0;
  double min_inlier_ratio = 0.5;  // below this the support is not planar
};

struct PlaneFit {
  Vec3 normal;
  double offset;
};

/// Total-least-squares plane through points (smallest covariance
/// eigenvector); throws on fewer than 3 points or collinear input.
inline PlaneFit fit_plane_tls(const std::vector<Vec3>& points) {
  if (points.size() < 3) throw Error(ErrorKind::Degenerate, "fewer than 3 points for a plane fit");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 q = p - c;
    cov += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  const Vec3 ev = solver.eigenvalues();
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) throw Error(ErrorKind::Degenerate, "collinear plane support");
  const Vec3 n = solver.eigenvectors().col(0).normalized();
  return PlaneFit{n, -n.dot(c)};
}

/// Flips (n, d) so that most camera centers lie on the positive side; ties
/// go to the sign with the larger summed signed distance.
inline void orient_toward_cameras(Vec3& normal, double& offset, const std::vector<Vec3>& centers) {
  int pos = 0, neg = 0;
  double sum = 0.0;
  for (const auto& c : centers) {
    const double s = normal.dot(c) + offset;
    pos += s > 0.0;
    neg += s < 0.0;
    sum += s;
  }
  if (neg > pos || (neg == pos && sum < 0.0)) {
    normal = -normal;
    offset = -offset;
  }
}

/// RANSAC over 3-point samples followed by a TLS refit on the consensus set.
/// Fits the confident support, or the full support when fewer than 3
/// confident points exist. `cameras` indexed by view id fix the normal sign.
inline GlobalPlane fit_plane_ransac(const GlobalPlane& input, const std::vector<Camera>& cameras,
                                    const RansacOptions& options = {}) {
  GlobalPlane plane = input;
  plane.used_full_support = plane.confident_support.size() < 3;
  const PointCloud& source = plane.used_full_support ? plane.support : plane.confident_support;
  const auto& pts = source.points;
  if (pts.size() < 3) throw Error(ErrorKind::Degenerate, "plane " + std::to_string(plane.id) + " has < 3 points");

  Rng rng(options.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(plane.id + 1)));
  std::size_t best_count = 0;
  Vec3 best_n = Vec3::Zero();
  double best_d = 0.0;
  const std::size_t n = pts.size();
  for (int it = 0; it < options.iterations; ++it) {
    std::size_t i0 = rng.below(n), i1 = rng.below(n), i2 = rng.below(n);
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    const Vec3 a = pts[i1] - pts[i0];
    const Vec3 b = pts[i2] - pts[i0];
    const Vec3 cr = a.cross(b);
    if (cr.norm() <= 1e-12 * a.norm() * b.norm() || cr.norm() == 0.0) continue;
    const Vec3 nn = cr.normalized();
    const double dd = -nn.dot(pts[i0]);
    std::size_t count = 0;
    for (const auto& p : pts) count += std::abs(nn.dot(p) + dd) <= options.inlier_dist;
    if (count > best_count) {
      best_count = count;
      best_n = nn;
      best_d = dd;
    }
  }

  std::vector<Vec3> consensus;
  if (best_count >= 3) {
    for (const auto& p : pts)
      if (std::abs(best_n.dot(p) + best_d) <= options.inlier_dist) consensus.push_back(p);
  } else {
    consensus = pts;  // no usable sample; TLS decides whether it is degenerate
  }
  PlaneFit fit = fit_plane_tls(consensus);

  std::vector<Vec3> centers;
  for (const auto& key : plane.members)
    if (key.view >= 0 && key.view < static_cast<int>(cameras.size())) centers.push_back(cameras[key.view].center());
  orient_toward_cameras(fit.normal, fit.offset, centers);
  plane.normal = fit.normal;
  plane.offset = fit.offset;

  std::size_t inliers = 0;
  double sq = 0.0;
  for (const auto& p : pts) {
    const double r = plane.signed_distance(p);
    if (std::abs(r) <= options.inlier_dist) {
      ++inliers;
      sq += r * r;
    }
  }
  if (static_cast<double>(inliers) < options.min_inlier_ratio * static_cast<double>(pts.size()))
    throw Error(ErrorKind::Degenerate, "plane " + std::to_string(plane.id) + " support is not planar");
  plane.inlier_count = inliers;
  plane.rms = inliers > 0 ? std::sqrt(sq / static_cast<double>(inliers)) : 0.0;

  PointCloud confident;
  for (std::size_t i = 0; i < plane.confident_support.size(); ++i) {
    if (std::abs(plane.signed_distance(plane.confident_support.points[i])) > options.inlier_dist) continue;
    confident.points.push_back(plane.confident_support.points[i]);
    if (plane.confident_support.has_sources()) confident.sources.push_back(plane.confident_support.sources[i]);
  }
  plane.confident_support = std::move(confident);

  Vec3 c = Vec3::Zero();
  for (const auto& p : plane.support.points) c += p;
  c /= static_cast<double>(plane.support.size());
  plane.centroid = c - plane.signed_distance(c) * plane.normal;
  plane.fitted = true;
  return plane;
}

/// Joins fitted planes whose normals agree within `angle_deg` and whose
/// centroids lie within `dist` of each other's plane, then refits each joined
/// group on the union of supports. Groups keep the position of their first
/// plane; member lists are merged and sorted.
inline std::vector<GlobalPlane> merge_coplanar(const std::vector<GlobalPlane>& planes, const std::vector<Camera>& cameras,
                                               double angle_deg, double dist, const RansacOptions& ransac) {
  const std::size_t n = planes.size();
  detail::UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (angle_between_deg(planes[i].normal, planes[j].normal) > angle_deg) continue;
      if (std::abs(planes[i].signed_distance(planes[j].centroid)) > dist) continue;
      if (std::abs(planes[j].signed_distance(planes[i].centroid)) > dist) continue;
      uf.unite(i, j);
    }
  std::vector<std::size_t> roots;
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (!groups.count(r)) roots.push_back(r);
    groups[r].push_back(i);
  }
  std::vector<GlobalPlane> out;
  for (const std::size_t r : roots) {
    const auto& g = groups[r];
    if (g.size() == 1) {
      out.push_back(planes[g.front()]);
      continue;
    }
    GlobalPlane merged = planes[g.front()];
    for (std::size_t k = 1; k < g.size(); ++k) {
      const GlobalPlane& other = planes[g[k]];
      merged.members.insert(merged.members.end(), other.members.begin(), other.members.end());
      merged.support.append(other.support);
      merged.confident_support.append(other.confident_support);
    }
    std::sort(merged.members.begin(), merged.members.end());
    try {
      out.push_back(fit_plane_ransac(merged, cameras, ransac));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
      for (const auto i : g) out.push_back(planes[i]);
    }
  }
  return out;
}

struct PlaneEstimationOptions {
  double depth_tol_rel = 0.01;
  double overlap_thresh = 0.3;
  double normal_angle_thresh_deg = 15.0;
  RansacOptions ransac;
  int cloud_stride = 1;
  double coplanar_angle_deg = 2.0;  // <= 0 disables coplanar consolidation
  double coplanar_dist = 0.03;
};

struct PlaneEstimate {
  std::vector<GlobalPlane> planes;    // fitted, ids dense from 0
  std::vector<GlobalPlane> rejected;  // degenerate after merging
};

/// Back-projection, association, merging and fitting in one call. Accepted
/// planes are renumbered densely in merge order.
inline PlaneEstimate estimate_global_planes(const std::vector<Camera>& cameras, const std::vector<DepthMap>& depths,
                                            const std::vector<std::vector<PlaneMask2D>>& masks,
                                            const PlaneEstimationOptions& options = {}) {
  if (cameras.empty()) throw Error(ErrorKind::Input, "no views");
  std::vector<PointCloud> clouds(cameras.size());
  for (std::size_t v = 0; v < cameras.size(); ++v)
    clouds[v] = backproject_depth(cameras[v], depths[v], options.cloud_stride, static_cast<int>(v));
  const auto assoc = associate_points(masks, clouds, cameras, depths, options.depth_tol_rel);
  auto merged = merge_masks(assoc, options.overlap_thresh, options.normal_angle_thresh_deg);
  std::vector<std::optional<GlobalPlane>> fitted(merged.size());
  parallel_for(0, merged.size(), [&](std::size_t i) {
    try {
      fitted[i] = fit_plane_ransac(merged[i], cameras, options.ransac);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
    }
  });
  PlaneEstimate out;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    if (fitted[i]) out.planes.push_back(std::move(*fitted[i]));
    else out.rejected.push_back(std::move(merged[i]));
  }
  if (options.coplanar_angle_deg > 0.0)
    out.planes = merge_coplanar(out.planes, cameras, options.coplanar_angle_deg, options.coplanar_dist, options.ransac);
  for (std::size_t i = 0; i < out.planes.size(); ++i) out.planes[i].id = static_cast<int>(i);
  return out;
}

/// (view, mask) -> plane id for every member of the given planes.
inline std::map<MaskKey, int> mask_plane_lookup(const std::vector<GlobalPlane>& planes) {
  std::map<MaskKey, int> lookup;
  for (const auto& p : planes)
    for (const auto& m : p.members) lookup[m] = p.id;
  return lookup;
}

}  // namespace planegeo
