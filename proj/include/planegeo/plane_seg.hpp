#pragma once

// Per-view 2D plane masks: k-means over unit normals, then split by instance
// label and 4-connectivity, dropping small components.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/core/random.hpp"
#include "planegeo/core/raster.hpp"

namespace planegeo {

struct NormalClusters {
  Raster<std::int32_t> labels;  // -1 where the normal is invalid
  std::vector<Vec3> centroids;
  std::vector<double> radius;   // max member angle to centroid, radians
  int iterations = 0;
};

struct KMeansOptions {
  int k = 6;
  int max_iterations = 50;
  std::uint64_t seed = 0;
};

namespace detail {

inline int nearest_centroid(const Vec3& n, const std::vector<Vec3>& centroids) {
  int best = 0;
  double best_dot = -2.0;
  for (int j = 0; j < static_cast<int>(centroids.size()); ++j) {
    const double d = n.dot(centroids[j]);
    if (d > best_dot) {
      best_dot = d;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

/// Cosine k-means on the valid pixels of a normal map, seeded k-means++
/// initialisation, centroids renormalised every iteration.
inline NormalClusters cluster_normals(const NormalMap& normals, const KMeansOptions& options) {
  if (options.k < 1) throw Error(ErrorKind::Input, "cluster count must be >= 1");
  std::vector<std::size_t> valid;
  const auto& raster = normals.raster();
  for (std::size_t i = 0; i < raster.size(); ++i)
    if (raster[i].squaredNorm() > 0.25) valid.push_back(i);
  if (valid.size() < static_cast<std::size_t>(options.k))
    throw Error(ErrorKind::InsufficientData, "fewer valid normals than clusters");

  const int k = options.k;
  Rng rng(options.seed);
  std::vector<Vec3> centroids;
  centroids.reserve(k);
  centroids.push_back(raster[valid[rng.below(valid.size())]]);
  std::vector<double> weight(valid.size());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      double best = -2.0;
      for (const auto& c : centroids) best = std::max(best, raster[valid[i]].dot(c));
      const double dist = std::max(0.0, 1.0 - best);
      weight[i] = dist * dist;
      total += weight[i];
    }
    if (total <= 0.0) {
      // Fewer distinct normals than clusters; the duplicate stays empty.
      centroids.push_back(centroids.front());
      continue;
    }
    double target = rng.uniform() * total;
    std::size_t pick = valid.size() - 1;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      target -= weight[i];
      if (target < 0.0 && weight[i] > 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(raster[valid[pick]]);
  }

  std::vector<std::int32_t> assign(valid.size(), -1);
  std::vector<std::int32_t> next(valid.size());
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    parallel_for(0, valid.size(), [&](std::size_t i) { next[i] = detail::nearest_centroid(raster[valid[i]], centroids); });
    const bool stable = next == assign;
    assign = next;
    std::vector<Vec3> sums(k, Vec3::Zero());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < valid.size(); ++i) {
      sums[assign[i]] += raster[valid[i]];
      ++counts[assign[i]];
    }
    for (int j = 0; j < k; ++j)
      if (counts[j] > 0 && sums[j].norm() > 1e-12) centroids[j] = sums[j].normalized();
    if (stable) break;
  }

  NormalClusters out;
  out.labels = Raster<std::int32_t>(normals.width(), normals.height(), -1);
  out.radius.assign(k, 0.0);
  for (std::size_t i = 0; i < valid.size(); ++i) {
    out.labels[valid[i]] = assign[i];
    const double c = std::clamp(raster[valid[i]].dot(centroids[assign[i]]), -1.0, 1.0);
    out.radius[assign[i]] = std::max(out.radius[assign[i]], std::acos(c));
  }
  out.centroids = std::move(centroids);
  out.iterations = iter + 1;
  return out;
}

inline NormalClusters cluster_normals(const NormalMap& normals, int k, std::uint64_t seed) {
  return cluster_normals(normals, KMeansOptions{k, 50, seed});
}

struct PlaneMask2D {
  int view_id = -1;
  std::vector<PixelCoord> pixels;  // raster order
  Vec3 mean_normal = Vec3::UnitZ();  // camera frame
  int instance_label = 0;
  int cluster = -1;
};

/// 0.5% of the image area, rounded up.
inline int default_min_mask_pixels(int width, int height) {
  return static_cast<int>(std::ceil(0.005 * static_cast<double>(width) * static_cast<double>(height)));
}

/// Intersects clusters with instance labels, splits into 4-connected
/// components and keeps those with at least min_mask_pixels pixels. Masks
/// are ordered by their first pixel in raster order. Unlabeled (0) and
/// invalid-normal pixels never join a mask.
inline std::vector<PlaneMask2D> extract_plane_masks(const Raster<std::int32_t>& cluster_map,
                                                    const InstanceMaskMap& instances, const NormalMap& normals,
                                                    int min_mask_pixels, int view_id = -1) {
  require_same_shape(cluster_map, instances, "instance mask");
  require_same_shape(cluster_map, normals.raster(), "normal map");
  const int w = cluster_map.width();
  const int h = cluster_map.height();
  auto eligible = [&](int x, int y) {
    return cluster_map(x, y) >= 0 && instances(x, y) != 0 && normals.valid(x, y);
  };
  Raster<std::uint8_t> seen(w, h, 0);
  std::vector<PlaneMask2D> masks;
  std::vector<PixelCoord> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (seen(x, y) || !eligible(x, y)) continue;
      const std::int32_t cluster = cluster_map(x, y);
      const std::uint16_t label = instances(x, y);
      PlaneMask2D mask;
      mask.view_id = view_id;
      mask.instance_label = label;
      mask.cluster = cluster;
      stack.assign(1, PixelCoord{x, y});
      seen(x, y) = 1;
      while (!stack.empty()) {
        const PixelCoord p = stack.back();
        stack.pop_back();
        mask.pixels.push_back(p);
        const PixelCoord nbrs[4] = {{p.x + 1, p.y}, {p.x - 1, p.y}, {p.x, p.y + 1}, {p.x, p.y - 1}};
        for (const auto& q : nbrs) {
          if (!cluster_map.in_bounds(q.x, q.y) || seen(q.x, q.y) || !eligible(q.x, q.y)) continue;
          if (cluster_map(q.x, q.y) != cluster || instances(q.x, q.y) != label) continue;
          seen(q.x, q.y) = 1;
          stack.push_back(q);
        }
      }
      if (static_cast<int>(mask.pixels.size()) < min_mask_pixels) continue;
      std::sort(mask.pixels.begin(), mask.pixels.end(),
                [](const PixelCoord& a, const PixelCoord& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
      Vec3 sum = Vec3::Zero();
      for (const auto& p : mask.pixels) sum += normals(p.x, p.y);
      if (sum.norm() < 1e-12) continue;
      mask.mean_normal = sum.normalized();
      masks.push_back(std::move(mask));
    }
  }
  return masks;
}

/// 16-bit label image: 0 = no plane, i = mask index + 1.
inline Raster<std::uint16_t> mask_label_image(const std::vector<PlaneMask2D>& masks, int width, int height) {
  if (masks.size() >= 65535) throw Error(ErrorKind::Capacity, "too many masks for a 16-bit label image");
  Raster<std::uint16_t> labels(width, height, 0);
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (const auto& p : masks[i].pixels) labels(p.x, p.y) = static_cast<std::uint16_t>(i + 1);
  return labels;
}

/// Inverse of mask_label_image; normals and instance labels come from the
/// sidecar and are passed back in mask order.
inline std::vector<PlaneMask2D> masks_from_label_image(const Raster<std::uint16_t>& labels,
                                                       const std::vector<Vec3>& mean_normals,
                                                       const std::vector<int>& instance_labels, int view_id) {
  if (mean_normals.size() != instance_labels.size()) throw Error(ErrorKind::Input, "mask sidecar size mismatch");
  std::vector<PlaneMask2D> masks(mean_normals.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    masks[i].view_id = view_id;
    masks[i].mean_normal = mean_normals[i].normalized();
    masks[i].instance_label = instance_labels[i];
  }
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const int id = labels(x, y);
      if (id == 0) continue;
      if (id > static_cast<int>(masks.size())) throw Error(ErrorKind::Input, "mask label without sidecar entry");
      masks[id - 1].pixels.push_back(PixelCoord{x, y});
    }
  }
  return masks;
}

}  // namespace planegeo
