#pragma once

// Reconstruction metrics on point clouds: Chamfer distance, F-score and
// normal consistency, all with L1 nearest neighbours.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/core/raster.hpp"

namespace planegeo {

inline double l1_distance(const Vec3& a, const Vec3& b) {
  return std::abs(a.x() - b.x()) + std::abs(a.y() - b.y()) + std::abs(a.z() - b.z());
}

struct Nearest {
  std::size_t index = 0;
  double distance = std::numeric_limits<double>::infinity();
};

/// Exact L1 nearest-neighbour search; equal distances resolve to the lowest
/// point index.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points) : points_(points) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points.empty()) build(0, points.size(), 0);
  }

  Nearest nearest(const Vec3& q) const {
    Nearest best;
    if (!nodes_.empty()) search(0, q, best);
    return best;
  }

 private:
  static constexpr std::size_t kLeaf = 8;

  struct Node {
    std::size_t begin = 0, end = 0;
    int axis = -1;  // -1: leaf
    double split = 0.0;
    std::int64_t left = -1, right = -1;
  };

  std::int64_t build(std::size_t begin, std::size_t end, int depth) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeaf) return id;
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                       return a < b;
                     });
    const double split = points_[order_[mid]][axis];
    const auto left = build(begin, mid, depth + 1);
    const auto right = build(mid, end, depth + 1);
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  // Left holds coordinates <= split, right holds coordinates >= split.
  void search(std::int64_t id, const Vec3& q, Nearest& best) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t p = order_[i];
        const double d = l1_distance(q, points_[p]);
        if (d < best.distance || (d == best.distance && p < best.index)) best = Nearest{p, d};
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const auto near = diff <= 0.0 ? n.left : n.right;
    const auto far = diff <= 0.0 ? n.right : n.left;
    search(near, q, best);
    if (std::abs(diff) <= best.distance) search(far, q, best);
  }

  const std::vector<Vec3>& points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

struct ReconstructionMetrics {
  double accuracy = 0.0;      // meters
  double completeness = 0.0;  // meters
  double chamfer = 0.0;       // meters
  double precision = 0.0;     // percent
  double recall = 0.0;        // percent
  double fscore = 0.0;        // percent
  double normal_accuracy = 0.0;      // percent
  double normal_completeness = 0.0;  // percent
  double normal_consistency = 0.0;   // percent
  bool has_normals = false;
};

inline std::vector<Nearest> nearest_all(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets) {
  const KdTree tree(targets);
  std::vector<Nearest> out(queries.size());
  parallel_for(0, queries.size(), [&](std::size_t i) { out[i] = tree.nearest(queries[i]); });
  return out;
}

/// Nearest neighbours by L1 distance; normal consistency requires normals on
/// both clouds and is skipped otherwise.
inline ReconstructionMetrics eval_reconstruction(const PointCloud& pred, const PointCloud& gt, double fscore_thresh = 0.05) {
  if (pred.empty() || gt.empty()) throw Error(ErrorKind::EmptyScene, "metrics need non-empty clouds");
  pred.validate();
  gt.validate();
  const auto to_gt = nearest_all(pred.points, gt.points);
  const auto to_pred = nearest_all(gt.points, pred.points);
  ReconstructionMetrics m;
  m.has_normals = pred.has_normals() && gt.has_normals();
  double acc = 0.0, comp = 0.0, nacc = 0.0, ncomp = 0.0;
  std::size_t prec = 0, rec = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += to_gt[i].distance;
    prec += to_gt[i].distance < fscore_thresh;
    if (m.has_normals) nacc += pred.normals[i].dot(gt.normals[to_gt[i].index]);
  }
  for (std::size_t j = 0; j < gt.size(); ++j) {
    comp += to_pred[j].distance;
    rec += to_pred[j].distance < fscore_thresh;
    if (m.has_normals) ncomp += pred.normals[to_pred[j].index].dot(gt.normals[j]);
  }
  const double np = static_cast<double>(pred.size()), ng = static_cast<double>(gt.size());
  m.accuracy = acc / np;
  m.completeness = comp / ng;
  m.chamfer = (m.accuracy + m.completeness) / 2.0;
  m.precision = 100.0 * static_cast<double>(prec) / np;
  m.recall = 100.0 * static_cast<double>(rec) / ng;
  m.fscore = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  if (m.has_normals) {
    m.normal_accuracy = 100.0 * nacc / np;
    m.normal_completeness = 100.0 * ncomp / ng;
    m.normal_consistency = (m.normal_accuracy + m.normal_completeness) / 2.0;
  }
  return m;
}

}  // namespace planegeo
