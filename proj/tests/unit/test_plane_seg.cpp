#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <queue>

#include "helpers.hpp"
#include "planegeo/plane_seg.hpp"
#include "planegeo/synth.hpp"

using namespace planegeo;

namespace {

NormalMap two_region_normals(int w, int h) {
  NormalMap n(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) n.set(x, y, x < w / 2 ? Vec3(0, 0, -1) : Vec3(-1, 0, 0));
  return n;
}

// Index of the world axis direction (+x, -x, +y, -y, +z, -z) closest to n.
int axis_class(const Vec3& n) {
  int best = 0;
  double best_dot = -2;
  for (int a = 0; a < 3; ++a)
    for (int s = 0; s < 2; ++s) {
      const double d = (s == 0 ? 1.0 : -1.0) * n[a];
      if (d > best_dot) {
        best_dot = d;
        best = 2 * a + s;
      }
    }
  return best;
}

// 4-connected components of equal non-zero ids, computed by BFS.
std::vector<std::vector<int>> id_components(const Raster<std::uint16_t>& ids) {
  std::vector<int> seen(ids.size(), 0);
  std::vector<std::vector<int>> out;
  const int w = ids.width(), h = ids.height();
  for (int s = 0; s < static_cast<int>(ids.size()); ++s) {
    if (seen[s] || ids[s] == 0) continue;
    std::vector<int> comp;
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const int i = q.front();
      q.pop();
      comp.push_back(i);
      const int x = i % w, y = i / w;
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& p : nb) {
        if (p[0] < 0 || p[1] < 0 || p[0] >= w || p[1] >= h) continue;
        const int j = p[1] * w + p[0];
        if (!seen[j] && ids[j] == ids[s]) {
          seen[j] = 1;
          q.push(j);
        }
      }
    }
    out.push_back(comp);
  }
  return out;
}

}  // namespace

TEST(ClusterNormals, TwoRegionsGetTwoLabels) {
  const auto n = two_region_normals(20, 10);
  const auto c = cluster_normals(n, 2, 1);
  const int left = c.labels(0, 0), right = c.labels(19, 0);
  EXPECT_NE(left, right);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) EXPECT_EQ(c.labels(x, y), x < 10 ? left : right);
  EXPECT_LT((c.centroids[left] - Vec3(0, 0, -1)).norm(), 1e-12);
  EXPECT_NEAR(c.radius[left], 0.0, 1e-7);
}

TEST(ClusterNormals, SingleClusterCentroidIsNormalizedMean) {
  Rng rng(2);
  NormalMap n(8, 8);
  Vec3 sum = Vec3::Zero();
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      n.set(x, y, Vec3(0.1 * rng.normal(), 0.1 * rng.normal(), -1));
      sum += n(x, y);
    }
  const auto c = cluster_normals(n, 1, 0);
  for (std::size_t i = 0; i < c.labels.size(); ++i) EXPECT_EQ(c.labels[i], 0);
  EXPECT_LT((c.centroids[0] - sum.normalized()).norm(), 1e-12);
}

TEST(ClusterNormals, InvalidPixelsUnlabeledAndTooFewIsError) {
  NormalMap n(4, 1);
  n.set(0, 0, Vec3(0, 0, 1));
  const auto c = cluster_normals(n, 1, 0);
  EXPECT_EQ(c.labels(0, 0), 0);
  EXPECT_EQ(c.labels(1, 0), -1);
  try {
    cluster_normals(n, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(ClusterNormals, SameSeedSameLabels) {
  const auto spec = synth::box_room();
  const auto b = synth::raycast_view(spec, spec.cameras[1]);
  const auto a1 = cluster_normals(b.normals, 6, 9);
  const auto a2 = cluster_normals(b.normals, 6, 9);
  EXPECT_EQ(a1.labels.data(), a2.labels.data());
}

TEST(ClusterNormals, SyntheticRoomAgreesWithAxisClasses) {
  const auto spec = synth::box_room();
  for (std::size_t v = 0; v < spec.cameras.size(); ++v) {
    const auto& cam = spec.cameras[v];
    const auto b = synth::raycast_view(spec, cam);
    const auto c = cluster_normals(b.normals, 6, 3);
    std::array<std::array<std::size_t, 6>, 6> confusion{};
    std::size_t total = 0;
    for (int y = 0; y < cam.height(); ++y)
      for (int x = 0; x < cam.width(); ++x) {
        if (!b.normals.valid(x, y)) continue;
        const Vec3 world = cam.rotation().transpose() * b.normals(x, y);
        ++confusion[c.labels(x, y)][axis_class(world)];
        ++total;
      }
    std::array<int, 6> perm;
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
      std::size_t agree = 0;
      for (int k = 0; k < 6; ++k) agree += confusion[k][perm[k]];
      best = std::max(best, agree);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_GE(static_cast<double>(best) / total, 0.98) << "view " << v;
  }
}

TEST(ExtractMasks, OneClusterTwoInstancesGivesTwoMasks) {
  const int w = 20, h = 10;
  Raster<std::int32_t> clusters(w, h, 0);
  InstanceMaskMap inst(w, h, 0);
  NormalMap n(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      inst(x, y) = x < 10 ? 3 : 4;
      n.set(x, y, Vec3(0, 0, -1));
    }
  const auto masks = extract_plane_masks(clusters, inst, n, 10, 5);
  ASSERT_EQ(masks.size(), 2u);
  EXPECT_EQ(masks[0].pixels.size(), 100u);
  EXPECT_EQ(masks[1].pixels.size(), 100u);
  EXPECT_EQ(masks[0].instance_label, 3);
  EXPECT_EQ(masks[1].instance_label, 4);
  EXPECT_EQ(masks[0].view_id, 5);
  EXPECT_LT((masks[0].mean_normal - Vec3(0, 0, -1)).norm(), 1e-12);
  for (const auto& p : masks[1].pixels) EXPECT_GE(p.x, 10);
}

TEST(ExtractMasks, SmallComponentsDroppedAndDiagonalsSplit) {
  const int w = 30, h = 30;
  Raster<std::int32_t> clusters(w, h, -1);
  InstanceMaskMap inst(w, h, 1);
  NormalMap n(w, h);
  auto fill = [&](int x, int y) {
    clusters(x, y) = 0;
    n.set(x, y, Vec3(0, 0, -1));
  };
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) fill(x, y);           // 100 px
  for (int i = 0; i < 10; ++i) fill(20 + i, 20);       // 10 px
  for (int y = 11; y < 21; ++y)
    for (int x = 11; x < 21; ++x)
      if (x == 11 && y == 11) fill(x, y);              // touches the square only by a corner
  const auto masks = extract_plane_masks(clusters, inst, n, 50);
  ASSERT_EQ(masks.size(), 1u);
  EXPECT_EQ(masks[0].pixels.size(), 100u);
  const auto small = extract_plane_masks(clusters, inst, n, 1);
  EXPECT_EQ(small.size(), 3u);
}

TEST(ExtractMasks, UnlabeledPixelsNeverJoin) {
  Raster<std::int32_t> clusters(10, 10, 0);
  InstanceMaskMap inst(10, 10, 0);
  NormalMap n(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      n.set(x, y, Vec3(0, 0, -1));
      if (y < 5) inst(x, y) = 2;
    }
  const auto masks = extract_plane_masks(clusters, inst, n, 1);
  ASSERT_EQ(masks.size(), 1u);
  EXPECT_EQ(masks[0].pixels.size(), 50u);
}

TEST(ExtractMasks, ShapeMismatchIsShapeError) {
  try {
    extract_plane_masks(Raster<std::int32_t>(4, 4, 0), InstanceMaskMap(4, 5, 1), NormalMap(4, 4), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
}

TEST(ExtractMasks, SyntheticMasksMatchGroundTruthRegions) {
  const auto spec = synth::box_room();
  int checked = 0;
  for (std::size_t v = 0; v < spec.cameras.size(); ++v) {
    const auto& cam = spec.cameras[v];
    const auto b = synth::raycast_view(spec, cam);
    const auto c = cluster_normals(b.normals, 6, 3);
    const auto masks =
        extract_plane_masks(c.labels, b.instances, b.normals, default_min_mask_pixels(cam.width(), cam.height()), v);
    const auto labels = mask_label_image(masks, cam.width(), cam.height());
    std::vector<int> covered(labels.size(), 0);
    for (const auto& m : masks)
      for (const auto& p : m.pixels) ++covered[labels.index(p.x, p.y)];
    for (int k : covered) EXPECT_LE(k, 1);

    const double min_area = 0.02 * cam.width() * cam.height();
    for (const auto& region : id_components(b.plane_ids)) {
      if (region.size() < min_area) continue;
      std::map<int, std::size_t> overlap;
      for (int i : region)
        if (labels[i] > 0) ++overlap[labels[i]];
      double best_iou = 0;
      for (const auto& [lab, inter] : overlap) {
        const double uni = region.size() + masks[lab - 1].pixels.size() - inter;
        best_iou = std::max(best_iou, inter / uni);
      }
      EXPECT_GE(best_iou, 0.95) << "view " << v << " region of " << region.size() << " px";
      ++checked;
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(MaskLabels, RoundTrip) {
  PlaneMask2D a, b;
  a.pixels = {{0, 0}, {1, 0}};
  b.pixels = {{2, 1}};
  const auto img = mask_label_image({a, b}, 3, 2);
  EXPECT_EQ(img(0, 0), 1);
  EXPECT_EQ(img(2, 1), 2);
  EXPECT_EQ(img(0, 1), 0);
  const auto back = masks_from_label_image(img, {Vec3::UnitZ(), Vec3::UnitX()}, {5, 6}, 1);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pixels, a.pixels);
  EXPECT_EQ(back[1].instance_label, 6);
}
