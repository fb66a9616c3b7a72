#include <gtest/gtest.h>

#include <limits>

#include "helpers.hpp"
#include "planegeo/view_select.hpp"

using namespace planegeo;
using namespace testing_util;

namespace {

// Square patch of side `size` on z = z0 facing -z, sampled every `step`.
GlobalPlane square_plane(int id, double z0, double size = 1.0, double step = 0.1, Vec3 offset = Vec3::Zero()) {
  GlobalPlane p;
  p.id = id;
  p.normal = Vec3(0, 0, -1);
  for (double x = -size / 2; x <= size / 2 + 1e-9; x += step)
    for (double y = -size / 2; y <= size / 2 + 1e-9; y += step) p.support.points.push_back(Vec3(x, y, z0) + offset);
  p.centroid = Vec3(0, 0, z0) + offset;
  p.offset = -p.normal.dot(p.centroid);
  p.fitted = true;
  return p;
}

ScoringContext context(double diag = 10.0) {
  ScoringContext ctx;
  ctx.intrinsics = Camera(50, 50, 32, 24, 64, 48, Mat4::Identity());
  ctx.up = Vec3::UnitY();
  ctx.scene_diagonal = diag;
  return ctx;
}

struct OracleScore {
  double r, cos, d;
  double total() const { return r + cos - d; }
};

// Coverage by explicit pinhole projection of a look-at pose.
OracleScore oracle_score(const Vec3& c, const GlobalPlane& plane, const ScoringContext& ctx) {
  const Vec3 z = (plane.centroid - c).normalized();
  Vec3 x = (-ctx.up).cross(z);
  if (x.norm() < 1e-9) x = (std::abs(z.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX()).cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  const auto& k = ctx.intrinsics;
  std::size_t hit = 0;
  for (const auto& p : plane.support.points) {
    const Vec3 q = p - c;
    const double zc = q.dot(z);
    if (!(zc > 0)) continue;
    const double u = k.fx() * q.dot(x) / zc + k.cx(), v = k.fy() * q.dot(y) / zc + k.cy();
    if (u < 0 || v < 0 || u >= k.width() || v >= k.height()) continue;
    if (ctx.occluder) {
      const auto t = ctx.occluder(Ray{c, q / zc});
      if (t && std::abs(zc - *t) > ctx.depth_tol_rel * *t) continue;
    }
    ++hit;
  }
  const Vec3 view = plane.centroid - c;
  return {static_cast<double>(hit) / plane.support.size(), std::abs(view.normalized().dot(plane.normal)),
          std::abs(plane.normal.dot(c) + plane.offset) / ctx.scene_diagonal};
}

VisibilityGrid open_grid(const Vec3& origin, double vs, std::array<std::uint32_t, 3> dims, std::uint64_t seed,
                         double keep = 0.5) {
  VisibilityGrid g(origin, vs, dims);
  Rng rng(seed);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) g.set_visible(i, rng.uniform() < keep);
  return g;
}

}  // namespace

TEST(ScoreCandidate, OnAxisViewIsFullCoverageUnitCos) {
  const auto plane = square_plane(0, 5.0, 0.5);
  const auto ctx = context(10.0);
  const auto s = score_candidate(Vec3(0, 0, 1), plane, ctx);
  EXPECT_DOUBLE_EQ(s.components.coverage, 1.0);
  EXPECT_NEAR(s.components.cos_theta, 1.0, 1e-15);
  EXPECT_NEAR(s.components.distance, 0.4, 1e-15);
  EXPECT_NEAR(s.score, 1.6, 1e-15);
  EXPECT_EQ(s.target_plane_id, 0);
  const auto p = s.camera.project(plane.centroid);
  ASSERT_TRUE(p);
  EXPECT_LT((p->pixel - Vec2(32, 24)).norm(), 1e-9);
}

TEST(ScoreCandidate, InPlaneViewHasZeroCosAndDistance) {
  const auto plane = square_plane(0, 5.0);
  const auto s = score_candidate(Vec3(3, 0, 5), plane, context());
  EXPECT_NEAR(s.components.cos_theta, 0.0, 1e-15);
  EXPECT_NEAR(s.components.distance, 0.0, 1e-15);
  EXPECT_THROW(score_candidate(plane.centroid, plane, context()), Error);
}

TEST(ScoreCandidate, MatchesOracleOnRandomCandidates) {
  Rng rng(13);
  const auto plane = square_plane(2, 4.0, 2.0, 0.1);
  auto ctx = context(8.0);
  // Wall at x = 1.5 hides part of the patch from candidates on the far side.
  ctx.occluder = [](const Ray& r) -> std::optional<double> {
    if (std::abs(r.dir.x()) < 1e-12) return std::nullopt;
    const double t = (1.5 - r.origin.x()) / r.dir.x();
    if (t <= 0) return std::nullopt;
    const Vec3 p = r.origin + t * r.dir;
    if (std::abs(p.y()) > 2) return std::nullopt;
    return t;
  };
  for (int i = 0; i < 500; ++i) {
    const Vec3 c(rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(-1, 3.5));
    const auto got = score_candidate(c, plane, ctx);
    const auto want = oracle_score(c, plane, ctx);
    EXPECT_NEAR(got.components.coverage, want.r, 1e-12);
    EXPECT_NEAR(got.components.cos_theta, want.cos, 1e-12);
    EXPECT_NEAR(got.components.distance, want.d, 1e-12);
    EXPECT_NEAR(got.score, want.total(), 1e-12);
  }
}

TEST(SelectViews, SingleVisibleVoxelIsChosen) {
  VisibilityGrid g(Vec3(-2, -2, 0), 0.5, {8, 8, 8});
  const auto idx = g.linear(3, 5, 2);
  g.set_visible(idx, true);
  SelectionOptions o;
  o.near_surface_dist = 0;
  const auto props = select_novel_views({square_plane(0, 5.0)}, g, context(), o);
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].voxel, static_cast<std::int64_t>(idx));
  EXPECT_LT((props[0].camera.center() - g.center(idx)).norm(), 1e-12);
}

TEST(SelectViews, StrideOneEqualsBruteForceArgmax) {
  const auto g = open_grid(Vec3(-2, -2, -1), 0.4, {10, 10, 9}, 5);
  const std::vector<GlobalPlane> planes{square_plane(0, 4.0), square_plane(1, 3.0, 0.6, 0.1, Vec3(1, 0.5, 0))};
  const auto ctx = context(9.0);
  SelectionOptions o;
  o.near_surface_dist = 0;
  o.dedup_angle_deg = -1;  // keep both proposals
  const auto props = select_novel_views(planes, g, ctx, o);
  ASSERT_EQ(props.size(), 2u);
  for (std::size_t k = 0; k < planes.size(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    std::int64_t arg = -1;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      if (!g.visible(i)) continue;
      const double s = oracle_score(g.center(i), planes[k], ctx).total();
      if (s > best + 1e-12) {
        best = s;
        arg = static_cast<std::int64_t>(i);
      }
    }
    EXPECT_EQ(props[k].voxel, arg) << "plane " << k;
    EXPECT_NEAR(props[k].score, best, 1e-12);
  }
}

TEST(SelectViews, CoarserStrideNeverBeatsStrideOne) {
  const auto g = open_grid(Vec3(-2, -2, -1), 0.3, {14, 14, 12}, 9);
  const std::vector<GlobalPlane> planes{square_plane(0, 4.0)};
  SelectionOptions o;
  o.near_surface_dist = 0;
  const double fine = select_novel_views(planes, g, context(), o)[0].score;
  for (int stride : {2, 3, 4}) {
    o.stride = stride;
    EXPECT_LE(select_novel_views(planes, g, context(), o)[0].score, fine);
  }
}

TEST(SelectViews, IdenticalPlanesYieldOneProposal) {
  const auto g = open_grid(Vec3(-2, -2, -1), 0.4, {10, 10, 9}, 3);
  SelectionOptions o;
  o.near_surface_dist = 0;
  const auto props = select_novel_views({square_plane(0, 4.0), square_plane(1, 4.0)}, g, context(), o);
  EXPECT_EQ(props.size(), 1u);
  const auto again = select_novel_views({square_plane(0, 4.0)}, g, context(), o, {props[0].camera});
  EXPECT_TRUE(again.empty());
}

TEST(SelectViews, TranslationMovesProposalsRigidly) {
  const Vec3 t(3.0, -1.0, 2.0);
  const auto g = open_grid(Vec3(-2, -2, -1), 0.4, {10, 10, 9}, 11);
  VisibilityGrid moved(g.origin() + t, g.voxel_size(), g.dims());
  for (std::size_t i = 0; i < g.voxel_count(); ++i) moved.set_visible(i, g.visible(i));
  SelectionOptions o;
  o.near_surface_dist = 0;
  const auto a = select_novel_views({square_plane(0, 4.0)}, g, context(), o);
  const auto b = select_novel_views({square_plane(0, 4.0, 1.0, 0.1, t)}, moved, context(), o);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a[0].voxel, b[0].voxel);
  EXPECT_LT((a[0].camera.center() + t - b[0].camera.center()).norm(), 1e-9);
  EXPECT_NEAR(a[0].score, b[0].score, 1e-9);
}

TEST(SelectViews, InputErrors) {
  VisibilityGrid empty(Vec3::Zero(), 1.0, {2, 2, 2});
  auto kind = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  EXPECT_EQ(kind([&] { select_novel_views({}, empty, context()); }), ErrorKind::Input);
  EXPECT_EQ(kind([&] { select_novel_views({square_plane(0, 4)}, empty, context()); }), ErrorKind::EmptyScene);
  EXPECT_EQ(kind([&] { grid_candidates(empty, 0); }), ErrorKind::Input);
}

TEST(Trajectory, FourViewsAtQuarterTurns) {
  Bounds3 b{Vec3(0, 0, 0), Vec3(10, 3, 5)};
  const auto ref = Camera::look_at(50, 50, 32, 24, 64, 48, Vec3(1, 1.5, 1), Vec3(5, 1.5, 2.5), Vec3::UnitY());
  const auto views = elliptical_trajectory(b, 4, {ref});
  ASSERT_EQ(views.size(), 4u);
  const Vec3 c = b.center();
  const Vec3 expect[4] = {{c.x() + 4.0, 1.5, c.z()}, {c.x(), 1.5, c.z() + 2.0}, {c.x() - 4.0, 1.5, c.z()},
                          {c.x(), 1.5, c.z() - 2.0}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT((views[i].camera.center() - expect[i]).norm(), 1e-12);
    const auto p = views[i].camera.project(c);
    ASSERT_TRUE(p);
    EXPECT_LT((p->pixel - Vec2(32, 24)).norm(), 1e-9);
    EXPECT_EQ(views[i].target_plane_id, -1);
  }
  const auto one = elliptical_trajectory(b, 1, {ref});
  EXPECT_LT((one[0].camera.center() - expect[0]).norm(), 1e-12);
}

TEST(Trajectory, RejectsBadInput) {
  const auto ref = identity_camera();
  EXPECT_THROW(elliptical_trajectory(Bounds3{Vec3::Zero(), Vec3(1, 1, 1)}, 0, {ref}), Error);
  try {
    elliptical_trajectory(Bounds3{Vec3::Zero(), Vec3(0, 1, 1)}, 3, {ref});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
}

TEST(MeanUp, AveragesCameraUpVectors) {
  const auto a = Camera::look_at(50, 50, 32, 24, 64, 48, Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3::UnitY());
  EXPECT_LT((mean_up({a, a}) - Vec3::UnitY()).norm(), 1e-12);
  EXPECT_EQ(mean_up({}), Vec3::UnitY());
}
