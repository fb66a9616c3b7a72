#include <gtest/gtest.h>

#include "helpers.hpp"
#include "planegeo/supervision.hpp"
#include "planegeo/synth.hpp"

using namespace planegeo;
using namespace testing_util;

namespace {

struct Fixture {
  synth::SceneSpec spec;
  std::vector<GlobalPlane> planes;  // id == index, one per ground-truth plane
  std::map<int, int> gt_to_id;
  std::vector<Camera> cams;
  std::vector<DepthMap> depths;
};

Fixture make_fixture(int n_views) {
  Fixture f;
  f.spec = synth::box_room();
  f.spec.spheres.push_back(synth::SphereSpec{Vec3(3.0, 1.0, 2.5), 0.5, 20});
  const synth::CompiledScene scene(f.spec);
  for (const auto& g : scene.planes()) {
    GlobalPlane p;
    p.id = static_cast<int>(f.planes.size());
    p.normal = g.normal;
    p.offset = g.offset;
    p.fitted = true;
    f.gt_to_id[g.id] = p.id;
    f.planes.push_back(p);
  }
  const auto samples = scene.surface_samples(0.1);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (auto& p : f.planes)
      if (p.normal.dot(samples.normals[i]) > 0.999999 && std::abs(p.signed_distance(samples.points[i])) < 1e-9)
        p.support.points.push_back(samples.points[i]);
  for (auto& p : f.planes) {
    Vec3 c = Vec3::Zero();
    for (const auto& x : p.support.points) c += x;
    p.centroid = c / static_cast<double>(p.support.size());
  }
  for (int v = 0; v < n_views; ++v) {
    f.cams.push_back(f.spec.cameras[v]);
    f.depths.push_back(synth::raycast_view(scene, f.spec.cameras[v]).depth);
  }
  return f;
}

PlaneAwareDepth gt_plane_depth(const Fixture& f, const Camera& cam) {
  const auto b = synth::raycast_view(f.spec, cam);
  PlaneAwareDepth d;
  d.depth = b.depth;
  d.plane_id = Raster<std::int32_t>(cam.width(), cam.height(), -1);
  d.source = Raster<std::uint8_t>(cam.width(), cam.height(), 0);
  for (int y = 0; y < cam.height(); ++y)
    for (int x = 0; x < cam.width(); ++x) {
      if (!b.depth.valid(x, y)) continue;
      if (b.plane_ids(x, y) > 0) {
        d.source(x, y) = static_cast<std::uint8_t>(DepthSource::Plane);
        d.plane_id(x, y) = f.gt_to_id.at(b.plane_ids(x, y));
      } else {
        d.source(x, y) = static_cast<std::uint8_t>(DepthSource::AlignedMono);
      }
    }
  return d;
}

// Direct matrix projection and nearest-pixel depth check.
bool oracle_observes(const Camera& cam, const DepthMap& depth, const Vec3& x, double tol) {
  const Eigen::Vector4d q = cam.world_to_cam() * x.homogeneous();
  if (!(q.z() > 0)) return false;
  const double u = std::floor(cam.fx() * q.x() / q.z() + cam.cx() + 0.5);
  const double v = std::floor(cam.fy() * q.y() / q.z() + cam.cy() + 0.5);
  if (u < 0 || v < 0 || u >= cam.width() || v >= cam.height()) return false;
  const double d = depth(static_cast<int>(u), static_cast<int>(v));
  return d > 0 && std::abs(q.z() - d) <= tol * d;
}

}  // namespace

TEST(BestView, TiesGoToLowerIndex) {
  const auto f = make_fixture(1);
  const auto best = best_view_per_plane(f.planes, {f.cams[0], f.cams[0]}, {f.depths[0], f.depths[0]});
  for (const auto& [id, v] : best.best) EXPECT_EQ(v, 0) << "plane " << id;
}

TEST(BestView, OnlyObservingViewWins) {
  GlobalPlane p;
  p.id = 0;
  p.normal = Vec3(0, 0, -1);
  p.offset = 2.0;
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j) p.support.points.push_back(Vec3(0.1 * i, 0.1 * j, 2.0));
  const auto away = Camera::look_at(50, 50, 25, 25, 50, 50, Vec3(0, 0, 0), Vec3(0, 0, -1), Vec3::UnitY());
  const auto toward = identity_camera(50, 50, 50, 25);
  const DepthMap wall(Raster<double>(50, 50, 2.0));
  const auto best = best_view_per_plane({p}, {away, toward}, {wall, wall});
  EXPECT_EQ(best.best.at(0), 1);
  EXPECT_EQ(best.counts.at(0), (std::vector<std::size_t>{0, 25}));
  const auto none = best_view_per_plane({p}, {away}, {wall});
  EXPECT_EQ(none.unobservable, (std::vector<int>{0}));
}

TEST(BestView, FullViewBeatsPartialViewInEitherOrder) {
  GlobalPlane p;
  p.id = 0;
  p.normal = Vec3(0, 0, -1);
  p.offset = 2.0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) p.support.points.push_back(Vec3(-0.45 + 0.1 * i, -0.45 + 0.1 * j, 2.0));
  const auto cam = identity_camera(100, 100, 100, 50);
  const DepthMap full(Raster<double>(100, 100, 2.0));
  Raster<double> part(100, 100, 2.0);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x)
      if (x < 45) part(x, y) = 1.0;  // a foreground object hides 4 of the 10 columns
  const DepthMap partial(part);
  const auto a = best_view_per_plane({p}, {cam, cam}, {full, partial});
  EXPECT_EQ(a.best.at(0), 0);
  EXPECT_EQ(a.counts.at(0), (std::vector<std::size_t>{100, 60}));
  const auto b = best_view_per_plane({p}, {cam, cam}, {partial, full});
  EXPECT_EQ(b.best.at(0), 1);
}

TEST(BestView, MatchesExhaustiveCounts) {
  const auto f = make_fixture(5);
  const auto best = best_view_per_plane(f.planes, f.cams, f.depths);
  for (const auto& p : f.planes) {
    std::vector<std::size_t> counts(f.cams.size(), 0);
    for (std::size_t v = 0; v < f.cams.size(); ++v)
      for (const auto& x : p.support.points) counts[v] += oracle_observes(f.cams[v], f.depths[v], x, 0.01);
    EXPECT_EQ(best.counts.at(p.id), counts);
    std::size_t top = 0;
    int arg = -1;
    for (std::size_t v = 0; v < counts.size(); ++v)
      if (counts[v] > top) {
        top = counts[v];
        arg = static_cast<int>(v);
      }
    if (arg < 0) EXPECT_FALSE(best.best.count(p.id));
    else EXPECT_EQ(best.best.at(p.id), arg);
  }
}

TEST(SupervisionMap, SingleViewSuperviseItself) {
  const auto f = make_fixture(1);
  const auto best = best_view_per_plane(f.planes, f.cams, f.depths);
  const auto s = build_supervision_map(0, gt_plane_depth(f, f.cams[0]), best, f.cams, f.depths);
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x)
      if (f.depths[0].valid(x, y)) EXPECT_EQ(s.source_view(x, y), 0);
}

TEST(SupervisionMap, PlanesShareOneSourceAcrossNovelViews) {
  auto f = make_fixture(3);
  const auto novel_a = synth::make_camera({}, Vec3(3.0, 1.5, 4.0), Vec3(3.0, 1.0, 0.0));
  const auto novel_b = synth::make_camera({}, Vec3(1.0, 2.0, 2.5), Vec3(5.0, 0.5, 2.5));
  auto cams = f.cams;
  auto depths = f.depths;
  cams.push_back(novel_a);
  cams.push_back(novel_b);
  depths.push_back(synth::raycast_view(f.spec, novel_a).depth);
  depths.push_back(synth::raycast_view(f.spec, novel_b).depth);
  const auto best = best_view_per_plane(f.planes, cams, depths);

  std::size_t nonplanar = 0, nonplanar_ok = 0, planar = 0;
  for (int view : {3, 4}) {
    const auto pd = gt_plane_depth(f, cams[view]);
    const auto s = build_supervision_map(view, pd, best, cams, depths);
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x) {
        if (!pd.depth.valid(x, y)) continue;
        const Ray r = cams[view].pixel_ray(x, y);
        const Vec3 p = r.origin + pd.depth(x, y) * r.dir;
        if (s.kind_at(x, y) == RegionKind::Planar) {
          EXPECT_EQ(s.source_view(x, y), best.best.at(s.plane_id(x, y)));
          EXPECT_EQ(s.plane_id(x, y), pd.plane_id(x, y));
          ++planar;
          continue;
        }
        if (pd.source_at(x, y) == DepthSource::Plane) continue;
        int expect = -1;
        for (std::size_t v = 0; v < cams.size() && expect < 0; ++v)
          if (oracle_observes(cams[v], depths[v], p, 0.01)) expect = static_cast<int>(v);
        ++nonplanar;
        nonplanar_ok += s.source_view(x, y) == expect;
      }
  }
  EXPECT_GT(planar, 10000u);
  ASSERT_GT(nonplanar, 100u);
  EXPECT_GE(static_cast<double>(nonplanar_ok) / nonplanar, 0.999);
}

TEST(SupervisionMap, LaterViewsLeaveEarlierNonPlanarSourcesAlone) {
  auto f = make_fixture(3);
  const auto novel = synth::make_camera({}, Vec3(3.0, 1.5, 4.0), Vec3(3.0, 1.0, 0.0));
  auto cams = f.cams;
  auto depths = f.depths;
  cams.push_back(novel);
  depths.push_back(synth::raycast_view(f.spec, novel).depth);
  const auto pd = gt_plane_depth(f, novel);
  const auto before = build_supervision_map(3, pd, best_view_per_plane(f.planes, cams, depths), cams, depths);
  cams.push_back(f.spec.cameras[3]);
  depths.push_back(synth::raycast_view(f.spec, f.spec.cameras[3]).depth);
  const auto after = build_supervision_map(3, pd, best_view_per_plane(f.planes, cams, depths), cams, depths);
  for (std::size_t i = 0; i < before.source_view.size(); ++i)
    if (pd.source[i] == static_cast<std::uint8_t>(DepthSource::AlignedMono)) {
      EXPECT_EQ(after.source_view[i], before.source_view[i]);
    }
}

TEST(SupervisionMap, MissingViewIsDependencyError) {
  const auto f = make_fixture(1);
  const auto best = best_view_per_plane(f.planes, f.cams, f.depths);
  try {
    build_supervision_map(2, gt_plane_depth(f, f.cams[0]), best, f.cams, f.depths);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dependency);
  }
}

TEST(SupervisionMap, ImagesEncodeSourceAndKind) {
  SupervisionMap s;
  s.source_view = Raster<std::int32_t>(3, 1, -1);
  s.region_kind = Raster<std::uint8_t>(3, 1, 0);
  s.plane_id = Raster<std::int32_t>(3, 1, -1);
  s.source_view(1, 0) = 2;
  s.region_kind(1, 0) = static_cast<std::uint8_t>(RegionKind::NonPlanar);
  s.source_view(2, 0) = 0;
  s.region_kind(2, 0) = static_cast<std::uint8_t>(RegionKind::Planar);
  s.plane_id(2, 0) = 4;
  EXPECT_EQ(s.source_image().data(), (std::vector<std::uint16_t>{0, 3, 1}));
  EXPECT_EQ(s.kind_image().data(), (std::vector<std::uint16_t>{0, 1, 1004}));
}
