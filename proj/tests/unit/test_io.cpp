#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <optional>

#include "helpers.hpp"
#include "planegeo/io/json_io.hpp"
#include "planegeo/io/pfm.hpp"
#include "planegeo/io/ply.hpp"
#include "planegeo/io/png.hpp"
#include "planegeo/pipeline/workspace.hpp"
#include "planegeo/synth.hpp"
#include "planegeo/vis_grid.hpp"

using namespace planegeo;
using namespace testing_util;

namespace {

std::optional<ErrorKind> kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace

TEST(Pfm, DepthRoundTripAtFloatPrecision) {
  Rng rng(1);
  DepthMap d(13, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 13; ++x)
      if ((x + y) % 5) d.set(x, y, rng.uniform(0.1, 30.0));
  const auto back = io::decode_depth_pfm(io::encode_depth_pfm(d));
  ASSERT_EQ(back.width(), 13);
  ASSERT_EQ(back.height(), 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 13; ++x) {
      EXPECT_EQ(back.valid(x, y), d.valid(x, y));
      EXPECT_EQ(back(x, y), static_cast<double>(static_cast<float>(d(x, y))));
    }
}

TEST(Pfm, NormalRoundTrip) {
  Rng rng(2);
  NormalMap n(5, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x)
      if (x != 2) n.set(x, y, random_unit(rng));
  const auto back = io::decode_normal_pfm(io::encode_normal_pfm(n));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      EXPECT_EQ(back.valid(x, y), n.valid(x, y));
      EXPECT_LT((back(x, y) - n(x, y)).norm(), 1e-6);
    }
}

TEST(Pfm, RejectsGarbage) {
  const std::vector<std::uint8_t> junk{'P', 'x', '\n', '1'};
  EXPECT_EQ(kind_of([&] { io::decode_depth_pfm(junk); }), ErrorKind::Io);
  auto bytes = io::encode_depth_pfm(DepthMap(Raster<double>(4, 4, 1.0)));
  bytes.resize(bytes.size() - 3);
  EXPECT_EQ(kind_of([&] { io::decode_depth_pfm(bytes); }), ErrorKind::Io);
}

TEST(Png, SixteenBitEightBitAndRgbRoundTrip) {
  Raster<std::uint16_t> a(9, 6);
  Raster<std::uint8_t> b(9, 6);
  ColorImage c(9, 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<std::uint16_t>(i * 977 % 65536);
    b[i] = static_cast<std::uint8_t>(i * 31);
    c[i] = Rgb{static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(255 - i), static_cast<std::uint8_t>(i * 7)};
  }
  EXPECT_EQ(io::decode_png16(io::encode_png16(a)).data(), a.data());
  EXPECT_EQ(io::decode_png8(io::encode_png8(b)).data(), b.data());
  EXPECT_EQ(io::decode_png_rgb(io::encode_png_rgb(c)).data(), c.data());
  EXPECT_EQ(io::encode_png16(a), io::encode_png16(a));
}

TEST(Png, RejectsNonPng) {
  EXPECT_EQ(kind_of([] { io::decode_png16(std::vector<std::uint8_t>(64, 7)); }), ErrorKind::Io);
}

TEST(Ply, RoundTripWithAndWithoutNormals) {
  Rng rng(3);
  PointCloud c;
  for (int i = 0; i < 50; ++i) {
    c.points.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()));
    c.normals.push_back(random_unit(rng));
  }
  const auto back = io::decode_ply(io::encode_ply(c));
  ASSERT_EQ(back.size(), c.size());
  ASSERT_TRUE(back.has_normals());
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) EXPECT_EQ(back.points[i][k], static_cast<double>(static_cast<float>(c.points[i][k])));
    EXPECT_LT((back.normals[i] - c.normals[i]).norm(), 1e-6);
  }
  c.normals.clear();
  const auto bare = io::decode_ply(io::encode_ply(c));
  ASSERT_EQ(bare.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((bare.points[i] - c.points[i]).norm(), 1e-6);
  EXPECT_FALSE(bare.has_normals());
}

TEST(Grid, BinaryRoundTrip) {
  VisibilityGrid g(Vec3(-1, 0.5, 2), 0.125, {5, 3, 4});
  for (std::size_t i = 0; i < g.voxel_count(); i += 3) g.set_visible(i, true);
  const auto back = io::decode_grid(io::encode_grid(g));
  EXPECT_TRUE(back == g);
  auto bytes = io::encode_grid(g);
  bytes[0] ^= 0xff;
  EXPECT_EQ(kind_of([&] { io::decode_grid(bytes); }), ErrorKind::Io);
}

TEST(Json, CameraRoundTripIsExact) {
  Rng rng(4);
  const auto cam = random_camera(rng);
  const auto text = io::camera_json(cam).dump();
  const auto back = io::json_camera(io::Json::parse(text));
  EXPECT_EQ(back.world_to_cam(), cam.world_to_cam());
  EXPECT_EQ(back.fx(), cam.fx());
  EXPECT_EQ(back.cy(), cam.cy());
  EXPECT_EQ(back.width(), cam.width());
}

TEST(Json, MalformedCameraIsInputError) {
  EXPECT_EQ(kind_of([] { io::json_camera(io::Json{{"fx", 1}}); }), ErrorKind::Input);
}

TEST(Json, PlaneRoundTrip) {
  GlobalPlane p;
  p.id = 3;
  p.normal = Vec3(0, 0.6, 0.8);
  p.offset = -1.25;
  p.centroid = Vec3(1, 2, 3);
  p.members = {{0, 2}, {1, 0}};
  p.inlier_count = 17;
  p.rms = 1e-4;
  const auto back = io::json_planes(io::planes_json({p}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, 3);
  EXPECT_EQ(back[0].normal, p.normal);
  EXPECT_EQ(back[0].offset, p.offset);
  EXPECT_EQ(back[0].members, p.members);
  EXPECT_EQ(back[0].inlier_count, 17u);
}

TEST(Json, SceneRoundTripPreservesGeometry) {
  const auto spec = synth::box_room();
  const auto back = io::json_scene(io::Json::parse(io::scene_json(spec).dump()));
  const synth::CompiledScene a(spec), b(back);
  ASSERT_EQ(a.planes().size(), b.planes().size());
  for (std::size_t i = 0; i < a.planes().size(); ++i) {
    EXPECT_EQ(a.planes()[i].normal, b.planes()[i].normal);
    EXPECT_EQ(a.planes()[i].offset, b.planes()[i].offset);
  }
  ASSERT_EQ(back.cameras.size(), spec.cameras.size());
  const auto va = synth::raycast_view(a, spec.cameras[0]);
  const auto vb = synth::raycast_view(b, back.cameras[0]);
  EXPECT_EQ(va.depth.raster().data(), vb.depth.raster().data());
}

TEST(Workspace, ViewSetRoundTrip) {
  const auto dir = temp_dir("viewset");
  const auto spec = synth::box_room();
  const synth::CompiledScene scene(spec);
  pipeline::ViewSet set;
  set.scene = spec;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto b = synth::raycast_view(scene, spec.cameras[i]);
    pipeline::ViewData v;
    v.name = "view" + std::to_string(i);
    v.camera = spec.cameras[i];
    v.color = b.color;
    v.depth = b.depth;
    v.normals = b.normals;
    v.instances = b.instances;
    v.mono = b.depth;
    set.views.push_back(v);
  }
  pipeline::write_view_set(dir, set);
  const auto back = pipeline::read_view_set(dir);
  ASSERT_EQ(back.views.size(), 2u);
  ASSERT_TRUE(back.scene.has_value());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.views[i].name, set.views[i].name);
    EXPECT_EQ(back.views[i].camera.world_to_cam(), set.views[i].camera.world_to_cam());
    EXPECT_EQ(back.views[i].instances.data(), set.views[i].instances.data());
    EXPECT_EQ(back.views[i].color.data(), set.views[i].color.data());
    EXPECT_EQ(back.views[i].depth.valid_count(), set.views[i].depth.valid_count());
  }
  EXPECT_EQ(kind_of([&] { pipeline::read_view_set(dir + "/nope"); }), ErrorKind::Input);
}

TEST(Workspace, PlaneDepthRoundTrip) {
  const auto dir = temp_dir("planedepth");
  PlaneAwareDepth d;
  d.depth = DepthMap(4, 3);
  d.plane_id = Raster<std::int32_t>(4, 3, -1);
  d.source = Raster<std::uint8_t>(4, 3, 0);
  d.depth.set(0, 0, 1.5);
  d.source(0, 0) = static_cast<std::uint8_t>(DepthSource::Plane);
  d.plane_id(0, 0) = 7;
  d.depth.set(1, 0, 2.5);
  d.source(1, 0) = static_cast<std::uint8_t>(DepthSource::AlignedMono);
  d.alignment = MonoAlignment{2.0, 0.5, 0.01, 12};
  pipeline::write_plane_depth(dir, "v", d);
  const auto back = pipeline::read_plane_depth(dir, "v");
  EXPECT_EQ(back.plane_id.data(), d.plane_id.data());
  EXPECT_EQ(back.source.data(), d.source.data());
  EXPECT_EQ(back.alignment.a, 2.0);
  EXPECT_EQ(back.alignment.b, 0.5);
  EXPECT_EQ(back.depth(0, 0), 1.5);
}

TEST(Workspace, MasksRoundTrip) {
  const auto dir = temp_dir("masks");
  PlaneMask2D a, b;
  a.view_id = b.view_id = 2;
  a.pixels = {{0, 0}, {1, 0}, {0, 1}};
  a.mean_normal = Vec3(0, 0, -1);
  a.instance_label = 4;
  a.cluster = 1;
  b.pixels = {{3, 2}};
  b.mean_normal = Vec3(1, 0, 0);
  b.instance_label = 5;
  b.cluster = 0;
  pipeline::write_masks(dir, "v", {a, b}, 4, 3);
  const auto back = pipeline::read_masks(dir, "v", 2);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pixels, a.pixels);
  EXPECT_EQ(back[1].pixels, b.pixels);
  EXPECT_EQ(back[1].instance_label, 5);
  EXPECT_EQ(back[0].cluster, 1);
  EXPECT_EQ(back[0].view_id, 2);
}
