#pragma once

// On-disk view sets and per-stage artifacts. A view set is a directory with
// views.json plus per-view rasters; every stage reads and writes files
// relative to such directories.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/io/json_io.hpp"
#include "planegeo/io/pfm.hpp"
#include "planegeo/io/ply.hpp"
#include "planegeo/io/png.hpp"
#include "planegeo/plane_depth.hpp"
#include "planegeo/plane_global.hpp"
#include "planegeo/plane_seg.hpp"
#include "planegeo/supervision.hpp"
#include "planegeo/synth.hpp"

namespace planegeo::pipeline {

namespace fs = std::filesystem;

struct ViewData {
  std::string name;
  Camera camera;
  ColorImage color;
  DepthMap depth;  // observed (input) or rendered (generated) metric depth
  NormalMap normals;
  InstanceMaskMap instances;
  DepthMap mono;
  bool generated = false;
};

struct ViewSet {
  std::vector<ViewData> views;
  std::optional<synth::SceneSpec> scene;

  std::vector<Camera> cameras() const {
    std::vector<Camera> out;
    for (const auto& v : views) out.push_back(v.camera);
    return out;
  }
  std::vector<DepthMap> depths() const {
    std::vector<DepthMap> out;
    for (const auto& v : views) out.push_back(v.depth);
    return out;
  }
};

inline std::string view_file(const std::string& name, const char* suffix) { return "views/" + name + suffix; }

inline void write_view_set(const std::string& dir, const ViewSet& set) {
  io::Json arr = io::Json::array();
  for (const auto& v : set.views) {
    const fs::path base(dir);
    io::write_png_rgb((base / view_file(v.name, "_color.png")).string(), v.color);
    io::write_depth_pfm((base / view_file(v.name, "_depth.pfm")).string(), v.depth);
    io::write_normal_pfm((base / view_file(v.name, "_normal.pfm")).string(), v.normals);
    io::write_png16((base / view_file(v.name, "_instance.png")).string(), v.instances);
    io::write_depth_pfm((base / view_file(v.name, "_mono.pfm")).string(), v.mono);
    arr.push_back(io::Json{{"name", v.name},
                           {"camera", io::camera_json(v.camera)},
                           {"color", view_file(v.name, "_color.png")},
                           {"depth", view_file(v.name, "_depth.pfm")},
                           {"normal", view_file(v.name, "_normal.pfm")},
                           {"instance", view_file(v.name, "_instance.png")},
                           {"mono", view_file(v.name, "_mono.pfm")},
                           {"generated", v.generated}});
  }
  io::Json root{{"views", arr}};
  if (set.scene) {
    io::write_json((fs::path(dir) / "scene.json").string(), io::scene_json(*set.scene));
    root["scene"] = "scene.json";
  }
  io::write_json((fs::path(dir) / "views.json").string(), root);
}

/// Reads `dir`/views.json; `dir` may also name the json file itself.
inline ViewSet read_view_set(const std::string& path) {
  fs::path file(path);
  if (fs::is_directory(file)) file /= "views.json";
  if (!fs::exists(file)) throw Error(ErrorKind::Input, "missing view set " + file.string());
  const fs::path dir = file.parent_path();
  const io::Json root = io::read_json(file.string());
  ViewSet set;
  io::parse_guard("views.json", [&] {
    for (const auto& j : root.at("views")) {
      ViewData v;
      v.name = j.at("name").get<std::string>();
      v.camera = io::json_camera(j.at("camera"));
      auto at = [&](const char* key) { return (dir / j.at(key).get<std::string>()).string(); };
      v.color = j.contains("color") ? io::read_png_rgb(at("color")) : ColorImage(v.camera.width(), v.camera.height());
      v.depth = io::read_depth_pfm(at("depth"));
      v.normals = io::read_normal_pfm(at("normal"));
      v.instances = io::read_png16(at("instance"));
      v.mono = io::read_depth_pfm(at("mono"));
      v.generated = j.value("generated", false);
      require_camera_shape(v.camera, v.depth, v.name + " depth");
      require_camera_shape(v.camera, v.mono, v.name + " mono");
      require_same_shape(v.depth.raster(), v.normals.raster(), v.name + " normals");
      require_same_shape(v.depth.raster(), v.instances, v.name + " instances");
      require_same_shape(v.depth.raster(), v.color, v.name + " color");
      set.views.push_back(std::move(v));
    }
    if (root.contains("scene")) set.scene = io::json_scene(io::read_json((dir / root.at("scene").get<std::string>()).string()));
    return 0;
  });
  return set;
}

// Masks: masks/<view>.png (16-bit labels) + masks/<view>.json sidecar.
inline void write_masks(const std::string& dir, const std::string& name, const std::vector<PlaneMask2D>& masks,
                        int width, int height) {
  io::write_png16((fs::path(dir) / (name + ".png")).string(), mask_label_image(masks, width, height));
  io::write_json((fs::path(dir) / (name + ".json")).string(), io::masks_json(masks));
}

inline std::vector<PlaneMask2D> read_masks(const std::string& dir, const std::string& name, int view_id) {
  const auto labels = io::read_png16((fs::path(dir) / (name + ".png")).string());
  const auto side = io::read_json((fs::path(dir) / (name + ".json")).string());
  std::vector<Vec3> normals;
  std::vector<int> instances;
  io::parse_guard("mask sidecar", [&] {
    for (const auto& m : side.at("masks")) {
      normals.push_back(io::json_vec(m.at("mean_normal")));
      instances.push_back(m.at("instance").get<int>());
    }
    return 0;
  });
  auto masks = masks_from_label_image(labels, normals, instances, view_id);
  io::apply_masks_json(side, masks);
  return masks;
}

// Planes: planes.json plus planes/plane_<id>_{support,confident}.ply.
inline void write_planes(const std::string& dir, const std::vector<GlobalPlane>& planes) {
  io::write_json((fs::path(dir) / "planes.json").string(), io::planes_json(planes));
  for (const auto& p : planes) {
    const std::string stem = (fs::path(dir) / "planes" / ("plane_" + std::to_string(p.id))).string();
    PointCloud s{p.support.points, {}, {}}, c{p.confident_support.points, {}, {}};
    io::write_ply(stem + "_support.ply", s);
    io::write_ply(stem + "_confident.ply", c);
  }
}

inline std::vector<GlobalPlane> read_planes(const std::string& dir) {
  fs::path file(dir);
  if (fs::is_directory(file)) file /= "planes.json";
  auto planes = io::json_planes(io::read_json(file.string()));
  const fs::path base = file.parent_path();
  for (auto& p : planes) {
    const std::string stem = (base / "planes" / ("plane_" + std::to_string(p.id))).string();
    if (fs::exists(stem + "_support.ply")) p.support = io::read_ply(stem + "_support.ply");
    if (fs::exists(stem + "_confident.ply")) p.confident_support = io::read_ply(stem + "_confident.ply");
  }
  return planes;
}

// Plane-aware depth: depth/<view>.pfm, depth/<view>_tags.png, depth/<view>.json.
inline void write_plane_depth(const std::string& dir, const std::string& name, const PlaneAwareDepth& d) {
  io::write_depth_pfm((fs::path(dir) / (name + ".pfm")).string(), d.depth);
  io::write_png16((fs::path(dir) / (name + "_tags.png")).string(), d.tag_image());
  io::write_json((fs::path(dir) / (name + ".json")).string(),
                 io::Json{{"a", d.alignment.a},
                          {"b", d.alignment.b},
                          {"rms", d.alignment.rms},
                          {"samples", d.alignment.samples},
                          {"alignment_failed", d.alignment_failed}});
}

inline PlaneAwareDepth read_plane_depth(const std::string& dir, const std::string& name) {
  auto depth = io::read_depth_pfm((fs::path(dir) / (name + ".pfm")).string());
  const auto tags = io::read_png16((fs::path(dir) / (name + "_tags.png")).string());
  const auto side = io::read_json((fs::path(dir) / (name + ".json")).string());
  MonoAlignment a;
  io::parse_guard("depth sidecar", [&] {
    a.a = side.at("a").get<double>();
    a.b = side.at("b").get<double>();
    a.rms = side.value("rms", 0.0);
    a.samples = side.value("samples", std::size_t{0});
    return 0;
  });
  auto out = PlaneAwareDepth::from_tags(std::move(depth), tags, a);
  out.alignment_failed = side.value("alignment_failed", false);
  return out;
}

// Supervision: supervision/<view>_source.png, supervision/<view>_kind.png.
inline void write_supervision(const std::string& dir, const std::string& name, const SupervisionMap& s) {
  io::write_png16((fs::path(dir) / (name + "_source.png")).string(), s.source_image());
  io::write_png16((fs::path(dir) / (name + "_kind.png")).string(), s.kind_image());
}

}  // namespace planegeo::pipeline
