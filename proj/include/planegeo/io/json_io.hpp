#pragma once

// JSON encodings for cameras, planes, masks, proposals and scene specs.

#include <json.hpp>

#include <string>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/io/binary.hpp"
#include "planegeo/plane_global.hpp"
#include "planegeo/plane_seg.hpp"
#include "planegeo/synth.hpp"
#include "planegeo/view_select.hpp"

namespace planegeo::io {

using Json = nlohmann::json;

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Input, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

/// Parse wrapper mapping nlohmann errors onto Input errors.
template <typename F>
auto parse_guard(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Input, what + ": " + e.what());
  }
}

inline Json read_json(const std::string& path) {
  const std::string text = read_text(path);
  return parse_guard(path, [&] { return Json::parse(text); });
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json camera_json(const Camera& c) {
  Json m = Json::array();
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) m.push_back(c.world_to_cam()(r, k));
  return Json{{"fx", c.fx()}, {"fy", c.fy()}, {"cx", c.cx()}, {"cy", c.cy()},
              {"width", c.width()}, {"height", c.height()}, {"world_to_cam", m}};
}

inline Camera json_camera(const Json& j) {
  return parse_guard("camera", [&] {
    const Json& m = j.at("world_to_cam");
    if (!m.is_array() || m.size() != 16) throw Error(ErrorKind::Input, "world_to_cam must have 16 entries");
    Mat4 w;
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) w(r, k) = m[static_cast<std::size_t>(r * 4 + k)].get<double>();
    return Camera(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>(),
                  j.at("width").get<int>(), j.at("height").get<int>(), w);
  });
}

inline Json plane_json(const GlobalPlane& p) {
  Json members = Json::array();
  for (const auto& m : p.members) members.push_back(Json::array({m.view, m.mask}));
  return Json{{"id", p.id},
              {"n", vec_json(p.normal)},
              {"d", p.offset},
              {"centroid", vec_json(p.centroid)},
              {"members", members},
              {"n_support", p.support.size()},
              {"n_confident", p.confident_support.size()},
              {"inliers", p.inlier_count},
              {"rms", p.rms},
              {"full_support_fallback", p.used_full_support}};
}

/// Plane parameters and members only; supports travel as PLY files.
inline GlobalPlane json_plane(const Json& j) {
  return parse_guard("plane", [&] {
    GlobalPlane p;
    p.id = j.at("id").get<int>();
    p.normal = json_vec(j.at("n"));
    p.offset = j.at("d").get<double>();
    p.centroid = json_vec(j.at("centroid"));
    for (const auto& m : j.at("members")) p.members.push_back(MaskKey{m.at(0).get<int>(), m.at(1).get<int>()});
    p.inlier_count = j.value("inliers", std::size_t{0});
    p.rms = j.value("rms", 0.0);
    p.used_full_support = j.value("full_support_fallback", false);
    p.fitted = true;
    if (std::abs(p.normal.norm() - 1.0) > 1e-6) throw Error(ErrorKind::Input, "plane normal is not unit length");
    return p;
  });
}

inline Json planes_json(const std::vector<GlobalPlane>& planes) {
  Json arr = Json::array();
  for (const auto& p : planes) arr.push_back(plane_json(p));
  return Json{{"planes", arr}};
}

inline std::vector<GlobalPlane> json_planes(const Json& j) {
  std::vector<GlobalPlane> out;
  parse_guard("planes", [&] {
    for (const auto& p : j.at("planes")) out.push_back(json_plane(p));
    return 0;
  });
  return out;
}

/// Mask sidecar: the label image carries the pixels, this the rest.
inline Json masks_json(const std::vector<PlaneMask2D>& masks) {
  Json arr = Json::array();
  for (std::size_t i = 0; i < masks.size(); ++i)
    arr.push_back(Json{{"label", i + 1},
                       {"pixels", masks[i].pixels.size()},
                       {"mean_normal", vec_json(masks[i].mean_normal)},
                       {"instance", masks[i].instance_label},
                       {"cluster", masks[i].cluster}});
  return Json{{"masks", arr}};
}

inline void apply_masks_json(const Json& j, std::vector<PlaneMask2D>& masks) {
  parse_guard("mask sidecar", [&] {
    const Json& arr = j.at("masks");
    if (arr.size() != masks.size()) throw Error(ErrorKind::Input, "mask sidecar count differs from label image");
    for (std::size_t i = 0; i < masks.size(); ++i) {
      masks[i].mean_normal = json_vec(arr[i].at("mean_normal"));
      masks[i].instance_label = arr[i].at("instance").get<int>();
      masks[i].cluster = arr[i].at("cluster").get<int>();
    }
    return 0;
  });
}

inline Json proposal_json(const ViewProposal& p) {
  return Json{{"camera", camera_json(p.camera)},
              {"target_plane_id", p.target_plane_id},
              {"score", p.score},
              {"R", p.components.coverage},
              {"cos_theta", p.components.cos_theta},
              {"D", p.components.distance},
              {"voxel", p.voxel}};
}

inline ViewProposal json_proposal(const Json& j) {
  return parse_guard("proposal", [&] {
    ViewProposal p;
    p.camera = json_camera(j.at("camera"));
    p.target_plane_id = j.value("target_plane_id", -1);
    p.score = j.value("score", 0.0);
    p.components.coverage = j.value("R", 0.0);
    p.components.cos_theta = j.value("cos_theta", 0.0);
    p.components.distance = j.value("D", 0.0);
    p.voxel = j.value("voxel", std::int64_t{-1});
    return p;
  });
}

inline Json proposals_json(const std::vector<ViewProposal>& props) {
  Json arr = Json::array();
  for (const auto& p : props) arr.push_back(proposal_json(p));
  return Json{{"proposals", arr}};
}

inline std::vector<ViewProposal> json_proposals(const Json& j) {
  std::vector<ViewProposal> out;
  parse_guard("proposals", [&] {
    for (const auto& p : j.at("proposals")) out.push_back(json_proposal(p));
    return 0;
  });
  return out;
}

inline Json face_json(const synth::RectFace& f) {
  return Json{{"center", vec_json(f.center)}, {"u", vec_json(f.u)},         {"v", vec_json(f.v)},
              {"half_u", f.half_u},           {"half_v", f.half_v},         {"instance", f.instance},
              {"plane_group", f.plane_group}};
}

inline Json scene_json(const synth::SceneSpec& s) {
  Json faces = Json::array(), boxes = Json::array(), spheres = Json::array(), cams = Json::array(),
       albedo = Json::array();
  for (const auto& f : s.faces) faces.push_back(face_json(f));
  for (const auto& b : s.boxes)
    boxes.push_back(Json{{"center", vec_json(b.center)}, {"half", vec_json(b.half)}, {"instance", b.instance}});
  for (const auto& sp : s.spheres)
    spheres.push_back(Json{{"center", vec_json(sp.center)}, {"radius", sp.radius}, {"instance", sp.instance}});
  for (const auto& c : s.cameras) cams.push_back(camera_json(c));
  for (const auto& [inst, rgb] : s.albedo) albedo.push_back(Json::array({inst, rgb.r, rgb.g, rgb.b}));
  return Json{{"seed", s.seed},   {"room_min", vec_json(s.room_min)}, {"room_max", vec_json(s.room_max)},
              {"room_walls", s.room_walls}, {"faces", faces},         {"boxes", boxes},
              {"spheres", spheres}, {"cameras", cams},                 {"albedo", albedo}};
}

inline synth::SceneSpec json_scene(const Json& j) {
  return parse_guard("scene", [&] {
    synth::SceneSpec s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.room_min = json_vec(j.at("room_min"));
    s.room_max = json_vec(j.at("room_max"));
    s.room_walls = j.value("room_walls", true);
    for (const auto& f : j.value("faces", Json::array())) {
      synth::RectFace r;
      r.center = json_vec(f.at("center"));
      r.u = json_vec(f.at("u")).normalized();
      r.v = json_vec(f.at("v")).normalized();
      if (std::abs(r.u.dot(r.v)) > 1e-9) throw Error(ErrorKind::Input, "face axes must be orthogonal");
      r.half_u = f.at("half_u").get<double>();
      r.half_v = f.at("half_v").get<double>();
      r.instance = f.at("instance").get<int>();
      r.plane_group = f.value("plane_group", -1);
      s.faces.push_back(r);
    }
    for (const auto& b : j.value("boxes", Json::array()))
      s.boxes.push_back(synth::BoxSpec{json_vec(b.at("center")), json_vec(b.at("half")), b.at("instance").get<int>()});
    for (const auto& sp : j.value("spheres", Json::array()))
      s.spheres.push_back(
          synth::SphereSpec{json_vec(sp.at("center")), sp.at("radius").get<double>(), sp.at("instance").get<int>()});
    for (const auto& c : j.value("cameras", Json::array())) s.cameras.push_back(json_camera(c));
    for (const auto& a : j.value("albedo", Json::array()))
      s.albedo[a.at(0).get<int>()] = Rgb{a.at(1).get<std::uint8_t>(), a.at(2).get<std::uint8_t>(), a.at(3).get<std::uint8_t>()};
    return s;
  });
}

}  // namespace planegeo::io
