#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <string>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/random.hpp"

namespace testing_util {

using namespace planegeo;

inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline Mat4 pose(const Mat3& r, const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = r;
  m.block<3, 1>(0, 3) = t;
  return m;
}

inline Camera identity_camera(int w = 100, int h = 100, double f = 100.0, double c = 50.0) {
  return Camera(f, f, c, c, w, h, Mat4::Identity());
}

inline Camera random_camera(Rng& rng, int w = 64, int h = 48) {
  return Camera(rng.uniform(40, 120), rng.uniform(40, 120), rng.uniform(10, w - 10), rng.uniform(10, h - 10), w, h,
                pose(random_rotation(rng), Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))));
}

inline Vec3 random_unit(Rng& rng) { return Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(); }

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("planegeo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace testing_util
