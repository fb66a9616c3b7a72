#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <string>

#include "planegeo/core/error.hpp"
#include "planegeo/core/raster.hpp"

namespace planegeo {

struct Ray {
  Vec3 origin;
  Vec3 dir;  // camera-frame z component is 1, so the ray parameter equals z-depth
};

struct Projection {
  Vec2 pixel;
  double z = 0.0;
};

/// Pinhole camera, x-right / y-down / z-forward, stored world-to-camera.
/// Pixel (i, j) is the continuous image coordinate (i, j).
class Camera {
 public:
  Camera() = default;
  Camera(double fx, double fy, double cx, double cy, int width, int height, const Mat4& world_to_cam)
      : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height), world_to_cam_(world_to_cam) {
    validate();
    rotation_ = world_to_cam_.block<3, 3>(0, 0);
    translation_ = world_to_cam_.block<3, 1>(0, 3);
    center_ = -rotation_.transpose() * translation_;
  }

  /// Roll-free camera at `eye` looking at `target`; `up` is the world up
  /// direction (image y points along -up).
  static Camera look_at(double fx, double fy, double cx, double cy, int width, int height, const Vec3& eye,
                        const Vec3& target, const Vec3& up) {
    const Vec3 forward = target - eye;
    if (forward.norm() < 1e-12) throw Error(ErrorKind::Degenerate, "look-at target coincides with the eye");
    const Vec3 z = forward.normalized();
    Vec3 down = -up.normalized();
    Vec3 x = down.cross(z);
    if (x.norm() < 1e-9) {
      // Looking straight along the up axis: pick any horizontal reference.
      const Vec3 alt = std::abs(z.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
      x = alt.cross(z);
    }
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = r;
    m.block<3, 1>(0, 3) = -r * eye;
    return Camera(fx, fy, cx, cy, width, height, m);
  }

  /// Same intrinsics, new pose.
  Camera with_pose(const Mat4& world_to_cam) const {
    return Camera(fx_, fy_, cx_, cy_, width_, height_, world_to_cam);
  }

  double fx() const noexcept { return fx_; }
  double fy() const noexcept { return fy_; }
  double cx() const noexcept { return cx_; }
  double cy() const noexcept { return cy_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const Mat4& world_to_cam() const noexcept { return world_to_cam_; }
  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }
  const Vec3& center() const noexcept { return center_; }

  /// World-frame viewing direction (camera +z).
  Vec3 forward() const { return rotation_.row(2).transpose(); }
  /// World-frame up direction (camera -y).
  Vec3 up() const { return -rotation_.row(1).transpose(); }

  bool pixel_in_bounds(const Vec2& pixel) const noexcept {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width_ && pixel.y() < height_;
  }

  Vec3 to_camera(const Vec3& world) const { return rotation_ * world + translation_; }
  Vec3 to_world(const Vec3& cam) const { return rotation_.transpose() * (cam - translation_); }

  Ray pixel_ray(const Vec2& pixel) const {
    if (!pixel_in_bounds(pixel))
      throw Error(ErrorKind::Bounds, "pixel (" + std::to_string(pixel.x()) + ", " + std::to_string(pixel.y()) +
                                         ") outside " + std::to_string(width_) + "x" + std::to_string(height_));
    return unchecked_ray(pixel);
  }
  Ray pixel_ray(int x, int y) const { return pixel_ray(Vec2(x, y)); }

  Ray unchecked_ray(const Vec2& pixel) const {
    const Vec3 dir_cam((pixel.x() - cx_) / fx_, (pixel.y() - cy_) / fy_, 1.0);
    return Ray{center_, rotation_.transpose() * dir_cam};
  }

  /// Returns nullopt when the point is at or behind the image plane
  /// (camera z <= 0). The pixel may fall outside the image.
  std::optional<Projection> project(const Vec3& world) const {
    const Vec3 p = to_camera(world);
    if (!(p.z() > 0.0)) return std::nullopt;
    return Projection{Vec2(fx_ * p.x() / p.z() + cx_, fy_ * p.y() / p.z() + cy_), p.z()};
  }

  /// Nearest integer pixel of a continuous coordinate, or nullopt outside.
  std::optional<PixelCoord> nearest_pixel(const Vec2& pixel) const {
    const double fx = std::floor(pixel.x() + 0.5);
    const double fy = std::floor(pixel.y() + 0.5);
    if (!(fx >= 0.0 && fy >= 0.0 && fx < width_ && fy < height_)) return std::nullopt;
    return PixelCoord{static_cast<int>(fx), static_cast<int>(fy)};
  }

 private:
  void validate() const {
    if (!(fx_ > 0.0 && fy_ > 0.0)) throw Error(ErrorKind::Input, "focal lengths must be positive");
    if (width_ <= 0 || height_ <= 0) throw Error(ErrorKind::Input, "image size must be positive");
    if (!(cx_ >= 0.0 && cx_ < width_ && cy_ >= 0.0 && cy_ < height_))
      throw Error(ErrorKind::Input, "principal point outside the image");
    const Mat3 r = world_to_cam_.block<3, 3>(0, 0);
    if (!world_to_cam_.allFinite()) throw Error(ErrorKind::Input, "pose has non-finite entries");
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || std::abs(r.determinant() - 1.0) > 1e-6)
      throw Error(ErrorKind::Input, "pose rotation is not orthonormal with determinant +1");
    const Eigen::RowVector4d last = world_to_cam_.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
      throw Error(ErrorKind::Input, "pose last row must be [0 0 0 1]");
  }

  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  int width_ = 1, height_ = 1;
  Mat4 world_to_cam_ = Mat4::Identity();
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
  Vec3 center_ = Vec3::Zero();
};

template <typename T>
void require_camera_shape(const Camera& camera, const Raster<T>& raster, const std::string& what) {
  if (raster.width() != camera.width() || raster.height() != camera.height())
    throw Error(ErrorKind::Shape, what + " does not match camera size");
}

inline void require_camera_shape(const Camera& camera, const DepthMap& depth, const std::string& what) {
  require_camera_shape(camera, depth.raster(), what);
}

/// One world point per valid pixel on the stride lattice, tagged with
/// (view, pixel) provenance.
inline PointCloud backproject_depth(const Camera& camera, const DepthMap& depth, int stride = 1, int view_id = -1) {
  require_camera_shape(camera, depth, "depth map");
  if (stride < 1) throw Error(ErrorKind::Input, "stride must be positive");
  PointCloud cloud;
  for (int y = 0; y < depth.height(); y += stride) {
    for (int x = 0; x < depth.width(); x += stride) {
      if (!depth.valid(x, y)) continue;
      const Ray ray = camera.unchecked_ray(Vec2(x, y));
      cloud.points.push_back(ray.origin + depth(x, y) * ray.dir);
      cloud.sources.push_back(PointSource{view_id, x, y});
    }
  }
  return cloud;
}

}  // namespace planegeo
