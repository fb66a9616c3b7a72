#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "planegeo/core/error.hpp"

namespace planegeo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Row-major image of T. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool in_bounds(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) throw Error(ErrorKind::Shape, "negative raster dimensions");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Raster<A>& a, const Raster<B>& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::Shape, what + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                      " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

/// Per-pixel z-depth in meters. A pixel is valid iff its value is finite and
/// strictly positive; invalid pixels hold 0.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height) : values_(width, height, 0.0) {}
  explicit DepthMap(Raster<double> values) : values_(std::move(values)) {
    for (auto& v : values_.data())
      if (!(std::isfinite(v) && v > 0.0)) v = 0.0;
  }

  int width() const noexcept { return values_.width(); }
  int height() const noexcept { return values_.height(); }

  bool valid(int x, int y) const { return values_(x, y) > 0.0; }
  double operator()(int x, int y) const { return values_(x, y); }
  void set(int x, int y, double depth) { values_(x, y) = (std::isfinite(depth) && depth > 0.0) ? depth : 0.0; }
  void invalidate(int x, int y) { values_(x, y) = 0.0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (double v : values_.data()) n += v > 0.0 ? 1 : 0;
    return n;
  }

  const Raster<double>& raster() const noexcept { return values_; }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  Raster<double> values_;
};

/// Per-pixel unit normals in the camera frame. Invalid pixels hold the zero
/// vector.
class NormalMap {
 public:
  NormalMap() = default;
  NormalMap(int width, int height) : values_(width, height, Vec3::Zero()) {}

  int width() const noexcept { return values_.width(); }
  int height() const noexcept { return values_.height(); }

  bool valid(int x, int y) const { return values_(x, y).squaredNorm() > 0.25; }
  const Vec3& operator()(int x, int y) const { return values_(x, y); }
  void set(int x, int y, const Vec3& n) {
    const double len = n.norm();
    values_(x, y) = (std::isfinite(len) && len > 1e-12) ? Vec3(n / len) : Vec3::Zero();
  }
  void invalidate(int x, int y) { values_(x, y) = Vec3::Zero(); }

  const Raster<Vec3>& raster() const noexcept { return values_; }

 private:
  Raster<Vec3> values_;
};

/// Instance ids per pixel; 0 means unlabeled.
using InstanceMaskMap = Raster<std::uint16_t>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};
using ColorImage = Raster<Rgb>;

struct PointSource {
  int view = -1;
  int x = -1;
  int y = -1;
  friend bool operator==(const PointSource&, const PointSource&) = default;
};

/// World-frame points with optional normals and provenance. When present,
/// `normals` and `sources` have one entry per point.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<PointSource> sources;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_normals() const noexcept { return !normals.empty(); }
  bool has_sources() const noexcept { return !sources.empty(); }

  void validate() const {
    if (!normals.empty() && normals.size() != points.size())
      throw Error(ErrorKind::Shape, "point cloud normal count differs from point count");
    if (!sources.empty() && sources.size() != points.size())
      throw Error(ErrorKind::Shape, "point cloud provenance count differs from point count");
    for (const auto& n : normals)
      if (std::abs(n.norm() - 1.0) > 1e-4) throw Error(ErrorKind::Input, "point cloud normal is not unit length");
  }

  void append(const PointCloud& other) {
    const bool keep_normals = (empty() || has_normals()) && other.has_normals();
    const bool keep_sources = (empty() || has_sources()) && other.has_sources();
    points.insert(points.end(), other.points.begin(), other.points.end());
    if (keep_normals) normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    else normals.clear();
    if (keep_sources) sources.insert(sources.end(), other.sources.begin(), other.sources.end());
    else sources.clear();
  }
};

}  // namespace planegeo
