#pragma once

// Binary visibility voxel grid built from training depths, and per-pixel
// visibility masks V(u) = prod_q v_q for novel views.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "planegeo/core/camera.hpp"
#include "planegeo/core/error.hpp"
#include "planegeo/core/parallel.hpp"
#include "planegeo/io/binary.hpp"

namespace planegeo {

struct Bounds3 {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return !(min.x() <= max.x() && min.y() <= max.y() && min.z() <= max.z()); }
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Vec3 extent() const { return empty() ? Vec3::Zero() : Vec3(max - min); }
  Vec3 center() const { return 0.5 * (min + max); }
  double diagonal() const { return extent().norm(); }
};

/// Bounds of all valid back-projected pixels.
inline Bounds3 depth_bounds(const std::vector<DepthMap>& depths, const std::vector<Camera>& cameras) {
  Bounds3 b;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    require_camera_shape(cameras[v], depths[v], "grid depth map");
    for (int y = 0; y < depths[v].height(); ++y)
      for (int x = 0; x < depths[v].width(); ++x) {
        if (!depths[v].valid(x, y)) continue;
        const Ray r = cameras[v].unchecked_ray(Vec2(x, y));
        b.extend(r.origin + depths[v](x, y) * r.dir);
      }
  }
  return b;
}

class VisibilityGrid {
 public:
  VisibilityGrid() = default;
  VisibilityGrid(const Vec3& origin, double voxel_size, const std::array<std::uint32_t, 3>& dims)
      : origin_(origin), voxel_size_(voxel_size), dims_(dims) {
    if (!(voxel_size > 0.0)) throw Error(ErrorKind::Input, "voxel size must be positive");
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw Error(ErrorKind::Input, "grid dims must be positive");
    visible_.assign(voxel_count(), 0);
  }

  const Vec3& origin() const noexcept { return origin_; }
  double voxel_size() const noexcept { return voxel_size_; }
  const std::array<std::uint32_t, 3>& dims() const noexcept { return dims_; }
  std::size_t voxel_count() const noexcept {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }

  /// x-fastest linear index.
  std::size_t linear(std::uint32_t x, std::uint32_t y, std::uint32_t z) const noexcept {
    return x + static_cast<std::size_t>(dims_[0]) * (y + static_cast<std::size_t>(dims_[1]) * z);
  }
  std::array<std::uint32_t, 3> coords(std::size_t i) const noexcept {
    const std::uint32_t x = static_cast<std::uint32_t>(i % dims_[0]);
    const std::size_t rest = i / dims_[0];
    return {x, static_cast<std::uint32_t>(rest % dims_[1]), static_cast<std::uint32_t>(rest / dims_[1])};
  }
  Vec3 center(std::size_t i) const {
    const auto c = coords(i);
    return origin_ + voxel_size_ * Vec3(c[0] + 0.5, c[1] + 0.5, c[2] + 0.5);
  }

  Vec3 max_corner() const { return origin_ + voxel_size_ * Vec3(dims_[0], dims_[1], dims_[2]); }
  Bounds3 bounds() const { return Bounds3{origin_, max_corner()}; }
  bool contains(const Vec3& p) const { return voxel_of(p) >= 0; }

  /// Voxel containing p (its nearest voxel center), or -1 outside the grid.
  std::int64_t voxel_of(const Vec3& p) const {
    std::int64_t idx[3];
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((p[a] - origin_[a]) / voxel_size_);
      if (!(f >= 0.0 && f < static_cast<double>(dims_[a]))) return -1;
      idx[a] = static_cast<std::int64_t>(f);
    }
    return static_cast<std::int64_t>(linear(static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[1]),
                                            static_cast<std::uint32_t>(idx[2])));
  }

  bool visible(std::size_t i) const { return visible_[i] != 0; }
  bool visible_at(const Vec3& p) const {
    const auto i = voxel_of(p);
    return i >= 0 && visible_[static_cast<std::size_t>(i)] != 0;
  }
  void set_visible(std::size_t i, bool v) { visible_[i] = v ? 1 : 0; }

  std::size_t visible_count() const {
    std::size_t n = 0;
    for (auto v : visible_) n += v;
    return n;
  }
  std::vector<std::size_t> visible_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < visible_.size(); ++i)
      if (visible_[i]) out.push_back(i);
    return out;
  }
  const std::vector<std::uint8_t>& raw() const noexcept { return visible_; }

  friend bool operator==(const VisibilityGrid& a, const VisibilityGrid& b) {
    return a.origin_ == b.origin_ && a.voxel_size_ == b.voxel_size_ && a.dims_ == b.dims_ && a.visible_ == b.visible_;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  std::array<std::uint32_t, 3> dims_{0, 0, 0};
  std::vector<std::uint8_t> visible_;
};

struct GridOptions {
  double voxel_size = 0.0;            // <= 0: derive from max_resolution
  int max_resolution = 256;           // voxels along the longest axis when deriving
  double depth_margin_rel = 0.01;
  std::size_t max_voxels = 256ull * 256ull * 256ull;
};

/// True when some view sees `p` in front of (or within the margin behind)
/// its depth at the nearest valid pixel.
inline bool observed_by_views(const Vec3& p, const std::vector<DepthMap>& depths, const std::vector<Camera>& cameras,
                              double depth_margin_rel) {
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const auto proj = cameras[v].project(p);
    if (!proj) continue;
    const auto px = cameras[v].nearest_pixel(proj->pixel);
    if (!px || !depths[v].valid(px->x, px->y)) continue;
    if (proj->z <= depths[v](px->x, px->y) * (1.0 + depth_margin_rel)) return true;
  }
  return false;
}

inline VisibilityGrid build_grid(const std::vector<DepthMap>& depths, const std::vector<Camera>& cameras,
                                 const GridOptions& options = {}) {
  if (cameras.empty() || depths.size() != cameras.size()) throw Error(ErrorKind::Input, "grid needs >= 1 view");
  const Bounds3 b = depth_bounds(depths, cameras);
  if (b.empty()) throw Error(ErrorKind::EmptyScene, "no valid depth in any view");
  double vs = options.voxel_size;
  if (!(vs > 0.0)) {
    if (options.max_resolution < 3) throw Error(ErrorKind::Input, "grid resolution must be >= 3");
    const double longest = std::max(b.extent().maxCoeff(), 1e-6);
    vs = longest / static_cast<double>(options.max_resolution - 2) * (1.0 + 1e-9);
  }
  std::array<std::uint32_t, 3> dims{};
  double total = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double cells = std::ceil(b.extent()[a] / vs) + 2.0;
    if (cells > 4e9) throw Error(ErrorKind::Capacity, "grid axis too long");
    dims[a] = static_cast<std::uint32_t>(std::max(cells, 3.0));
    total *= dims[a];
  }
  if (total > static_cast<double>(options.max_voxels))
    throw Error(ErrorKind::Capacity, "grid of " + std::to_string(static_cast<long long>(total)) +
                                         " voxels exceeds the cap; increase voxel_size");
  VisibilityGrid grid(b.min - Vec3::Constant(vs), vs, dims);
  parallel_for(0, dims[2], [&](std::size_t z) {
    for (std::uint32_t y = 0; y < dims[1]; ++y)
      for (std::uint32_t x = 0; x < dims[0]; ++x) {
        const std::size_t i = grid.linear(x, y, static_cast<std::uint32_t>(z));
        grid.set_visible(i, observed_by_views(grid.center(i), depths, cameras, options.depth_margin_rel));
      }
  });
  return grid;
}

using VisibilityMask = Raster<std::uint8_t>;

/// Q samples at depths (i + 0.5) / Q · D along each z-normalized ray; a
/// sample outside the grid counts as invisible, as does an invalid D.
inline VisibilityMask render_visibility(const VisibilityGrid& grid, const Camera& camera, const DepthMap& rendered_depth,
                                        int q_samples = 32) {
  if (q_samples < 1) throw Error(ErrorKind::Input, "Q must be >= 1");
  require_camera_shape(camera, rendered_depth, "rendered depth");
  VisibilityMask mask(camera.width(), camera.height(), 0);
  parallel_for(0, static_cast<std::size_t>(camera.height()), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < camera.width(); ++x) {
      if (!rendered_depth.valid(x, y)) continue;
      const Ray r = camera.unchecked_ray(Vec2(x, y));
      const double d = rendered_depth(x, y);
      bool all = true;
      for (int i = 0; i < q_samples && all; ++i) {
        const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(q_samples) * d;
        all = grid.visible_at(r.origin + t * r.dir);
      }
      mask(x, y) = all ? 1 : 0;
    }
  });
  return mask;
}

/// 0/1 mask as an 8-bit 0/255 image.
inline Raster<std::uint8_t> visibility_mask_image(const VisibilityMask& mask) {
  Raster<std::uint8_t> img(mask.width(), mask.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) img[i] = mask[i] ? 255 : 0;
  return img;
}

inline VisibilityMask visibility_mask_from_image(const Raster<std::uint8_t>& img) {
  VisibilityMask mask(img.width(), img.height(), 0);
  for (std::size_t i = 0; i < img.size(); ++i) mask[i] = img[i] >= 128 ? 1 : 0;
  return mask;
}

namespace io {

inline constexpr char kGridMagic[8] = {'P', 'G', 'V', 'I', 'S', 'G', 'R', 'D'};
inline constexpr std::uint32_t kGridVersion = 1;

/// 16-byte header (8-byte magic, u32 version, u32 reserved), origin 3xf64,
/// voxel_size f64, dims 3xu32, then visibility bits, x-fastest, LSB first.
inline std::vector<std::uint8_t> encode_grid(const VisibilityGrid& grid) {
  std::vector<std::uint8_t> out(kGridMagic, kGridMagic + 8);
  put_u32(out, kGridVersion);
  put_u32(out, 0);
  for (int a = 0; a < 3; ++a) put_f64(out, grid.origin()[a]);
  put_f64(out, grid.voxel_size());
  for (int a = 0; a < 3; ++a) put_u32(out, grid.dims()[a]);
  const std::size_t n = grid.voxel_count();
  std::vector<std::uint8_t> bits((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (grid.visible(i)) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  out.insert(out.end(), bits.begin(), bits.end());
  return out;
}

inline VisibilityGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kGridMagic, 8) != 0)
    throw Error(ErrorKind::Io, "not a visibility grid file");
  ByteReader r(bytes, 8);
  if (r.u32() != kGridVersion) throw Error(ErrorKind::Io, "unsupported grid version");
  r.u32();
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = r.f64();
  const double vs = r.f64();
  std::array<std::uint32_t, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = r.u32();
  VisibilityGrid grid(origin, vs, dims);
  const std::size_t n = grid.voxel_count();
  if (r.remaining() < (n + 7) / 8) throw Error(ErrorKind::Io, "truncated grid bits");
  const std::size_t base = r.position();
  for (std::size_t i = 0; i < n; ++i) grid.set_visible(i, (bytes[base + i / 8] >> (i % 8)) & 1u);
  return grid;
}

inline void write_grid(const std::string& path, const VisibilityGrid& g) { write_file(path, encode_grid(g)); }
inline VisibilityGrid read_grid(const std::string& path) { return decode_grid(read_file(path)); }

}  // namespace io

}  // namespace planegeo
