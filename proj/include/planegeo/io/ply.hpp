#pragma once

// Binary little-endian PLY with float x y z and optional nx ny nz.

#include <sstream>
#include <string>
#include <vector>

#include "planegeo/core/raster.hpp"
#include "planegeo/io/binary.hpp"

namespace planegeo::io {

inline std::vector<std::uint8_t> encode_ply(const PointCloud& cloud) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
         << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (cloud.has_normals()) header << "property float nx\nproperty float ny\nproperty float nz\n";
  header << "end_header\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < 3; ++c) put_f32(out, static_cast<float>(cloud.points[i][c]));
    if (cloud.has_normals())
      for (int c = 0; c < 3; ++c) put_f32(out, static_cast<float>(cloud.normals[i][c]));
  }
  return out;
}

inline PointCloud decode_ply(const std::vector<std::uint8_t>& bytes) {
  const std::string marker = "end_header\n";
  const std::string text(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(bytes.size(), 4096)));
  const auto end = text.find(marker);
  if (text.rfind("ply", 0) != 0 || end == std::string::npos) throw Error(ErrorKind::Io, "not a PLY file");
  std::istringstream header(text.substr(0, end));
  std::string line;
  std::size_t count = 0;
  std::vector<std::string> props;
  bool binary_le = false;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw Error(ErrorKind::Io, "unsupported PLY element " + name);
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw Error(ErrorKind::Io, "unsupported PLY property type " + type);
      props.push_back(name);
    }
  }
  if (!binary_le) throw Error(ErrorKind::Io, "only binary_little_endian PLY is supported");
  const bool with_normals = props.size() == 6;
  if (!(props.size() == 3 || with_normals)) throw Error(ErrorKind::Io, "expected x y z [nx ny nz] properties");
  ByteReader reader(bytes, end + marker.size());
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vec3 p;
    for (int c = 0; c < 3; ++c) p[c] = reader.f32();
    cloud.points.push_back(p);
    if (with_normals) {
      Vec3 n;
      for (int c = 0; c < 3; ++c) n[c] = reader.f32();
      cloud.normals.push_back(n.normalized());
    }
  }
  return cloud;
}

inline void write_ply(const std::string& path, const PointCloud& cloud) { write_file(path, encode_ply(cloud)); }
inline PointCloud read_ply(const std::string& path) { return decode_ply(read_file(path)); }

}  // namespace planegeo::io
