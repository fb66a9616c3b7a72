#pragma once

// PFM: "Pf" (1 channel) or "PF" (3 channels), negative scale = little endian,
// rows stored bottom-to-top. Invalid depths and normals are written as 0.

#include <cctype>
#include <cmath>
#include <sstream>
#include <string>

#include "planegeo/core/raster.hpp"
#include "planegeo/io/binary.hpp"

namespace planegeo::io {

namespace detail {

struct PfmHeader {
  int channels = 0;
  int width = 0;
  int height = 0;
  bool little_endian = true;
  std::size_t data_offset = 0;
};

inline std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) token.push_back(static_cast<char>(bytes[pos++]));
  return token;
}

inline PfmHeader parse_pfm_header(const std::vector<std::uint8_t>& bytes) {
  PfmHeader h;
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic == "Pf") h.channels = 1;
  else if (magic == "PF") h.channels = 3;
  else throw Error(ErrorKind::Io, "not a PFM file");
  try {
    h.width = std::stoi(next_token(bytes, pos));
    h.height = std::stoi(next_token(bytes, pos));
    const double scale = std::stod(next_token(bytes, pos));
    h.little_endian = scale < 0.0;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Io, "malformed PFM header");
  }
  ++pos;  // single whitespace byte before the raster
  h.data_offset = pos;
  const std::size_t expected = static_cast<std::size_t>(h.width) * h.height * h.channels * 4;
  if (h.width <= 0 || h.height <= 0 || bytes.size() < h.data_offset + expected)
    throw Error(ErrorKind::Io, "truncated PFM raster");
  return h;
}

inline float read_pfm_float(const std::vector<std::uint8_t>& bytes, std::size_t offset, bool little_endian) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int shift = little_endian ? 8 * i : 8 * (3 - i);
    v |= static_cast<std::uint32_t>(bytes[offset + i]) << shift;
  }
  return std::bit_cast<float>(v);
}

inline std::vector<std::uint8_t> pfm_header_bytes(const char* magic, int width, int height) {
  const std::string header = std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n-1.0\n";
  return std::vector<std::uint8_t>(header.begin(), header.end());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_depth_pfm(const DepthMap& depth) {
  auto out = detail::pfm_header_bytes("Pf", depth.width(), depth.height());
  for (int y = depth.height() - 1; y >= 0; --y)
    for (int x = 0; x < depth.width(); ++x) put_f32(out, depth.valid(x, y) ? static_cast<float>(depth(x, y)) : 0.0f);
  return out;
}

inline DepthMap decode_depth_pfm(const std::vector<std::uint8_t>& bytes) {
  const auto h = detail::parse_pfm_header(bytes);
  if (h.channels != 1) throw Error(ErrorKind::Io, "depth PFM must have one channel");
  DepthMap depth(h.width, h.height);
  std::size_t off = h.data_offset;
  for (int y = h.height - 1; y >= 0; --y) {
    for (int x = 0; x < h.width; ++x, off += 4) depth.set(x, y, detail::read_pfm_float(bytes, off, h.little_endian));
  }
  return depth;
}

inline std::vector<std::uint8_t> encode_normal_pfm(const NormalMap& normals) {
  auto out = detail::pfm_header_bytes("PF", normals.width(), normals.height());
  for (int y = normals.height() - 1; y >= 0; --y) {
    for (int x = 0; x < normals.width(); ++x) {
      const Vec3& n = normals(x, y);
      for (int c = 0; c < 3; ++c) put_f32(out, static_cast<float>(n[c]));
    }
  }
  return out;
}

inline NormalMap decode_normal_pfm(const std::vector<std::uint8_t>& bytes) {
  const auto h = detail::parse_pfm_header(bytes);
  if (h.channels != 3) throw Error(ErrorKind::Io, "normal PFM must have three channels");
  NormalMap normals(h.width, h.height);
  std::size_t off = h.data_offset;
  for (int y = h.height - 1; y >= 0; --y) {
    for (int x = 0; x < h.width; ++x) {
      Vec3 n;
      for (int c = 0; c < 3; ++c, off += 4) n[c] = detail::read_pfm_float(bytes, off, h.little_endian);
      if (n.allFinite() && n.squaredNorm() > 0.25) normals.set(x, y, n);
    }
  }
  return normals;
}

inline void write_depth_pfm(const std::string& path, const DepthMap& depth) { write_file(path, encode_depth_pfm(depth)); }
inline DepthMap read_depth_pfm(const std::string& path) { return decode_depth_pfm(read_file(path)); }
inline void write_normal_pfm(const std::string& path, const NormalMap& n) { write_file(path, encode_normal_pfm(n)); }
inline NormalMap read_normal_pfm(const std::string& path) { return decode_normal_pfm(read_file(path)); }

}  // namespace planegeo::io
