#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <string>
#include <vector>

#include "planegeo/core/raster.hpp"
#include "planegeo/io/binary.hpp"

namespace planegeo::io {

namespace detail {

struct PngBuffer {
  const std::vector<std::uint8_t>* in = nullptr;
  std::size_t pos = 0;
  std::vector<std::uint8_t>* out = nullptr;
};

inline void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + length);
}

inline void png_flush_cb(png_structp) {}

inline void png_read_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  if (buf->pos + length > buf->in->size()) png_error(png, "truncated PNG");
  std::copy(buf->in->begin() + static_cast<std::ptrdiff_t>(buf->pos),
            buf->in->begin() + static_cast<std::ptrdiff_t>(buf->pos + length), data);
  buf->pos += length;
}

/// rows: one byte vector per row, already in PNG sample order (big-endian 16-bit).
inline std::vector<std::uint8_t> encode_png(int width, int height, int bit_depth, int color_type,
                                            const std::vector<std::vector<std::uint8_t>>& rows) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorKind::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorKind::Io, "png_create_info_struct failed");
  }
  PngBuffer buf;
  buf.out = &out;
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) row_ptrs[y] = const_cast<png_bytep>(rows[y].data());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &buf, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_rows(png, info, row_ptrs.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::vector<std::uint8_t>> rows;
};

inline DecodedPng decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error(ErrorKind::Io, "not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorKind::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorKind::Io, "png_create_info_struct failed");
  }
  PngBuffer buf;
  buf.in = &bytes;
  DecodedPng result;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::Io, "PNG decoding failed");
  }
  png_set_read_fn(png, &buf, png_read_cb);
  png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  result.width = static_cast<int>(png_get_image_width(png, info));
  result.height = static_cast<int>(png_get_image_height(png, info));
  result.bit_depth = png_get_bit_depth(png, info);
  result.channels = png_get_channels(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  png_bytepp rows = png_get_rows(png, info);
  result.rows.resize(static_cast<std::size_t>(result.height));
  for (int y = 0; y < result.height; ++y) result.rows[y].assign(rows[y], rows[y] + row_bytes);
  png_destroy_read_struct(&png, &info, nullptr);
  return result;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png16(const Raster<std::uint16_t>& image) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height()));
  for (int y = 0; y < image.height(); ++y) {
    auto& row = rows[y];
    row.reserve(static_cast<std::size_t>(image.width()) * 2);
    for (int x = 0; x < image.width(); ++x) {
      row.push_back(static_cast<std::uint8_t>(image(x, y) >> 8));
      row.push_back(static_cast<std::uint8_t>(image(x, y) & 0xff));
    }
  }
  return detail::encode_png(image.width(), image.height(), 16, PNG_COLOR_TYPE_GRAY, rows);
}

inline Raster<std::uint16_t> decode_png16(const std::vector<std::uint8_t>& bytes) {
  const auto png = detail::decode_png(bytes);
  if (png.channels != 1 || png.bit_depth != 16) throw Error(ErrorKind::Io, "expected a 16-bit grayscale PNG");
  Raster<std::uint16_t> image(png.width, png.height);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x)
      image(x, y) = static_cast<std::uint16_t>((png.rows[y][2 * x] << 8) | png.rows[y][2 * x + 1]);
  return image;
}

inline std::vector<std::uint8_t> encode_png8(const Raster<std::uint8_t>& image) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height()));
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) rows[y].push_back(image(x, y));
  return detail::encode_png(image.width(), image.height(), 8, PNG_COLOR_TYPE_GRAY, rows);
}

inline Raster<std::uint8_t> decode_png8(const std::vector<std::uint8_t>& bytes) {
  const auto png = detail::decode_png(bytes);
  if (png.channels != 1 || png.bit_depth != 8) throw Error(ErrorKind::Io, "expected an 8-bit grayscale PNG");
  Raster<std::uint8_t> image(png.width, png.height);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) image(x, y) = png.rows[y][x];
  return image;
}

inline std::vector<std::uint8_t> encode_png_rgb(const ColorImage& image) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height()));
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      rows[y].push_back(image(x, y).r);
      rows[y].push_back(image(x, y).g);
      rows[y].push_back(image(x, y).b);
    }
  }
  return detail::encode_png(image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, rows);
}

inline ColorImage decode_png_rgb(const std::vector<std::uint8_t>& bytes) {
  const auto png = detail::decode_png(bytes);
  if (png.channels != 3 || png.bit_depth != 8) throw Error(ErrorKind::Io, "expected an 8-bit RGB PNG");
  ColorImage image(png.width, png.height);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x)
      image(x, y) = Rgb{png.rows[y][3 * x], png.rows[y][3 * x + 1], png.rows[y][3 * x + 2]};
  return image;
}

inline void write_png16(const std::string& path, const Raster<std::uint16_t>& image) {
  write_file(path, encode_png16(image));
}
inline Raster<std::uint16_t> read_png16(const std::string& path) { return decode_png16(read_file(path)); }
inline void write_png8(const std::string& path, const Raster<std::uint8_t>& image) {
  write_file(path, encode_png8(image));
}
inline Raster<std::uint8_t> read_png8(const std::string& path) { return decode_png8(read_file(path)); }
inline void write_png_rgb(const std::string& path, const ColorImage& image) { write_file(path, encode_png_rgb(image)); }
inline ColorImage read_png_rgb(const std::string& path) { return decode_png_rgb(read_file(path)); }

}  // namespace planegeo::io
