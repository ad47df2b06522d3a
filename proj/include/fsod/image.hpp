// Copyright 2026 The fsodbench Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// 8-bit RGB raster with PNG encode/decode through libpng.

#ifndef FSOD_IMAGE_HPP_
#define FSOD_IMAGE_HPP_

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fsod/errors.hpp"
#include "fsod/geometry.hpp"

namespace fsod {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {})
      : width_(width), height_(height),
        pixels_(static_cast<std::size_t>(width) * height * 3) {
    if (width < 1 || height < 1) throw ValidationError("image dims must be >= 1");
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) set(x, y, fill);
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  ImageDims dims() const { return {width_, height_}; }

  Rgb at(int x, int y) const {
    const std::size_t o = offset(x, y);
    return {pixels_[o], pixels_[o + 1], pixels_[o + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t o = offset(x, y);
    pixels_[o] = c.r;
    pixels_[o + 1] = c.g;
    pixels_[o + 2] = c.b;
  }

  const std::vector<std::uint8_t>& data() const { return pixels_; }
  std::vector<std::uint8_t>& data() { return pixels_; }

  Image crop(const PixelRect& r) const {
    if (r.width() <= 0 || r.height() <= 0) {
      throw ValidationError("crop window is empty");
    }
    Image out(r.width(), r.height());
    for (int y = 0; y < r.height(); ++y) {
      std::memcpy(&out.pixels_[out.offset(0, y)], &pixels_[offset(r.x0, r.y0 + y)],
                  static_cast<std::size_t>(r.width()) * 3);
    }
    return out;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

using Bytes = std::vector<std::uint8_t>;

namespace detail {

struct PngReadCursor {
  const Bytes* bytes;
  std::size_t pos;
};

inline void png_read_from_memory(png_structp png, png_bytep out,
                                 png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, cur->bytes->data() + cur->pos, len);
  cur->pos += len;
}

inline void png_write_to_memory(png_structp png, png_bytep in, png_size_t len) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + len);
}

inline void png_flush_noop(png_structp) {}

// libpng reports errors by longjmp; the message is parked here first.
struct PngError {
  char message[256] = {0};
};

inline void png_record_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof(err->message), "%s", msg);
  png_longjmp(png, 1);
}

inline void png_warn_silent(png_structp, png_const_charp) {}

// No C++ object with a destructor lives between setjmp and the libpng calls
// that may longjmp back to it.
inline bool png_encode_rows(const Image& img, Bytes* out, PngError* err) {
  png_structp png = png_create_write_struct(
      PNG_LIBPNG_VER_STRING, err, png_record_error, png_warn_silent);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, png_write_to_memory, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::uint8_t* base = img.data().data();
  const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(base + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

// Two passes: header first (to size the raster), then pixels.
inline bool png_read_header(PngReadCursor* cur, int* w, int* h, PngError* err) {
  png_structp png = png_create_read_struct(
      PNG_LIBPNG_VER_STRING, err, png_record_error, png_warn_silent);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, cur, png_read_from_memory);
  png_read_info(png, info);
  *w = static_cast<int>(png_get_image_width(png, info));
  *h = static_cast<int>(png_get_image_height(png, info));
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool png_read_pixels(PngReadCursor* cur, std::uint8_t* dst, int w,
                            int h, PngError* err) {
  png_structp png = png_create_read_struct(
      PNG_LIBPNG_VER_STRING, err, png_record_error, png_warn_silent);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, cur, png_read_from_memory);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  const int passes = png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
    png_error(png, "unexpected row layout");
  }
  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  for (int pass = 0; pass < passes; ++pass) {
    for (int y = 0; y < h; ++y) png_read_row(png, dst + y * stride, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace detail

inline Bytes encode_png(const Image& img) {
  Bytes out;
  detail::PngError err;
  if (!detail::png_encode_rows(img, &out, &err)) {
    throw IoError(std::string("png encode: ") + err.message);
  }
  return out;
}

// Any PNG is normalised to 8-bit RGB (alpha dropped, gray expanded).
inline Image decode_png(const Bytes& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw IoError("not a PNG stream");
  }
  detail::PngError err;
  int w = 0, h = 0;
  detail::PngReadCursor cur{&bytes, 0};
  if (!detail::png_read_header(&cur, &w, &h, &err)) {
    throw IoError(std::string("png decode: ") + err.message);
  }
  Image img(w, h);
  cur.pos = 0;
  if (!detail::png_read_pixels(&cur, img.data().data(), w, h, &err)) {
    throw IoError(std::string("png decode: ") + err.message);
  }
  return img;
}

inline Bytes read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in),
               std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

inline Image read_png(const std::string& path) {
  try {
    return decode_png(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

inline void write_png(const std::string& path, const Image& img) {
  write_file_bytes(path, encode_png(img));
}

}  // namespace fsod

#endif  // FSOD_IMAGE_HPP_
