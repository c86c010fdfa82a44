#include "sspix/png_io.hpp"

#include <cstdio>
#include <memory>

#include <png.h>

namespace sspix {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

}  // namespace

ImageU8 read_png_rgb8(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open for reading: " + path);

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw IoError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw IoError("failed to decode PNG: " + path);

  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);

  png_set_expand(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  png_set_gray_to_rgb(r.png);
  png_read_update_info(r.png, r.info);

  ImageU8 img;
  img.h = static_cast<int>(png_get_image_height(r.png, r.info));
  img.w = static_cast<int>(png_get_image_width(r.png, r.info));
  img.c = 3;
  if (png_get_channels(r.png, r.info) != 3)
    throw IoError("unexpected channel count after expansion: " + path);
  img.pixels.resize(static_cast<std::size_t>(img.h) * img.w * 3);

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.w * 3;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void write_png_rgb8(const std::string& path, const ImageU8& img) {
  if (img.c != 3 || img.h <= 0 || img.w <= 0) throw IoError("write_png_rgb8: bad image");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw IoError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw IoError("failed to encode PNG: " + path);

  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  for (int y = 0; y < img.h; ++y)
    png_write_row(w.png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.w * 3));
  png_write_end(w.png, nullptr);
}

LabelMap read_png_label16(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open for reading: " + path);

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw IoError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw IoError("failed to decode PNG: " + path);

  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  if (color != PNG_COLOR_TYPE_GRAY) throw IoError("label PNG must be single-channel: " + path);
  const int depth = png_get_bit_depth(r.png, r.info);
  if (depth < 16) png_set_expand_16(r.png);
  png_read_update_info(r.png, r.info);

  LabelMap m = make_label_map(static_cast<int>(png_get_image_height(r.png, r.info)),
                              static_cast<int>(png_get_image_width(r.png, r.info)));
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(m.h) * m.w * 2);
  std::vector<png_bytep> rows(static_cast<std::size_t>(m.h));
  for (int y = 0; y < m.h; ++y)
    rows[static_cast<std::size_t>(y)] = raw.data() + static_cast<std::size_t>(y) * m.w * 2;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  for (std::size_t i = 0; i < m.ids.size(); ++i)
    m.ids[i] = static_cast<std::int32_t>((raw[2 * i] << 8) | raw[2 * i + 1]);  // PNG is big-endian
  return m;
}

void write_png_label16(const std::string& path, const LabelMap& labels) {
  if (!labels.defined()) throw IoError("write_png_label16: empty label map");
  if (labels.max_id() > 65535) throw IoError("write_png_label16: id exceeds 16-bit range");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw IoError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw IoError("failed to encode PNG: " + path);

  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(labels.w), static_cast<png_uint_32>(labels.h),
               16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(labels.w) * 2);
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      const auto v = static_cast<std::uint16_t>(labels.at(y, x));
      row[2 * static_cast<std::size_t>(x)] = static_cast<std::uint8_t>(v >> 8);
      row[2 * static_cast<std::size_t>(x) + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& gray, int h, int w) {
  if (h <= 0 || w <= 0 || gray.size() != static_cast<std::size_t>(h) * w)
    throw IoError("write_png_gray8: bad buffer");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);

  PngWriter wr;
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!wr.png) throw IoError("png_create_write_struct failed");
  wr.info = png_create_info_struct(wr.png);
  if (!wr.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(wr.png))) throw IoError("failed to encode PNG: " + path);

  png_init_io(wr.png, f.get());
  png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wr.png, wr.info);
  for (int y = 0; y < h; ++y)
    png_write_row(wr.png, const_cast<png_bytep>(gray.data() + static_cast<std::size_t>(y) * w));
  png_write_end(wr.png, nullptr);
}

}  // namespace sspix
