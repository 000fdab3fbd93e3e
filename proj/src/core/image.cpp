#include "core/image.h"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "f32 raster I/O assumes a little-endian host");

namespace sve {
namespace {

uint8_t to_u8(float v) {
  if (v <= 0.f) return 0;
  if (v >= 1.f) return 255;
  return static_cast<uint8_t>(std::lround(v * 255.f));
}

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;

  PngWriter(const std::string& path, int width, int height, int color_type) {
    fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open for writing: " + path);
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      cleanup();
      throw std::runtime_error("libpng write failure: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
  }
  void rows(std::vector<png_bytep>& r) {
    if (setjmp(png_jmpbuf(png))) throw std::runtime_error("libpng row write failure");
    png_write_image(png, r.data());
    png_write_end(png, nullptr);
  }
  void cleanup() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
    png = nullptr;
    info = nullptr;
    fp = nullptr;
  }
  ~PngWriter() { cleanup(); }
};

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> bytes;

  explicit PngReader(const std::string& path, int want_color_type) {
    fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open for reading: " + path);
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      cleanup();
      throw std::runtime_error("libpng read failure: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (want_color_type == PNG_COLOR_TYPE_RGB) {
      if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
      png_set_strip_alpha(png);
      channels = 3;
    } else {
      if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
      png_set_strip_alpha(png);
      channels = 1;
    }
    png_read_update_info(png, info);
    bytes.resize(static_cast<size_t>(width) * height * channels);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
      rows[y] = bytes.data() + static_cast<size_t>(y) * width * channels;
    if (setjmp(png_jmpbuf(png))) {
      cleanup();
      throw std::runtime_error("libpng row read failure: " + path);
    }
    png_read_image(png, rows.data());
  }
  void cleanup() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
    png = nullptr;
    info = nullptr;
    fp = nullptr;
  }
  ~PngReader() { cleanup(); }
};

}  // namespace

void write_png_rgb8(const std::string& path, const ImageRGB& img) {
  std::vector<uint8_t> bytes(static_cast<size_t>(img.width) * img.height * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(img.data[i]);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = bytes.data() + static_cast<size_t>(y) * img.width * 3;
  PngWriter w(path, img.width, img.height, PNG_COLOR_TYPE_RGB);
  w.rows(rows);
}

void write_png_gray8(const std::string& path, const ImageGray& img) {
  std::vector<uint8_t> bytes(static_cast<size_t>(img.width) * img.height);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(img.data[i]);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = bytes.data() + static_cast<size_t>(y) * img.width;
  PngWriter w(path, img.width, img.height, PNG_COLOR_TYPE_GRAY);
  w.rows(rows);
}

void write_png_labels(const std::string& path, const ImageLabels& img) {
  std::vector<uint8_t> bytes(img.data);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = bytes.data() + static_cast<size_t>(y) * img.width;
  PngWriter w(path, img.width, img.height, PNG_COLOR_TYPE_GRAY);
  w.rows(rows);
}

ImageRGB read_png_rgb8(const std::string& path) {
  PngReader r(path, PNG_COLOR_TYPE_RGB);
  ImageRGB img(r.width, r.height);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = r.bytes[i] / 255.f;
  return img;
}

ImageGray read_png_gray8(const std::string& path) {
  PngReader r(path, PNG_COLOR_TYPE_GRAY);
  ImageGray img(r.width, r.height);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = r.bytes[i] / 255.f;
  return img;
}

ImageLabels read_png_labels(const std::string& path) {
  PngReader r(path, PNG_COLOR_TYPE_GRAY);
  ImageLabels img(r.width, r.height);
  img.data = std::move(r.bytes);
  return img;
}

void write_f32_raster(const std::string& path, const ImageGray& img) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  size_t n = img.data.size();
  size_t written = std::fwrite(img.data.data(), sizeof(float), n, fp);
  std::fclose(fp);
  if (written != n) throw std::runtime_error("short write: " + path);
}

ImageGray read_f32_raster(const std::string& path, int width, int height) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open for reading: " + path);
  ImageGray img(width, height);
  size_t n = img.data.size();
  size_t got = std::fread(img.data.data(), sizeof(float), n, fp);
  std::fclose(fp);
  if (got != n) throw std::runtime_error("short read: " + path);
  return img;
}

}  // namespace sve
