#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sve {

// Float rasters, row-major, origin at the top-left pixel.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // 3 * width * height, interleaved rgb

  ImageRGB() = default;
  ImageRGB(int w, int h, float fill = 0.f) : width(w), height(h), data(static_cast<size_t>(3) * w * h, fill) {}
  float* px(int x, int y) { return data.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const float* px(int x, int y) const { return data.data() + 3 * (static_cast<size_t>(y) * width + x); }
};

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width * height

  ImageGray() = default;
  ImageGray(int w, int h, float fill = 0.f) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}
  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

struct ImageLabels {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // width * height

  ImageLabels() = default;
  ImageLabels(int w, int h, uint8_t fill = 0) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}
  uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

// PNG I/O. RGB images are written as 8-bit RGB (values clamped to [0,1] and
// rounded), gray as 8-bit grayscale. Label rasters store the raw label byte.
void write_png_rgb8(const std::string& path, const ImageRGB& img);
void write_png_gray8(const std::string& path, const ImageGray& img);  // expects [0,1]
void write_png_labels(const std::string& path, const ImageLabels& img);
ImageRGB read_png_rgb8(const std::string& path);
ImageGray read_png_gray8(const std::string& path);
ImageLabels read_png_labels(const std::string& path);

// Raw float32 raster, little-endian, no header; dimensions travel in the
// dataset manifest.
void write_f32_raster(const std::string& path, const ImageGray& img);
ImageGray read_f32_raster(const std::string& path, int width, int height);

}  // namespace sve
