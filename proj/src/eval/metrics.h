#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

#include "core/image.h"

namespace sve::eval {

using nlohmann::json;

// Full-image similarity metrics over [0,1] interleaved RGB rasters. All three
// throw std::invalid_argument on shape mismatch and are symmetric in their
// arguments.

// Mean absolute difference over all pixels and channels.
double mae(const ImageRGB& a, const ImageRGB& b);

// 10*log10(1/MSE), clamped to the 99 dB sentinel so identical images stay
// serializable.
double psnr(const ImageRGB& a, const ImageRGB& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1, per channel then averaged, mean over window positions that
// fit entirely inside the image. Images smaller than the window are rejected.
double ssim(const ImageRGB& a, const ImageRGB& b);

// Table-row bundle for one evaluation pass. lpips is reserved so reports keep
// a stable column set, but nothing here populates it.
struct MetricsReport {
  double mae = 0;
  double psnr = 0;
  double ssim = 0;
  std::optional<double> lpips;
  int n_frames = 0;
  std::string split;
};

void to_json(json& j, const MetricsReport& r);
void from_json(const json& j, MetricsReport& r);

}  // namespace sve::eval
