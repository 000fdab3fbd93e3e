#include "eval/metrics.h"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sve::eval {

namespace {

void check_shape(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("image shape mismatch");
}

}  // namespace

double mae(const ImageRGB& a, const ImageRGB& b) {
  check_shape(a, b);
  double acc = 0;
  size_t n = a.data.size();
  for (size_t i = 0; i < n; ++i) acc += std::abs(double(a.data[i]) - b.data[i]);
  return acc / double(n);
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
  check_shape(a, b);
  double acc = 0;
  size_t n = a.data.size();
  for (size_t i = 0; i < n; ++i) {
    double d = double(a.data[i]) - b.data[i];
    acc += d * d;
  }
  double mse = acc / double(n);
  if (mse <= 0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

namespace {

constexpr int kWin = 11;

// Normalized 11x11 Gaussian, sigma 1.5, as a flat row-major table.
std::vector<double> gaussian_window() {
  std::vector<double> g(kWin);
  double sum1 = 0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum1 += g[i];
  }
  std::vector<double> w(kWin * kWin);
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) w[y * kWin + x] = g[y] * g[x] / (sum1 * sum1);
  return w;
}

}  // namespace

double ssim(const ImageRGB& a, const ImageRGB& b) {
  check_shape(a, b);
  if (a.width < kWin || a.height < kWin)
    throw std::invalid_argument("image smaller than the ssim window");
  static const std::vector<double> win = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0;
    int count = 0;
    for (int y0 = 0; y0 + kWin <= a.height; ++y0) {
      for (int x0 = 0; x0 + kWin <= a.width; ++x0) {
        double mu_a = 0, mu_b = 0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            double w = win[dy * kWin + dx];
            mu_a += w * a.px(x0 + dx, y0 + dy)[ch];
            mu_b += w * b.px(x0 + dx, y0 + dy)[ch];
          }
        double var_a = 0, var_b = 0, cov = 0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            double w = win[dy * kWin + dx];
            double da = a.px(x0 + dx, y0 + dy)[ch] - mu_a;
            double db = b.px(x0 + dx, y0 + dy)[ch] - mu_b;
            var_a += w * da * da;
            var_b += w * db * db;
            cov += w * da * db;
          }
        acc += (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / 3.0;
}

void to_json(json& j, const MetricsReport& r) {
  j = json{{"mae", r.mae},     {"psnr", r.psnr},
           {"ssim", r.ssim},   {"lpips", nullptr},
           {"n_frames", r.n_frames}, {"split", r.split}};
  if (r.lpips) j["lpips"] = *r.lpips;
}

void from_json(const json& j, MetricsReport& r) {
  r.mae = j.at("mae").get<double>();
  r.psnr = j.at("psnr").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.lpips.reset();
  if (j.contains("lpips") && !j["lpips"].is_null()) r.lpips = j["lpips"].get<double>();
  r.n_frames = j.value("n_frames", 0);
  r.split = j.value("split", "");
}

}  // namespace sve::eval
