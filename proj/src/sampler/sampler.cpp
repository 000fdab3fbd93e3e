#include "sampler/sampler.h"

#include <stdexcept>

namespace sve::sampler {

RegionWeights init_weights(int n_regions) {
  if (n_regions <= 0) throw std::invalid_argument("need at least one region");
  RegionWeights rw;
  rw.w = Eigen::VectorXd::Constant(n_regions, 1.0 / n_regions);
  return rw;
}

Eigen::VectorXd region_areas(const ImageLabels& region, int n_regions) {
  Eigen::VectorXd areas = Eigen::VectorXd::Zero(n_regions);
  for (uint8_t label : region.data) {
    if (label >= n_regions) throw std::invalid_argument("region label out of range");
    areas(label) += 1;
  }
  return areas;
}

std::vector<std::pair<int, int>> sample_pixels(const RegionWeights& rw,
                                               const ImageLabels& region, int n,
                                               RngStream& rng) {
  int n_regions = rw.size();
  Eigen::VectorXd areas = region_areas(region, n_regions);
  Eigen::VectorXd mass = rw.w.cwiseProduct(areas).cwiseMax(0.0);
  double total = mass.sum();
  if (total <= 0) throw std::runtime_error("empty frame");

  // pixel index lists per region, in raster order
  std::vector<std::vector<int>> members(n_regions);
  for (size_t i = 0; i < region.data.size(); ++i)
    members[region.data[i]].push_back(static_cast<int>(i));

  Eigen::VectorXd cdf(n_regions);
  double acc = 0;
  for (int i = 0; i < n_regions; ++i) {
    acc += mass(i);
    cdf(i) = acc;
  }

  std::vector<std::pair<int, int>> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    // the first region whose cdf exceeds the target always has positive mass
    double target = rng.uniform() * total;
    int r = 0;
    while (r < n_regions - 1 && cdf(r) <= target) ++r;
    const auto& px = members[r];
    int idx = px[rng.uniform_int(static_cast<uint32_t>(px.size()))];
    out.emplace_back(idx % region.width, idx / region.width);
  }
  return out;
}

void update_weights(RegionWeights& rw, const Eigen::VectorXd& losses,
                    const Eigen::VectorXd& areas, double alpha) {
  if (losses.size() != rw.size() || areas.size() != rw.size())
    throw std::invalid_argument("region count mismatch");
  double loss_sum = losses.sum();
  for (int i = 0; i < rw.size(); ++i) {
    double g = 0;
    if (areas(i) > 0 && loss_sum > 0 && rw.w(i) > 0)
      g = losses(i) / (rw.w(i) * areas(i) * loss_sum);
    rw.w(i) = alpha * g + (1 - alpha) * rw.w(i);
  }
}

}  // namespace sve::sampler
