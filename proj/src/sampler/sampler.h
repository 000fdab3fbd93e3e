#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "core/image.h"
#include "core/rng.h"

namespace sve::sampler {

// Per-region sampling weights. Updates blend toward a loss-derived guidance
// value without renormalizing, so the weights are not a distribution; the
// sampling probability of a region is w_i * A_i over the frame's region
// areas.
struct RegionWeights {
  Eigen::VectorXd w;

  int size() const { return static_cast<int>(w.size()); }
};

RegionWeights init_weights(int n_regions);  // uniform 1/N, rejects N <= 0

// Pixel count of every region label in [0, n_regions).
Eigen::VectorXd region_areas(const ImageLabels& region, int n_regions);

// Draws n pixels: region by probability proportional to w_i * A_i, then
// uniform among that region's pixels. Throws "empty frame" when every
// region has zero probability mass.
std::vector<std::pair<int, int>> sample_pixels(const RegionWeights& rw,
                                               const ImageLabels& region, int n,
                                               RngStream& rng);

// One guidance step: w_i <- alpha * g_i + (1 - alpha) * w_i with
//   g_i = L_i / (w_i * A_i * sum_j L_j)   if A_i > 0 and the loss sum is
// positive, else 0. Losses are per-region sums over the sampled pixels.
void update_weights(RegionWeights& rw, const Eigen::VectorXd& losses,
                    const Eigen::VectorXd& areas, double alpha);

}  // namespace sve::sampler
