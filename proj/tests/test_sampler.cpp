#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "core/rng.h"
#include "sampler/sampler.h"

using namespace sve;
using namespace sve::sampler;

namespace {

// four equal quadrants labeled 0..3
ImageLabels quadrants(int side) {
  ImageLabels img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      img.at(x, y) = static_cast<uint8_t>((y < side / 2 ? 0 : 2) + (x < side / 2 ? 0 : 1));
  return img;
}

}  // namespace

TEST_CASE("weight initialization") {
  RegionWeights rw = init_weights(4);
  CHECK(rw.w.isApproxToConstant(0.25));
  CHECK_THROWS_AS(init_weights(0), std::invalid_argument);
  CHECK_THROWS_AS(init_weights(-3), std::invalid_argument);
}

TEST_CASE("region areas count labels") {
  ImageLabels img = quadrants(10);
  Eigen::VectorXd a = region_areas(img, 4);
  CHECK(a == Eigen::VectorXd::Constant(4, 25.0));

  ImageLabels bad(2, 2);
  bad.at(1, 1) = 7;
  CHECK_THROWS_AS(region_areas(bad, 4), std::invalid_argument);
}

TEST_CASE("update follows the guidance blend") {
  // two regions, equal losses: guidance = 2/(0.5*100*4) = 0.01,
  // new weight = 0.01*0.01 + 0.99*0.5 = 0.4951
  RegionWeights rw;
  rw.w = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd losses(2), areas(2);
  losses << 2, 2;
  areas << 100, 100;
  update_weights(rw, losses, areas, 0.01);
  CHECK(rw.w(0) == doctest::Approx(0.4951).epsilon(1e-12));
  CHECK(rw.w(1) == doctest::Approx(0.4951).epsilon(1e-12));
}

TEST_CASE("zero-area region only decays") {
  RegionWeights rw;
  rw.w = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd losses(2), areas(2);
  losses << 2, 2;
  areas << 0, 100;
  update_weights(rw, losses, areas, 0.01);
  CHECK(rw.w(0) == doctest::Approx(0.495).epsilon(1e-12));  // 0.99 * 0.5
  CHECK(rw.w(0) > 0.0);  // never driven to zero outright
}

TEST_CASE("higher loss earns the larger weight") {
  RegionWeights rw;
  rw.w = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd losses(2), areas(2);
  losses << 3, 1;
  areas << 100, 100;
  update_weights(rw, losses, areas, 0.01);
  CHECK(rw.w(0) == doctest::Approx(0.49515).epsilon(1e-12));
  CHECK(rw.w(1) == doctest::Approx(0.49505).epsilon(1e-12));
  CHECK(rw.w(0) > rw.w(1));
}

TEST_CASE("weights stay positive under any loss pattern") {
  RngStream r(5);
  RegionWeights rw = init_weights(5);
  Eigen::VectorXd areas(5);
  areas << 10, 0, 500, 3, 80;
  for (int step = 0; step < 2000; ++step) {
    Eigen::VectorXd losses(5);
    for (int i = 0; i < 5; ++i) losses(i) = r.uniform(0, 4) < 1 ? 0.0 : r.uniform(0, 2);
    update_weights(rw, losses, areas, 0.01);
    CHECK(rw.w.minCoeff() > 0.0);
  }
}

TEST_CASE("constant losses converge to the analytic fixed point") {
  // at the fixed point w = L/(w A sum(L)), i.e. w* = sqrt(L/(A sum(L)))
  RegionWeights rw = init_weights(2);
  Eigen::VectorXd losses(2), areas(2);
  losses << 1, 3;
  areas << 50, 200;
  for (int i = 0; i < 4000; ++i) update_weights(rw, losses, areas, 0.01);
  CHECK(rw.w(0) == doctest::Approx(std::sqrt(1.0 / (50 * 4))).epsilon(1e-9));
  CHECK(rw.w(1) == doctest::Approx(std::sqrt(3.0 / (200 * 4))).epsilon(1e-9));
}

TEST_CASE("zeroed region recovers after its area returns") {
  RegionWeights rw = init_weights(2);
  Eigen::VectorXd losses(2);
  losses << 1, 1;
  Eigen::VectorXd gone(2), back(2);
  gone << 0, 100;
  back << 100, 100;
  for (int i = 0; i < 300; ++i) update_weights(rw, losses, gone, 0.01);
  // pure decay: (1 - alpha)^300 of the start, well under the fixed point
  CHECK(rw.w(0) == doctest::Approx(0.5 * std::pow(0.99, 300)).epsilon(1e-9));
  double low = rw.w(0);
  for (int i = 0; i < 200; ++i) update_weights(rw, losses, back, 0.01);
  CHECK(rw.w(0) > low);  // guidance pulls it back toward its fixed point
  CHECK(rw.w(0) > 0.5 * std::sqrt(1.0 / 200));  // most of the way there
}

TEST_CASE("sampling hits regions proportional to weight times area") {
  ImageLabels img = quadrants(200);
  RegionWeights rw = init_weights(4);
  RngStream rng(123);
  auto picks = sample_pixels(rw, img, 40000, rng);
  REQUIRE(picks.size() == 40000);
  Eigen::Vector4i counts = Eigen::Vector4i::Zero();
  for (auto [x, y] : picks) {
    int label = img.at(x, y);
    counts(label)++;
    CHECK(x >= 0);
    CHECK(x < 200);
    CHECK(y >= 0);
    CHECK(y < 200);
  }
  double sigma = std::sqrt(40000 * 0.25 * 0.75);  // ~86.6
  for (int i = 0; i < 4; ++i) CHECK(std::abs(counts(i) - 10000) < 3 * sigma);
}

TEST_CASE("skewed weights skew the draw") {
  ImageLabels img = quadrants(100);
  RegionWeights rw = init_weights(4);
  rw.w << 0.7, 0.1, 0.1, 0.1;
  RngStream rng(7);
  auto picks = sample_pixels(rw, img, 10000, rng);
  int first = 0;
  for (auto [x, y] : picks)
    if (img.at(x, y) == 0) first++;
  // expected fraction 0.7, binomial sigma ~ 0.0046
  CHECK(first > 6800);
  CHECK(first < 7200);
}

TEST_CASE("absent region is never drawn") {
  ImageLabels img(20, 20);  // every pixel label 0; regions 1 and 2 are empty
  RegionWeights rw = init_weights(3);
  RngStream rng(9);
  auto picks = sample_pixels(rw, img, 500, rng);
  for (auto [x, y] : picks) CHECK(img.at(x, y) == 0);
}

TEST_CASE("zero total mass is an error") {
  ImageLabels img = quadrants(10);
  RegionWeights rw = init_weights(4);
  rw.w.setZero();
  RngStream rng(3);
  CHECK_THROWS_WITH_AS(sample_pixels(rw, img, 10, rng), "empty frame",
                       std::runtime_error);
}

TEST_CASE("zero-area region keeps positive weight through a long run") {
  // areas: region 1 never appears; after many updates it must still carry
  // weight so it can be sampled again if it ever shows up
  RegionWeights rw = init_weights(2);
  Eigen::VectorXd losses(2), areas(2);
  losses << 1, 1;
  areas << 0, 400;
  for (int i = 0; i < 100; ++i) update_weights(rw, losses, areas, 0.01);
  CHECK(rw.w(0) > 0.0);
  CHECK(rw.w(1) > 0.0);
}
