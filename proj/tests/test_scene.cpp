#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "core/rng.h"
#include "scene/dataset.h"
#include "scene/scene.h"

using namespace sve;
using namespace sve::scene;
namespace fs = std::filesystem;

namespace {

SceneConfig default_cfg() { return SceneConfig{}; }

}  // namespace

TEST_CASE("zero expression reduces to the base sphere") {
  SceneDefinition s = make_scene(default_cfg());
  Eigen::VectorXd eps = Eigen::VectorXd::Zero(s.k);
  RngStream r(3);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d p(r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2));
    CHECK(analytic_sdf(s, p, eps) == doctest::Approx(p.norm() - 1.0).epsilon(1e-12));
  }
  // origin convention: depth of the surface along +z
  CHECK(analytic_sdf(s, Eigen::Vector3d::Zero(), eps) == doctest::Approx(-1.0));
}

TEST_CASE("field responds linearly to the expression vector") {
  SceneDefinition s = make_scene(default_cfg());
  RngStream r(5);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector3d p(r.uniform(-1.5, 1.5), r.uniform(-1.5, 1.5), r.uniform(-1.5, 1.5));
    if (p.norm() < 0.1) continue;
    Eigen::VectorXd e1(s.k), e2(s.k);
    for (int j = 0; j < s.k; ++j) {
      e1(j) = r.uniform(-1, 1);
      e2(j) = r.uniform(-1, 1);
    }
    double a = r.uniform(-1, 1), b = r.uniform(-1, 1);
    double lhs = analytic_sdf(s, p, a * e1 + b * e2);
    double sphere = p.norm() - s.base_radius;
    // bump contribution is linear in eps, so the deviation from the plain
    // sphere combines linearly
    double rhs = sphere + a * (analytic_sdf(s, p, e1) - sphere) +
                 b * (analytic_sdf(s, p, e2) - sphere);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("single bump on its axis matches a 1-D evaluation") {
  SceneConfig cfg = default_cfg();
  cfg.n_bumps = 1;
  cfg.k = 1;
  cfg.amp = 0.2;
  SceneDefinition s = make_scene(cfg);
  Eigen::VectorXd eps(1);
  eps << 0.8;
  // on the bump axis the kernel is exactly 1
  Eigen::Vector3d axis = s.bumps[0].dir;
  double expect_radius = 1.0 + 0.2 * 0.8;
  double sdf = analytic_sdf(s, axis * 1.5, eps);
  CHECK(sdf == doctest::Approx(1.5 - expect_radius).epsilon(1e-12));
  // opposite side: kernel exp(-2/sigma^2) is vanishing, sphere remains
  double back = analytic_sdf(s, -axis * 1.5, eps);
  CHECK(back == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("gradient is unit length away from the bumps") {
  SceneDefinition s = make_scene(default_cfg());
  RngStream r(7);
  Eigen::VectorXd eps(s.k);
  for (int j = 0; j < s.k; ++j) eps(j) = r.uniform(-1, 1);
  int checked = 0;
  for (int i = 0; i < 500 && checked < 100; ++i) {
    Eigen::Vector3d p(r.uniform(-1.6, 1.6), r.uniform(-1.6, 1.6), r.uniform(-1.6, 1.6));
    if (p.norm() < 0.4) continue;
    // keep clear of every bump's angular footprint (3 sigma)
    bool near_bump = false;
    for (const auto& b : s.bumps)
      if (std::acos(std::clamp(b.dir.dot(p.normalized()), -1.0, 1.0)) < 3 * b.sigma)
        near_bump = true;
    if (near_bump) continue;
    checked++;
    Eigen::Vector3d g;
    double h = 1e-6;
    for (int ax = 0; ax < 3; ++ax) {
      Eigen::Vector3d dp = Eigen::Vector3d::Zero();
      dp(ax) = h;
      g(ax) = (analytic_sdf(s, p + dp, eps) - analytic_sdf(s, p - dp, eps)) / (2 * h);
    }
    CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK(checked == 100);
}

TEST_CASE("gradient norm stays under the Lipschitz bound") {
  SceneDefinition s = make_scene(default_cfg());
  double lip = s.lipschitz_bound();
  RngStream r(11);
  Eigen::VectorXd eps(s.k);
  for (int j = 0; j < s.k; ++j) eps(j) = (j % 2 == 0) ? 1.0 : -1.0;  // extremal
  for (int i = 0; i < 300; ++i) {
    Eigen::Vector3d dir(r.normal(), r.normal(), r.normal());
    dir.normalize();
    Eigen::Vector3d p = dir * r.uniform(0.5, 1.6);
    Eigen::Vector3d g;
    double h = 1e-6;
    for (int ax = 0; ax < 3; ++ax) {
      Eigen::Vector3d dp = Eigen::Vector3d::Zero();
      dp(ax) = h;
      g(ax) = (analytic_sdf(s, p + dp, eps) - analytic_sdf(s, p - dp, eps)) / (2 * h);
    }
    CHECK(g.norm() < lip);
  }
}

TEST_CASE("self-intersecting amplitude budget is rejected") {
  SceneConfig cfg = default_cfg();
  cfg.amp = 0.2;  // 3 bumps -> total 0.6 >= r0/2
  CHECK_THROWS_WITH_AS(make_scene(cfg), "scene would self-intersect",
                       std::invalid_argument);
}

TEST_CASE("camera basis is a proper rotation aimed at the origin") {
  for (double az : {0.0, 0.4, -0.5})
    for (double el : {0.0, 0.2, -0.15}) {
      CameraModel c = look_at_camera(az, el, 3.0, 64, 48);
      CHECK((c.R.transpose() * c.R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
      CHECK(c.R.determinant() == doctest::Approx(1.0));
      // forward axis points from the camera to the origin
      Eigen::Vector3d f = c.R.col(2);
      CHECK((f - (-c.pos.normalized())).norm() < 1e-12);
      // center pixel looks forward
      Eigen::Vector3d d = c.pixel_dir(c.cx - 0.5, c.cy - 0.5);
      CHECK((d - f).norm() < 1e-12);
    }
}

TEST_CASE("head-on depth of the unit sphere") {
  SceneConfig cfg = default_cfg();
  cfg.n_bumps = 0;
  SceneDefinition s = make_scene(cfg);
  Eigen::VectorXd eps = Eigen::VectorXd::Zero(s.k);
  CameraModel c = look_at_camera(0, 0, 3.0, 48, 48);
  TraceResult tr = trace_ray(s, c.pos, c.pixel_dir(23.5, 23.5), eps);
  REQUIRE(tr.hit);
  CHECK(tr.t == doctest::Approx(2.0).epsilon(1e-4));
  // a ray pointed away can never hit
  TraceResult away = trace_ray(s, c.pos, Eigen::Vector3d(0, 0, 1), eps);
  CHECK_FALSE(away.hit);
}

TEST_CASE("traced points land on the analytic zero set") {
  SceneDefinition s = make_scene(default_cfg());
  Eigen::VectorXd eps = trajectory_eps(9, s.k, 3, 20);
  CameraModel c = orbit_camera(3, 20, 32, 32);
  int hits = 0;
  for (int v = 0; v < 32; v += 3)
    for (int u = 0; u < 32; u += 3) {
      TraceResult tr = trace_ray(s, c.pos, c.pixel_dir(u, v), eps);
      if (!tr.hit) continue;
      hits++;
      CHECK(std::abs(analytic_sdf(s, tr.point, eps)) < 2e-5);
    }
  CHECK(hits > 20);
}

TEST_CASE("trajectories are smooth, bounded, and seed-deterministic") {
  int n = 40, k = 4;
  Eigen::VectorXd prev;
  for (int t = 0; t < n; ++t) {
    Eigen::VectorXd e = trajectory_eps(123, k, t, n);
    REQUIRE(e.size() == k);
    CHECK(e.minCoeff() >= -1.0);
    CHECK(e.maxCoeff() <= 1.0);
    if (t > 0) CHECK((e - prev).lpNorm<Eigen::Infinity>() < 0.75);
    prev = e;
  }
  CHECK(trajectory_eps(123, k, 7, n) == trajectory_eps(123, k, 7, n));
  CHECK(trajectory_eps(123, k, 7, n) != trajectory_eps(124, k, 7, n));
  // the motion must actually exercise each dim
  for (int d = 0; d < k; ++d) {
    double lo = 1, hi = -1;
    for (int t = 0; t < n; ++t) {
      double v = trajectory_eps(123, k, t, n)(d);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(hi - lo > 0.3);
  }
}

TEST_CASE("ground-truth frame is consistent across its channels") {
  SceneDefinition s = make_scene(default_cfg());
  Eigen::VectorXd eps = trajectory_eps(1, s.k, 0, 20);
  CameraModel c = orbit_camera(0, 20, 40, 40);
  FrameRecord fr = render_ground_truth(s, c, eps);
  int fg = 0;
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 40; ++u) {
      bool on = fr.mask.at(u, v) > 0.5f;
      if (on) {
        fg++;
        CHECK(fr.depth.at(u, v) > 1.0f);
        CHECK(fr.region.at(u, v) < s.bumps.size());
      } else {
        CHECK(fr.depth.at(u, v) == 0.f);
        CHECK(fr.region.at(u, v) == s.bumps.size());
        CHECK(fr.rgb.px(u, v)[0] == kBackgroundGray);
      }
    }
  // the sphere at distance 3 with fov ~53 deg fills a sizable disc
  CHECK(fg > 400);
  CHECK(fg < 40 * 40);
}

TEST_CASE("expression change moves the silhouette only near its bump") {
  SceneConfig cfg = default_cfg();
  cfg.amp = 0.15;
  cfg.sigma = 0.2;  // narrow bump so the footprint is unambiguous
  SceneDefinition s = make_scene(cfg);
  CameraModel c = look_at_camera(0, 0.0, 3.0, 48, 48);  // bump 0 sits above center
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(s.k);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(s.k);
  e1(0) = 1.0;  // drives bump 0 only
  FrameRecord f0 = render_ground_truth(s, c, e0);
  FrameRecord f1 = render_ground_truth(s, c, e1);
  int changed = 0, fg = 0;
  double vsum = 0;
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 48; ++u) {
      if (f1.mask.at(u, v) > 0.5f) fg++;
      if (std::abs(f0.depth.at(u, v) - f1.depth.at(u, v)) > 0.02f) {
        changed++;
        vsum += v;
      }
    }
  CHECK(changed > 10);
  CHECK(changed < fg / 2);       // concentrated, not the whole silhouette
  CHECK(vsum / changed < 22.0);  // and sitting where the bump is (upper half)
}

TEST_CASE("dataset round trip") {
  DatasetConfig cfg;
  cfg.n_frames = 10;
  cfg.width = 24;
  cfg.height = 24;
  cfg.seed = 5;
  auto dir = (fs::temp_directory_path() / "sve_test_dataset").string();
  fs::remove_all(dir);
  generate_dataset(cfg, dir);

  Dataset ds = load_dataset(dir);
  CHECK(ds.frames.size() == 10);
  CHECK(ds.train_ids.size() == 8);
  CHECK(ds.holdout_ids.size() == 2);
  CHECK(ds.holdout_ids == std::vector<int>({4, 9}));
  CHECK(ds.scene.k == cfg.scene.k);
  CHECK(ds.scene.n_regions() == 4);

  // frames must reproduce the in-memory render up to 8-bit quantization
  SceneDefinition s = make_scene(cfg.scene);
  for (int t : {0, 4, 7}) {
    Eigen::VectorXd eps = trajectory_eps(cfg.seed, s.k, t, cfg.n_frames);
    CHECK((ds.frames[t].rec.eps - eps).norm() < 1e-12);
    FrameRecord fresh =
        render_ground_truth(s, ds.frames[t].rec.camera, ds.frames[t].rec.eps);
    float worst = 0;
    for (size_t i = 0; i < fresh.rgb.data.size(); ++i)
      worst = std::max(worst, std::abs(fresh.rgb.data[i] - ds.frames[t].rec.rgb.data[i]));
    CHECK(worst <= 0.5f / 255.f + 1e-6f);
    CHECK(fresh.mask.data == ds.frames[t].rec.mask.data);
    CHECK(fresh.depth.data == ds.frames[t].rec.depth.data);  // f32 is lossless
    CHECK(fresh.region.data == ds.frames[t].rec.region.data);
  }

  // regenerating with the same seed produces identical bytes
  auto dir2 = (fs::temp_directory_path() / "sve_test_dataset2").string();
  fs::remove_all(dir2);
  generate_dataset(cfg, dir2);
  for (const auto* name : {"/manifest.json", "/frames/0003.png", "/frames/0003.depth.f32"}) {
    std::ifstream a(dir + name, std::ios::binary), b(dir2 + name, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
}

TEST_CASE("held-out frames carry genuinely different expressions") {
  DatasetConfig cfg;
  cfg.n_frames = 20;
  int k = cfg.scene.k;
  double min_gap = 1e9;
  for (int h = 0; h < cfg.n_frames; ++h) {
    if (!cfg.is_holdout(h)) continue;
    Eigen::VectorXd eh = trajectory_eps(cfg.seed, k, h, cfg.n_frames);
    for (int t = 0; t < cfg.n_frames; ++t) {
      if (cfg.is_holdout(t)) continue;
      Eigen::VectorXd et = trajectory_eps(cfg.seed, k, t, cfg.n_frames);
      min_gap = std::min(min_gap, (eh - et).norm());
    }
  }
  CHECK(min_gap > 1e-4);   // never a duplicate of a training expression
  CHECK(min_gap < 1.0);    // but still inside the trained range
}
