#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "ad/tape.h"
#include "core/rng.h"
#include "fields/graph.h"
#include "fields/net.h"
#include "render/renderer.h"
#include "sampler/sampler.h"
#include "scene/dataset.h"
#include "train/step.h"
#include "train/train.h"

using namespace sve;
namespace fs = std::filesystem;

namespace {

fields::NetConfig small_net(int k) {
  fields::NetConfig n;
  n.k = k;
  n.k_prime = 3;
  n.l_pe = 2;
  n.g_width = 32;
  n.shortcut_width = 16;
  n.deform_width = 24;
  n.sdf_width = 32;
  n.color_width = 24;
  n.feat_width = 12;
  return n;
}

train::TrainConfig tiny_cfg() {
  train::TrainConfig c;
  c.net = small_net(4);
  c.render.n_coarse = 12;
  c.render.n_importance = 4;
  c.render.up_rounds = 1;
  c.rays_per_step = 12;
  c.coarse_steps = 3;
  c.fine_steps = 5;
  c.checkpoint_interval = 1000;
  return c;
}

scene::Dataset tiny_dataset(int n_frames, int side, uint64_t seed, double amp = 0.12) {
  scene::Dataset ds;
  ds.cfg.n_frames = n_frames;
  ds.cfg.width = side;
  ds.cfg.height = side;
  ds.cfg.seed = seed;
  ds.cfg.scene.amp = amp;
  ds.scene = scene::make_scene(ds.cfg.scene);
  for (int t = 0; t < n_frames; ++t) {
    scene::CameraModel cam =
        scene::orbit_camera(t, n_frames, side, side, ds.cfg.cam_distance);
    Eigen::VectorXd eps = scene::trajectory_eps(seed, ds.scene.k, t, n_frames);
    scene::DatasetFrame f;
    f.rec = scene::render_ground_truth(ds.scene, cam, eps);
    f.rec.frame_id = t;
    f.holdout = ds.cfg.is_holdout(t);
    (f.holdout ? ds.holdout_ids : ds.train_ids).push_back(t);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

std::vector<std::pair<int, int>> mask_pixels(const scene::FrameRecord& fr) {
  std::vector<std::pair<int, int>> px;
  for (int v = 0; v < fr.mask.height; ++v)
    for (int u = 0; u < fr.mask.width; ++u)
      if (fr.mask.at(u, v) >= 0.5f) px.emplace_back(u, v);
  return px;
}

bool same_weights(const fields::FieldParams& a, const fields::FieldParams& b,
                  bool with_moments = false) {
  if (a.arrays.size() != b.arrays.size()) return false;
  for (size_t i = 0; i < a.arrays.size(); ++i) {
    if (a.arrays[i].w != b.arrays[i].w) return false;
    if (with_moments &&
        (a.arrays[i].adam_m != b.arrays[i].adam_m || a.arrays[i].adam_v != b.arrays[i].adam_v))
      return false;
  }
  return true;
}

double median_abs(const Eigen::VectorXd& v) {
  std::vector<double> a(v.size());
  for (int i = 0; i < v.size(); ++i) a[i] = std::abs(v(i));
  std::sort(a.begin(), a.end());
  size_t n = a.size();
  return n % 2 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
}

}  // namespace

TEST_CASE("train config round-trips through json and hashes by content") {
  train::TrainConfig c = tiny_cfg();
  c.lambda_depth = 0.37;
  c.lambda2 = 0.21;
  c.use_ais = false;
  c.depth_supervision = "full";
  c.seed = 41;
  c.lr_final = 7e-5;

  nlohmann::json j = c;
  train::TrainConfig d = j.get<train::TrainConfig>();
  CHECK(d.coarse_steps == c.coarse_steps);
  CHECK(d.fine_steps == c.fine_steps);
  CHECK(d.rays_per_step == c.rays_per_step);
  CHECK(d.lr == c.lr);
  CHECK(d.lr_final == c.lr_final);
  CHECK(d.lambda_depth == c.lambda_depth);
  CHECK(d.lambda2 == c.lambda2);
  CHECK(d.use_ais == c.use_ais);
  CHECK(d.depth_supervision == c.depth_supervision);
  CHECK(d.seed == c.seed);
  CHECK(d.net.g_width == c.net.g_width);
  CHECK(d.render.n_coarse == c.render.n_coarse);

  std::string h = train::train_config_hash(c, 4);
  CHECK(h.size() == 16);
  CHECK(train::train_config_hash(d, 4) == h);
  d.lambda_rgb = 0.5;
  CHECK(train::train_config_hash(d, 4) != h);
  // the dataset expression dimension is part of the trained architecture
  CHECK(train::train_config_hash(c, 5) != h);

  train::TrainConfig bad = tiny_cfg();
  bad.depth_supervision = "sometimes";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_cfg();
  bad.ais_alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_cfg();
  bad.rays_per_step = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_cfg();
  bad.lr_final = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("resolved net folds the ablation switches and the dataset dimension") {
  train::TrainConfig c = tiny_cfg();
  c.net.k = 99;  // placeholder, the dataset wins
  fields::NetConfig r = c.resolved_net(4);
  CHECK(r.k == 4);
  CHECK(r.spatial_condition);
  CHECK(r.compress);
  CHECK(r.k_prime == 3);

  c.use_sve = false;
  CHECK_FALSE(c.resolved_net(4).spatial_condition);
  c.use_sve = true;

  c.compress_sve = false;
  fields::NetConfig u = c.resolved_net(4);
  CHECK_FALSE(u.compress);
  CHECK(u.k_prime == 4);
  c.compress_sve = true;

  // requested compressed dimension is capped strictly below the dataset's
  c.net.k_prime = 9;
  CHECK(c.resolved_net(4).k_prime == 3);

  CHECK(c.lr_at(0) == doctest::Approx(c.lr).epsilon(1e-12));
  CHECK(c.lr_at(c.total_steps() - 1) == doctest::Approx(c.lr_final).epsilon(1e-9));
  CHECK(c.lr_at(c.total_steps() / 2) < c.lr);
  CHECK(c.lr_at(c.total_steps() / 2) > c.lr_final);
}

TEST_CASE("guidance loss matches hand-computed region sums") {
  SUBCASE("perfect fit decays to the bce clamp floor") {
    int n = 6;
    Eigen::MatrixXd rgb(n, 3);
    for (int i = 0; i < n; ++i) rgb.row(i) << 0.1 * i, 0.2, 0.9 - 0.1 * i;
    Eigen::VectorXd mask(n), depth(n);
    mask << 1, 1, 1, 0, 1, 1;
    depth << 2.0, 2.1, 2.2, 0.0, 2.4, 2.5;
    Eigen::VectorXi region(n);
    region << 0, 0, 1, 3, 2, 1;

    train::GuidanceParts g =
        train::guidance_loss(rgb, mask, depth, rgb, mask, depth, region, 4);
    Eigen::Vector4d count(2, 2, 1, 1);
    for (int i = 0; i < 4; ++i) {
      CHECK(g.render(i) <= count(i) * 1.1e-6);
      CHECK(g.render(i) >= count(i) * 0.9e-6);
      CHECK(g.depth(i) == 0.0);
    }
  }

  SUBCASE("one masked pixel lands in its region alone") {
    Eigen::MatrixXd rgb_hat(1, 3), rgb_gt(1, 3);
    rgb_hat << 0.9, 0.7, 0.6;
    rgb_gt << 0.4, 0.2, 0.1;  // |diff| = 0.5 per channel
    Eigen::VectorXd mh(1), mg(1), dh(1), dg(1);
    mh << 1.0;
    mg << 1.0;
    dh << 2.5;
    dg << 2.2;
    Eigen::VectorXi region(1);
    region << 2;

    train::GuidanceParts g = train::guidance_loss(rgb_hat, mh, dh, rgb_gt, mg, dg, region, 4);
    CHECK(g.render(2) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(g.depth(2) == doctest::Approx(0.3).epsilon(1e-9));
    for (int i : {0, 1, 3}) {
      CHECK(g.render(i) == 0.0);
      CHECK(g.depth(i) == 0.0);
    }
  }

  SUBCASE("random batch against an independent accumulation") {
    RngStream rng = RngStream::derive(3, 0x677569, 0);
    int n = 8, nr = 4;
    Eigen::MatrixXd rgb_hat(n, 3), rgb_gt(n, 3);
    Eigen::VectorXd mh(n), mg(n), dh(n), dg(n);
    Eigen::VectorXi region(n);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        rgb_hat(i, c) = rng.uniform();
        rgb_gt(i, c) = rng.uniform();
      }
      mh(i) = rng.uniform(0.05, 0.95);
      mg(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      dh(i) = rng.uniform(1.5, 3.0);
      dg(i) = rng.uniform(1.5, 3.0);
      region(i) = static_cast<int>(rng.uniform_int(nr));
    }

    Eigen::VectorXd ref_r = Eigen::VectorXd::Zero(nr), ref_d = Eigen::VectorXd::Zero(nr);
    for (int i = 0; i < n; ++i) {
      double l1 = (rgb_hat.row(i) - rgb_gt.row(i)).cwiseAbs().mean();
      double p = std::min(1.0 - 1e-6, std::max(1e-6, mh(i)));
      double bce = -(mg(i) * std::log(p) + (1.0 - mg(i)) * std::log(1.0 - p));
      ref_r(region(i)) += l1 + bce;
      ref_d(region(i)) += mg(i) * std::abs(dh(i) - dg(i));
    }

    train::GuidanceParts g =
        train::guidance_loss(rgb_hat, mh, dh, rgb_gt, mg, dg, region, nr);
    for (int i = 0; i < nr; ++i) {
      CHECK(g.render(i) == doctest::Approx(ref_r(i)).epsilon(1e-12));
      CHECK(g.depth(i) == doctest::Approx(ref_d(i)).epsilon(1e-12));
    }
  }

  SUBCASE("shape and label mistakes are rejected") {
    Eigen::MatrixXd a(3, 3), b(4, 3);
    a.setZero();
    b.setZero();
    Eigen::VectorXd v3 = Eigen::VectorXd::Zero(3), v4 = Eigen::VectorXd::Zero(4);
    Eigen::VectorXi r3 = Eigen::VectorXi::Zero(3);
    CHECK_THROWS_AS(train::guidance_loss(a, v3, v3, b, v4, v4, r3, 4), std::invalid_argument);
    r3(1) = 7;
    CHECK_THROWS_AS(train::guidance_loss(a, v3, v3, a, v3, v3, r3, 4), std::invalid_argument);
  }
}

TEST_CASE("step graph reproduces the forward renderer on a frozen batch") {
  scene::Dataset ds = tiny_dataset(2, 20, 5);
  const scene::FrameRecord& fr = ds.frames[0].rec;
  train::TrainConfig cfg = tiny_cfg();
  fields::FieldParams params = fields::init_params(3, cfg.resolved_net(ds.scene.k));

  std::vector<std::pair<int, int>> px = mask_pixels(fr);
  REQUIRE(px.size() >= 6);
  std::vector<std::pair<int, int>> chosen;
  for (size_t i = 0; i < 6; ++i) chosen.push_back(px[i * px.size() / 6]);
  chosen.emplace_back(0, 0);  // corner ray, likely dropped by the bound test

  RngStream rng = RngStream::derive(7, 0x627463, 0);
  train::RayBatch batch = train::freeze_ray_batch(fr, params, chosen, cfg.render, rng);
  REQUIRE(batch.size() >= 6);
  const int R = batch.size(), n = batch.n_intervals();

  train::LossTerms lw;
  lw.depth = 0.5;
  ad::Tape<float> t;
  fields::BoundParams<float> b = fields::bind_params(t, params, false);
  train::StepNodes<float> nodes =
      train::build_step_loss<float>(t, b, params.cfg, batch, nullptr, lw, 0.5);

  auto rgb_hat = t.value(nodes.rgb_hat);
  auto mask_hat = t.value(nodes.mask_hat);
  auto depth_hat = t.value(nodes.depth_hat);

  render::NeuralEvaluator ne(params, batch.eps);
  for (int r = 0; r < R; ++r) {
    Eigen::MatrixXd pts_end(n + 1, 3), pts_mid(n, 3), dirs(n, 3);
    Eigen::VectorXd t_mid(n);
    for (int i = 0; i <= n; ++i)
      pts_end.row(i) = batch.origins.row(r) + batch.t_end(r, i) * batch.dirs.row(r);
    for (int i = 0; i < n; ++i) {
      t_mid(i) = 0.5 * (batch.t_end(r, i) + batch.t_end(r, i + 1));
      pts_mid.row(i) = batch.origins.row(r) + t_mid(i) * batch.dirs.row(r);
      dirs.row(i) = batch.dirs.row(r);
    }
    Eigen::VectorXd alphas = render::sdf_to_alphas(ne.sdf_batch(pts_end), params.inv_std());
    render::CompositeOut co =
        render::composite(alphas, ne.color_batch(pts_mid, dirs), t_mid, 0.5);
    for (int c = 0; c < 3; ++c)
      CHECK(static_cast<double>(rgb_hat(r, c)) == doctest::Approx(co.rgb(c)).epsilon(5e-4));
    CHECK(static_cast<double>(mask_hat(r, 0)) == doctest::Approx(co.mask).epsilon(5e-4));
    if (co.mask > 1e-3)
      CHECK(static_cast<double>(depth_hat(r, 0)) == doctest::Approx(co.depth).epsilon(2e-3));
  }

  // scalar terms recomputed in double from the extracted predictions
  double l1 = 0, bce = 0;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < 3; ++c) l1 += std::abs(rgb_hat(r, c) - batch.target_rgb(r, c));
    double p = std::min(1.0 - 1e-6, std::max(1e-6, static_cast<double>(mask_hat(r, 0))));
    bce -= batch.target_mask(r) * std::log(p) +
           (1.0 - batch.target_mask(r)) * std::log(1.0 - p);
  }
  l1 /= 3.0 * R;
  bce /= R;
  CHECK(static_cast<double>(t.value(nodes.rgb)(0, 0)) == doctest::Approx(l1).epsilon(1e-4));
  CHECK(static_cast<double>(t.value(nodes.mask_bce)(0, 0)) == doctest::Approx(bce).epsilon(1e-4));
}

TEST_CASE("step totals decompose into their weighted terms") {
  scene::Dataset ds = tiny_dataset(2, 20, 5);
  train::TrainConfig cfg = tiny_cfg();
  cfg.rays_per_step = 24;
  fields::FieldParams params = fields::init_params(3, cfg.resolved_net(ds.scene.k));

  RngStream r1 = RngStream::derive(1, 2, 3);
  train::GeometrySupervisionBatch geo;
  train::LossBreakdown c =
      train::coarse_step(params, ds.frames[0].rec, r1, cfg, 1, cfg.lr, &geo);
  REQUIRE(geo.surface_points.rows() > 0);
  double recon = cfg.lambda_rgb * c.rgb + cfg.lambda_mask * c.mask_bce +
                 cfg.lambda_eik * c.eikonal + cfg.lambda_depth * c.depth +
                 cfg.lambda_surf * c.surface_sdf;
  CHECK(std::abs(c.total - recon) <= 1e-6 * std::max(1.0, std::abs(c.total)));
  CHECK(c.depth > 0.0);
  CHECK(c.surface_sdf > 0.0);

  sampler::RegionWeights w = sampler::init_weights(4);
  RngStream r2 = RngStream::derive(1, 2, 4);
  train::LossBreakdown f =
      train::fine_step(params, ds.frames[1].rec, w, r2, cfg, 2, cfg.lr);
  // default depth supervision stops feeding the parameter loss after coarse
  CHECK(f.depth == 0.0);
  CHECK(f.surface_sdf == 0.0);
  double frecon =
      cfg.lambda_rgb * f.rgb + cfg.lambda_mask * f.mask_bce + cfg.lambda_eik * f.eikonal;
  CHECK(std::abs(f.total - frecon) <= 1e-6 * std::max(1.0, std::abs(f.total)));
  CHECK(f.region_render.size() == 4);
  CHECK(f.region_depth.size() == 4);

  cfg.depth_supervision = "full";
  sampler::RegionWeights w2 = sampler::init_weights(4);
  RngStream r3 = RngStream::derive(1, 2, 4);
  fields::FieldParams params2 = fields::init_params(3, cfg.resolved_net(ds.scene.k));
  train::LossBreakdown g =
      train::fine_step(params2, ds.frames[1].rec, w2, r3, cfg, 1, cfg.lr);
  CHECK(g.depth > 0.0);
  double grecon = cfg.lambda_rgb * g.rgb + cfg.lambda_mask * g.mask_bce +
                  cfg.lambda_eik * g.eikonal + cfg.lambda_depth * g.depth;
  CHECK(std::abs(g.total - grecon) <= 1e-6 * std::max(1.0, std::abs(g.total)));
}

TEST_CASE("training gradients agree with finite differences on a frozen batch") {
  scene::Dataset ds = tiny_dataset(2, 20, 5);
  const scene::FrameRecord& fr = ds.frames[0].rec;
  train::TrainConfig cfg = tiny_cfg();
  cfg.render.n_coarse = 8;
  cfg.render.n_importance = 4;
  fields::FieldParams params = fields::init_params(11, cfg.resolved_net(ds.scene.k));

  std::vector<std::pair<int, int>> px = mask_pixels(fr);
  REQUIRE(px.size() >= 2);
  std::vector<std::pair<int, int>> chosen = {px[px.size() / 3], px[2 * px.size() / 3]};
  RngStream rng = RngStream::derive(13, 0x6664, 0);
  train::RayBatch batch = train::freeze_ray_batch(fr, params, chosen, cfg.render, rng);
  REQUIRE(batch.size() == 2);
  train::GeometrySupervisionBatch geo = train::make_geometry_batch(fr, chosen);
  REQUIRE(geo.surface_points.rows() == 2);

  train::LossTerms lw;
  lw.depth = 0.5;
  lw.surface = 1.0;

  auto loss_at = [&](const fields::FieldParams& p) {
    ad::Tape<double> t;
    fields::BoundParams<double> b = fields::bind_params(t, p, false);
    train::StepNodes<double> nodes =
        train::build_step_loss<double>(t, b, p.cfg, batch, &geo, lw, 0.5);
    return t.value(nodes.total)(0, 0);
  };

  ad::Tape<double> t;
  fields::BoundParams<double> b = fields::bind_params(t, params, true);
  train::StepNodes<double> nodes =
      train::build_step_loss<double>(t, b, params.cfg, batch, &geo, lw, 0.5);
  t.backward(nodes.total);

  // sharpest coordinate of each parameter group, checked by central difference
  struct Pick {
    std::string name;
    int r = 0, c = 0;
    double g = 0;
  };
  std::map<fields::ParamGroup, Pick> best;
  for (const fields::ParamArray& a : params.arrays) {
    Eigen::MatrixXd g = t.grad(b.var(a.name));
    if (g.size() == 0) continue;
    fields::ParamGroup grp = fields::group_of(a.name);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c)
        if (std::abs(g(r, c)) > std::abs(best[grp].g))
          best[grp] = {a.name, r, c, g(r, c)};
  }
  REQUIRE(best.size() == 4);

  for (const auto& [grp, pick] : best) {
    fields::FieldParams pp = params;
    fields::ParamArray& arr = pp.find(pick.name);
    float w0 = arr.at(pick.r, pick.c);
    const float h = 1e-3f;
    arr.at(pick.r, pick.c) = w0 + h;
    double wp = arr.at(pick.r, pick.c), fp = loss_at(pp);
    arr.at(pick.r, pick.c) = w0 - h;
    double wm = arr.at(pick.r, pick.c), fm = loss_at(pp);
    double fd = (fp - fm) / (wp - wm);
    double rel = std::abs(fd - pick.g) / std::max({std::abs(fd), std::abs(pick.g), 1e-6});
    INFO("group coord ", pick.name, "(", pick.r, ",", pick.c, ")");
    CHECK(rel < 1e-3);
  }
}

TEST_CASE("geometry anchors sit on the oracle surface") {
  scene::Dataset ds = tiny_dataset(2, 20, 5);
  const scene::FrameRecord& fr = ds.frames[0].rec;
  std::vector<std::pair<int, int>> all;
  for (int v = 0; v < 20; ++v)
    for (int u = 0; u < 20; ++u) all.emplace_back(u, v);
  train::GeometrySupervisionBatch geo = train::make_geometry_batch(fr, all);
  REQUIRE(geo.surface_points.rows() > 10);
  CHECK(geo.surface_points.rows() == static_cast<int>(mask_pixels(fr).size()));

  // unprojection is exactly o + depth * pixel_dir
  for (size_t i = 0; i < geo.pixels.size(); ++i) {
    auto [u, v] = geo.pixels[i];
    Eigen::Vector3d want =
        fr.camera.pos + static_cast<double>(fr.depth.at(u, v)) * fr.camera.pixel_dir(u, v);
    CHECK((geo.surface_points.row(i).transpose() - want).norm() == 0.0);
  }

  // the recorded depth comes from sphere tracing, so the oracle sdf vanishes
  render::AnalyticEvaluator ae(ds.scene, fr.eps);
  CHECK(ae.sdf_batch(geo.surface_points).cwiseAbs().mean() < 1e-4);
}

TEST_CASE("freshly initialized sphere nearly satisfies the surface anchors") {
  scene::Dataset ds = tiny_dataset(1, 20, 5, /*amp=*/0.0);
  train::TrainConfig cfg = tiny_cfg();
  cfg.rays_per_step = 40;
  fields::FieldParams params = fields::init_params(0, cfg.resolved_net(ds.scene.k));

  RngStream rng = RngStream::derive(0, 1, 0);
  train::GeometrySupervisionBatch geo;
  train::LossBreakdown lb =
      train::coarse_step(params, ds.frames[0].rec, rng, cfg, 1, cfg.lr, &geo);
  REQUIRE(geo.surface_points.rows() > 0);
  CHECK(lb.surface_sdf < 0.05);
}

TEST_CASE("a short coarse run pulls the surface onto the anchors") {
  scene::Dataset ds = tiny_dataset(4, 20, 9);
  train::TrainConfig cfg = tiny_cfg();
  fields::FieldParams params = fields::init_params(7, cfg.resolved_net(ds.scene.k));

  std::vector<std::pair<int, int>> all;
  for (int v = 0; v < 20; ++v)
    for (int u = 0; u < 20; ++u) all.emplace_back(u, v);
  train::GeometrySupervisionBatch probe =
      train::make_geometry_batch(ds.frames[0].rec, all);
  Eigen::VectorXd eps0 = ds.frames[0].rec.eps;

  auto probe_sdf = [&]() {
    render::NeuralEvaluator ne(params, eps0);
    return median_abs(ne.sdf_batch(probe.surface_points));
  };
  double before = probe_sdf();
  for (int t = 0; t < 120; ++t) {
    RngStream rng = RngStream::derive(7, 0x747264, static_cast<uint64_t>(t));
    const scene::FrameRecord& fr = ds.frames[t % ds.frames.size()].rec;
    train::coarse_step(params, fr, rng, cfg, t + 1, cfg.lr);
  }
  double after = probe_sdf();
  CHECK(after < before);
}

TEST_CASE("region weights drift toward a corrupted region") {
  scene::Dataset ds = tiny_dataset(2, 24, 17);
  scene::FrameRecord fr = ds.frames[0].rec;
  for (int v = 0; v < 24; ++v)
    for (int u = 0; u < 24; ++u)
      if (fr.mask.at(u, v) >= 0.5f && fr.region.at(u, v) == 0) {
        float* p = fr.rgb.px(u, v);
        for (int c = 0; c < 3; ++c) p[c] = 1.f - p[c];
      }

  train::TrainConfig cfg = tiny_cfg();
  cfg.rays_per_step = 24;
  cfg.ais_alpha = 0.05;
  fields::FieldParams params = fields::init_params(2, cfg.resolved_net(ds.scene.k));
  sampler::RegionWeights w = sampler::init_weights(4);
  for (int t = 0; t < 80; ++t) {
    RngStream rng = RngStream::derive(17, 0x616973, static_cast<uint64_t>(t));
    train::fine_step(params, fr, w, rng, cfg, t + 1, 1e-4);
  }
  // the two clean bump regions are its symmetric siblings
  CHECK(w.w(0) > w.w(1));
  CHECK(w.w(0) > w.w(2));
}

TEST_CASE("fine stage ignores the depth raster unless supervision is full") {
  scene::Dataset ds = tiny_dataset(2, 20, 5);
  train::TrainConfig cfg = tiny_cfg();
  cfg.rays_per_step = 40;
  fields::FieldParams init = fields::init_params(3, cfg.resolved_net(ds.scene.k));

  scene::FrameRecord pert = ds.frames[0].rec;
  for (int v = 0; v < 20; ++v)
    for (int u = 0; u < 20; ++u)
      if (pert.mask.at(u, v) >= 0.5f) pert.depth.at(u, v) += 0.07f;

  auto run = [&](const scene::FrameRecord& frame, fields::FieldParams& p) {
    sampler::RegionWeights w = sampler::init_weights(4);
    RngStream rng = RngStream::derive(11, 22, 33);
    return train::fine_step(p, frame, w, rng, cfg, 1, 3e-4);
  };
  fields::FieldParams pa = init, pb = init;
  train::LossBreakdown la = run(ds.frames[0].rec, pa);
  train::LossBreakdown lb = run(pert, pb);

  CHECK(la.total == lb.total);
  CHECK(same_weights(pa, pb, true));
  // the guidance still sees the depth mismatch even though the parameters don't
  CHECK((la.region_depth - lb.region_depth).norm() > 0.0);

  cfg.depth_supervision = "full";
  fields::FieldParams pc = init, pd = init;
  train::LossBreakdown lc = run(ds.frames[0].rec, pc);
  train::LossBreakdown ld = run(pert, pd);
  CHECK(lc.total != ld.total);
}

TEST_CASE("train loop checkpoints, resumes bit-for-bit, and guards its config") {
  scene::Dataset ds = tiny_dataset(4, 16, 21);
  train::TrainConfig cfg = tiny_cfg();
  cfg.render.n_coarse = 8;
  cfg.rays_per_step = 8;
  cfg.seed = 21;

  std::string da = "tt_train_a", db = "tt_train_b", dc = "tt_train_c";
  for (const std::string& d : {da, db, dc}) fs::remove_all(d);

  train::TrainResult full = train::train(ds, cfg, da);
  CHECK(full.steps_run == cfg.total_steps());
  CHECK(fs::exists(da + "/checkpoint.bin"));
  CHECK(fs::exists(da + "/losses.csv"));
  CHECK(fs::exists(da + "/sampler.csv"));
  CHECK(fs::exists(da + "/train_summary.json"));

  // interrupted run: stop after 3 steps, then pick the checkpoint back up
  train::TrainResult part = train::train(ds, cfg, db, 3);
  CHECK(part.steps_run == 3);
  fields::CheckpointMeta meta;
  fields::load_checkpoint(db, &meta);
  CHECK(meta.step == 3);
  CHECK(meta.stage == "coarse");
  train::TrainResult rest = train::train(ds, cfg, db);
  CHECK(rest.steps_run == cfg.total_steps() - 3);
  CHECK(same_weights(full.params, rest.params, true));
  CHECK(full.final_loss.total == rest.final_loss.total);
  CHECK((full.weights.w - rest.weights.w).norm() == 0.0);

  // a third call has nothing left to do
  CHECK(train::train(ds, cfg, db).steps_run == 0);

  // same seed reproduces the loss exactly, a different seed does not
  train::TrainResult again = train::train(ds, cfg, dc);
  CHECK(again.final_loss.total == full.final_loss.total);
  train::TrainConfig other = cfg;
  other.seed = 22;
  std::string dd = "tt_train_d";
  fs::remove_all(dd);
  CHECK(train::train(ds, other, dd).final_loss.total != full.final_loss.total);

  // resuming under a different configuration is refused
  train::TrainConfig changed = cfg;
  changed.lambda_rgb = 0.5;
  CHECK_THROWS_WITH_AS(train::train(ds, changed, da),
                       doctest::Contains("config hash mismatch"), std::runtime_error);
}

TEST_CASE("zero-step run writes the untouched initialization") {
  scene::Dataset ds = tiny_dataset(2, 16, 21);
  train::TrainConfig cfg = tiny_cfg();
  cfg.coarse_steps = 0;
  cfg.fine_steps = 0;
  cfg.seed = 5;
  std::string dir = "tt_train_zero";
  fs::remove_all(dir);

  train::TrainResult res = train::train(ds, cfg, dir);
  CHECK(res.steps_run == 0);
  fields::CheckpointMeta meta;
  fields::FieldParams loaded = fields::load_checkpoint(dir, &meta);
  CHECK(meta.step == 0);
  CHECK(meta.stage == "init");
  fields::FieldParams ref = fields::init_params(cfg.seed, cfg.resolved_net(ds.scene.k));
  CHECK(same_weights(loaded, ref));
}

TEST_CASE("uniform pixel fallback leaves the region weights untouched") {
  scene::Dataset ds = tiny_dataset(2, 16, 21);
  train::TrainConfig cfg = tiny_cfg();
  cfg.coarse_steps = 1;
  cfg.fine_steps = 4;
  cfg.rays_per_step = 8;
  cfg.use_ais = false;
  std::string dir = "tt_train_noais";
  fs::remove_all(dir);

  train::TrainResult res = train::train(ds, cfg, dir);
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(4, 0.25);
  CHECK((res.weights.w - uniform).norm() == 0.0);
}
