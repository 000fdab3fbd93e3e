#include "train/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "core/hash.h"
#include "eval/evaluate.h"

namespace sve::train {

namespace fs = std::filesystem;

TrainConfig::TrainConfig() {
  // desk-scale preset: the contract widths are affordable on a GPU, not on
  // one core; these narrow nets hold the toy run to minutes
  net.k = 4;
  net.k_prime = 3;
  net.g_width = 64;
  net.shortcut_width = 64;
  net.deform_width = 64;
  net.sdf_width = 64;
  net.color_width = 64;
}

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0)) throw std::invalid_argument(std::string(what) + " must be >= 0");
  };
  nonneg(lambda_rgb, "lambda_rgb");
  nonneg(lambda_mask, "lambda_mask");
  nonneg(lambda_eik, "lambda_eik");
  nonneg(lambda_depth, "lambda_depth");
  nonneg(lambda_surf, "lambda_surf");
  nonneg(lambda1, "lambda1");
  nonneg(lambda2, "lambda2");
  if (coarse_steps < 0 || fine_steps < 0)
    throw std::invalid_argument("stage step counts must be >= 0");
  if (rays_per_step < 1) throw std::invalid_argument("rays_per_step must be >= 1");
  if (!(lr > 0) || !(lr_final > 0)) throw std::invalid_argument("learning rates must be > 0");
  if (!(ais_alpha > 0) || ais_alpha > 1)
    throw std::invalid_argument("ais_alpha must be in (0, 1]");
  if (depth_supervision != "none" && depth_supervision != "init_only" &&
      depth_supervision != "full")
    throw std::invalid_argument("depth_supervision must be none, init_only, or full");
}

fields::NetConfig TrainConfig::resolved_net(int dataset_k) const {
  fields::NetConfig n = net;
  n.k = dataset_k;
  n.spatial_condition = use_sve;
  n.compress = compress_sve;
  n.k_prime = compress_sve ? std::max(1, std::min(net.k_prime, dataset_k - 1)) : dataset_k;
  n.validate();
  return n;
}

double TrainConfig::lr_at(int step) const {
  int last = std::max(1, total_steps() - 1);
  double f = std::min(1.0, double(step) / last);
  return lr * std::pow(lr_final / lr, f);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"net", c.net},
           {"render", c.render},
           {"coarse_steps", c.coarse_steps},
           {"fine_steps", c.fine_steps},
           {"rays_per_step", c.rays_per_step},
           {"lr", c.lr},
           {"lr_final", c.lr_final},
           {"lambda_rgb", c.lambda_rgb},
           {"lambda_mask", c.lambda_mask},
           {"lambda_eik", c.lambda_eik},
           {"lambda_depth", c.lambda_depth},
           {"lambda_surf", c.lambda_surf},
           {"lambda1", c.lambda1},
           {"lambda2", c.lambda2},
           {"ais_alpha", c.ais_alpha},
           {"use_sve", c.use_sve},
           {"compress_sve", c.compress_sve},
           {"use_ais", c.use_ais},
           {"depth_supervision", c.depth_supervision},
           {"seed", c.seed},
           {"checkpoint_interval", c.checkpoint_interval}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.net = j.contains("net") ? j.at("net").get<fields::NetConfig>() : d.net;
  c.render = j.contains("render") ? j.at("render").get<render::RenderConfig>() : d.render;
  c.coarse_steps = j.value("coarse_steps", d.coarse_steps);
  c.fine_steps = j.value("fine_steps", d.fine_steps);
  c.rays_per_step = j.value("rays_per_step", d.rays_per_step);
  c.lr = j.value("lr", d.lr);
  c.lr_final = j.value("lr_final", d.lr_final);
  c.lambda_rgb = j.value("lambda_rgb", d.lambda_rgb);
  c.lambda_mask = j.value("lambda_mask", d.lambda_mask);
  c.lambda_eik = j.value("lambda_eik", d.lambda_eik);
  c.lambda_depth = j.value("lambda_depth", d.lambda_depth);
  c.lambda_surf = j.value("lambda_surf", d.lambda_surf);
  c.lambda1 = j.value("lambda1", d.lambda1);
  c.lambda2 = j.value("lambda2", d.lambda2);
  c.ais_alpha = j.value("ais_alpha", d.ais_alpha);
  c.use_sve = j.value("use_sve", d.use_sve);
  c.compress_sve = j.value("compress_sve", d.compress_sve);
  c.use_ais = j.value("use_ais", d.use_ais);
  c.depth_supervision = j.value("depth_supervision", d.depth_supervision);
  c.seed = j.value("seed", d.seed);
  c.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
}

std::string train_config_hash(const TrainConfig& c, int dataset_k) {
  json j = c;
  j["net"] = c.resolved_net(dataset_k);
  return content_hash(j.dump());
}

void to_json(json& j, const LossBreakdown& l) {
  j = json{{"total", l.total},           {"rgb", l.rgb},
           {"mask_bce", l.mask_bce},     {"eikonal", l.eikonal},
           {"depth", l.depth},           {"surface_sdf", l.surface_sdf}};
  j["region_render"] = std::vector<double>(l.region_render.begin(), l.region_render.end());
  j["region_depth"] = std::vector<double>(l.region_depth.begin(), l.region_depth.end());
}

namespace {

double bce(double p, double m) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return -(m * std::log(p) + (1.0 - m) * std::log(1.0 - p));
}

std::vector<std::pair<int, int>> uniform_pixels(int width, int height, int n,
                                                RngStream& rng) {
  std::vector<std::pair<int, int>> px;
  px.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    uint32_t idx = rng.uniform_int(static_cast<uint32_t>(width) * height);
    px.emplace_back(static_cast<int>(idx % width), static_cast<int>(idx / width));
  }
  return px;
}

// Bias-corrected adaptive update on every array, in place. Arrays the loss
// never touched decay their moments and keep their weights.
void adam_update(fields::FieldParams& p, ad::Tape<float>& t,
                 const fields::BoundParams<float>& b, int step, double lr) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
  for (auto& arr : p.arrays) {
    const auto& g = t.grad(b.vars.at(arr.name));
    bool has_g = g.size() > 0;
    for (int r = 0; r < arr.rows; ++r)
      for (int c = 0; c < arr.cols; ++c) {
        size_t i = static_cast<size_t>(r) * arr.cols + c;
        double gi = has_g ? double(g(r, c)) : 0.0;
        double m = b1 * arr.adam_m[i] + (1 - b1) * gi;
        double v = b2 * arr.adam_v[i] + (1 - b2) * gi * gi;
        arr.adam_m[i] = static_cast<float>(m);
        arr.adam_v[i] = static_cast<float>(v);
        arr.w[i] -= static_cast<float>(lr * (m / c1) / (std::sqrt(v / c2) + eps));
      }
  }
}

// Builds the float tape for a frozen batch, backpropagates, applies the
// optimizer, and reads the term values back out.
LossBreakdown run_update(fields::FieldParams& params, const RayBatch& batch,
                         GeometrySupervisionBatch* geo, const LossTerms& lw,
                         double bg_color, int adam_step, double lr,
                         Eigen::MatrixXd* rgb_hat, Eigen::VectorXd* mask_hat,
                         Eigen::VectorXd* depth_hat) {
  ad::Tape<float> t;
  fields::BoundParams<float> b = fields::bind_params(t, params, true);
  StepNodes<float> n = build_step_loss(t, b, params.cfg, batch, geo, lw, bg_color);
  t.backward(n.total);
  adam_update(params, t, b, adam_step, lr);

  LossBreakdown out;
  auto val = [&](ad::VarId id) { return id == ad::kNoVar ? 0.0 : double(t.value(id)(0, 0)); };
  out.total = val(n.total);
  out.rgb = val(n.rgb);
  out.mask_bce = val(n.mask_bce);
  out.eikonal = val(n.eikonal);
  out.depth = val(n.depth);
  out.surface_sdf = val(n.surface);
  if (geo != nullptr && n.surface_sdf != ad::kNoVar)
    geo->predicted_surface_sdf = t.value(n.surface_sdf).cast<double>();
  if (rgb_hat != nullptr) *rgb_hat = t.value(n.rgb_hat).cast<double>();
  if (mask_hat != nullptr) *mask_hat = t.value(n.mask_hat).cast<double>();
  if (depth_hat != nullptr) *depth_hat = t.value(n.depth_hat).cast<double>();
  return out;
}

}  // namespace

GuidanceParts guidance_loss(const Eigen::MatrixXd& rgb_hat, const Eigen::VectorXd& mask_hat,
                            const Eigen::VectorXd& depth_hat, const Eigen::MatrixXd& rgb_gt,
                            const Eigen::VectorXd& mask_gt, const Eigen::VectorXd& depth_gt,
                            const Eigen::VectorXi& region, int n_regions) {
  const Eigen::Index R = rgb_hat.rows();
  if (rgb_gt.rows() != R || mask_hat.size() != R || mask_gt.size() != R ||
      depth_hat.size() != R || depth_gt.size() != R || region.size() != R)
    throw std::invalid_argument("guidance batch size mismatch");

  GuidanceParts g;
  g.render = Eigen::VectorXd::Zero(n_regions);
  g.depth = Eigen::VectorXd::Zero(n_regions);
  for (Eigen::Index r = 0; r < R; ++r) {
    int reg = region(r);
    if (reg < 0 || reg >= n_regions)
      throw std::invalid_argument("region label out of range");
    double l1 = (rgb_hat.row(r) - rgb_gt.row(r)).cwiseAbs().mean();
    g.render(reg) += l1 + bce(mask_hat(r), mask_gt(r));
    g.depth(reg) += mask_gt(r) * std::abs(depth_hat(r) - depth_gt(r));
  }
  return g;
}

LossBreakdown coarse_step(fields::FieldParams& params, const scene::FrameRecord& frame,
                          RngStream& rng, const TrainConfig& cfg, int adam_step,
                          double lr, GeometrySupervisionBatch* geo_out) {
  auto pixels = uniform_pixels(frame.rgb.width, frame.rgb.height, cfg.rays_per_step, rng);
  RayBatch batch = freeze_ray_batch(frame, params, pixels, cfg.render, rng);
  if (batch.size() == 0) return {};

  GeometrySupervisionBatch geo = make_geometry_batch(frame, batch.pixels);
  LossTerms lw;
  lw.rgb = cfg.lambda_rgb;
  lw.mask = cfg.lambda_mask;
  lw.eikonal = cfg.lambda_eik;
  if (cfg.depth_supervision != "none") {
    lw.depth = cfg.lambda_depth;
    lw.surface = cfg.lambda_surf;
  }
  LossBreakdown lb = run_update(params, batch, &geo, lw, cfg.render.bg_color, adam_step,
                                lr, nullptr, nullptr, nullptr);
  if (geo_out != nullptr) *geo_out = std::move(geo);
  return lb;
}

LossBreakdown fine_step(fields::FieldParams& params, const scene::FrameRecord& frame,
                        sampler::RegionWeights& weights, RngStream& rng,
                        const TrainConfig& cfg, int adam_step, double lr) {
  const int n_regions = weights.size();
  auto pixels = cfg.use_ais
                    ? sampler::sample_pixels(weights, frame.region, cfg.rays_per_step, rng)
                    : uniform_pixels(frame.rgb.width, frame.rgb.height, cfg.rays_per_step, rng);
  RayBatch batch = freeze_ray_batch(frame, params, pixels, cfg.render, rng);
  if (batch.size() == 0) return {};

  LossTerms lw;
  lw.rgb = cfg.lambda_rgb;
  lw.mask = cfg.lambda_mask;
  lw.eikonal = cfg.lambda_eik;
  lw.depth = cfg.depth_supervision == "full" ? cfg.lambda_depth : 0.0;

  Eigen::MatrixXd rgb_hat;
  Eigen::VectorXd mask_hat, depth_hat;
  LossBreakdown lb = run_update(params, batch, nullptr, lw, cfg.render.bg_color,
                                adam_step, lr, &rgb_hat, &mask_hat, &depth_hat);

  GuidanceParts g = guidance_loss(rgb_hat, mask_hat, depth_hat, batch.target_rgb,
                                  batch.target_mask, batch.target_depth, batch.region,
                                  n_regions);
  lb.region_render = g.render;
  lb.region_depth = g.depth;
  if (cfg.use_ais) {
    Eigen::VectorXd areas = sampler::region_areas(frame.region, n_regions);
    sampler::update_weights(weights, cfg.lambda1 * g.render + cfg.lambda2 * g.depth,
                            areas, cfg.ais_alpha);
  }
  return lb;
}

namespace {

std::string stage_name(int step, const TrainConfig& cfg) {
  if (step == 0) return "init";
  return step <= cfg.coarse_steps ? "coarse" : "fine";
}

void save_state(const std::string& out_dir, const fields::FieldParams& params,
                const sampler::RegionWeights& weights, int step, const TrainConfig& cfg,
                const std::string& hash) {
  fields::CheckpointMeta meta;
  meta.step = step;
  meta.stage = stage_name(step, cfg);
  meta.seed = cfg.seed;
  meta.train_config_hash = hash;
  fields::save_checkpoint(out_dir, params, meta);

  json sj;
  sj["step"] = step;
  sj["w"] = std::vector<double>(weights.w.begin(), weights.w.end());
  std::ofstream f(out_dir + "/sampler_state.json");
  f << sj.dump(2) << "\n";
}

}  // namespace

TrainResult train(const scene::Dataset& ds, const TrainConfig& cfg,
                  const std::string& out_dir, int max_steps) {
  cfg.validate();
  if (ds.train_ids.empty()) throw std::invalid_argument("dataset has no training frames");
  const std::string hash = train_config_hash(cfg, ds.scene.k);
  const int n_regions = static_cast<int>(ds.scene.bumps.size()) + 1;
  fs::create_directories(out_dir);

  fields::FieldParams params;
  sampler::RegionWeights weights = sampler::init_weights(n_regions);
  int start = 0;
  bool resumed = false;
  if (fs::exists(out_dir + "/checkpoint.json")) {
    fields::CheckpointMeta meta;
    params = fields::load_checkpoint(out_dir, &meta);
    if (meta.train_config_hash != hash)
      throw std::runtime_error("config hash mismatch: checkpoint has " +
                               meta.train_config_hash + ", run wants " + hash);
    start = meta.step;
    resumed = true;
    std::ifstream sf(out_dir + "/sampler_state.json");
    if (sf) {
      json sj = json::parse(sf);
      std::vector<double> w = sj.at("w").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != n_regions)
        throw std::runtime_error("sampler state region count mismatch");
      weights.w = Eigen::Map<Eigen::VectorXd>(w.data(), w.size());
    }
  } else {
    params = fields::init_params(cfg.seed, cfg.resolved_net(ds.scene.k));
  }

  auto mode = resumed ? std::ios::app : std::ios::trunc;
  std::ofstream loss_csv(out_dir + "/losses.csv", mode);
  std::ofstream w_csv(out_dir + "/sampler.csv", mode);
  if (!resumed) {
    loss_csv << "step,stage,total,rgb,mask_bce,eikonal,depth,surface_sdf\n";
    w_csv << "step";
    for (int i = 0; i < n_regions; ++i) w_csv << ",w_" << i;
    w_csv << "\n";
  }

  const int total = cfg.total_steps();
  LossBreakdown last;
  int steps_run = 0;
  int reached = start;
  char buf[64];
  for (int t = start; t < total; ++t) {
    if (max_steps >= 0 && steps_run >= max_steps) break;
    bool coarse = t < cfg.coarse_steps;
    RngStream rng_f = RngStream::derive(cfg.seed, 0x66726d65, static_cast<uint64_t>(t));
    int frame_id =
        ds.train_ids[rng_f.uniform_int(static_cast<uint32_t>(ds.train_ids.size()))];
    const scene::FrameRecord& fr = ds.frames[frame_id].rec;
    RngStream rng = RngStream::derive(cfg.seed, coarse ? 0x636f6172 : 0x66696e65,
                                      static_cast<uint64_t>(t));
    double lr = cfg.lr_at(t);
    last = coarse ? coarse_step(params, fr, rng, cfg, t + 1, lr)
                  : fine_step(params, fr, weights, rng, cfg, t + 1, lr);
    ++steps_run;
    reached = t + 1;

    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      loss_csv << buf;
    };
    loss_csv << t << "," << (coarse ? "coarse" : "fine");
    put(last.total);
    put(last.rgb);
    put(last.mask_bce);
    put(last.eikonal);
    put(last.depth);
    put(last.surface_sdf);
    loss_csv << "\n";
    if (!coarse) {
      w_csv << t;
      for (int i = 0; i < n_regions; ++i) {
        std::snprintf(buf, sizeof buf, ",%.10g", weights.w(i));
        w_csv << buf;
      }
      w_csv << "\n";
    }

    if (cfg.checkpoint_interval > 0 && (t + 1) % cfg.checkpoint_interval == 0 &&
        t + 1 < total)
      save_state(out_dir, params, weights, t + 1, cfg, hash);
  }
  save_state(out_dir, params, weights, reached, cfg, hash);

  if (reached == total) {
    json summary;
    summary["steps"] = total;
    summary["final_loss"] = last;
    std::ofstream sf(out_dir + "/train_summary.json");
    sf << summary.dump(2) << "\n";
  }

  TrainResult res;
  res.params = std::move(params);
  res.weights = std::move(weights);
  res.final_loss = last;
  res.steps_run = steps_run;
  return res;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string variant_slug(const std::string& name) {
  std::string s;
  for (char c : name) s += std::isalnum(static_cast<unsigned char>(c)) ? char(std::tolower(c)) : '_';
  return s;
}

}  // namespace

std::vector<AblationRow> run_ablation_suite(const scene::Dataset& ds,
                                            const TrainConfig& base,
                                            const std::string& out_dir,
                                            const std::vector<uint64_t>& seeds) {
  struct Variant {
    const char* name;
    std::function<void(TrainConfig&)> mod;
  };
  const std::vector<Variant> variants = {
      {"full", [](TrainConfig&) {}},
      {"w/o SVE", [](TrainConfig& c) { c.use_sve = false; }},
      {"SVE w/o compression", [](TrainConfig& c) { c.compress_sve = false; }},
      {"w/o DS", [](TrainConfig& c) { c.depth_supervision = "none"; }},
      {"DS-full", [](TrainConfig& c) { c.depth_supervision = "full"; }},
      {"w/o AIS", [](TrainConfig& c) { c.use_ais = false; }},
  };

  fs::create_directories(out_dir);
  std::vector<AblationRow> rows;
  json runs = json::array();
  for (const Variant& v : variants) {
    std::vector<double> l1s, psnrs, ssims, geos;
    for (uint64_t seed : seeds) {
      TrainConfig cfg = base;
      v.mod(cfg);
      cfg.seed = seed;
      std::string dir = out_dir + "/" + variant_slug(v.name) + "_s" + std::to_string(seed);
      TrainResult res = train(ds, cfg, dir);
      eval::MetricsReport rep = eval::evaluate(res.params, ds, "holdout", cfg.render, seed);
      double geo = eval::mesh_geometry_error(res.params, ds.scene, 64);
      l1s.push_back(rep.mae);
      psnrs.push_back(rep.psnr);
      ssims.push_back(rep.ssim);
      geos.push_back(geo);
      json jr;
      jr["variant"] = v.name;
      jr["seed"] = seed;
      jr["metrics"] = rep;
      jr["geo_err"] = geo;
      runs.push_back(jr);
    }
    rows.push_back({v.name, median(l1s), median(psnrs), median(ssims), median(geos)});
  }

  json out;
  out["runs"] = runs;
  out["rows"] = json::array();
  std::ofstream md(out_dir + "/ablation.md");
  md << "| variant | L1 | PSNR | SSIM | geometry |\n|---|---|---|---|---|\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %.4f | %.3f | %.4f | %.5f |\n",
                  r.variant.c_str(), r.l1, r.psnr, r.ssim, r.geo_err);
    md << buf;
    json jr;
    jr["variant"] = r.variant;
    jr["l1"] = r.l1;
    jr["psnr"] = r.psnr;
    jr["ssim"] = r.ssim;
    jr["geo_err"] = r.geo_err;
    out["rows"].push_back(jr);
  }
  std::ofstream jf(out_dir + "/ablation.json");
  jf << out.dump(2) << "\n";
  return rows;
}

}  // namespace sve::train
