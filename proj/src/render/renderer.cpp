#include "render/renderer.h"

#include <algorithm>
#include <cmath>

#include "ad/tape.h"
#include "fields/graph.h"

namespace sve::render {

void to_json(nlohmann::json& j, const RenderConfig& c) {
  j = nlohmann::json{{"n_coarse", c.n_coarse},
                     {"n_importance", c.n_importance},
                     {"up_rounds", c.up_rounds},
                     {"bound_radius", c.bound_radius},
                     {"bg_color", c.bg_color}};
}

void from_json(const nlohmann::json& j, RenderConfig& c) {
  RenderConfig d;
  c.n_coarse = j.value("n_coarse", d.n_coarse);
  c.n_importance = j.value("n_importance", d.n_importance);
  c.up_rounds = j.value("up_rounds", d.up_rounds);
  c.bound_radius = j.value("bound_radius", d.bound_radius);
  c.bg_color = j.value("bg_color", d.bg_color);
}

RayBatch generate_rays(const scene::CameraModel& cam,
                       const std::vector<std::pair<int, int>>& pixels,
                       double bound_radius) {
  int n = static_cast<int>(pixels.size());
  RayBatch rb;
  rb.origins.resize(n, 3);
  rb.dirs.resize(n, 3);
  rb.t_near.resize(n);
  rb.t_far.resize(n);
  rb.pixels = pixels;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d d = cam.pixel_dir(pixels[i].first, pixels[i].second);
    rb.origins.row(i) = cam.pos.transpose();
    rb.dirs.row(i) = d.transpose();
    double b = cam.pos.dot(d);
    double c = cam.pos.squaredNorm() - bound_radius * bound_radius;
    double disc = b * b - c;
    if (disc <= 0) {
      rb.t_near(i) = rb.t_far(i) = 0;  // misses the bound entirely
    } else {
      rb.t_near(i) = std::max(0.0, -b - std::sqrt(disc));
      rb.t_far(i) = -b + std::sqrt(disc);
    }
  }
  return rb;
}

Eigen::VectorXd sample_along_ray(double t_near, double t_far, int n, RngStream& rng) {
  if (n < 1 || t_far <= t_near) throw std::invalid_argument("bad sample range");
  Eigen::VectorXd t(n + 1);
  double w = (t_far - t_near) / (n + 1);
  for (int i = 0; i <= n; ++i) t(i) = t_near + (i + rng.uniform()) * w;
  return t;
}

Eigen::VectorXd sdf_to_alphas(const Eigen::VectorXd& f, double s) {
  int n = static_cast<int>(f.size()) - 1;
  Eigen::VectorXd alphas(n);
  for (int i = 0; i < n; ++i) {
    double a = ad::softplus_stable(-s * f(i), 1.0);
    double b = ad::softplus_stable(-s * f(i + 1), 1.0);
    alphas(i) = std::clamp(1.0 - std::exp(std::min(a - b, 30.0)), 0.0, 1.0);
  }
  return alphas;
}

Eigen::VectorXd alphas_to_weights(const Eigen::VectorXd& alphas) {
  Eigen::VectorXd w(alphas.size());
  double trans = 1.0;
  for (int i = 0; i < alphas.size(); ++i) {
    w(i) = alphas(i) * trans;
    trans *= 1.0 - alphas(i);
  }
  return w;
}

Eigen::VectorXd importance_resample(const Eigen::VectorXd& t,
                                    const Eigen::VectorXd& sdf_vals, int n_add,
                                    double sharpness, RngStream& rng) {
  int n = static_cast<int>(t.size()) - 1;
  Eigen::VectorXd w = alphas_to_weights(sdf_to_alphas(sdf_vals, sharpness));
  Eigen::VectorXd cdf(n);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += w(i);
    cdf(i) = acc;
  }
  Eigen::VectorXd added(n_add);
  for (int k = 0; k < n_add; ++k) {
    double u = rng.uniform();
    if (acc < 1e-12) {
      // nothing near the surface yet: spread over the whole range
      added(k) = t(0) + u * (t(n) - t(0));
      continue;
    }
    double target = u * acc;
    int i = static_cast<int>(
        std::lower_bound(cdf.data(), cdf.data() + n, target) - cdf.data());
    i = std::min(i, n - 1);
    double lo = i > 0 ? cdf(i - 1) : 0.0;
    double frac = w(i) > 0 ? (target - lo) / w(i) : 0.5;
    added(k) = t(i) + frac * (t(i + 1) - t(i));
  }
  Eigen::VectorXd merged(t.size() + n_add);
  merged << t, added;
  std::sort(merged.data(), merged.data() + merged.size());
  return merged;
}

CompositeOut composite(const Eigen::VectorXd& alphas, const Eigen::MatrixXd& colors,
                       const Eigen::VectorXd& t_mid, double bg_color) {
  Eigen::VectorXd w = alphas_to_weights(alphas);
  CompositeOut out;
  double wsum = w.sum();
  out.rgb = (colors.transpose() * w) + (1.0 - wsum) * Eigen::Vector3d::Constant(bg_color);
  out.depth = w.dot(t_mid) / std::max(wsum, 1e-8);
  out.mask = wsum;
  return out;
}

// --- evaluators -------------------------------------------------------------

namespace {

constexpr int kChunk = 16384;  // points per forward tape

Eigen::MatrixXf to_f(const Eigen::MatrixXd& m) { return m.cast<float>(); }

}  // namespace

NeuralEvaluator::NeuralEvaluator(const fields::FieldParams& params, Eigen::VectorXd eps)
    : params_(params), eps_(std::move(eps)) {}

double NeuralEvaluator::sharpness() const { return params_.inv_std(); }

Eigen::VectorXd NeuralEvaluator::sdf_batch(const Eigen::MatrixXd& pts) {
  Eigen::VectorXd out(pts.rows());
  Eigen::MatrixXf eps_row = eps_.transpose().cast<float>();
  for (Eigen::Index start = 0; start < pts.rows(); start += kChunk) {
    Eigen::Index len = std::min<Eigen::Index>(kChunk, pts.rows() - start);
    ad::TapeF t;
    auto b = fields::bind_params(t, params_, false);
    auto e = fields::eval_field_graph(t, b, params_.cfg,
                                      t.input(to_f(pts.middleRows(start, len))),
                                      t.input(eps_row), ad::kNoVar, false, false);
    out.segment(start, len) = t.value(e.sdf.sdf).col(0).cast<double>();
  }
  return out;
}

Eigen::MatrixXd NeuralEvaluator::color_batch(const Eigen::MatrixXd& pts,
                                             const Eigen::MatrixXd& dirs) {
  Eigen::MatrixXd out(pts.rows(), 3);
  Eigen::MatrixXf eps_row = eps_.transpose().cast<float>();
  for (Eigen::Index start = 0; start < pts.rows(); start += kChunk) {
    Eigen::Index len = std::min<Eigen::Index>(kChunk, pts.rows() - start);
    ad::TapeF t;
    auto b = fields::bind_params(t, params_, false);
    auto e = fields::eval_field_graph(t, b, params_.cfg,
                                      t.input(to_f(pts.middleRows(start, len))),
                                      t.input(eps_row),
                                      t.input(to_f(dirs.middleRows(start, len))),
                                      false, true);
    out.middleRows(start, len) = t.value(e.color).cast<double>();
  }
  return out;
}

Eigen::MatrixXd NeuralEvaluator::gradient_batch(const Eigen::MatrixXd& pts) {
  Eigen::MatrixXd out(pts.rows(), 3);
  Eigen::MatrixXf eps_row = eps_.transpose().cast<float>();
  for (Eigen::Index start = 0; start < pts.rows(); start += kChunk) {
    Eigen::Index len = std::min<Eigen::Index>(kChunk, pts.rows() - start);
    ad::TapeF t;
    auto b = fields::bind_params(t, params_, false);
    // the observation point is the one differentiated leaf, so one backward
    // sweep returns d sdf / d p_o for every row at once
    ad::VarId p_var = t.param(to_f(pts.middleRows(start, len)));
    auto e = fields::eval_field_graph(t, b, params_.cfg, p_var, t.input(eps_row),
                                      ad::kNoVar, false, false);
    t.backward(t.sum(e.sdf.sdf));
    out.middleRows(start, len) = t.grad(p_var).cast<double>();
  }
  return out;
}

AnalyticEvaluator::AnalyticEvaluator(const scene::SceneDefinition& scene,
                                     Eigen::VectorXd eps, double sharpness)
    : scene_(scene), eps_(std::move(eps)), sharpness_(sharpness) {}

double AnalyticEvaluator::sharpness() const { return sharpness_; }

Eigen::VectorXd AnalyticEvaluator::sdf_batch(const Eigen::MatrixXd& pts) {
  Eigen::VectorXd out(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    out(i) = scene::analytic_sdf(scene_, pts.row(i), eps_);
  return out;
}

Eigen::MatrixXd AnalyticEvaluator::color_batch(const Eigen::MatrixXd& pts,
                                               const Eigen::MatrixXd&) {
  Eigen::MatrixXd out(pts.rows(), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    out.row(i) = scene::shade(scene_, pts.row(i), eps_).transpose();
  return out;
}

Eigen::MatrixXd AnalyticEvaluator::gradient_batch(const Eigen::MatrixXd& pts) {
  Eigen::MatrixXd out(pts.rows(), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    out.row(i) = scene::analytic_normal(scene_, pts.row(i), eps_).transpose();
  return out;
}

// --- full pixel rendering ---------------------------------------------------

PixelRender render_pixels(FieldEvaluator& field, const scene::CameraModel& cam,
                          const std::vector<std::pair<int, int>>& pixels,
                          const RenderConfig& cfg, RngStream& rng, bool want_normals) {
  RayBatch rays = generate_rays(cam, pixels, cfg.bound_radius);
  int n_rays = rays.size();

  PixelRender out;
  out.rgb = Eigen::MatrixXd::Constant(n_rays, 3, cfg.bg_color);
  out.depth = Eigen::VectorXd::Zero(n_rays);
  out.mask = Eigen::VectorXd::Zero(n_rays);
  out.normal = Eigen::MatrixXd::Zero(n_rays, 3);

  std::vector<int> live;
  for (int i = 0; i < n_rays; ++i)
    if (rays.hits_bound(i)) live.push_back(i);
  if (live.empty()) return out;

  // stratified endpoints, then their SDF values in one batch
  std::vector<Eigen::VectorXd> ts(live.size()), vals(live.size());
  for (size_t r = 0; r < live.size(); ++r)
    ts[r] = sample_along_ray(rays.t_near(live[r]), rays.t_far(live[r]), cfg.n_coarse, rng);

  auto eval_sdf_all = [&](const std::vector<Eigen::VectorXd>& query,
                          std::vector<Eigen::VectorXd>& result) {
    Eigen::Index total = 0;
    for (const auto& q : query) total += q.size();
    Eigen::MatrixXd pts(total, 3);
    Eigen::Index at = 0;
    for (size_t r = 0; r < query.size(); ++r) {
      int i = live[r];
      for (Eigen::Index j = 0; j < query[r].size(); ++j)
        pts.row(at++) = rays.origins.row(i) + query[r](j) * rays.dirs.row(i);
    }
    Eigen::VectorXd v = field.sdf_batch(pts);
    at = 0;
    result.resize(query.size());
    for (size_t r = 0; r < query.size(); ++r) {
      result[r] = v.segment(at, query[r].size());
      at += query[r].size();
    }
  };
  eval_sdf_all(ts, vals);

  // importance rounds at fixed doubling sharpness
  int per_round = cfg.up_rounds > 0 ? cfg.n_importance / cfg.up_rounds : 0;
  for (int round = 0; round < cfg.up_rounds && per_round > 0; ++round) {
    double sharp = 32.0 * (1 << round);
    std::vector<Eigen::VectorXd> added(live.size());
    for (size_t r = 0; r < live.size(); ++r) {
      Eigen::VectorXd merged = importance_resample(ts[r], vals[r], per_round, sharp, rng);
      // separate the new endpoints to evaluate only them
      Eigen::VectorXd fresh(per_round);
      std::set_difference(merged.data(), merged.data() + merged.size(), ts[r].data(),
                          ts[r].data() + ts[r].size(), fresh.data());
      added[r] = fresh;
      ts[r] = merged;
    }
    std::vector<Eigen::VectorXd> added_vals;
    eval_sdf_all(added, added_vals);
    for (size_t r = 0; r < live.size(); ++r) {
      // merge values in the endpoint order
      Eigen::VectorXd v(ts[r].size());
      Eigen::Index ia = 0, ib = 0;
      Eigen::VectorXd old_t(ts[r].size() - per_round);
      std::set_difference(ts[r].data(), ts[r].data() + ts[r].size(), added[r].data(),
                          added[r].data() + added[r].size(), old_t.data());
      for (Eigen::Index j = 0; j < ts[r].size(); ++j) {
        if (ia < old_t.size() && ts[r](j) == old_t(ia))
          v(j) = vals[r](ia++);
        else
          v(j) = added_vals[r](ib++);
      }
      vals[r] = v;
    }
  }

  // final shading pass at interval midpoints
  Eigen::Index total_mid = 0;
  for (const auto& t : ts) total_mid += t.size() - 1;
  Eigen::MatrixXd mid_pts(total_mid, 3), mid_dirs(total_mid, 3);
  Eigen::Index at = 0;
  for (size_t r = 0; r < live.size(); ++r) {
    int i = live[r];
    for (Eigen::Index j = 0; j + 1 < ts[r].size(); ++j) {
      double tm = 0.5 * (ts[r](j) + ts[r](j + 1));
      mid_pts.row(at) = rays.origins.row(i) + tm * rays.dirs.row(i);
      mid_dirs.row(at) = rays.dirs.row(i);
      ++at;
    }
  }
  Eigen::MatrixXd colors = field.color_batch(mid_pts, mid_dirs);
  Eigen::MatrixXd grads;
  if (want_normals) grads = field.gradient_batch(mid_pts);

  double s = field.sharpness();
  at = 0;
  for (size_t r = 0; r < live.size(); ++r) {
    int i = live[r];
    Eigen::Index n_int = ts[r].size() - 1;
    Eigen::VectorXd t_mid(n_int);
    for (Eigen::Index j = 0; j < n_int; ++j) t_mid(j) = 0.5 * (ts[r](j) + ts[r](j + 1));
    Eigen::VectorXd alphas = sdf_to_alphas(vals[r], s);
    CompositeOut c = composite(alphas, colors.middleRows(at, n_int), t_mid, cfg.bg_color);
    out.rgb.row(i) = c.rgb.transpose();
    out.depth(i) = c.depth;
    out.mask(i) = c.mask;
    if (want_normals) {
      Eigen::VectorXd w = alphas_to_weights(alphas);
      Eigen::Vector3d nrm = grads.middleRows(at, n_int).transpose() * w;
      double len = nrm.norm();
      if (len > 1e-9) out.normal.row(i) = (nrm / len).transpose();
    }
    at += n_int;
  }
  return out;
}

FrameRender render_frame(FieldEvaluator& field, const scene::CameraModel& cam,
                         const RenderConfig& cfg, RngStream& rng, bool want_normals) {
  std::vector<std::pair<int, int>> pixels;
  pixels.reserve(static_cast<size_t>(cam.width) * cam.height);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) pixels.emplace_back(u, v);
  PixelRender pr = render_pixels(field, cam, pixels, cfg, rng, want_normals);

  FrameRender fr;
  fr.rgb = ImageRGB(cam.width, cam.height);
  fr.depth = ImageGray(cam.width, cam.height);
  fr.mask = ImageGray(cam.width, cam.height);
  fr.normal = ImageRGB(cam.width, cam.height, 0.5f);
  for (size_t i = 0; i < pixels.size(); ++i) {
    auto [u, v] = pixels[i];
    float* px = fr.rgb.px(u, v);
    px[0] = static_cast<float>(pr.rgb(i, 0));
    px[1] = static_cast<float>(pr.rgb(i, 1));
    px[2] = static_cast<float>(pr.rgb(i, 2));
    fr.depth.at(u, v) = static_cast<float>(pr.depth(i));
    fr.mask.at(u, v) = static_cast<float>(pr.mask(i));
    if (want_normals) {
      float* np = fr.normal.px(u, v);
      np[0] = static_cast<float>(pr.normal(i, 0) / 2 + 0.5);
      np[1] = static_cast<float>(pr.normal(i, 1) / 2 + 0.5);
      np[2] = static_cast<float>(pr.normal(i, 2) / 2 + 0.5);
    }
  }
  return fr;
}

}  // namespace sve::render
