#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ad/tape.h"
#include "core/rng.h"
#include "fields/graph.h"
#include "fields/net.h"
#include "render/renderer.h"
#include "scene/scene.h"

// One optimization step splits into a sampling phase and a loss phase. The
// sampling phase picks pixels and interval endpoints with the current
// parameters but outside any tape; its decisions are frozen into a RayBatch.
// Given a frozen batch the loss below is a smooth function of the parameters,
// which is what lets finite differences validate the training gradients.

namespace sve::train {

// Rays kept for one step: pixels whose rays cross the scene bound, with
// sampled endpoints and the frame's targets gathered per ray.
struct RayBatch {
  std::vector<std::pair<int, int>> pixels;
  Eigen::MatrixXd origins, dirs;  // R x 3
  Eigen::MatrixXd t_end;          // R x (n+1), sorted endpoint distances
  Eigen::MatrixXd target_rgb;    // R x 3
  Eigen::VectorXd target_mask, target_depth;
  Eigen::VectorXi region;
  Eigen::VectorXd eps;

  int size() const { return static_cast<int>(origins.rows()); }
  int n_intervals() const { return static_cast<int>(t_end.cols()) - 1; }
};

// Stratified endpoints plus the renderer's fixed-sharpness importance rounds,
// all forward-only. Pixels whose rays miss the bound are dropped; they render
// pure background regardless of the parameters.
RayBatch freeze_ray_batch(const scene::FrameRecord& frame,
                          const fields::FieldParams& params,
                          const std::vector<std::pair<int, int>>& pixels,
                          const render::RenderConfig& rc, RngStream& rng);

// Surface anchors of the coarse stage: every sampled pixel with mask 1 is
// unprojected through its ray to the recorded depth, exactly o + depth * d.
struct GeometrySupervisionBatch {
  std::vector<std::pair<int, int>> pixels;
  Eigen::MatrixXd surface_points;  // F x 3
  Eigen::VectorXd target_depths;
  Eigen::VectorXd predicted_surface_sdf;  // filled by the step that consumed the batch
};

GeometrySupervisionBatch make_geometry_batch(const scene::FrameRecord& frame,
                                             const std::vector<std::pair<int, int>>& pixels);

// Per-term weights; a zero weight leaves the term out of the graph entirely.
struct LossTerms {
  double rgb = 1.0;
  double mask = 0.1;
  double eikonal = 0.1;
  double depth = 0.0;
  double surface = 0.0;
};

template <typename S>
struct StepNodes {
  ad::VarId total = ad::kNoVar;
  ad::VarId rgb = ad::kNoVar, mask_bce = ad::kNoVar, eikonal = ad::kNoVar;
  ad::VarId depth = ad::kNoVar, surface = ad::kNoVar;
  ad::VarId rgb_hat = ad::kNoVar, mask_hat = ad::kNoVar, depth_hat = ad::kNoVar;
  ad::VarId surface_sdf = ad::kNoVar;
};

// The differentiable half of a step: field evaluations at the frozen
// endpoints and midpoints, opacity from endpoint SDF pairs, front-to-back
// compositing over the background, and the weighted loss terms.
template <typename S>
StepNodes<S> build_step_loss(ad::Tape<S>& t, const fields::BoundParams<S>& b,
                             const fields::NetConfig& cfg, const RayBatch& batch,
                             const GeometrySupervisionBatch* geo, const LossTerms& lw,
                             double bg_color) {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  const int R = batch.size(), n = batch.n_intervals();
  if (R == 0) throw std::invalid_argument("empty ray batch");

  Mat pts_end(R * (n + 1), 3), pts_mid(R * n, 3), dirs_mid(R * n, 3);
  Mat tmid_flat(R * n, 1);
  for (int r = 0; r < R; ++r) {
    Eigen::RowVector3d o = batch.origins.row(r), d = batch.dirs.row(r);
    for (int i = 0; i <= n; ++i)
      pts_end.row(r * (n + 1) + i) = (o + batch.t_end(r, i) * d).template cast<S>();
    for (int i = 0; i < n; ++i) {
      double tm = 0.5 * (batch.t_end(r, i) + batch.t_end(r, i + 1));
      tmid_flat(r * n + i, 0) = S(tm);
      pts_mid.row(r * n + i) = (o + tm * d).template cast<S>();
      dirs_mid.row(r * n + i) = d.template cast<S>();
    }
  }

  Eigen::Matrix<S, 1, Eigen::Dynamic> eps_row = batch.eps.transpose().template cast<S>();
  ad::VarId id_eps = t.input(eps_row);
  ad::VarId id_end = t.input(pts_end);
  ad::VarId id_mid = t.input(pts_mid);
  ad::VarId id_dirs = t.input(dirs_mid);

  fields::FieldEval<S> fe_end =
      fields::eval_field_graph(t, b, cfg, id_end, id_eps, ad::kNoVar, false, false);
  fields::FieldEval<S> fe_mid =
      fields::eval_field_graph(t, b, cfg, id_mid, id_eps, id_dirs, lw.eikonal > 0, true);

  // interval opacity from the endpoint SDF pair at the learned sharpness:
  // alpha = 1 - exp(softplus(-s f_i) - softplus(-s f_{i+1})), clamped to [0,1]
  ad::VarId f = t.reshape_rm(fe_end.sdf.sdf, R, n + 1);
  ad::VarId s = fields::inv_std_node(t, b);
  ad::VarId a_prev = t.softplus(t.neg(t.mul_scalar_var(t.slice_cols(f, 0, n), s)), S(1));
  ad::VarId a_next = t.softplus(t.neg(t.mul_scalar_var(t.slice_cols(f, 1, n), s)), S(1));
  ad::VarId dlog = t.clamp(t.sub(a_prev, a_next), S(-70), S(30));
  ad::VarId alphas = t.clamp(t.neg(t.add_const(t.exp(dlog), S(-1))), S(0), S(1));
  ad::VarId w = t.transmittance_weights(alphas);
  ad::VarId wsum = t.sum_cols(w);

  StepNodes<S> out;
  ad::VarId bg_term = t.scale(t.add_const(t.neg(wsum), S(1)), S(bg_color));
  out.rgb_hat = t.add(t.composite(w, fe_mid.color), t.col_broadcast(bg_term, 3));
  out.mask_hat = wsum;
  out.depth_hat =
      t.div(t.composite(w, t.input(tmid_flat)), t.clamp(wsum, S(1e-8), S(1e8)));

  Mat mask_t = batch.target_mask.template cast<S>();
  ad::VarId id_rgb_t = t.input(batch.target_rgb.template cast<S>());
  ad::VarId id_mask_t = t.input(mask_t);

  out.rgb = t.mean(t.abs(t.sub(out.rgb_hat, id_rgb_t)));

  ad::VarId p = t.clamp(out.mask_hat, S(1e-6), S(1) - S(1e-6));
  ad::VarId hit_term = t.mul(id_mask_t, t.log(p));
  ad::VarId miss_t = t.input(Mat(Mat::Ones(R, 1) - mask_t));
  ad::VarId miss_term = t.mul(miss_t, t.log(t.add_const(t.neg(p), S(1))));
  out.mask_bce = t.neg(t.mean(t.add(hit_term, miss_term)));

  if (lw.eikonal > 0) {
    ad::VarId rn = t.rownorm_eps(fe_mid.sdf.grad_pc, S(1e-12));
    out.eikonal = t.mean(t.square(t.add_const(rn, S(-1))));
  }
  if (lw.depth > 0) {
    ad::VarId id_depth_t = t.input(Mat(batch.target_depth.template cast<S>()));
    out.depth = t.mean(t.mul(id_mask_t, t.abs(t.sub(out.depth_hat, id_depth_t))));
  }
  if (lw.surface > 0 && geo != nullptr && geo->surface_points.rows() > 0) {
    ad::VarId id_gp = t.input(Mat(geo->surface_points.template cast<S>()));
    fields::FieldEval<S> fe_geo =
        fields::eval_field_graph(t, b, cfg, id_gp, id_eps, ad::kNoVar, false, false);
    out.surface_sdf = fe_geo.sdf.sdf;
    out.surface = t.mean(t.abs(out.surface_sdf));
  }

  ad::VarId total = t.scale(out.rgb, S(lw.rgb));
  total = t.add(total, t.scale(out.mask_bce, S(lw.mask)));
  if (out.eikonal != ad::kNoVar) total = t.add(total, t.scale(out.eikonal, S(lw.eikonal)));
  if (out.depth != ad::kNoVar) total = t.add(total, t.scale(out.depth, S(lw.depth)));
  if (out.surface != ad::kNoVar) total = t.add(total, t.scale(out.surface, S(lw.surface)));
  out.total = total;
  return out;
}

}  // namespace sve::train
