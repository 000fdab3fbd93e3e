#include "train/step.h"

namespace sve::train {

RayBatch freeze_ray_batch(const scene::FrameRecord& frame,
                          const fields::FieldParams& params,
                          const std::vector<std::pair<int, int>>& pixels,
                          const render::RenderConfig& rc, RngStream& rng) {
  render::RayBatch rays = render::generate_rays(frame.camera, pixels, rc.bound_radius);
  std::vector<int> keep;
  for (int i = 0; i < rays.size(); ++i)
    if (rays.hits_bound(i)) keep.push_back(i);
  const int R = static_cast<int>(keep.size());

  RayBatch out;
  out.origins.resize(R, 3);
  out.dirs.resize(R, 3);
  out.target_rgb.resize(R, 3);
  out.target_mask.resize(R);
  out.target_depth.resize(R);
  out.region.resize(R);
  out.eps = frame.eps;
  for (int r = 0; r < R; ++r) {
    int i = keep[r];
    out.pixels.push_back(rays.pixels[i]);
    out.origins.row(r) = rays.origins.row(i);
    out.dirs.row(r) = rays.dirs.row(i);
    auto [u, v] = rays.pixels[i];
    const float* px = frame.rgb.px(u, v);
    out.target_rgb.row(r) << px[0], px[1], px[2];
    out.target_mask(r) = frame.mask.at(u, v);
    out.target_depth(r) = frame.depth.at(u, v);
    out.region(r) = frame.region.at(u, v);
  }
  if (R == 0) {
    out.t_end.resize(0, rc.n_coarse + rc.n_importance + 1);
    return out;
  }

  std::vector<Eigen::VectorXd> ts(static_cast<size_t>(R));
  for (int r = 0; r < R; ++r)
    ts[r] = render::sample_along_ray(rays.t_near(keep[r]), rays.t_far(keep[r]),
                                     rc.n_coarse, rng);

  // importance rounds mirror render_pixels: fixed doubling sharpness, sdf
  // evaluated batched across the rays
  render::NeuralEvaluator field(params, frame.eps);
  int per_round = rc.up_rounds > 0 ? rc.n_importance / rc.up_rounds : 0;
  for (int round = 0; round < rc.up_rounds && per_round > 0; ++round) {
    double sharp = 32.0 * (1 << round);
    int m = static_cast<int>(ts[0].size());
    Eigen::MatrixXd pts(R * m, 3);
    for (int r = 0; r < R; ++r)
      for (int i = 0; i < m; ++i)
        pts.row(r * m + i) = out.origins.row(r) + ts[r](i) * out.dirs.row(r);
    Eigen::VectorXd sdf = field.sdf_batch(pts);
    for (int r = 0; r < R; ++r)
      ts[r] = render::importance_resample(ts[r], sdf.segment(r * m, m), per_round,
                                          sharp, rng);
  }

  out.t_end.resize(R, ts[0].size());
  for (int r = 0; r < R; ++r) out.t_end.row(r) = ts[r].transpose();
  return out;
}

GeometrySupervisionBatch make_geometry_batch(const scene::FrameRecord& frame,
                                             const std::vector<std::pair<int, int>>& pixels) {
  GeometrySupervisionBatch geo;
  for (auto [u, v] : pixels)
    if (frame.mask.at(u, v) >= 0.5f) geo.pixels.emplace_back(u, v);
  const int F = static_cast<int>(geo.pixels.size());
  geo.surface_points.resize(F, 3);
  geo.target_depths.resize(F);
  for (int i = 0; i < F; ++i) {
    auto [u, v] = geo.pixels[i];
    double depth = frame.depth.at(u, v);
    geo.surface_points.row(i) =
        (frame.camera.pos + depth * frame.camera.pixel_dir(u, v)).transpose();
    geo.target_depths(i) = depth;
  }
  return geo;
}

}  // namespace sve::train
