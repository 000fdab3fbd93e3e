#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eval/metrics.h"
#include "fields/net.h"
#include "render/renderer.h"
#include "scene/dataset.h"

namespace sve::eval {

// Renders a frame's predicted RGB; the indirection lets tests feed the
// aggregation a known image and lets evaluate() plug in the learned field.
using FrameRenderFn = std::function<ImageRGB(const scene::FrameRecord&)>;

// Metric aggregation over a set of frames: per-frame mae/psnr/ssim against
// the ground-truth RGB, averaged. masked zeroes both images outside the
// ground-truth mask first (the alternative protocol; default compares the
// full frame, background included).
MetricsReport metrics_over_frames(const std::vector<const scene::FrameRecord*>& frames,
                                  const FrameRenderFn& render, const std::string& split,
                                  bool masked);

// Renders every frame of the chosen split ("train" or "holdout") with the
// learned field at that frame's expression and camera, then aggregates.
// Rejects a checkpoint whose expression dimension disagrees with the dataset.
MetricsReport evaluate(const fields::FieldParams& params, const scene::Dataset& ds,
                       const std::string& split, const render::RenderConfig& rc,
                       uint64_t seed, bool masked = false);

// Drives the trained field with an arbitrary expression sequence from a fixed
// camera: one rendered frame per expression, in order. An expression of the
// wrong length is rejected; an empty sequence yields an empty vector.
std::vector<render::FrameRender> reenact(const fields::FieldParams& params,
                                         const std::vector<Eigen::VectorXd>& eps_seq,
                                         const scene::CameraModel& cam,
                                         const render::RenderConfig& rc, uint64_t seed);

// Mean |analytic sdf| over the vertices of the neutral-expression mesh
// extracted from the learned field at the given grid resolution. A field
// whose zero level set vanished entirely scores the 10.0 sentinel.
double mesh_geometry_error(const fields::FieldParams& params,
                           const scene::SceneDefinition& scene, int grid);

}  // namespace sve::eval
