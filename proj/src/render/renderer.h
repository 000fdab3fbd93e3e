#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "core/image.h"
#include "core/rng.h"
#include "fields/net.h"
#include "scene/scene.h"

namespace sve::render {

struct RenderConfig {
  int n_coarse = 48;       // stratified intervals per ray
  int n_importance = 32;   // intervals added by importance resampling
  int up_rounds = 1;       // resampling rounds, n_importance split evenly
  double bound_radius = 1.55;  // scene bounding sphere for the t range
  double bg_color = 0.5;
};

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);

// One ray per row; rays whose t range is empty miss the bounding sphere.
struct RayBatch {
  Eigen::MatrixXd origins;  // N x 3
  Eigen::MatrixXd dirs;     // N x 3, unit
  Eigen::VectorXd t_near, t_far;
  std::vector<std::pair<int, int>> pixels;  // (u, v) the ray came from

  int size() const { return static_cast<int>(origins.rows()); }
  bool hits_bound(int i) const { return t_far(i) > t_near(i); }
};

RayBatch generate_rays(const scene::CameraModel& cam,
                       const std::vector<std::pair<int, int>>& pixels,
                       double bound_radius);

// Sorted interval endpoints for one ray: n+1 values for n intervals,
// stratified within equal bins (deterministic midpoints under a midpoint-mode
// stream).
Eigen::VectorXd sample_along_ray(double t_near, double t_far, int n, RngStream& rng);

// One importance round: alphas from the current endpoint SDF values at the
// given sharpness drive a piecewise-constant pdf over intervals; n_add new
// endpoints are drawn from it and merged in sorted order.
Eigen::VectorXd importance_resample(const Eigen::VectorXd& t,
                                    const Eigen::VectorXd& sdf_vals, int n_add,
                                    double sharpness, RngStream& rng);

// Opacity of each interval from SDF at its endpoints:
//   alpha_i = clamp((Phi(s f_i) - Phi(s f_{i+1})) / Phi(s f_i), 0, 1)
// with Phi the logistic cdf, evaluated in the overflow-safe softplus form.
Eigen::VectorXd sdf_to_alphas(const Eigen::VectorXd& sdf_endpoints, double sharpness);

// Front-to-back compositing weights w_i = alpha_i prod_{j<i} (1 - alpha_j).
Eigen::VectorXd alphas_to_weights(const Eigen::VectorXd& alphas);

struct CompositeOut {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  double depth = 0;  // weight-averaged midpoint t, 0 when nothing is hit
  double mask = 0;   // raw weight sum
};

CompositeOut composite(const Eigen::VectorXd& alphas, const Eigen::MatrixXd& colors,
                       const Eigen::VectorXd& t_mid, double bg_color);

// Batched field access used by the renderer; implementations bind their own
// conditioning (expression vector).
class FieldEvaluator {
 public:
  virtual ~FieldEvaluator() = default;
  virtual Eigen::VectorXd sdf_batch(const Eigen::MatrixXd& pts) = 0;
  virtual Eigen::MatrixXd color_batch(const Eigen::MatrixXd& pts,
                                      const Eigen::MatrixXd& dirs) = 0;
  // full observation-space SDF gradient, for normal rendering
  virtual Eigen::MatrixXd gradient_batch(const Eigen::MatrixXd& pts) = 0;
  virtual double sharpness() const = 0;
};

// Learned field behind the evaluator interface. Forward passes run in float
// and are chunked to keep tapes small.
class NeuralEvaluator : public FieldEvaluator {
 public:
  NeuralEvaluator(const fields::FieldParams& params, Eigen::VectorXd eps);
  Eigen::VectorXd sdf_batch(const Eigen::MatrixXd& pts) override;
  Eigen::MatrixXd color_batch(const Eigen::MatrixXd& pts,
                              const Eigen::MatrixXd& dirs) override;
  Eigen::MatrixXd gradient_batch(const Eigen::MatrixXd& pts) override;
  double sharpness() const override;

 private:
  const fields::FieldParams& params_;
  Eigen::VectorXd eps_;
};

// Ground-truth field behind the same interface, for renderer equivalence
// checks and sanity renders.
class AnalyticEvaluator : public FieldEvaluator {
 public:
  AnalyticEvaluator(const scene::SceneDefinition& scene, Eigen::VectorXd eps,
                    double sharpness = 400.0);
  Eigen::VectorXd sdf_batch(const Eigen::MatrixXd& pts) override;
  Eigen::MatrixXd color_batch(const Eigen::MatrixXd& pts,
                              const Eigen::MatrixXd& dirs) override;
  Eigen::MatrixXd gradient_batch(const Eigen::MatrixXd& pts) override;
  double sharpness() const override;

 private:
  scene::SceneDefinition scene_;
  Eigen::VectorXd eps_;
  double sharpness_;
};

struct PixelRender {
  Eigen::MatrixXd rgb;     // N x 3
  Eigen::VectorXd depth;   // N
  Eigen::VectorXd mask;    // N
  Eigen::MatrixXd normal;  // N x 3, filled when requested (unit or zero)
};

// Volume-renders the listed pixels: stratified endpoints, importance rounds
// at fixed doubling sharpness, SDF at endpoints, colors at interval
// midpoints, front-to-back compositing over the background color.
PixelRender render_pixels(FieldEvaluator& field, const scene::CameraModel& cam,
                          const std::vector<std::pair<int, int>>& pixels,
                          const RenderConfig& cfg, RngStream& rng,
                          bool want_normals = false);

struct FrameRender {
  ImageRGB rgb;
  ImageGray depth;
  ImageGray mask;
  ImageRGB normal;  // gradient mapped to [0,1] as n/2 + 0.5
};

// Whole-frame convenience wrapper around render_pixels.
FrameRender render_frame(FieldEvaluator& field, const scene::CameraModel& cam,
                         const RenderConfig& cfg, RngStream& rng,
                         bool want_normals = false);

}  // namespace sve::render
