#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

#include "core/image.h"

namespace sve::scene {

using nlohmann::json;

// One radial bump on the base sphere. The bump raises the surface radius by
//   amp(eps) * exp((dot(dir, p_hat) - 1) / sigma^2)
// where amp(eps) = amps . eps, so each bump responds linearly to the
// expression vector.
struct Bump {
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();  // unit center direction
  double sigma = 0.3;                              // angular width, radians
  Eigen::VectorXd amps;                            // k weights
};

struct SceneDefinition {
  double base_radius = 1.0;
  int k = 4;                 // expression dimension
  std::vector<Bump> bumps;
  Eigen::Vector3d light_dir = Eigen::Vector3d(1, 1, 2).normalized();
  int albedo_id = 0;

  int n_regions() const { return static_cast<int>(bumps.size()) + 1; }
  // conservative max gradient norm of the radial field over the reachable
  // shell, used as the sphere-tracing step divisor
  double lipschitz_bound() const;
};

void to_json(json& j, const SceneDefinition& s);
void from_json(const json& j, SceneDefinition& s);

struct SceneConfig {
  double base_radius = 1.0;
  int k = 4;
  int n_bumps = 3;
  double sigma = 0.3;
  double amp = 0.12;  // per-bump amplitude weight on its driving dim
  int albedo_id = 0;
};

// Builds the default bump layout: bump m sits at azimuth 2*pi*m/M with
// alternating elevation, driven by expression dim (m mod k). Throws if the
// total amplitude could push the surface past half the base radius.
SceneDefinition make_scene(const SceneConfig& cfg);

// Radial field |p| - (r0 + sum_m amp_m(eps) kernel_m(p_hat)). Exact sign and
// zero set; away from the bumps it is the exact sphere distance. Gradient
// norm stays below lipschitz_bound().
double analytic_sdf(const SceneDefinition& s, const Eigen::Vector3d& p,
                    const Eigen::VectorXd& eps);

// Central finite difference of analytic_sdf, normalized. Shading only.
Eigen::Vector3d analytic_normal(const SceneDefinition& s, const Eigen::Vector3d& p,
                                const Eigen::VectorXd& eps, double h = 1e-5);

// Pinhole camera. R columns are (right, down, forward) in world space;
// a pixel (u, v) maps to direction R * ((u+.5-cx)/fx, (v+.5-cy)/fy, 1).
struct CameraModel {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d pos = Eigen::Vector3d(0, 0, 3);
  double fx = 48, fy = 48, cx = 24, cy = 24;
  int width = 48, height = 48;

  Eigen::Vector3d pixel_dir(double u, double v) const;
};

void to_json(json& j, const CameraModel& c);
void from_json(const json& j, CameraModel& c);

// Camera at `distance` from the origin looking at it, parameterized by
// azimuth/elevation; image up tracks world +y.
CameraModel look_at_camera(double azimuth, double elevation, double distance,
                           int width, int height);

// Smooth orbit used by the dataset generator: a gentle azimuth/elevation sweep
// over n frames at fixed distance.
CameraModel orbit_camera(int t, int n_frames, int width, int height,
                         double distance = 3.0);

// Deterministic smooth expression trajectory: dim k is a sum of two seeded
// low-frequency sinusoids over the n frames, clipped to [-1, 1].
Eigen::VectorXd trajectory_eps(uint64_t seed, int k, int t, int n_frames);

struct TraceResult {
  bool hit = false;
  double t = 0;             // ray parameter of the surface crossing
  Eigen::Vector3d point;    // ray origin + t * dir
};

// Sphere-traces the radial field along origin + t*dir. Conservative steps
// (field value over the Lipschitz bound), up to 256 of them; rays that miss
// the bounding sphere or leave it report a miss.
TraceResult trace_ray(const SceneDefinition& s, const Eigen::Vector3d& origin,
                      const Eigen::Vector3d& dir, const Eigen::VectorXd& eps);

// Diffuse shade at a surface point: albedo(p_hat) * (0.35 + 0.65 max(0, n.l)).
Eigen::Vector3d shade(const SceneDefinition& s, const Eigen::Vector3d& p,
                      const Eigen::VectorXd& eps);

constexpr float kBackgroundGray = 0.5f;

struct FrameRecord {
  ImageRGB rgb;
  ImageGray mask;     // 1 on surface, 0 on background
  ImageGray depth;    // ray parameter at the hit, 0 where mask is 0
  ImageLabels region; // nearest-bump label, n_bumps for background
  Eigen::VectorXd eps;
  CameraModel camera;
  int frame_id = 0;
};

// Renders RGB/mask/depth/region at the analytic surface by sphere tracing
// every pixel.
FrameRecord render_ground_truth(const SceneDefinition& s, const CameraModel& cam,
                                const Eigen::VectorXd& eps);

// Region of a surface point: index of the bump whose center direction is
// closest (max dot with p_hat).
int region_of_point(const SceneDefinition& s, const Eigen::Vector3d& p);

}  // namespace sve::scene
