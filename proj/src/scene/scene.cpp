#include "scene/scene.h"

#include <cmath>
#include <stdexcept>

#include "core/rng.h"

namespace sve::scene {

namespace {

double total_amplitude(const SceneDefinition& s) {
  double total = 0;
  for (const auto& b : s.bumps) total += b.amps.cwiseAbs().sum();
  return total;
}

Eigen::Vector3d dir_from_angles(double azimuth, double elevation) {
  return {std::cos(elevation) * std::sin(azimuth), std::sin(elevation),
          std::cos(elevation) * std::cos(azimuth)};
}

}  // namespace

double SceneDefinition::lipschitz_bound() const {
  double sigma_min = 1.0;
  for (const auto& b : bumps) sigma_min = std::min(sigma_min, b.sigma);
  // kernel slope per unit amplitude peaks at exp(-1/2)/sigma; the angular
  // gradient picks up 1/|p| <= 2/r0 on the reachable shell
  return 1.0 + (0.61 / sigma_min) * total_amplitude(*this) * (2.0 / base_radius);
}

void to_json(json& j, const SceneDefinition& s) {
  json bumps = json::array();
  for (const auto& b : s.bumps) {
    bumps.push_back({{"dir", {b.dir.x(), b.dir.y(), b.dir.z()}},
                     {"sigma", b.sigma},
                     {"amps", std::vector<double>(b.amps.begin(), b.amps.end())}});
  }
  j = {{"base_radius", s.base_radius},
       {"k", s.k},
       {"bumps", bumps},
       {"light_dir", {s.light_dir.x(), s.light_dir.y(), s.light_dir.z()}},
       {"albedo_id", s.albedo_id}};
}

void from_json(const json& j, SceneDefinition& s) {
  s.base_radius = j.at("base_radius").get<double>();
  s.k = j.at("k").get<int>();
  s.albedo_id = j.at("albedo_id").get<int>();
  auto l = j.at("light_dir");
  s.light_dir = Eigen::Vector3d(l[0], l[1], l[2]).normalized();
  s.bumps.clear();
  for (const auto& jb : j.at("bumps")) {
    Bump b;
    auto d = jb.at("dir");
    b.dir = Eigen::Vector3d(d[0], d[1], d[2]).normalized();
    b.sigma = jb.at("sigma").get<double>();
    auto a = jb.at("amps").get<std::vector<double>>();
    b.amps = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
    s.bumps.push_back(std::move(b));
  }
}

SceneDefinition make_scene(const SceneConfig& cfg) {
  if (cfg.k < 1 || cfg.n_bumps < 0) throw std::invalid_argument("bad scene config");
  SceneDefinition s;
  s.base_radius = cfg.base_radius;
  s.k = cfg.k;
  s.albedo_id = cfg.albedo_id;
  for (int m = 0; m < cfg.n_bumps; ++m) {
    Bump b;
    double az = 2 * EIGEN_PI * m / cfg.n_bumps;
    double el = (m % 2 == 0) ? 0.3 : -0.3;
    b.dir = dir_from_angles(az, el);
    b.sigma = cfg.sigma;
    b.amps = Eigen::VectorXd::Zero(cfg.k);
    b.amps(m % cfg.k) = cfg.amp;
    s.bumps.push_back(std::move(b));
  }
  if (total_amplitude(s) >= s.base_radius / 2)
    throw std::invalid_argument("scene would self-intersect");
  return s;
}

double analytic_sdf(const SceneDefinition& s, const Eigen::Vector3d& p,
                    const Eigen::VectorXd& eps) {
  double r = p.norm();
  Eigen::Vector3d p_hat = r > 1e-12 ? Eigen::Vector3d(p / r) : Eigen::Vector3d::UnitZ();
  double radius = s.base_radius;
  for (const auto& b : s.bumps) {
    double amp = b.amps.dot(eps);
    radius += amp * std::exp((b.dir.dot(p_hat) - 1.0) / (b.sigma * b.sigma));
  }
  return r - radius;
}

Eigen::Vector3d analytic_normal(const SceneDefinition& s, const Eigen::Vector3d& p,
                                const Eigen::VectorXd& eps, double h) {
  Eigen::Vector3d g;
  for (int ax = 0; ax < 3; ++ax) {
    Eigen::Vector3d dp = Eigen::Vector3d::Zero();
    dp(ax) = h;
    g(ax) = (analytic_sdf(s, p + dp, eps) - analytic_sdf(s, p - dp, eps)) / (2 * h);
  }
  return g.normalized();
}

Eigen::Vector3d CameraModel::pixel_dir(double u, double v) const {
  Eigen::Vector3d d((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0);
  return R * d.normalized();
}

void to_json(json& j, const CameraModel& c) {
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[static_cast<size_t>(i) * 3 + k] = c.R(i, k);
  j = {{"R", r},
       {"pos", {c.pos.x(), c.pos.y(), c.pos.z()}},
       {"fx", c.fx},
       {"fy", c.fy},
       {"cx", c.cx},
       {"cy", c.cy},
       {"width", c.width},
       {"height", c.height}};
}

void from_json(const json& j, CameraModel& c) {
  auto r = j.at("R").get<std::vector<double>>();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.R(i, k) = r[static_cast<size_t>(i) * 3 + k];
  auto p = j.at("pos");
  c.pos = Eigen::Vector3d(p[0], p[1], p[2]);
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
}

CameraModel look_at_camera(double azimuth, double elevation, double distance,
                           int width, int height) {
  CameraModel c;
  c.pos = distance * dir_from_angles(azimuth, elevation);
  Eigen::Vector3d f = (-c.pos).normalized();
  Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  if (std::abs(f.dot(up)) > 1.0 - 1e-6) up = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d right = f.cross(up).normalized();
  Eigen::Vector3d down = -right.cross(f).normalized();
  c.R.col(0) = right;
  c.R.col(1) = down;
  c.R.col(2) = f;
  c.width = width;
  c.height = height;
  c.fx = c.fy = width;  // ~53 degree horizontal field of view
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  return c;
}

CameraModel orbit_camera(int t, int n_frames, int width, int height, double distance) {
  double phase = 2 * EIGEN_PI * t / std::max(1, n_frames);
  double az = 0.5 * std::sin(phase);
  double el = 0.2 * std::sin(2 * phase + 1.0);
  return look_at_camera(az, el, distance, width, height);
}

Eigen::VectorXd trajectory_eps(uint64_t seed, int k, int t, int n_frames) {
  Eigen::VectorXd eps(k);
  for (int d = 0; d < k; ++d) {
    auto r = RngStream::derive(seed, 0x747261 /* trajectory */, static_cast<uint64_t>(d));
    double f1 = 1 + r.uniform_int(3);
    double f2 = 2 + r.uniform_int(4);
    double a1 = r.uniform(0.4, 0.7);
    double a2 = r.uniform(0.2, 0.4);
    double p1 = r.uniform(0, 2 * EIGEN_PI);
    double p2 = r.uniform(0, 2 * EIGEN_PI);
    double phase = 2 * EIGEN_PI * t / std::max(1, n_frames);
    double v = a1 * std::sin(f1 * phase + p1) + a2 * std::sin(f2 * phase + p2);
    eps(d) = std::clamp(v, -1.0, 1.0);
  }
  return eps;
}

TraceResult trace_ray(const SceneDefinition& s, const Eigen::Vector3d& origin,
                      const Eigen::Vector3d& dir, const Eigen::VectorXd& eps) {
  TraceResult res;
  // bounding sphere: bumps stay under r0/2, leave a small margin
  double rb = 1.55 * s.base_radius;
  double b = origin.dot(dir);
  double c = origin.squaredNorm() - rb * rb;
  double disc = b * b - c;
  if (disc <= 0) return res;
  double t_near = std::max(0.0, -b - std::sqrt(disc));
  double t_far = -b + std::sqrt(disc);
  double lip = s.lipschitz_bound();
  double t = t_near;
  for (int it = 0; it < 256 && t <= t_far; ++it) {
    Eigen::Vector3d p = origin + t * dir;
    double f = analytic_sdf(s, p, eps);
    if (f < 1e-5) {
      res.hit = true;
      res.t = t;
      res.point = p;
      return res;
    }
    t += f / lip;
  }
  return res;
}

Eigen::Vector3d shade(const SceneDefinition& s, const Eigen::Vector3d& p,
                      const Eigen::VectorXd& eps) {
  Eigen::Vector3d p_hat = p.normalized();
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5) + 0.3 * p_hat;  // id 0
  Eigen::Vector3d n = analytic_normal(s, p, eps);
  double diffuse = 0.35 + 0.65 * std::max(0.0, n.dot(s.light_dir));
  return (albedo * diffuse).cwiseMax(0.0).cwiseMin(1.0);
}

int region_of_point(const SceneDefinition& s, const Eigen::Vector3d& p) {
  Eigen::Vector3d p_hat = p.normalized();
  int best = 0;
  double best_dot = -2;
  for (size_t m = 0; m < s.bumps.size(); ++m) {
    double d = s.bumps[m].dir.dot(p_hat);
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<int>(m);
    }
  }
  return best;
}

FrameRecord render_ground_truth(const SceneDefinition& s, const CameraModel& cam,
                                const Eigen::VectorXd& eps) {
  if (eps.size() != s.k) throw std::invalid_argument("expression size mismatch");
  FrameRecord fr;
  fr.rgb = ImageRGB(cam.width, cam.height);
  fr.mask = ImageGray(cam.width, cam.height);
  fr.depth = ImageGray(cam.width, cam.height);
  fr.region = ImageLabels(cam.width, cam.height);
  fr.eps = eps;
  fr.camera = cam;
  int background = static_cast<int>(s.bumps.size());
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      Eigen::Vector3d d = cam.pixel_dir(u, v);
      TraceResult tr = trace_ray(s, cam.pos, d, eps);
      float* rgb = fr.rgb.px(u, v);
      if (tr.hit) {
        Eigen::Vector3d col = shade(s, tr.point, eps);
        rgb[0] = static_cast<float>(col.x());
        rgb[1] = static_cast<float>(col.y());
        rgb[2] = static_cast<float>(col.z());
        fr.mask.at(u, v) = 1.f;
        fr.depth.at(u, v) = static_cast<float>(tr.t);
        fr.region.at(u, v) = static_cast<uint8_t>(region_of_point(s, tr.point));
      } else {
        rgb[0] = rgb[1] = rgb[2] = kBackgroundGray;
        fr.mask.at(u, v) = 0.f;
        fr.depth.at(u, v) = 0.f;
        fr.region.at(u, v) = static_cast<uint8_t>(background);
      }
    }
  return fr;
}

}  // namespace sve::scene
