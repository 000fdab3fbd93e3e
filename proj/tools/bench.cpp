// Times one training-step-shaped tape evaluation (forward + backward over the
// full field pipeline) at a few widths and batch sizes, to guide the choice of
// rays-per-step and network width on a single core.
#include <chrono>
#include <cstdio>

#include <Eigen/Dense>

#include "ad/tape.h"
#include "core/rng.h"
#include "fields/graph.h"
#include "fields/net.h"

using namespace sve;
using namespace sve::fields;

static double time_step(const NetConfig& cfg, int n_points, int iters) {
  FieldParams p = init_params(1, cfg);
  RngStream r(2);
  Eigen::MatrixXf pts(n_points, 3), dirs(n_points, 3);
  for (int i = 0; i < pts.size(); ++i) pts(i) = static_cast<float>(r.uniform(-1, 1));
  for (int i = 0; i < n_points; ++i) {
    Eigen::Vector3f d(static_cast<float>(r.normal()), static_cast<float>(r.normal()),
                      static_cast<float>(r.normal()));
    dirs.row(i) = d.normalized().transpose();
  }
  Eigen::MatrixXf eps = Eigen::MatrixXf::Zero(1, cfg.k);

  auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < iters; ++it) {
    ad::TapeF t;
    auto b = bind_params(t, p, true);
    auto e = eval_field_graph(t, b, cfg, t.input(pts), t.input(eps), t.input(dirs),
                              true, true);
    ad::VarId eik =
        t.mean(t.square(t.add_const(t.rownorm_eps(e.sdf.grad_pc, 1e-12f), -1.f)));
    ad::VarId loss = t.add(t.add(t.mean(t.square(e.color)), t.mean(t.square(e.sdf.sdf))), eik);
    t.backward(loss);
  }
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

int main() {
  struct Case {
    const char* label;
    int width, k, points;
  };
  Case cases[] = {
      {"width 128, 7k pts", 128, 64, 7056},
      {"width 128, 3.5k pts", 128, 64, 3528},
      {"width  64, 7k pts", 64, 64, 7056},
      {"width  64, 3.5k pts", 64, 64, 3528},
      {"width  64, k=4, 7k pts", 64, 4, 7056},
  };
  for (const auto& c : cases) {
    NetConfig cfg;
    cfg.g_width = c.width;
    cfg.sdf_width = c.width;
    cfg.color_width = c.width;
    cfg.shortcut_width = c.width / 2;
    cfg.deform_width = c.width / 2;
    cfg.k = c.k;
    cfg.k_prime = c.k >= 8 ? 8 : c.k - 1;
    double ms = time_step(cfg, c.points, 3);
    std::printf("%-24s %8.1f ms/step\n", c.label, ms);
  }
  return 0;
}
