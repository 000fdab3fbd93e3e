#include "eval/evaluate.h"

#include <stdexcept>

#include "core/rng.h"
#include "render/mesh.h"

namespace sve::eval {

namespace {

ImageRGB masked_copy(const ImageRGB& img, const ImageGray& mask) {
  ImageRGB out = img;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      if (mask.at(x, y) < 0.5f) {
        float* px = out.px(x, y);
        px[0] = px[1] = px[2] = 0.f;
      }
  return out;
}

}  // namespace

MetricsReport metrics_over_frames(const std::vector<const scene::FrameRecord*>& frames,
                                  const FrameRenderFn& render, const std::string& split,
                                  bool masked) {
  MetricsReport r;
  r.split = split;
  r.n_frames = static_cast<int>(frames.size());
  for (const scene::FrameRecord* f : frames) {
    ImageRGB pred = render(*f);
    ImageRGB truth = f->rgb;
    if (masked) {
      pred = masked_copy(pred, f->mask);
      truth = masked_copy(truth, f->mask);
    }
    r.mae += mae(pred, truth);
    r.psnr += psnr(pred, truth);
    r.ssim += ssim(pred, truth);
  }
  if (r.n_frames > 0) {
    r.mae /= r.n_frames;
    r.psnr /= r.n_frames;
    r.ssim /= r.n_frames;
  }
  return r;
}

MetricsReport evaluate(const fields::FieldParams& params, const scene::Dataset& ds,
                       const std::string& split, const render::RenderConfig& rc,
                       uint64_t seed, bool masked) {
  if (params.cfg.k != ds.scene.k)
    throw std::runtime_error("checkpoint/dataset config mismatch: expression dim " +
                             std::to_string(params.cfg.k) + " vs dataset k " +
                             std::to_string(ds.scene.k));
  const std::vector<int>& ids = split == "train" ? ds.train_ids : ds.holdout_ids;
  std::vector<const scene::FrameRecord*> frames;
  for (int id : ids) frames.push_back(&ds.frames[id].rec);

  auto render_one = [&](const scene::FrameRecord& f) {
    render::NeuralEvaluator field(params, f.eps);
    RngStream rng = RngStream::derive(seed, 0x657661, static_cast<uint64_t>(f.frame_id));
    return render::render_frame(field, f.camera, rc, rng).rgb;
  };
  return metrics_over_frames(frames, render_one, split, masked);
}

std::vector<render::FrameRender> reenact(const fields::FieldParams& params,
                                         const std::vector<Eigen::VectorXd>& eps_seq,
                                         const scene::CameraModel& cam,
                                         const render::RenderConfig& rc, uint64_t seed) {
  std::vector<render::FrameRender> out;
  out.reserve(eps_seq.size());
  for (size_t i = 0; i < eps_seq.size(); ++i) {
    if (eps_seq[i].size() != params.cfg.k)
      throw std::invalid_argument("expression length mismatch at frame " + std::to_string(i));
    render::NeuralEvaluator field(params, eps_seq[i]);
    RngStream rng = RngStream::derive(seed, 0x72656e, i);
    out.push_back(render::render_frame(field, cam, rc, rng, /*want_normals=*/true));
  }
  return out;
}

double mesh_geometry_error(const fields::FieldParams& params,
                           const scene::SceneDefinition& scene, int grid) {
  Eigen::VectorXd eps0 = Eigen::VectorXd::Zero(params.cfg.k);
  render::NeuralEvaluator field(params, eps0);
  double half = 1.55 * scene.base_radius;
  render::TriangleMesh mesh = render::extract_mesh(
      [&](const Eigen::MatrixXd& pts) { return field.sdf_batch(pts); }, -half, half, grid);
  if (mesh.vertices.empty()) return 10.0;

  Eigen::VectorXd scene_eps = Eigen::VectorXd::Zero(scene.k);
  double acc = 0;
  for (const Eigen::Vector3d& v : mesh.vertices)
    acc += std::abs(scene::analytic_sdf(scene, v, scene_eps));
  return acc / double(mesh.vertices.size());
}

}  // namespace sve::eval
