#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "core/rng.h"
#include "eval/evaluate.h"
#include "fields/net.h"
#include "render/mesh.h"
#include "render/renderer.h"
#include "scene/dataset.h"
#include "train/train.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

sve::train::TrainConfig load_train_config(const std::string& path) {
  sve::train::TrainConfig cfg;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    cfg = json::parse(f).get<sve::train::TrainConfig>();
  }
  return cfg;
}

char frame_name[32];

const char* frame_file(int i, const char* suffix) {
  std::snprintf(frame_name, sizeof frame_name, "%04d%s", i, suffix);
  return frame_name;
}

void add_synth(CLI::App& app) {
  auto* sub = app.add_subcommand("synth-data", "generate a synthetic dataset");
  auto cfg = std::make_shared<sve::scene::DatasetConfig>();
  auto out = std::make_shared<std::string>();
  sub->add_option("--out", *out, "dataset directory")->required();
  sub->add_option("--seed", cfg->seed, "trajectory seed");
  sub->add_option("--frames", cfg->n_frames, "number of frames");
  sub->add_option("--width", cfg->width, "frame width");
  sub->add_option("--height", cfg->height, "frame height");
  sub->add_option("--k", cfg->scene.k, "expression dimension");
  sub->add_option("--bumps", cfg->scene.n_bumps, "number of bumps");
  sub->add_option("--amp", cfg->scene.amp, "bump amplitude");
  sub->add_option("--sigma", cfg->scene.sigma, "bump angular width");
  sub->add_option("--cam-distance", cfg->cam_distance, "orbit camera distance");
  sub->add_option("--holdout-stride", cfg->holdout_stride, "held-out frame stride");
  sub->callback([cfg, out] {
    sve::scene::generate_dataset(*cfg, *out);
    std::cout << "dataset written to " << *out << "\n";
  });
}

void add_train(CLI::App& app) {
  auto* sub = app.add_subcommand("train", "train a model on a dataset");
  struct Args {
    std::string data, out, config;
    uint64_t seed = 0;
    bool dump = false;
    int max_steps = -1;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--data", a->data, "dataset directory");
  sub->add_option("--out", a->out, "run directory for checkpoints and logs");
  sub->add_option("--config", a->config, "training config json");
  auto* seed_opt = sub->add_option("--seed", a->seed, "overrides the config seed");
  sub->add_flag("--dump-config", a->dump, "print the full config with defaults and exit");
  sub->add_option("--max-steps", a->max_steps, "stop after this many steps (resumable)");
  sub->callback([a, seed_opt] {
    sve::train::TrainConfig cfg = load_train_config(a->config);
    if (seed_opt->count() > 0) cfg.seed = a->seed;
    if (a->dump) {
      std::cout << json(cfg).dump(2) << "\n";
      return;
    }
    if (a->data.empty() || a->out.empty())
      throw CLI::RequiredError("train needs --data and --out");
    sve::scene::Dataset ds = sve::scene::load_dataset(a->data);
    sve::train::TrainResult res = sve::train::train(ds, cfg, a->out, a->max_steps);
    std::printf("ran %d steps, final loss %.6g, checkpoint in %s\n", res.steps_run,
                res.final_loss.total, a->out.c_str());
  });
}

void add_evaluate(CLI::App& app) {
  auto* sub = app.add_subcommand("evaluate", "metrics of a checkpoint against a dataset split");
  struct Args {
    std::string ckpt, data, config, split = "holdout", out;
    uint64_t seed = 0;
    bool masked = false;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--checkpoint", a->ckpt, "run directory holding the checkpoint")->required();
  sub->add_option("--data", a->data, "dataset directory")->required();
  sub->add_option("--split", a->split, "train or holdout")
      ->check(CLI::IsMember({"train", "holdout"}));
  sub->add_option("--config", a->config, "training config json (render settings)");
  sub->add_option("--out", a->out, "also write the report to this json file");
  sub->add_option("--seed", a->seed, "render seed");
  sub->add_flag("--masked", a->masked, "compare only inside the ground-truth mask");
  sub->callback([a] {
    sve::fields::CheckpointMeta meta;
    sve::fields::FieldParams params = sve::fields::load_checkpoint(a->ckpt, &meta);
    sve::scene::Dataset ds = sve::scene::load_dataset(a->data);
    if (params.cfg.k != ds.scene.k)
      throw std::runtime_error("config hash " + meta.train_config_hash +
                               ": checkpoint expression dim " + std::to_string(params.cfg.k) +
                               " does not match dataset k " + std::to_string(ds.scene.k));
    sve::render::RenderConfig rc = load_train_config(a->config).render;
    sve::eval::MetricsReport rep =
        sve::eval::evaluate(params, ds, a->split, rc, a->seed, a->masked);
    json j = rep;
    std::cout << j.dump(2) << "\n";
    if (!a->out.empty()) {
      std::ofstream f(a->out);
      f << j.dump(2) << "\n";
    }
  });
}

void add_render(CLI::App& app) {
  auto* sub = app.add_subcommand("render", "render one dataset frame with a checkpoint");
  struct Args {
    std::string ckpt, data, config, out;
    int frame = 0;
    uint64_t seed = 0;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--checkpoint", a->ckpt, "run directory holding the checkpoint")->required();
  sub->add_option("--data", a->data, "dataset directory")->required();
  sub->add_option("--out", a->out, "output prefix (.png/.mask.png/.depth.f32)")->required();
  sub->add_option("--frame", a->frame, "frame index");
  sub->add_option("--config", a->config, "training config json (render settings)");
  sub->add_option("--seed", a->seed, "render seed");
  sub->callback([a] {
    sve::fields::FieldParams params = sve::fields::load_checkpoint(a->ckpt);
    sve::scene::Dataset ds = sve::scene::load_dataset(a->data);
    if (a->frame < 0 || a->frame >= static_cast<int>(ds.frames.size()))
      throw std::runtime_error("frame index out of range");
    const sve::scene::FrameRecord& fr = ds.frames[a->frame].rec;
    if (params.cfg.k != ds.scene.k)
      throw std::runtime_error("checkpoint expression dim does not match dataset");
    sve::render::RenderConfig rc = load_train_config(a->config).render;
    sve::render::NeuralEvaluator field(params, fr.eps);
    sve::RngStream rng =
        sve::RngStream::derive(a->seed, 0x726e6472, static_cast<uint64_t>(a->frame));
    sve::render::FrameRender out = sve::render::render_frame(field, fr.camera, rc, rng);
    sve::write_png_rgb8(a->out + ".png", out.rgb);
    sve::write_png_gray8(a->out + ".mask.png", out.mask);
    sve::write_f32_raster(a->out + ".depth.f32", out.depth);
    std::cout << "wrote " << a->out << ".png\n";
  });
}

void add_reenact(CLI::App& app) {
  auto* sub = app.add_subcommand(
      "reenact", "drive a checkpoint with a dataset's expression sequence");
  struct Args {
    std::string ckpt, data, config, out, split = "holdout";
    int camera_frame = 0;
    uint64_t seed = 0;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--checkpoint", a->ckpt, "run directory holding the checkpoint")->required();
  sub->add_option("--data", a->data, "dataset supplying expressions and the camera")->required();
  sub->add_option("--out", a->out, "output directory, one png per expression")->required();
  sub->add_option("--split", a->split, "train, holdout, or all")
      ->check(CLI::IsMember({"train", "holdout", "all"}));
  sub->add_option("--camera-frame", a->camera_frame, "frame whose camera is reused");
  sub->add_option("--config", a->config, "training config json (render settings)");
  sub->add_option("--seed", a->seed, "render seed");
  sub->callback([a] {
    sve::fields::FieldParams params = sve::fields::load_checkpoint(a->ckpt);
    sve::scene::Dataset ds = sve::scene::load_dataset(a->data);
    if (a->camera_frame < 0 || a->camera_frame >= static_cast<int>(ds.frames.size()))
      throw std::runtime_error("camera frame index out of range");
    std::vector<Eigen::VectorXd> eps_seq;
    for (const sve::scene::DatasetFrame& f : ds.frames)
      if (a->split == "all" || f.holdout == (a->split == "holdout"))
        eps_seq.push_back(f.rec.eps);
    sve::render::RenderConfig rc = load_train_config(a->config).render;
    std::vector<sve::render::FrameRender> frames = sve::eval::reenact(
        params, eps_seq, ds.frames[a->camera_frame].rec.camera, rc, a->seed);
    fs::create_directories(a->out);
    for (size_t i = 0; i < frames.size(); ++i)
      sve::write_png_rgb8(a->out + "/" + frame_file(static_cast<int>(i), ".png"),
                          frames[i].rgb);
    std::cout << "wrote " << frames.size() << " frames to " << a->out << "\n";
  });
}

void add_mesh(CLI::App& app) {
  auto* sub = app.add_subcommand("extract-mesh",
                                 "neutral-expression surface of a checkpoint as obj");
  struct Args {
    std::string ckpt, out;
    int resolution = 64;
    double bound = 1.55;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--checkpoint", a->ckpt, "run directory holding the checkpoint")->required();
  sub->add_option("--out", a->out, "obj file path")->required();
  sub->add_option("--resolution", a->resolution, "marching-cubes grid resolution");
  sub->add_option("--bound", a->bound, "half-extent of the extraction cube");
  sub->callback([a] {
    sve::fields::FieldParams params = sve::fields::load_checkpoint(a->ckpt);
    sve::render::NeuralEvaluator field(params, Eigen::VectorXd::Zero(params.cfg.k));
    sve::render::TriangleMesh mesh = sve::render::extract_mesh(
        [&](const Eigen::MatrixXd& pts) { return field.sdf_batch(pts); }, -a->bound,
        a->bound, a->resolution);
    sve::render::write_obj(a->out, mesh);
    std::cout << "wrote " << mesh.vertices.size() << " vertices to " << a->out << "\n";
  });
}

void add_ablate(CLI::App& app) {
  auto* sub = app.add_subcommand("ablate", "train and score the ablation variants");
  struct Args {
    std::string data, out, config;
    std::vector<uint64_t> seeds = {0, 1, 2};
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--data", a->data, "dataset directory")->required();
  sub->add_option("--out", a->out, "suite directory")->required();
  sub->add_option("--config", a->config, "base training config json");
  sub->add_option("--seeds", a->seeds, "seeds, median taken across them");
  sub->callback([a] {
    sve::scene::Dataset ds = sve::scene::load_dataset(a->data);
    sve::train::TrainConfig base = load_train_config(a->config);
    std::vector<sve::train::AblationRow> rows =
        sve::train::run_ablation_suite(ds, base, a->out, a->seeds);
    for (const sve::train::AblationRow& r : rows)
      std::printf("%-22s L1 %.4f  PSNR %6.2f  SSIM %.4f  geo %.4f\n", r.variant.c_str(),
                  r.l1, r.psnr, r.ssim, r.geo_err);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatially varying expression fields on an analytic test scene"};
  app.require_subcommand(1);
  add_synth(app);
  add_train(app);
  add_evaluate(app);
  add_render(app);
  add_reenact(app);
  add_mesh(app);
  add_ablate(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sve: %s\n", e.what());
    return 2;
  }
  return 0;
}
