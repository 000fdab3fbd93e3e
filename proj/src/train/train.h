#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "fields/net.h"
#include "render/renderer.h"
#include "sampler/sampler.h"
#include "scene/dataset.h"
#include "train/step.h"

namespace sve::train {

using nlohmann::json;

// Everything a training run depends on. The defaults are the desk-scale
// preset: narrow networks and a step budget sized so the end-to-end toy run
// finishes in minutes on one core. The expression dimension is always adopted
// from the dataset at train time (resolved_net), so `net.k` here is only a
// placeholder.
struct TrainConfig {
  fields::NetConfig net;
  render::RenderConfig render;
  int coarse_steps = 1200;
  int fine_steps = 5200;
  int rays_per_step = 40;
  double lr = 5e-4;
  double lr_final = 5e-5;  // exponential decay endpoint over the whole run
  double lambda_rgb = 1.0;
  double lambda_mask = 0.1;
  double lambda_eik = 0.1;
  double lambda_depth = 0.5;  // coarse pseudo-depth alignment
  double lambda_surf = 1.0;   // coarse surface-anchor |sdf|
  double lambda1 = 1.0;       // guidance mixing: render part
  double lambda2 = 0.1;       // guidance mixing: depth part
  double ais_alpha = 0.01;
  bool use_sve = true;
  bool compress_sve = true;
  bool use_ais = true;
  std::string depth_supervision = "init_only";  // none | init_only | full
  uint64_t seed = 0;
  int checkpoint_interval = 1000;

  TrainConfig();  // applies the desk-scale net preset
  void validate() const;

  // Architecture actually trained: dataset expression dimension, ablation
  // flags folded in, and the compressed dimension capped below k.
  fields::NetConfig resolved_net(int dataset_k) const;

  int total_steps() const { return coarse_steps + fine_steps; }
  double lr_at(int step) const;
};

void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);

// Hash of the resolved configuration; stamped into checkpoints and required
// to match on resume.
std::string train_config_hash(const TrainConfig& c, int dataset_k);

// Per-term values of one step's loss, plus the per-region guidance parts the
// sampler consumed (fine stage only; empty in the coarse stage).
struct LossBreakdown {
  double total = 0;
  double rgb = 0, mask_bce = 0, eikonal = 0, depth = 0, surface_sdf = 0;
  Eigen::VectorXd region_render, region_depth;
};

void to_json(json& j, const LossBreakdown& l);

// Per-region guidance loss over one step's sampled pixels: for region i,
// render part = sum over its pixels of mean|rgb_hat - rgb|_1 + BCE(mask_hat,
// mask), depth part = sum of mask * |depth_hat - depth|. Sums, not means;
// the sampler divides by region area itself.
struct GuidanceParts {
  Eigen::VectorXd render, depth;
};

GuidanceParts guidance_loss(const Eigen::MatrixXd& rgb_hat, const Eigen::VectorXd& mask_hat,
                            const Eigen::VectorXd& depth_hat, const Eigen::MatrixXd& rgb_gt,
                            const Eigen::VectorXd& mask_gt, const Eigen::VectorXd& depth_gt,
                            const Eigen::VectorXi& region, int n_regions);

// One coarse-stage update: uniform pixels, render loss plus the pseudo-depth
// and surface-anchor geometry terms (dropped when depth_supervision=none).
// geo_out, when given, receives the anchor batch with predictions filled.
LossBreakdown coarse_step(fields::FieldParams& params, const scene::FrameRecord& frame,
                          RngStream& rng, const TrainConfig& cfg, int adam_step,
                          double lr, GeometrySupervisionBatch* geo_out = nullptr);

// One fine-stage update: pixels via the region sampler (uniform when
// use_ais=false), parameter loss without depth unless depth_supervision=full,
// guidance loss computed and folded into the region weights.
LossBreakdown fine_step(fields::FieldParams& params, const scene::FrameRecord& frame,
                        sampler::RegionWeights& weights, RngStream& rng,
                        const TrainConfig& cfg, int adam_step, double lr);

struct TrainResult {
  fields::FieldParams params;
  sampler::RegionWeights weights;
  LossBreakdown final_loss;
  int steps_run = 0;  // steps executed by this call (0 when already complete)
};

// Full run: coarse stage then fine stage over the training split, loss and
// sampler-weight CSVs, periodic checkpoints. Resumes from an existing
// checkpoint in out_dir when its config hash matches; refuses on mismatch.
// max_steps >= 0 caps the steps executed by this call (the run checkpoints
// where it stopped and a later call picks it up there).
TrainResult train(const scene::Dataset& ds, const TrainConfig& cfg,
                  const std::string& out_dir, int max_steps = -1);

// The six-variant comparison: full method plus the five single-switch
// baselines, each trained with every listed seed. Emits ablation.md and
// ablation.json under out_dir; rows carry seed-median metrics on the
// held-out split plus mesh-vs-oracle geometry error.
struct AblationRow {
  std::string variant;
  double l1 = 0, psnr = 0, ssim = 0, geo_err = 0;
};

std::vector<AblationRow> run_ablation_suite(const scene::Dataset& ds,
                                            const TrainConfig& base,
                                            const std::string& out_dir,
                                            const std::vector<uint64_t>& seeds);

}  // namespace sve::train
