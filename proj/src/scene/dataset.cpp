#include "scene/dataset.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "core/hash.h"

namespace sve::scene {

namespace fs = std::filesystem;

void to_json(json& j, const DatasetConfig& c) {
  j = {{"base_radius", c.scene.base_radius},
       {"k", c.scene.k},
       {"n_bumps", c.scene.n_bumps},
       {"sigma", c.scene.sigma},
       {"amp", c.scene.amp},
       {"albedo_id", c.scene.albedo_id},
       {"n_frames", c.n_frames},
       {"width", c.width},
       {"height", c.height},
       {"seed", c.seed},
       {"cam_distance", c.cam_distance},
       {"holdout_stride", c.holdout_stride}};
}

void from_json(const json& j, DatasetConfig& c) {
  DatasetConfig d;
  c.scene.base_radius = j.value("base_radius", d.scene.base_radius);
  c.scene.k = j.value("k", d.scene.k);
  c.scene.n_bumps = j.value("n_bumps", d.scene.n_bumps);
  c.scene.sigma = j.value("sigma", d.scene.sigma);
  c.scene.amp = j.value("amp", d.scene.amp);
  c.scene.albedo_id = j.value("albedo_id", d.scene.albedo_id);
  c.n_frames = j.value("n_frames", d.n_frames);
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.seed = j.value("seed", d.seed);
  c.cam_distance = j.value("cam_distance", d.cam_distance);
  c.holdout_stride = j.value("holdout_stride", d.holdout_stride);
}

namespace {

std::string frame_stem(const std::string& dir, int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", t);
  return dir + "/frames/" + buf;
}

}  // namespace

void generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  SceneDefinition scene = make_scene(cfg.scene);
  fs::create_directories(out_dir + "/frames");

  json frames = json::array();
  for (int t = 0; t < cfg.n_frames; ++t) {
    Eigen::VectorXd eps = trajectory_eps(cfg.seed, scene.k, t, cfg.n_frames);
    CameraModel cam =
        orbit_camera(t, cfg.n_frames, cfg.width, cfg.height, cfg.cam_distance);
    FrameRecord fr = render_ground_truth(scene, cam, eps);
    fr.frame_id = t;

    std::string stem = frame_stem(out_dir, t);
    write_png_rgb8(stem + ".png", fr.rgb);
    write_png_gray8(stem + ".mask.png", fr.mask);
    write_f32_raster(stem + ".depth.f32", fr.depth);
    write_png_labels(stem + ".region.png", fr.region);

    bool holdout = cfg.is_holdout(t);
    json meta = {{"frame", t},
                 {"split", holdout ? "holdout" : "train"},
                 {"eps", std::vector<double>(eps.begin(), eps.end())},
                 {"camera", fr.camera}};
    std::ofstream(stem + ".meta.json") << meta.dump(2) << "\n";
    frames.push_back({{"id", t}, {"split", holdout ? "holdout" : "train"}});
  }

  json scene_j = scene;
  json manifest = {{"scene", scene_j},
                   {"scene_hash", content_hash(scene_j.dump())},
                   {"config", cfg},
                   {"n_regions", scene.n_regions()},
                   {"frames", frames}};
  std::ofstream(out_dir + "/manifest.json") << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("no manifest in " + dir);
  json manifest = json::parse(mf);

  Dataset ds;
  ds.scene = manifest.at("scene").get<SceneDefinition>();
  ds.cfg = manifest.at("config").get<DatasetConfig>();
  for (const auto& jf : manifest.at("frames")) {
    int t = jf.at("id").get<int>();
    bool holdout = jf.at("split").get<std::string>() == "holdout";

    std::string stem = frame_stem(dir, t);
    std::ifstream meta_f(stem + ".meta.json");
    if (!meta_f) throw std::runtime_error("missing frame meta: " + stem);
    json meta = json::parse(meta_f);

    DatasetFrame f;
    f.holdout = holdout;
    f.rec.frame_id = t;
    f.rec.camera = meta.at("camera").get<CameraModel>();
    auto e = meta.at("eps").get<std::vector<double>>();
    f.rec.eps = Eigen::Map<const Eigen::VectorXd>(e.data(), e.size());
    f.rec.rgb = read_png_rgb8(stem + ".png");
    f.rec.mask = read_png_gray8(stem + ".mask.png");
    f.rec.depth = read_f32_raster(stem + ".depth.f32", ds.cfg.width, ds.cfg.height);
    f.rec.region = read_png_labels(stem + ".region.png");

    (holdout ? ds.holdout_ids : ds.train_ids).push_back(t);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace sve::scene
