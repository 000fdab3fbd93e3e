#pragma once

#include <string>
#include <vector>

#include "scene/scene.h"

namespace sve::scene {

struct DatasetConfig {
  SceneConfig scene;
  int n_frames = 20;
  int width = 48;
  int height = 48;
  uint64_t seed = 0;
  double cam_distance = 3.0;
  int holdout_stride = 5;  // every stride-th frame is held out

  bool is_holdout(int t) const {
    return holdout_stride > 0 && t % holdout_stride == holdout_stride - 1;
  }
};

void to_json(json& j, const DatasetConfig& c);
void from_json(const json& j, DatasetConfig& c);

// On-disk layout under the dataset root:
//   manifest.json                full scene definition + frame table
//   frames/NNNN.png              shaded rgb, 8 bit
//   frames/NNNN.mask.png         {0, 255}
//   frames/NNNN.depth.f32        raw float32 ray distances, 0 where masked
//   frames/NNNN.region.png       raw region labels (background = n_bumps)
//   frames/NNNN.meta.json        expression vector + camera
void generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

struct DatasetFrame {
  FrameRecord rec;
  bool holdout = false;
};

struct Dataset {
  SceneDefinition scene;
  DatasetConfig cfg;
  std::vector<DatasetFrame> frames;
  std::vector<int> train_ids;
  std::vector<int> holdout_ids;
};

Dataset load_dataset(const std::string& dir);

}  // namespace sve::scene
