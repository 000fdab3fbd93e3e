#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace sve::fields {

using nlohmann::json;

// Architecture and conditioning switches for the three networks:
// the SVE generator (8-layer integrating MLP + 2-layer shortcut), the tiny
// deformation MLP (2 layers -> 6D motion), and the SDF/color field.
struct NetConfig {
  int k = 64;          // global expression dimension
  int k_prime = 8;     // compressed SVE dimension
  int l_pe = 6;        // positional encoding levels (0 = raw point)
  int g_width = 128;   // integrating network hidden width
  int shortcut_width = 64;
  int deform_width = 64;
  int sdf_width = 128;
  int sdf_layers = 4;  // weight layers in the SDF branch, output included
  int color_width = 128;
  int feat_width = 32;  // geometric feature passed from SDF to color branch
  bool spatial_condition = true;   // false: eps' = shortcut(eps), constant in p_o
  bool compress = true;            // false: k_prime = k allowed (no-compression mode)
  bool color_uses_gradient = true; // feed the SDF spatial gradient to the color branch
  double r_init = 1.0;             // sphere-init radius
  double inv_std_init = 20.0;      // initial SDF-to-opacity sharpness
  double softplus_beta_sdf = 100.0;
  double softplus_beta_mlp = 10.0;

  int pe_dim() const { return 3 + 6 * l_pe; }
  void validate() const;  // throws std::invalid_argument, incl. "compression violated"
};

void to_json(json& j, const NetConfig& c);
void from_json(const json& j, NetConfig& c);
std::string config_hash(const NetConfig& c);

struct ParamArray {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<float> w;        // rows*cols, row-major
  std::vector<float> adam_m;   // first-moment state, same size
  std::vector<float> adam_v;   // second-moment state

  size_t size() const { return static_cast<size_t>(rows) * cols; }
  float& at(int r, int c) { return w[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return w[static_cast<size_t>(r) * cols + c]; }
};

// All learnable state. Groups, in fixed order:
//   g_int_<i>_{W,b}   integrating network of the SVE generator
//   g_sc_<i>_{W,b}    shortcut network
//   d_<i>_{W,b}       deformation network (final layer zero at init)
//   f_sdf_<i>_{W,b}   SDF branch (geometric sphere init)
//   f_col_<i>_{W,b}   color branch
//   inv_std           1x1, unconstrained log of the sharpness
struct FieldParams {
  NetConfig cfg;
  std::vector<ParamArray> arrays;

  ParamArray& find(const std::string& name);
  const ParamArray& find(const std::string& name) const;
  double inv_std() const;  // exp of the stored unconstrained scalar
};

FieldParams init_params(uint64_t seed, const NetConfig& cfg);

// Parameter group of an array, for per-group gradient reporting.
enum class ParamGroup { G, D, F, InvStd };
ParamGroup group_of(const std::string& name);

struct CheckpointMeta {
  int step = 0;
  std::string stage;  // "init", "coarse", "fine"
  uint64_t seed = 0;
  std::string train_config_hash;  // empty until the trainer stamps it
};

// checkpoint.json + checkpoint.bin (flat float32 little-endian: per array w,
// adam_m, adam_v in manifest order).
void save_checkpoint(const std::string& dir, const FieldParams& p, const CheckpointMeta& meta);
FieldParams load_checkpoint(const std::string& dir, CheckpointMeta* meta_out = nullptr);

}  // namespace sve::fields
