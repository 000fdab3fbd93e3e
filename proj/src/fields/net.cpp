#include "fields/net.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ad/tape.h"
#include "core/hash.h"
#include "core/rng.h"
#include "fields/graph.h"

namespace fs = std::filesystem;

namespace sve::fields {

void NetConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k_prime < 1) throw std::invalid_argument("k_prime must be >= 1");
  if (compress && k_prime >= k) throw std::invalid_argument("compression violated");
  if (!compress && k_prime != k)
    throw std::invalid_argument("no-compression mode requires k_prime == k");
  if (l_pe < 0) throw std::invalid_argument("l_pe must be >= 0");
  if (sdf_layers < 2) throw std::invalid_argument("sdf_layers must be >= 2");
  for (int w : {g_width, shortcut_width, deform_width, sdf_width, color_width})
    if (w < 1) throw std::invalid_argument("network widths must be >= 1");
  if (feat_width < 0) throw std::invalid_argument("feat_width must be >= 0");
  if (inv_std_init <= 0) throw std::invalid_argument("inv_std_init must be > 0");
}

void to_json(json& j, const NetConfig& c) {
  j = json{{"k", c.k},
           {"k_prime", c.k_prime},
           {"l_pe", c.l_pe},
           {"g_width", c.g_width},
           {"shortcut_width", c.shortcut_width},
           {"deform_width", c.deform_width},
           {"sdf_width", c.sdf_width},
           {"sdf_layers", c.sdf_layers},
           {"color_width", c.color_width},
           {"feat_width", c.feat_width},
           {"spatial_condition", c.spatial_condition},
           {"compress", c.compress},
           {"color_uses_gradient", c.color_uses_gradient},
           {"r_init", c.r_init},
           {"inv_std_init", c.inv_std_init},
           {"softplus_beta_sdf", c.softplus_beta_sdf},
           {"softplus_beta_mlp", c.softplus_beta_mlp}};
}

void from_json(const json& j, NetConfig& c) {
  NetConfig d;
  c.k = j.value("k", d.k);
  c.k_prime = j.value("k_prime", d.k_prime);
  c.l_pe = j.value("l_pe", d.l_pe);
  c.g_width = j.value("g_width", d.g_width);
  c.shortcut_width = j.value("shortcut_width", d.shortcut_width);
  c.deform_width = j.value("deform_width", d.deform_width);
  c.sdf_width = j.value("sdf_width", d.sdf_width);
  c.sdf_layers = j.value("sdf_layers", d.sdf_layers);
  c.color_width = j.value("color_width", d.color_width);
  c.feat_width = j.value("feat_width", d.feat_width);
  c.spatial_condition = j.value("spatial_condition", d.spatial_condition);
  c.compress = j.value("compress", d.compress);
  c.color_uses_gradient = j.value("color_uses_gradient", d.color_uses_gradient);
  c.r_init = j.value("r_init", d.r_init);
  c.inv_std_init = j.value("inv_std_init", d.inv_std_init);
  c.softplus_beta_sdf = j.value("softplus_beta_sdf", d.softplus_beta_sdf);
  c.softplus_beta_mlp = j.value("softplus_beta_mlp", d.softplus_beta_mlp);
}

std::string config_hash(const NetConfig& c) {
  json j = c;
  return content_hash(j.dump());
}

ParamArray& FieldParams::find(const std::string& name) {
  for (auto& a : arrays)
    if (a.name == name) return a;
  throw std::invalid_argument("no such param array: " + name);
}

const ParamArray& FieldParams::find(const std::string& name) const {
  return const_cast<FieldParams*>(this)->find(name);
}

double FieldParams::inv_std() const { return std::exp(static_cast<double>(find("inv_std").w[0])); }

ParamGroup group_of(const std::string& name) {
  if (name == "inv_std") return ParamGroup::InvStd;
  if (name.rfind("g_", 0) == 0) return ParamGroup::G;
  if (name.rfind("d_", 0) == 0) return ParamGroup::D;
  if (name.rfind("f_", 0) == 0) return ParamGroup::F;
  throw std::invalid_argument("unknown param group for: " + name);
}

namespace {

ParamArray make_array(const std::string& name, int rows, int cols) {
  ParamArray a;
  a.name = name;
  a.rows = rows;
  a.cols = cols;
  a.w.assign(a.size(), 0.f);
  a.adam_m.assign(a.size(), 0.f);
  a.adam_v.assign(a.size(), 0.f);
  return a;
}

void fill_normal(ParamArray& a, RngStream& r, double std) {
  for (auto& v : a.w) v = static_cast<float>(r.normal() * std);
}

// Evenly distributed unit directions (Fibonacci spiral on the sphere).
Eigen::Vector3d fibonacci_dir(int i, int n) {
  double z = 1.0 - (2.0 * i + 1.0) / n;
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  double phi = i * 2.399963229728653;  // golden angle
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Fit sdf_raw -> scale * sdf_raw + shift against |p| - r on shell samples and
// fold the correction into the output layer.
void calibrate_sphere_init(FieldParams& p) {
  const NetConfig& cfg = p.cfg;
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 16; ++i) {
    Eigen::Vector3d dir = fibonacci_dir(i, 16);
    for (int j = 0; j < 9; ++j) {
      double rad = cfg.r_init * (0.5 + 1.0 * j / 8.0);
      pts.push_back(dir * rad);
    }
  }
  Eigen::MatrixXd P(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) P.row(static_cast<Eigen::Index>(i)) = pts[i];

  ad::TapeD t;
  auto bound = bind_params(t, p, false);
  auto pe = pe_encode(t, t.input(P), cfg.l_pe);
  ad::VarId sve0 = t.input(Eigen::MatrixXd::Zero(P.rows(), cfg.k_prime));
  auto out = sdf_graph(t, bound, cfg, pe, sve0, false);
  Eigen::VectorXd f = t.value(out.sdf).col(0);

  Eigen::VectorXd y(P.rows());
  for (Eigen::Index i = 0; i < P.rows(); ++i) y(i) = P.row(i).norm() - cfg.r_init;

  // least squares for [scale, shift]
  Eigen::MatrixXd A(P.rows(), 2);
  A.col(0) = f;
  A.col(1).setOnes();
  Eigen::Vector2d sb = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  double s = sb(0), b = sb(1);
  if (!std::isfinite(s) || std::abs(s) < 1e-3) return;  // degenerate, keep raw init

  std::string last = "f_sdf_" + std::to_string(cfg.sdf_layers - 1) + "_";
  ParamArray& W = p.find(last + "W");
  ParamArray& bias = p.find(last + "b");
  for (int c = 0; c < W.cols; ++c) W.at(0, c) = static_cast<float>(s * W.at(0, c));
  bias.w[0] = static_cast<float>(s * bias.w[0] + b);
}

}  // namespace

FieldParams init_params(uint64_t seed, const NetConfig& cfg) {
  cfg.validate();
  FieldParams p;
  p.cfg = cfg;
  int pe = cfg.pe_dim();
  int kp = cfg.k_prime;

  auto add = [&p](ParamArray a) { p.arrays.push_back(std::move(a)); };
  uint64_t idx = 0;
  auto rng = [&seed, &idx]() { return RngStream::derive(seed, 0xf1e1d5, idx++); };
  auto he = [&](const std::string& name, int rows, int cols) {
    ParamArray a = make_array(name, rows, cols);
    auto r = rng();
    fill_normal(a, r, std::sqrt(2.0 / cols));
    return a;
  };
  auto small_out = [&](const std::string& name, int rows, int cols) {
    ParamArray a = make_array(name, rows, cols);
    auto r = rng();
    fill_normal(a, r, 0.1 / std::sqrt(static_cast<double>(cols)));
    return a;
  };

  // SVE generator: integrating network, 8 weight layers
  for (int l = 0; l < 8; ++l) {
    int in = l == 0 ? pe + cfg.k : cfg.g_width;
    int out = l == 7 ? kp : cfg.g_width;
    std::string name = "g_int_" + std::to_string(l) + "_";
    add(l == 7 ? small_out(name + "W", out, in) : he(name + "W", out, in));
    add(make_array(name + "b", 1, out));
  }
  // shortcut, 2 weight layers
  add(he("g_sc_0_W", cfg.shortcut_width, cfg.k));
  add(make_array("g_sc_0_b", 1, cfg.shortcut_width));
  add(small_out("g_sc_1_W", kp, cfg.shortcut_width));
  add(make_array("g_sc_1_b", 1, kp));

  // deformation network: final layer zero so deformation starts at identity
  add(he("d_0_W", cfg.deform_width, pe + kp));
  add(make_array("d_0_b", 1, cfg.deform_width));
  add(make_array("d_1_W", 6, cfg.deform_width));
  add(make_array("d_1_b", 1, 6));

  // SDF branch, geometric sphere init:
  //  - layer 0 rows point along evenly spread unit directions, with the
  //    encoding and eps' columns zeroed
  //  - hidden layers exactly identity
  //  - output sdf row sized so sum softplus(v_i . p) ~ |p|, bias -r_init
  for (int l = 0; l < cfg.sdf_layers; ++l) {
    std::string name = "f_sdf_" + std::to_string(l) + "_";
    if (l == 0) {
      ParamArray W = make_array(name + "W", cfg.sdf_width, pe + kp);
      for (int i = 0; i < cfg.sdf_width; ++i) {
        Eigen::Vector3d v = fibonacci_dir(i, cfg.sdf_width);
        for (int c = 0; c < 3; ++c) W.at(i, c) = static_cast<float>(v(c));
      }
      add(std::move(W));
      add(make_array(name + "b", 1, cfg.sdf_width));
    } else if (l < cfg.sdf_layers - 1) {
      ParamArray W = make_array(name + "W", cfg.sdf_width, cfg.sdf_width);
      // exact identity: symmetry between units is already broken by the
      // distinct layer-0 directions, and noise here shows up as a
      // direction-dependent ripple the calibration cannot remove
      for (int i = 0; i < std::min(W.rows, W.cols); ++i) W.at(i, i) = 1.f;
      add(std::move(W));
      add(make_array(name + "b", 1, cfg.sdf_width));
    } else {
      ParamArray W = make_array(name + "W", 1 + cfg.feat_width, cfg.sdf_width);
      auto r = rng();
      for (int c = 0; c < W.cols; ++c) W.at(0, c) = static_cast<float>(4.0 / cfg.sdf_width);
      for (int i = 1; i < W.rows; ++i)
        for (int c = 0; c < W.cols; ++c) W.at(i, c) = static_cast<float>(r.normal() * 0.01);
      add(std::move(W));
      ParamArray b = make_array(name + "b", 1, 1 + cfg.feat_width);
      b.w[0] = static_cast<float>(-cfg.r_init);
      add(std::move(b));
    }
  }

  // color branch
  int col_in = cfg.feat_width + 3 + (cfg.color_uses_gradient ? 3 : 0) + kp;
  add(he("f_col_0_W", cfg.color_width, col_in));
  add(make_array("f_col_0_b", 1, cfg.color_width));
  {
    ParamArray W = make_array("f_col_1_W", 3, cfg.color_width);
    auto r = rng();
    fill_normal(W, r, 0.01);
    add(std::move(W));
    add(make_array("f_col_1_b", 1, 3));
  }

  // sharpness, stored as log so positivity holds by construction
  {
    ParamArray a = make_array("inv_std", 1, 1);
    a.w[0] = static_cast<float>(std::log(cfg.inv_std_init));
    add(std::move(a));
  }

  calibrate_sphere_init(p);
  return p;
}

void save_checkpoint(const std::string& dir, const FieldParams& p, const CheckpointMeta& meta) {
  fs::create_directories(dir);
  std::string bin_path = (fs::path(dir) / "checkpoint.bin").string();
  std::FILE* fp = std::fopen(bin_path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for writing: " + bin_path);
  json arr = json::array();
  size_t offset = 0;
  for (const auto& a : p.arrays) {
    arr.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}, {"offset", offset}});
    for (const auto* vec : {&a.w, &a.adam_m, &a.adam_v}) {
      if (std::fwrite(vec->data(), sizeof(float), vec->size(), fp) != vec->size()) {
        std::fclose(fp);
        throw std::runtime_error("short write: " + bin_path);
      }
      offset += vec->size() * sizeof(float);
    }
  }
  std::fclose(fp);

  json j;
  j["net_config"] = p.cfg;
  j["config_hash"] = config_hash(p.cfg);
  j["step"] = meta.step;
  j["stage"] = meta.stage;
  j["seed"] = meta.seed;
  j["train_config_hash"] = meta.train_config_hash;
  j["rng_state_hash"] = content_hash(std::to_string(meta.seed) + ":" + std::to_string(meta.step));
  j["inv_std"] = p.inv_std();
  j["arrays"] = arr;
  std::ofstream out(fs::path(dir) / "checkpoint.json");
  if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/checkpoint.json");
  out << j.dump(2) << "\n";
}

FieldParams load_checkpoint(const std::string& dir, CheckpointMeta* meta_out) {
  std::ifstream in(fs::path(dir) / "checkpoint.json");
  if (!in) throw std::runtime_error("cannot open checkpoint manifest in: " + dir);
  json j = json::parse(in);

  FieldParams p;
  p.cfg = j.at("net_config").get<NetConfig>();
  FieldParams fresh = init_params(0, p.cfg);  // shapes only; weights overwritten below
  p.arrays = std::move(fresh.arrays);

  const json& arr = j.at("arrays");
  if (arr.size() != p.arrays.size())
    throw std::runtime_error("checkpoint array count mismatch in: " + dir);
  for (size_t i = 0; i < p.arrays.size(); ++i) {
    if (arr[i].at("name") != p.arrays[i].name || arr[i].at("rows") != p.arrays[i].rows ||
        arr[i].at("cols") != p.arrays[i].cols)
      throw std::runtime_error("checkpoint array layout mismatch at " + p.arrays[i].name);
  }

  std::string bin_path = (fs::path(dir) / "checkpoint.bin").string();
  std::FILE* fp = std::fopen(bin_path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open for reading: " + bin_path);
  for (auto& a : p.arrays) {
    for (auto* vec : {&a.w, &a.adam_m, &a.adam_v}) {
      if (std::fread(vec->data(), sizeof(float), vec->size(), fp) != vec->size()) {
        std::fclose(fp);
        throw std::runtime_error("short read: " + bin_path);
      }
    }
  }
  std::fclose(fp);

  if (meta_out) {
    meta_out->step = j.at("step").get<int>();
    meta_out->stage = j.at("stage").get<std::string>();
    meta_out->seed = j.at("seed").get<uint64_t>();
    meta_out->train_config_hash = j.value("train_config_hash", "");
  }
  return p;
}

}  // namespace sve::fields
