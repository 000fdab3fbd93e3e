#pragma once

// Tape-graph builders for the three networks. Everything here is templated on
// the scalar so the trainer (float) and the finite-difference suites (double)
// execute identical code.
//
// The SDF spatial gradient is not a separate autodiff pass: sdf_graph records
// the pullback of the trunk explicitly (final-row broadcast, activation
// derivative products, matmul against each layer weight, encoding pullback)
// as ordinary tape ops. The returned grad node therefore participates in the
// loss graph, and one backward sweep differentiates eikonal / gradient-fed
// color terms w.r.t. the parameters exactly.

#include <Eigen/Dense>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ad/tape.h"
#include "fields/net.h"

namespace sve::fields {

template <typename S>
struct BoundParams {
  std::map<std::string, ad::VarId> vars;

  ad::VarId var(const std::string& n) const {
    auto it = vars.find(n);
    if (it == vars.end()) throw std::invalid_argument("unbound param: " + n);
    return it->second;
  }
};

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> to_matrix(const ParamArray& a) {
  using RowMajorF =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajorF>(a.w.data(), a.rows, a.cols).template cast<S>();
}

template <typename S>
BoundParams<S> bind_params(ad::Tape<S>& t, const FieldParams& p, bool trainable) {
  BoundParams<S> b;
  for (const auto& a : p.arrays) {
    auto m = to_matrix<S>(a);
    b.vars[a.name] = trainable ? t.param(std::move(m)) : t.input(std::move(m));
  }
  return b;
}

// inv_std as a positive tape node: exp of the stored unconstrained scalar.
template <typename S>
ad::VarId inv_std_node(ad::Tape<S>& t, const BoundParams<S>& b) {
  return t.exp(b.var("inv_std"));
}

template <typename S>
struct PEOut {
  ad::VarId points = ad::kNoVar;            // N x 3, the raw input points
  ad::VarId enc = ad::kNoVar;               // N x (3 + 6 levels)
  std::vector<ad::VarId> sin_k, cos_k;      // per-level nodes, reused by pullbacks
};

// enc = [p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(...)]
template <typename S>
PEOut<S> pe_encode(ad::Tape<S>& t, ad::VarId points, int levels) {
  PEOut<S> out;
  out.points = points;
  std::vector<ad::VarId> parts = {points};
  for (int k = 0; k < levels; ++k) {
    S a = static_cast<S>(EIGEN_PI) * static_cast<S>(1 << k);
    ad::VarId scaled = t.scale(points, a);
    ad::VarId sk = t.sin(scaled);
    ad::VarId ck = t.cos(scaled);
    out.sin_k.push_back(sk);
    out.cos_k.push_back(ck);
    parts.push_back(sk);
    parts.push_back(ck);
  }
  out.enc = levels == 0 ? points : t.concat_cols(parts);
  return out;
}

// Pull a gradient w.r.t. the encoding back to the raw points:
// g_p = g_enc[:,0:3] + sum_k a_k (g_sin_k * cos_k - g_cos_k * sin_k).
template <typename S>
ad::VarId pe_pullback(ad::Tape<S>& t, const PEOut<S>& pe, ad::VarId g_enc) {
  ad::VarId gp = t.slice_cols(g_enc, 0, 3);
  for (size_t k = 0; k < pe.sin_k.size(); ++k) {
    S a = static_cast<S>(EIGEN_PI) * static_cast<S>(1 << k);
    ad::VarId gs = t.mul(t.slice_cols(g_enc, 3 + 6 * static_cast<int>(k), 3), pe.cos_k[k]);
    ad::VarId gc = t.mul(t.slice_cols(g_enc, 6 + 6 * static_cast<int>(k), 3), pe.sin_k[k]);
    gp = t.add(gp, t.scale(t.sub(gs, gc), a));
  }
  return gp;
}

// eps' per point (N x K'): IntegratingMLP(concat(PE(p_o), eps)) + Shortcut(eps).
// With spatial conditioning off, only the shortcut contributes, so the code is
// constant over p_o by construction.
template <typename S>
ad::VarId generate_sve_graph(ad::Tape<S>& t, const BoundParams<S>& b, const NetConfig& cfg,
                             ad::VarId eps_row, const PEOut<S>& pe_o, int n_points) {
  S beta = static_cast<S>(cfg.softplus_beta_mlp);
  ad::VarId h = t.softplus(t.linear(eps_row, b.var("g_sc_0_W"), b.var("g_sc_0_b")), beta);
  ad::VarId shortcut = t.linear(h, b.var("g_sc_1_W"), b.var("g_sc_1_b"));  // 1 x K'
  ad::VarId sc_rows = t.row_broadcast(shortcut, n_points);
  if (!cfg.spatial_condition) return sc_rows;

  ad::VarId x = t.concat_cols({pe_o.enc, t.row_broadcast(eps_row, n_points)});
  for (int l = 0; l < 7; ++l) {
    std::string p = "g_int_" + std::to_string(l) + "_";
    x = t.softplus(t.linear(x, b.var(p + "W"), b.var(p + "b")), beta);
  }
  ad::VarId integ = t.linear(x, b.var("g_int_7_W"), b.var("g_int_7_b"));
  return t.add(integ, sc_rows);
}

template <typename S>
struct DeformOut {
  ad::VarId motion = ad::kNoVar;  // N x 6: axis-angle, translation
  ad::VarId p_c = ad::kNoVar;     // N x 3
};

// p_c = R(u) p_o + T with (u, T) = TinyMLP(concat(PE(p_o), eps')).
template <typename S>
DeformOut<S> deform_graph(ad::Tape<S>& t, const BoundParams<S>& b, const NetConfig& cfg,
                          const PEOut<S>& pe_o, ad::VarId sve) {
  S beta = static_cast<S>(cfg.softplus_beta_mlp);
  ad::VarId x = t.concat_cols({pe_o.enc, sve});
  ad::VarId h = t.softplus(t.linear(x, b.var("d_0_W"), b.var("d_0_b")), beta);
  DeformOut<S> out;
  out.motion = t.linear(h, b.var("d_1_W"), b.var("d_1_b"));
  out.p_c = t.rigid_motion(pe_o.points, out.motion);
  return out;
}

template <typename S>
struct SdfOut {
  ad::VarId sdf = ad::kNoVar;      // N x 1
  ad::VarId feat = ad::kNoVar;     // N x feat_width
  ad::VarId grad_pc = ad::kNoVar;  // N x 3, d sdf / d p_c at fixed eps'
};

// SDF branch on (PE(p_c), eps'), optionally with the recorded gradient chain.
template <typename S>
SdfOut<S> sdf_graph(ad::Tape<S>& t, const BoundParams<S>& b, const NetConfig& cfg,
                    const PEOut<S>& pe_c, ad::VarId sve, bool with_grad) {
  S beta = static_cast<S>(cfg.softplus_beta_sdf);
  int L = cfg.sdf_layers;
  ad::VarId x = t.concat_cols({pe_c.enc, sve});
  std::vector<ad::VarId> zs;  // pre-activations of hidden layers
  for (int l = 0; l < L - 1; ++l) {
    std::string p = "f_sdf_" + std::to_string(l) + "_";
    ad::VarId z = t.linear(x, b.var(p + "W"), b.var(p + "b"));
    zs.push_back(z);
    x = t.softplus(z, beta);
  }
  std::string last = "f_sdf_" + std::to_string(L - 1) + "_";
  ad::VarId out = t.linear(x, b.var(last + "W"), b.var(last + "b"));

  SdfOut<S> r;
  r.sdf = t.slice_cols(out, 0, 1);
  r.feat = cfg.feat_width > 0 ? t.slice_cols(out, 1, cfg.feat_width) : ad::kNoVar;
  if (!with_grad) return r;

  int n = static_cast<int>(t.value(pe_c.points).rows());
  ad::VarId G = t.row_broadcast(t.gather_rows(b.var(last + "W"), {0}), n);
  for (int l = L - 2; l >= 0; --l) {
    std::string p = "f_sdf_" + std::to_string(l) + "_";
    G = t.mul(G, t.softplus_grad(zs[static_cast<size_t>(l)], beta));
    G = t.matmul_wt(G, b.var(p + "W"));
  }
  // G is now d sdf / d concat(enc, eps'); keep the encoding block only
  ad::VarId g_enc = t.slice_cols(G, 0, cfg.pe_dim());
  r.grad_pc = pe_pullback(t, pe_c, g_enc);
  return r;
}

// Color branch on (geo feature, view direction, SDF gradient, eps').
template <typename S>
ad::VarId color_graph(ad::Tape<S>& t, const BoundParams<S>& b, const NetConfig& cfg,
                      ad::VarId feat, ad::VarId dirs, ad::VarId grad_pc, ad::VarId sve) {
  S beta = static_cast<S>(cfg.softplus_beta_mlp);
  std::vector<ad::VarId> parts;
  if (cfg.feat_width > 0) parts.push_back(feat);
  parts.push_back(dirs);
  if (cfg.color_uses_gradient) parts.push_back(grad_pc);
  parts.push_back(sve);
  ad::VarId x = t.concat_cols(parts);
  ad::VarId h = t.softplus(t.linear(x, b.var("f_col_0_W"), b.var("f_col_0_b")), beta);
  return t.sigmoid(t.linear(h, b.var("f_col_1_W"), b.var("f_col_1_b")));
}

// Full composed per-point pipeline p_o -> (sdf, feat, grad, p_c, eps').
// dirs may be kNoVar when color is not needed.
template <typename S>
struct FieldEval {
  ad::VarId sve = ad::kNoVar;
  DeformOut<S> deform;
  SdfOut<S> sdf;
  ad::VarId color = ad::kNoVar;
};

template <typename S>
FieldEval<S> eval_field_graph(ad::Tape<S>& t, const BoundParams<S>& b, const NetConfig& cfg,
                              ad::VarId points_o, ad::VarId eps_row, ad::VarId dirs,
                              bool with_grad, bool with_color) {
  FieldEval<S> e;
  int n = static_cast<int>(t.value(points_o).rows());
  PEOut<S> pe_o = pe_encode(t, points_o, cfg.l_pe);
  e.sve = generate_sve_graph(t, b, cfg, eps_row, pe_o, n);
  e.deform = deform_graph(t, b, cfg, pe_o, e.sve);
  PEOut<S> pe_c = pe_encode(t, e.deform.p_c, cfg.l_pe);
  bool grad_needed = with_grad || (with_color && cfg.color_uses_gradient);
  e.sdf = sdf_graph(t, b, cfg, pe_c, e.sve, grad_needed);
  if (with_color) {
    if (dirs == ad::kNoVar) throw std::invalid_argument("color requested without dirs");
    e.color = color_graph(t, b, cfg, e.sdf.feat, dirs, e.sdf.grad_pc, e.sve);
  }
  return e;
}

}  // namespace sve::fields
