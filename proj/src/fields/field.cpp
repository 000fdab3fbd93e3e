#include "fields/field.h"

#include <stdexcept>

#include "ad/tape.h"
#include "fields/graph.h"

namespace sve::fields {

namespace {

void check_sve_len(const FieldParams& params, const Eigen::VectorXd& sve) {
  if (sve.size() != params.cfg.k_prime)
    throw std::invalid_argument("sve code length does not match configured k_prime");
}

Eigen::MatrixXd one_row(const Eigen::Vector3d& p) {
  Eigen::MatrixXd m(1, 3);
  m.row(0) = p;
  return m;
}

}  // namespace

Eigen::VectorXd positional_encode(const Eigen::Vector3d& p, int levels) {
  if (levels < 0) throw std::invalid_argument("levels must be >= 0");
  Eigen::VectorXd out(3 + 6 * levels);
  out.head<3>() = p;
  for (int k = 0; k < levels; ++k) {
    double a = EIGEN_PI * (1 << k);
    for (int c = 0; c < 3; ++c) {
      out(3 + 6 * k + c) = std::sin(a * p(c));
      out(6 + 6 * k + c) = std::cos(a * p(c));
    }
  }
  return out;
}

Eigen::VectorXd generate_sve(const FieldParams& params, const Eigen::VectorXd& eps,
                             const Eigen::Vector3d& p_o) {
  if (eps.size() != params.cfg.k)
    throw std::invalid_argument("expression length does not match configured k");
  ad::TapeD t;
  auto b = bind_params(t, params, false);
  auto pe = pe_encode(t, t.input(one_row(p_o)), params.cfg.l_pe);
  ad::VarId eps_row = t.input(Eigen::MatrixXd(eps.transpose()));
  ad::VarId sve = generate_sve_graph(t, b, params.cfg, eps_row, pe, 1);
  return t.value(sve).row(0).transpose();
}

std::pair<Motion6D, Eigen::Vector3d> deform(const FieldParams& params,
                                            const Eigen::Vector3d& p_o,
                                            const Eigen::VectorXd& sve) {
  check_sve_len(params, sve);
  ad::TapeD t;
  auto b = bind_params(t, params, false);
  auto pe = pe_encode(t, t.input(one_row(p_o)), params.cfg.l_pe);
  ad::VarId code = t.input(Eigen::MatrixXd(sve.transpose()));
  auto d = deform_graph(t, b, params.cfg, pe, code);
  Motion6D m;
  m.axis_angle = t.value(d.motion).row(0).head<3>().transpose();
  m.translation = t.value(d.motion).row(0).tail<3>().transpose();
  return {m, t.value(d.p_c).row(0).transpose()};
}

FieldOutput field_query(const FieldParams& params, const Eigen::Vector3d& p_c,
                        const Eigen::Vector3d& d, const Eigen::VectorXd& sve) {
  check_sve_len(params, sve);
  if (std::abs(d.norm() - 1.0) > 1e-6)
    throw std::invalid_argument("view direction must be unit length");
  ad::TapeD t;
  auto b = bind_params(t, params, false);
  auto pe = pe_encode(t, t.input(one_row(p_c)), params.cfg.l_pe);
  ad::VarId code = t.input(Eigen::MatrixXd(sve.transpose()));
  auto s = sdf_graph(t, b, params.cfg, pe, code, params.cfg.color_uses_gradient);
  ad::VarId color = color_graph(t, b, params.cfg, s.feat, t.input(one_row(d)), s.grad_pc, code);
  FieldOutput out;
  out.sdf = t.value(s.sdf)(0, 0);
  out.color = t.value(color).row(0).transpose();
  out.geo_feature = params.cfg.feat_width > 0
                        ? Eigen::VectorXd(t.value(s.feat).row(0).transpose())
                        : Eigen::VectorXd();
  return out;
}

Eigen::Vector3d field_gradient(const FieldParams& params, const Eigen::Vector3d& p_c,
                               const Eigen::VectorXd& sve) {
  check_sve_len(params, sve);
  ad::TapeD t;
  auto b = bind_params(t, params, false);
  auto pe = pe_encode(t, t.input(one_row(p_c)), params.cfg.l_pe);
  ad::VarId code = t.input(Eigen::MatrixXd(sve.transpose()));
  auto s = sdf_graph(t, b, params.cfg, pe, code, true);
  return t.value(s.grad_pc).row(0).transpose();
}

double composed_sdf(const FieldParams& params, const Eigen::Vector3d& p_o,
                    const Eigen::VectorXd& eps) {
  if (eps.size() != params.cfg.k)
    throw std::invalid_argument("expression length does not match configured k");
  ad::TapeD t;
  auto b = bind_params(t, params, false);
  ad::VarId eps_row = t.input(Eigen::MatrixXd(eps.transpose()));
  auto e = eval_field_graph(t, b, params.cfg, t.input(one_row(p_o)), eps_row, ad::kNoVar,
                            false, false);
  return t.value(e.sdf.sdf)(0, 0);
}

}  // namespace sve::fields
