#pragma once

// Double-precision single-point wrappers over the tape graph, for callers that
// want plain values (tests, mesh extraction, diagnostics). Batch work goes
// through graph.h directly.

#include <Eigen/Dense>

#include "fields/net.h"

namespace sve::fields {

Eigen::VectorXd positional_encode(const Eigen::Vector3d& p, int levels);

// eps' = IntegratingMLP(PE(p_o), eps) + Shortcut(eps)
Eigen::VectorXd generate_sve(const FieldParams& params, const Eigen::VectorXd& eps,
                             const Eigen::Vector3d& p_o);

struct Motion6D {
  Eigen::Vector3d axis_angle = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

std::pair<Motion6D, Eigen::Vector3d> deform(const FieldParams& params,
                                            const Eigen::Vector3d& p_o,
                                            const Eigen::VectorXd& sve);

struct FieldOutput {
  double sdf = 0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  Eigen::VectorXd geo_feature;
};

// Canonical-space field query; d must be unit length.
FieldOutput field_query(const FieldParams& params, const Eigen::Vector3d& p_c,
                        const Eigen::Vector3d& d, const Eigen::VectorXd& sve);

// d sdf / d p_c at fixed eps', exact (recorded chain, not finite differences).
Eigen::Vector3d field_gradient(const FieldParams& params, const Eigen::Vector3d& p_c,
                               const Eigen::VectorXd& sve);

// Composed observation-space SDF: p_o -> sve -> deform -> sdf. Used by mesh
// extraction and the oracle cross-checks.
double composed_sdf(const FieldParams& params, const Eigen::Vector3d& p_o,
                    const Eigen::VectorXd& eps);

}  // namespace sve::fields
