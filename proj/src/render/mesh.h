#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace sve::render {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Eigen::Vector3i> faces;  // indices into vertices
};

// Batched field evaluation: rows of the input are points, result is one value
// per row.
using SdfBatchFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

// Marching cubes over a regular grid spanning [lo, hi]^3 with `resolution`
// cells per axis. Vertices on shared edges are welded. A grid with no sign
// change yields an empty mesh.
TriangleMesh extract_mesh(const SdfBatchFn& sdf, double lo, double hi, int resolution);

// Plain ASCII OBJ: v and f lines only.
void write_obj(const std::string& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::string& path);

}  // namespace sve::render
