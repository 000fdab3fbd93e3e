#include "render/mesh.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace sve::render {

namespace {

// Standard marching cubes case tables (Bourke layout: vertex 0 at the cell
// origin, 1..3 around the bottom face, 4..7 the top face).
#include "render/mc_tables.inc"

const int kEdgeVerts[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                               {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// corner offsets in (x, y, z) grid steps, matching the tables
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                           {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};

}  // namespace

TriangleMesh extract_mesh(const SdfBatchFn& sdf, double lo, double hi, int resolution) {
  if (resolution < 16) throw std::invalid_argument("mesh resolution below 16");
  int n = resolution + 1;  // corners per axis
  double step = (hi - lo) / resolution;

  Eigen::MatrixXd pts(static_cast<Eigen::Index>(n) * n * n, 3);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Eigen::Index i = (static_cast<Eigen::Index>(z) * n + y) * n + x;
        pts.row(i) << lo + x * step, lo + y * step, lo + z * step;
      }
  Eigen::VectorXd vals = sdf(pts);
  if (vals.size() != pts.rows()) throw std::runtime_error("sdf batch size mismatch");

  auto corner_id = [n](int x, int y, int z) {
    return (static_cast<int64_t>(z) * n + y) * n + x;
  };

  TriangleMesh mesh;
  std::unordered_map<uint64_t, int> edge_vertex;  // welds shared edge crossings

  auto vertex_on_edge = [&](int64_t ia, int64_t ib) {
    int64_t a = std::min(ia, ib), b = std::max(ia, ib);
    uint64_t key = static_cast<uint64_t>(a) * static_cast<uint64_t>(n) * n * n +
                   static_cast<uint64_t>(b);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double va = vals(a), vb = vals(b);
    double t = (va - vb) != 0 ? va / (va - vb) : 0.5;
    t = std::clamp(t, 0.0, 1.0);
    Eigen::Vector3d p = pts.row(a) + t * (pts.row(b) - pts.row(a));
    int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z < resolution; ++z)
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x) {
        int64_t cid[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          cid[c] = corner_id(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]);
          if (vals(cid[c]) < 0) cube |= 1 << c;
        }
        if (kEdgeTable[cube] == 0) continue;
        int ev[12];
        for (int e = 0; e < 12; ++e)
          if (kEdgeTable[cube] & (1 << e))
            ev[e] = vertex_on_edge(cid[kEdgeVerts[e][0]], cid[kEdgeVerts[e][1]]);
        for (int i = 0; kTriTable[cube][i] != -1; i += 3) {
          int a = ev[kTriTable[cube][i]];
          int b = ev[kTriTable[cube][i + 1]];
          int c = ev[kTriTable[cube][i + 2]];
          if (a == b || b == c || a == c) continue;  // collapsed crossing
          mesh.faces.emplace_back(a, b, c);
        }
      }
  return mesh;
}

void write_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    f << buf;
  }
  for (const auto& t : mesh.faces)
    f << "f " << t.x() + 1 << " " << t.y() + 1 << " " << t.z() + 1 << "\n";
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Eigen::Vector3d v;
      ss >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      Eigen::Vector3i t;
      ss >> t.x() >> t.y() >> t.z();
      mesh.faces.push_back(t.array() - 1);
    }
  }
  return mesh;
}

}  // namespace sve::render
