#ifndef NRR_GRAPH_BUILD_HPP
#define NRR_GRAPH_BUILD_HPP

#include <Eigen/Sparse>

#include "nrr/core.hpp"

namespace nrr {

using NodeTransform = Eigen::Matrix<double, 4, 3>;  // rows: 3x3 linear part, then translation

inline NodeTransform identityNodeTransform() {
  NodeTransform x;
  x.topRows<3>() = Mat3::Identity();
  x.bottomRows<1>().setZero();
  return x;
}

/// Deformed position of g under a 4x3 node transform: (g^T, 1) * X.
inline Vec3 applyNodeTransform(const NodeTransform& x, const Vec3& g) {
  return x.topRows<3>().transpose() * g + x.bottomRows<1>().transpose();
}

/// Downsampled triangulated node set with per-node affine transforms.
struct DeformationGraph {
  std::vector<Vec3> nodes;
  std::vector<Vec3> nodeNormals;
  std::vector<Rgb> nodeColors;
  std::vector<Eigen::Vector3i> faces;
  std::vector<std::pair<int, int>> edges;  // unique, first < second, sorted
  std::vector<NodeTransform> transforms;
  int frameId = -1;

  size_t nodeCount() const { return nodes.size(); }
  Vec3 deformedNode(int i) const { return applyNodeTransform(transforms[i], nodes[i]); }

  /// The graph as a mesh over its current (deformed) node positions.
  TriangleMesh toMesh(bool deformed = false) const;
};

/// One output point per occupied voxel: member centroid, averaged renormalized
/// normals, averaged colors. Output order follows first occupancy.
PointCloud voxelDownsample(const PointCloud& cloud, double cellSize);

/// Projective greedy triangulation: per-vertex local Delaunay fans on the
/// tangent plane, a triangle kept when all three member fans agree and every
/// edge respects min(searchRadius, mu * localSpacing). Leaves holes where
/// density is insufficient.
TriangleMesh greedyTriangulate(const PointCloud& cloud, double searchRadius, double mu);

/// Keep only the largest connected component (ties broken towards the
/// component holding the lowest original vertex index); indices compacted.
TriangleMesh pruneComponents(const TriangleMesh& mesh);

/// Unique undirected edges of a mesh, (min,max) pairs in sorted order.
std::vector<std::pair<int, int>> uniqueEdges(const TriangleMesh& mesh);

/// Node-arc incidence matrix: one row per unique edge, -1 at the lower node
/// index and +1 at the higher.
Eigen::SparseMatrix<double> buildIncidence(const TriangleMesh& mesh);
Eigen::SparseMatrix<double> buildIncidence(const std::vector<std::pair<int, int>>& edges,
                                           int nodeCount);

/// Full graph construction for one frame cloud (already in its target
/// coordinate system): downsample, triangulate, prune, derive edges.
DeformationGraph buildGraph(const PointCloud& cloud, double cellSize,
                            double searchRadius, double mu, int frameId = -1);

}  // namespace nrr

#endif
