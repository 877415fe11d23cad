#ifndef NRR_PROPAGATE_HPP
#define NRR_PROPAGATE_HPP

#include "nrr/graph_build.hpp"
#include "nrr/spatial.hpp"

namespace nrr {

/// Influence of the M nearest graph nodes on one query point. Weights are
/// (1 - d/d_max)^2 with d_max the distance to the (M+1)-th nearest node,
/// normalized to sum to one.
struct NodeInfluence {
  std::vector<int> nodeIndices;
  std::vector<double> weights;
  double dMax = 0;
};

NodeInfluence computeInfluence(const Vec3& v, const KdTree& nodeTree, int m);
NodeInfluence computeInfluence(const Vec3& v, const DeformationGraph& graph, int m);

/// Blended locally-affine deformation of a point and its normal. The normal
/// uses the inverse-transpose of each node's linear part, falling back to the
/// linear part itself when singular.
void deformPoint(const Vec3& v, const Vec3& n, const DeformationGraph& graph,
                 const NodeInfluence& infl, Vec3& vOut, Vec3& nOut);

Vec3 deformPosition(const Vec3& v, const DeformationGraph& graph,
                    const NodeInfluence& infl);

/// Deform a full-resolution cloud through the graph's transforms. Colors are
/// unchanged; normals renormalized.
PointCloud deformCloud(const PointCloud& cloud, const DeformationGraph& graph,
                       int m = 4);

}  // namespace nrr

#endif
