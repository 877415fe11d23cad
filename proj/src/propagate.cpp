#include "nrr/propagate.hpp"

#include <atomic>
#include <cstdio>

namespace nrr {

NodeInfluence computeInfluence(const Vec3& v, const KdTree& nodeTree, int m) {
  if (int(nodeTree.size()) < m + 1)
    throw std::runtime_error("computeInfluence: graph needs at least M+1 nodes");
  auto nb = nodeTree.kNearest(v, m + 1);
  NodeInfluence infl;
  infl.dMax = (nodeTree.point(nb.back()) - v).norm();
  infl.nodeIndices.assign(nb.begin(), nb.end() - 1);
  infl.weights.resize(infl.nodeIndices.size());
  double zeta = 0;
  for (size_t k = 0; k < infl.nodeIndices.size(); ++k) {
    double d = (nodeTree.point(infl.nodeIndices[k]) - v).norm();
    double w = infl.dMax > 0 ? 1.0 - d / infl.dMax : 1.0;
    infl.weights[k] = w * w;
    zeta += infl.weights[k];
  }
  if (zeta <= 0) {
    // equidistant beyond d_max cannot happen with the (M+1)-th convention,
    // but guard with uniform weights anyway
    for (auto& w : infl.weights) w = 1.0 / double(infl.weights.size());
  } else {
    for (auto& w : infl.weights) w /= zeta;
  }
  return infl;
}

NodeInfluence computeInfluence(const Vec3& v, const DeformationGraph& graph, int m) {
  KdTree tree(graph.nodes);
  return computeInfluence(v, tree, m);
}

void deformPoint(const Vec3& v, const Vec3& n, const DeformationGraph& graph,
                 const NodeInfluence& infl, Vec3& vOut, Vec3& nOut) {
  static std::atomic<bool> warnedSingular{false};
  vOut = Vec3::Zero();
  Vec3 nAccum = Vec3::Zero();
  for (size_t k = 0; k < infl.nodeIndices.size(); ++k) {
    int j = infl.nodeIndices[k];
    double w = infl.weights[k];
    const Vec3& g = graph.nodes[j];
    Mat3 rBar = graph.transforms[j].topRows<3>().transpose();
    vOut += w * (rBar * (v - g) + graph.deformedNode(j));
    if (std::abs(rBar.determinant()) > 1e-12) {
      nAccum += w * (rBar.inverse().transpose() * n);
    } else {
      if (!warnedSingular.exchange(true))
        std::fprintf(stderr,
                     "[propagate] warning: singular node linear part, using it "
                     "directly for normals\n");
      nAccum += w * (rBar * n);
    }
  }
  double nn = nAccum.norm();
  nOut = nn > 1e-12 ? Vec3(nAccum / nn) : n;
}

Vec3 deformPosition(const Vec3& v, const DeformationGraph& graph,
                    const NodeInfluence& infl) {
  Vec3 vOut, nOut;
  deformPoint(v, Vec3(0, 0, 1), graph, infl, vOut, nOut);
  return vOut;
}

PointCloud deformCloud(const PointCloud& cloud, const DeformationGraph& graph, int m) {
  PointCloud out = cloud;
  if (cloud.empty()) return out;
  KdTree tree(graph.nodes);
#pragma omp parallel for schedule(dynamic, 256)
  for (long i = 0; i < long(cloud.size()); ++i) {
    NodeInfluence infl = computeInfluence(cloud.points[i], tree, m);
    deformPoint(cloud.points[i], cloud.normals[i], graph, infl, out.points[i],
                out.normals[i]);
  }
  return out;
}

}  // namespace nrr
