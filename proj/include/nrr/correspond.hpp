#ifndef NRR_CORRESPOND_HPP
#define NRR_CORRESPOND_HPP

#include <set>

#include "nrr/core.hpp"
#include "nrr/spatial.hpp"

namespace nrr {

enum class RejectionReason { none, distance, border, normal };
enum class CorrespondenceMode { closestPoint, shortestDistance };
enum class TriangleRegion { interior, edge, vertex };

struct Correspondence {
  int sourceIndex = -1;
  Vec3 targetPoint = Vec3::Zero();
  Vec3 targetNormal = Vec3::Zero();
  double distance = std::numeric_limits<double>::infinity();
  double weight = 0;
  RejectionReason rejectionReason = RejectionReason::distance;
};

using CorrespondenceSet = std::vector<Correspondence>;

struct CorrespondenceParams {
  double maxDistance = 0.02;        // meters
  double maxNormalAngleDeg = 45.0;  // degrees
};

/// Orthogonal projection of g onto the supporting plane of a face.
Vec3 projectToFacePlane(const Vec3& g, const Vec3& f1, const Vec3& f2, const Vec3& f3);

struct TrianglePoint {
  Vec3 point;
  TriangleRegion region;
  int edgeIndex = -1;    // region==edge: 0:(f1,f2) 1:(f2,f3) 2:(f3,f1)
  int vertexIndex = -1;  // region==vertex: 0..2
  Vec3 barycentric;      // weights over (f1,f2,f3)
};

/// Globally nearest point of the closed triangle to g.
TrianglePoint closestPointOnTriangle(const Vec3& g, const Vec3& f1, const Vec3& f2,
                                     const Vec3& f3);

/// Exact nearest-triangle index over a target mesh. Degenerate faces
/// (area <= 1e-12 m^2) are skipped in queries.
class TriangleBvh {
 public:
  TriangleBvh() = default;
  explicit TriangleBvh(const TriangleMesh& mesh) { build(mesh); }
  void build(const TriangleMesh& mesh);

  struct Hit {
    int face = -1;
    TrianglePoint tp;
    double distance = std::numeric_limits<double>::infinity();
  };
  Hit nearest(const Vec3& q) const;
  bool empty() const { return faces_.empty(); }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  const TriangleMesh* mesh_ = nullptr;
  std::vector<int> faces_;  // usable (non-degenerate) face indices, leaf-ordered
  std::vector<Node> nodes_;
  int buildRange(int begin, int end, const std::vector<Vec3>& centroids);
};

/// Read-only query structure over one target mesh: vertex kd-tree for
/// closest-point mode, triangle hierarchy for shortest-distance mode, border
/// edge/vertex sets for the boundary rejection test.
class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(const TriangleMesh& mesh) { build(mesh); }
  void build(const TriangleMesh& mesh);

  const TriangleMesh& mesh() const { return *mesh_; }
  bool empty() const { return !mesh_ || mesh_->vertices.empty(); }

  bool isBorderEdge(int a, int b) const {
    return borderEdges_.count(std::minmax(a, b)) > 0;
  }
  bool isBorderVertex(int v) const { return borderVertices_.count(v) > 0; }

  const KdTree& vertexTree() const { return vertexTree_; }
  const TriangleBvh& triangleBvh() const { return bvh_; }

 private:
  const TriangleMesh* mesh_ = nullptr;
  KdTree vertexTree_;
  TriangleBvh bvh_;
  std::set<std::pair<int, int>> borderEdges_;
  std::set<int> borderVertices_;
};

/// One correspondence for a source node, with the conjunctive rejection tests
/// reported in the fixed order distance -> border -> normal.
Correspondence findCorrespondence(int sourceIndex, const Vec3& g, const Vec3& gNormal,
                                  const SpatialIndex& target, CorrespondenceMode mode,
                                  const CorrespondenceParams& params = {});

/// distance(closestPoint) - distance(shortestDistance); non-negative.
double shortestVsClosestGap(const Vec3& g, const SpatialIndex& target);

}  // namespace nrr

#endif
