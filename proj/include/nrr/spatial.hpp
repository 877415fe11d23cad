#ifndef NRR_SPATIAL_HPP
#define NRR_SPATIAL_HPP

#include <limits>
#include <vector>

#include "nrr/core.hpp"

namespace nrr {

/// Exact kd-tree over a fixed set of 3D points. Queries never miss: results
/// are identical to a linear scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& points) { build(points); }

  void build(const std::vector<Vec3>& points);
  bool empty() const { return nodes_.empty(); }
  size_t size() const { return points_.size(); }

  /// Index of the nearest point, or -1 when empty.
  int nearest(const Vec3& q, double* outDistSq = nullptr) const;

  /// Indices of the k nearest points, sorted by ascending distance.
  std::vector<int> kNearest(const Vec3& q, int k) const;

  /// All indices within radius, sorted by ascending distance.
  std::vector<int> radiusSearch(const Vec3& q, double radius) const;

  const Vec3& point(int i) const { return points_[i]; }

 private:
  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
    int axis = 0;
    double split = 0;
  };
  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;

  int buildRange(int begin, int end, int depth);
};

}  // namespace nrr

#endif
