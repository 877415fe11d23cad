#include "nrr/spatial.hpp"

#include <algorithm>
#include <queue>

namespace nrr {

namespace {
constexpr int kLeafSize = 16;
}

void KdTree::build(const std::vector<Vec3>& points) {
  points_ = points;
  order_.resize(points.size());
  for (size_t i = 0; i < points.size(); ++i) order_[i] = int(i);
  nodes_.clear();
  if (!points.empty()) buildRange(0, int(points.size()), 0);
}

int KdTree::buildRange(int begin, int end, int depth) {
  int idx = int(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[idx].begin = begin;
    nodes_[idx].end = end;
    return idx;
  }
  int axis = depth % 3;
  int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  double split = points_[order_[mid]][axis];
  nodes_[idx].axis = axis;
  nodes_[idx].split = split;
  nodes_[idx].begin = nodes_[idx].end = 0;
  int l = buildRange(begin, mid, depth + 1);
  int r = buildRange(mid, end, depth + 1);
  nodes_[idx].left = l;
  nodes_[idx].right = r;
  return idx;
}

int KdTree::nearest(const Vec3& q, double* outDistSq) const {
  if (empty()) return -1;
  int best = -1;
  double bestSq = std::numeric_limits<double>::infinity();
  // iterative DFS with pruning
  std::vector<std::pair<int, double>> stack;  // node, min dist sq to region
  stack.push_back({0, 0.0});
  while (!stack.empty()) {
    auto [ni, minSq] = stack.back();
    stack.pop_back();
    if (minSq >= bestSq) continue;
    const Node& n = nodes_[ni];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int pi = order_[i];
        double d = (points_[pi] - q).squaredNorm();
        if (d < bestSq || (d == bestSq && pi < best)) {
          bestSq = d;
          best = pi;
          if (outDistSq) *outDistSq = d;
        }
      }
      continue;
    }
    double delta = q[n.axis] - n.split;
    int nearChild = delta <= 0 ? n.left : n.right;
    int farChild = delta <= 0 ? n.right : n.left;
    stack.push_back({farChild, std::max(minSq, delta * delta)});
    stack.push_back({nearChild, minSq});
  }
  if (outDistSq) *outDistSq = bestSq;
  return best;
}

std::vector<int> KdTree::kNearest(const Vec3& q, int k) const {
  std::vector<std::pair<double, int>> all;
  all.reserve(points_.size());
  // heap-based pruned search
  std::priority_queue<std::pair<double, int>> heap;  // max-heap of (distSq, idx)
  std::vector<std::pair<int, double>> stack;
  if (!empty()) stack.push_back({0, 0.0});
  while (!stack.empty()) {
    auto [ni, minSq] = stack.back();
    stack.pop_back();
    if (int(heap.size()) == k && minSq >= heap.top().first) continue;
    const Node& n = nodes_[ni];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int pi = order_[i];
        double d = (points_[pi] - q).squaredNorm();
        if (int(heap.size()) < k) {
          heap.push({d, pi});
        } else if (d < heap.top().first) {
          heap.pop();
          heap.push({d, pi});
        }
      }
      continue;
    }
    double delta = q[n.axis] - n.split;
    int nearChild = delta <= 0 ? n.left : n.right;
    int farChild = delta <= 0 ? n.right : n.left;
    stack.push_back({farChild, std::max(minSq, delta * delta)});
    stack.push_back({nearChild, minSq});
  }
  std::vector<std::pair<double, int>> res;
  while (!heap.empty()) {
    res.push_back(heap.top());
    heap.pop();
  }
  std::sort(res.begin(), res.end());
  std::vector<int> out;
  out.reserve(res.size());
  for (auto& [d, i] : res) out.push_back(i);
  return out;
}

std::vector<int> KdTree::radiusSearch(const Vec3& q, double radius) const {
  std::vector<std::pair<double, int>> found;
  double rSq = radius * radius;
  std::vector<std::pair<int, double>> stack;
  if (!empty()) stack.push_back({0, 0.0});
  while (!stack.empty()) {
    auto [ni, minSq] = stack.back();
    stack.pop_back();
    if (minSq > rSq) continue;
    const Node& n = nodes_[ni];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int pi = order_[i];
        double d = (points_[pi] - q).squaredNorm();
        if (d <= rSq) found.push_back({d, pi});
      }
      continue;
    }
    double delta = q[n.axis] - n.split;
    int nearChild = delta <= 0 ? n.left : n.right;
    int farChild = delta <= 0 ? n.right : n.left;
    stack.push_back({farChild, std::max(minSq, delta * delta)});
    stack.push_back({nearChild, minSq});
  }
  std::sort(found.begin(), found.end());
  std::vector<int> out;
  out.reserve(found.size());
  for (auto& [d, i] : found) out.push_back(i);
  return out;
}

}  // namespace nrr
