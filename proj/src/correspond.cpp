#include "nrr/correspond.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nrr {

Vec3 projectToFacePlane(const Vec3& g, const Vec3& f1, const Vec3& f2, const Vec3& f3) {
  Vec3 nf = (f2 - f1).cross(f3 - f1);
  double norm = nf.norm();
  if (norm < 1e-30) return g;
  nf /= norm;
  return g - (g - f1).dot(nf) * nf;
}

TrianglePoint closestPointOnTriangle(const Vec3& g, const Vec3& f1, const Vec3& f2,
                                     const Vec3& f3) {
  // Voronoi-region walk (Ericson). Regions map back to interior/edge/vertex.
  TrianglePoint out;
  Vec3 ab = f2 - f1, ac = f3 - f1, ap = g - f1;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) {
    out.point = f1;
    out.region = TriangleRegion::vertex;
    out.vertexIndex = 0;
    out.barycentric = Vec3(1, 0, 0);
    return out;
  }
  Vec3 bp = g - f2;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) {
    out.point = f2;
    out.region = TriangleRegion::vertex;
    out.vertexIndex = 1;
    out.barycentric = Vec3(0, 1, 0);
    return out;
  }
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    out.point = f1 + v * ab;
    out.region = TriangleRegion::edge;
    out.edgeIndex = 0;
    out.barycentric = Vec3(1 - v, v, 0);
    return out;
  }
  Vec3 cp = g - f3;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) {
    out.point = f3;
    out.region = TriangleRegion::vertex;
    out.vertexIndex = 2;
    out.barycentric = Vec3(0, 0, 1);
    return out;
  }
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    out.point = f1 + w * ac;
    out.region = TriangleRegion::edge;
    out.edgeIndex = 2;
    out.barycentric = Vec3(1 - w, 0, w);
    return out;
  }
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    out.point = f2 + w * (f3 - f2);
    out.region = TriangleRegion::edge;
    out.edgeIndex = 1;
    out.barycentric = Vec3(0, 1 - w, w);
    return out;
  }
  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  out.point = f1 + ab * v + ac * w;
  out.region = TriangleRegion::interior;
  out.barycentric = Vec3(1 - v - w, v, w);
  return out;
}

void TriangleBvh::build(const TriangleMesh& mesh) {
  mesh_ = &mesh;
  faces_.clear();
  nodes_.clear();
  std::vector<Vec3> centroids;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]],
               &c = mesh.vertices[tri[2]];
    double area = 0.5 * (b - a).cross(c - a).norm();
    if (area <= 1e-12) continue;  // degenerate faces are skipped in queries
    faces_.push_back(int(f));
  }
  centroids.resize(mesh.faces.size());
  for (int f : faces_) {
    const auto& tri = mesh.faces[f];
    centroids[f] =
        (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
  }
  if (!faces_.empty()) buildRange(0, int(faces_.size()), centroids);
}

int TriangleBvh::buildRange(int begin, int end, const std::vector<Vec3>& centroids) {
  int idx = int(nodes_.size());
  nodes_.emplace_back();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    const auto& tri = mesh_->faces[faces_[i]];
    for (int k = 0; k < 3; ++k) {
      lo = lo.cwiseMin(mesh_->vertices[tri[k]]);
      hi = hi.cwiseMax(mesh_->vertices[tri[k]]);
    }
  }
  nodes_[idx].lo = lo;
  nodes_[idx].hi = hi;
  if (end - begin <= 4) {
    nodes_[idx].begin = begin;
    nodes_[idx].end = end;
    return idx;
  }
  Vec3 ext = hi - lo;
  int axis = 0;
  if (ext.y() > ext.x()) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  int mid = (begin + end) / 2;
  std::nth_element(faces_.begin() + begin, faces_.begin() + mid, faces_.begin() + end,
                   [&](int a, int b) { return centroids[a][axis] < centroids[b][axis]; });
  int l = buildRange(begin, mid, centroids);
  int r = buildRange(mid, end, centroids);
  nodes_[idx].left = l;
  nodes_[idx].right = r;
  nodes_[idx].begin = nodes_[idx].end = 0;
  return idx;
}

namespace {
double boxDistSq(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d = 0;
  for (int k = 0; k < 3; ++k) {
    double v = std::max({lo[k] - q[k], 0.0, q[k] - hi[k]});
    d += v * v;
  }
  return d;
}
}  // namespace

TriangleBvh::Hit TriangleBvh::nearest(const Vec3& q) const {
  Hit best;
  if (faces_.empty()) return best;
  double bestSq = std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, double>> stack{{0, boxDistSq(q, nodes_[0].lo, nodes_[0].hi)}};
  while (!stack.empty()) {
    auto [ni, minSq] = stack.back();
    stack.pop_back();
    if (minSq > bestSq) continue;
    const Node& n = nodes_[ni];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int f = faces_[i];
        const auto& tri = mesh_->faces[f];
        TrianglePoint tp = closestPointOnTriangle(q, mesh_->vertices[tri[0]],
                                                  mesh_->vertices[tri[1]],
                                                  mesh_->vertices[tri[2]]);
        double dSq = (tp.point - q).squaredNorm();
        if (dSq < bestSq || (dSq == bestSq && f < best.face)) {
          bestSq = dSq;
          best.face = f;
          best.tp = tp;
          best.distance = std::sqrt(dSq);
        }
      }
      continue;
    }
    double dl = boxDistSq(q, nodes_[n.left].lo, nodes_[n.left].hi);
    double dr = boxDistSq(q, nodes_[n.right].lo, nodes_[n.right].hi);
    if (dl < dr) {
      stack.push_back({n.right, dr});
      stack.push_back({n.left, dl});
    } else {
      stack.push_back({n.left, dl});
      stack.push_back({n.right, dr});
    }
  }
  return best;
}

void SpatialIndex::build(const TriangleMesh& mesh) {
  mesh_ = &mesh;
  vertexTree_.build(mesh.vertices);
  bvh_.build(mesh);
  borderEdges_.clear();
  borderVertices_.clear();
  std::map<std::pair<int, int>, int> edgeCount;
  for (const auto& f : mesh.faces) {
    edgeCount[std::minmax(f[0], f[1])]++;
    edgeCount[std::minmax(f[1], f[2])]++;
    edgeCount[std::minmax(f[0], f[2])]++;
  }
  for (const auto& [e, c] : edgeCount) {
    if (c == 1) {  // single edge: part of exactly one triangle
      borderEdges_.insert(e);
      borderVertices_.insert(e.first);
      borderVertices_.insert(e.second);
    }
  }
}

Correspondence findCorrespondence(int sourceIndex, const Vec3& g, const Vec3& gNormal,
                                  const SpatialIndex& target, CorrespondenceMode mode,
                                  const CorrespondenceParams& params) {
  Correspondence c;
  c.sourceIndex = sourceIndex;
  if (target.empty()) return c;  // rejected with reason distance

  bool onBorder = false;
  if (mode == CorrespondenceMode::closestPoint) {
    double dSq;
    int v = target.vertexTree().nearest(g, &dSq);
    if (v < 0) return c;
    c.targetPoint = target.mesh().vertices[v];
    c.distance = std::sqrt(dSq);
    c.targetNormal = target.mesh().vertexNormals.empty()
                         ? Vec3::Zero()
                         : target.mesh().vertexNormals[v];
    onBorder = target.isBorderVertex(v);
  } else {
    TriangleBvh::Hit hit = target.triangleBvh().nearest(g);
    if (hit.face < 0) return c;
    c.targetPoint = hit.tp.point;
    c.distance = hit.distance;
    const auto& tri = target.mesh().faces[hit.face];
    if (!target.mesh().vertexNormals.empty()) {
      Vec3 n = hit.tp.barycentric[0] * target.mesh().vertexNormals[tri[0]] +
               hit.tp.barycentric[1] * target.mesh().vertexNormals[tri[1]] +
               hit.tp.barycentric[2] * target.mesh().vertexNormals[tri[2]];
      double nn = n.norm();
      c.targetNormal = nn > 1e-12 ? Vec3(n / nn) : Vec3::Zero();
    }
    if (hit.tp.region == TriangleRegion::edge) {
      int e = hit.tp.edgeIndex;
      onBorder = target.isBorderEdge(tri[e], tri[(e + 1) % 3]);
    } else if (hit.tp.region == TriangleRegion::vertex) {
      onBorder = target.isBorderVertex(tri[hit.tp.vertexIndex]);
    }
  }

  // conjunctive rejection, reported in the fixed order distance -> border -> normal
  if (c.distance >= params.maxDistance) {
    c.rejectionReason = RejectionReason::distance;
    return c;
  }
  if (onBorder) {
    c.rejectionReason = RejectionReason::border;
    return c;
  }
  double cosAngle = gNormal.normalized().dot(c.targetNormal);
  double limit = std::cos(params.maxNormalAngleDeg * M_PI / 180.0);
  if (!(cosAngle > limit)) {
    c.rejectionReason = RejectionReason::normal;
    return c;
  }
  c.rejectionReason = RejectionReason::none;
  c.weight = 1.0;
  return c;
}

double shortestVsClosestGap(const Vec3& g, const SpatialIndex& target) {
  double dSq;
  target.vertexTree().nearest(g, &dSq);
  TriangleBvh::Hit hit = target.triangleBvh().nearest(g);
  return std::sqrt(dSq) - hit.distance;
}

}  // namespace nrr
