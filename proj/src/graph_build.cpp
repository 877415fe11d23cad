#include "nrr/graph_build.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "nrr/spatial.hpp"

namespace nrr {

TriangleMesh DeformationGraph::toMesh(bool deformed) const {
  TriangleMesh m;
  m.vertices.reserve(nodes.size());
  if (deformed) {
    for (size_t i = 0; i < nodes.size(); ++i) m.vertices.push_back(deformedNode(int(i)));
    m.vertexNormals.reserve(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
      Mat3 lin = transforms[i].topRows<3>().transpose();
      Vec3 n = lin.determinant() != 0
                   ? Vec3(lin.inverse().transpose() * nodeNormals[i])
                   : Vec3(lin * nodeNormals[i]);
      double nn = n.norm();
      m.vertexNormals.push_back(nn > 0 ? Vec3(n / nn) : nodeNormals[i]);
    }
  } else {
    m.vertices = nodes;
    m.vertexNormals = nodeNormals;
  }
  m.faces = faces;
  m.vertexColors = nodeColors;
  return m;
}

PointCloud voxelDownsample(const PointCloud& cloud, double cellSize) {
  if (cellSize <= 0) throw std::runtime_error("voxelDownsample: cellSize must be > 0");
  PointCloud out;
  if (cloud.empty()) return out;

  struct Accum {
    Vec3 p = Vec3::Zero();
    Vec3 n = Vec3::Zero();
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    int count = 0;
  };
  auto key = [&](const Vec3& p) {
    return std::tuple<long, long, long>(long(std::floor(p.x() / cellSize)),
                                        long(std::floor(p.y() / cellSize)),
                                        long(std::floor(p.z() / cellSize)));
  };
  std::map<std::tuple<long, long, long>, int> cellIndex;
  std::vector<Accum> cells;
  std::vector<int> order;  // first-occupancy order of cells
  for (size_t i = 0; i < cloud.size(); ++i) {
    auto k = key(cloud.points[i]);
    auto [it, inserted] = cellIndex.try_emplace(k, int(cells.size()));
    if (inserted) {
      cells.emplace_back();
      order.push_back(it->second);
    }
    Accum& a = cells[it->second];
    a.p += cloud.points[i];
    a.n += cloud.normals[i];
    a.c += cloud.colors[i].cast<double>();
    a.count++;
  }
  for (int ci : order) {
    const Accum& a = cells[ci];
    out.points.push_back(a.p / a.count);
    Vec3 n = a.n;
    double nn = n.norm();
    out.normals.push_back(nn > 1e-12 ? Vec3(n / nn) : Vec3(0, 0, 1));
    Eigen::Vector3d c = a.c / a.count;
    out.colors.push_back(Rgb(std::uint8_t(std::lround(c[0])),
                             std::uint8_t(std::lround(c[1])),
                             std::uint8_t(std::lround(c[2]))));
  }
  return out;
}

namespace {

// Deterministic sub-nanometer jitter; breaks cocircular ties so the local
// Delaunay fans agree between vertices.
Vec3 indexJitter(int i) {
  std::uint64_t h = std::uint64_t(i) * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull;
  auto comp = [&](int s) {
    return (double(((h >> s) & 0xFFFFF)) / double(0xFFFFF) - 0.5) * 2e-9;
  };
  return Vec3(comp(0), comp(20), comp(40));
}

// > 0 when d is strictly inside the circumcircle of ccw triangle (a,b,c)
double inCircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  Eigen::Matrix3d m;
  Eigen::Vector2d A = a - d, B = b - d, C = c - d;
  m << A.x(), A.y(), A.squaredNorm(), B.x(), B.y(), B.squaredNorm(), C.x(), C.y(),
      C.squaredNorm();
  return m.determinant();
}

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace

TriangleMesh greedyTriangulate(const PointCloud& cloud, double searchRadius, double mu) {
  TriangleMesh mesh;
  const int n = int(cloud.size());
  if (n < 3) return mesh;
  mesh.vertices = cloud.points;
  mesh.vertexNormals = cloud.normals;
  mesh.vertexColors = cloud.colors;

  std::vector<Vec3> jittered(cloud.points);
  for (int i = 0; i < n; ++i) jittered[i] += indexJitter(i);

  KdTree tree(jittered);

  // local spacing = mean distance to the 6 nearest neighbors
  std::vector<double> cutoff(n);
#pragma omp parallel for
  for (int i = 0; i < n; ++i) {
    auto nb = tree.kNearest(jittered[i], std::min(7, n));
    double sum = 0;
    int cnt = 0;
    for (int j : nb) {
      if (j == i) continue;
      sum += (jittered[j] - jittered[i]).norm();
      ++cnt;
    }
    double spacing = cnt > 0 ? sum / cnt : searchRadius;
    cutoff[i] = std::min(searchRadius, mu * spacing);
  }

  // per-vertex Delaunay fan votes
  std::vector<std::vector<std::array<int, 3>>> fanTriangles(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (int vi = 0; vi < n; ++vi) {
    auto nbAll = tree.radiusSearch(jittered[vi], cutoff[vi]);
    std::vector<int> nb;
    for (int j : nbAll)
      if (j != vi) nb.push_back(j);
    if (nb.size() < 2) continue;
    if (nb.size() > 48) nb.resize(48);

    // tangent frame from the vertex normal
    Vec3 nv = cloud.normals[vi];
    if (nv.norm() < 1e-9) nv = Vec3(0, 0, 1);
    nv.normalize();
    Vec3 e1 = std::abs(nv.x()) < 0.9 ? nv.cross(Vec3(1, 0, 0)) : nv.cross(Vec3(0, 1, 0));
    e1.normalize();
    Vec3 e2 = nv.cross(e1);

    std::vector<Eigen::Vector2d> uv(nb.size());
    for (size_t k = 0; k < nb.size(); ++k) {
      Vec3 d = jittered[nb[k]] - jittered[vi];
      uv[k] = Eigen::Vector2d(d.dot(e1), d.dot(e2));
    }
    Eigen::Vector2d center(0, 0);

    for (size_t a = 0; a < nb.size(); ++a) {
      for (size_t b = a + 1; b < nb.size(); ++b) {
        // edge a-b must respect both endpoints' cutoffs
        double lab = (jittered[nb[a]] - jittered[nb[b]]).norm();
        if (lab > std::min(cutoff[nb[a]], cutoff[nb[b]])) continue;
        Eigen::Vector2d pa = uv[a], pb = uv[b];
        double orient = orient2d(center, pa, pb);
        if (orient == 0) continue;
        Eigen::Vector2d ta = center, tb = pa, tc = pb;
        if (orient < 0) std::swap(tb, tc);
        // quality gate: discard near-degenerate slivers
        double la = (pa - center).norm(), lb = (pb - center).norm();
        double maxEdge = std::max({la, lb, lab});
        if (std::abs(orient) / (maxEdge * maxEdge) < 2e-2) continue;
        bool empty = true;
        for (size_t c = 0; c < nb.size() && empty; ++c) {
          if (c == a || c == b) continue;
          if (inCircle(ta, tb, tc, uv[c]) > 0) empty = false;
        }
        if (!empty) continue;
        std::array<int, 3> tri{vi, nb[a], nb[b]};
        std::sort(tri.begin(), tri.end());
        fanTriangles[vi].push_back(tri);
      }
    }
  }

  // keep triangles proposed by all three member fans
  std::map<std::array<int, 3>, int> votes;
  for (int vi = 0; vi < n; ++vi)
    for (const auto& t : fanTriangles[vi]) votes[t]++;
  for (const auto& [tri, v] : votes) {
    if (v < 3) continue;
    // orient along the lowest-index vertex normal
    Vec3 faceN = (cloud.points[tri[1]] - cloud.points[tri[0]])
                     .cross(cloud.points[tri[2]] - cloud.points[tri[0]]);
    if (faceN.dot(cloud.normals[tri[0]]) >= 0)
      mesh.faces.emplace_back(tri[0], tri[1], tri[2]);
    else
      mesh.faces.emplace_back(tri[0], tri[2], tri[1]);
  }
  return mesh;
}

TriangleMesh pruneComponents(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) return mesh;
  const int n = int(mesh.vertices.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (const auto& f : mesh.faces) {
    unite(f[0], f[1]);
    unite(f[1], f[2]);
  }
  std::unordered_map<int, int> compSize;
  for (int i = 0; i < n; ++i) compSize[find(i)]++;
  // largest component; tie towards the one holding the lowest original index
  int bestRoot = -1, bestSize = -1;
  for (int i = 0; i < n; ++i) {
    int r = find(i);
    int s = compSize[r];
    if (s > bestSize) {
      bestSize = s;
      bestRoot = r;
    }
  }
  TriangleMesh out;
  std::vector<int> remap(n, -1);
  for (int i = 0; i < n; ++i) {
    if (find(i) != bestRoot) continue;
    remap[i] = int(out.vertices.size());
    out.vertices.push_back(mesh.vertices[i]);
    if (!mesh.vertexNormals.empty()) out.vertexNormals.push_back(mesh.vertexNormals[i]);
    if (!mesh.vertexColors.empty()) out.vertexColors.push_back(mesh.vertexColors[i]);
  }
  for (const auto& f : mesh.faces)
    if (remap[f[0]] >= 0)
      out.faces.emplace_back(remap[f[0]], remap[f[1]], remap[f[2]]);
  return out;
}

std::vector<std::pair<int, int>> uniqueEdges(const TriangleMesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : mesh.faces) {
    edges.insert(std::minmax(f[0], f[1]));
    edges.insert(std::minmax(f[1], f[2]));
    edges.insert(std::minmax(f[0], f[2]));
  }
  return {edges.begin(), edges.end()};
}

Eigen::SparseMatrix<double> buildIncidence(const std::vector<std::pair<int, int>>& edges,
                                           int nodeCount) {
  Eigen::SparseMatrix<double> m(long(edges.size()), nodeCount);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(edges.size() * 2);
  for (size_t e = 0; e < edges.size(); ++e) {
    trip.emplace_back(int(e), edges[e].first, -1.0);
    trip.emplace_back(int(e), edges[e].second, 1.0);
  }
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Eigen::SparseMatrix<double> buildIncidence(const TriangleMesh& mesh) {
  return buildIncidence(uniqueEdges(mesh), int(mesh.vertices.size()));
}

DeformationGraph buildGraph(const PointCloud& cloud, double cellSize,
                            double searchRadius, double mu, int frameId) {
  DeformationGraph g;
  g.frameId = frameId;
  PointCloud down = voxelDownsample(cloud, cellSize);
  TriangleMesh mesh = greedyTriangulate(down, searchRadius, mu);
  mesh = pruneComponents(mesh);
  g.nodes = mesh.vertices;
  g.nodeNormals = mesh.vertexNormals;
  g.nodeColors = mesh.vertexColors;
  g.faces = mesh.faces;
  g.edges = uniqueEdges(mesh);
  g.transforms.assign(g.nodes.size(), identityNodeTransform());
  return g;
}

}  // namespace nrr
