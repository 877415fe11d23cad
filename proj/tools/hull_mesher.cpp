// Stand-in surface mesher satisfying the pipeline's subprocess contract
// (`mesher --in points.ply --out mesh.ply --depth D --samples-per-node S`).
// Produces the convex hull of the input points; the caller's distance-band
// clipping removes hull faces spanning concavities. Swap in a Poisson-style
// reconstructor for production-quality surfaces.

#include <cstdio>
#include <map>
#include <vector>

#include "CLI11.hpp"
#include "nrr/core.hpp"
#include "nrr/io.hpp"

namespace {

using nrr::Vec3;

struct Face {
  int v[3];
  Vec3 normal;
  double offset = 0;
  std::vector<int> outside;
  bool alive = true;
};

struct Hull {
  const std::vector<Vec3>& pts;
  std::vector<Face> faces;
  std::map<std::pair<int, int>, int> edgeFace;  // directed edge -> face
  double eps;

  explicit Hull(const std::vector<Vec3>& p, double epsIn) : pts(p), eps(epsIn) {}

  void link(int fi) {
    const Face& f = faces[fi];
    for (int e = 0; e < 3; ++e) edgeFace[{f.v[e], f.v[(e + 1) % 3]}] = fi;
  }
  void unlink(int fi) {
    const Face& f = faces[fi];
    for (int e = 0; e < 3; ++e) {
      auto it = edgeFace.find({f.v[e], f.v[(e + 1) % 3]});
      if (it != edgeFace.end() && it->second == fi) edgeFace.erase(it);
    }
  }

  int addFace(int a, int b, int c) {
    Face f;
    f.v[0] = a;
    f.v[1] = b;
    f.v[2] = c;
    f.normal = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    double len = f.normal.norm();
    if (len > 0) f.normal /= len;
    f.offset = f.normal.dot(pts[a]);
    faces.push_back(f);
    int fi = int(faces.size()) - 1;
    link(fi);
    return fi;
  }

  bool visible(const Face& f, const Vec3& p) const {
    return f.normal.dot(p) > f.offset + eps;
  }
};

bool buildHull(const std::vector<Vec3>& pts, nrr::TriangleMesh& out) {
  const int n = int(pts.size());
  if (n < 4) return false;

  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double scale = (hi - lo).norm();
  if (scale <= 0) return false;
  double eps = 1e-10 * scale;

  // initial simplex from extreme points
  int i0 = 0, i1 = 0;
  for (int i = 1; i < n; ++i) {
    if (pts[i].x() < pts[i0].x()) i0 = i;
    if (pts[i].x() > pts[i1].x()) i1 = i;
  }
  if (i0 == i1) return false;
  int i2 = -1;
  double best = eps;
  Vec3 axis = (pts[i1] - pts[i0]).normalized();
  for (int i = 0; i < n; ++i) {
    Vec3 d = pts[i] - pts[i0];
    double dist = (d - d.dot(axis) * axis).norm();
    if (dist > best) {
      best = dist;
      i2 = i;
    }
  }
  if (i2 < 0) return false;
  Vec3 planeN = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
  int i3 = -1;
  best = eps;
  for (int i = 0; i < n; ++i) {
    double dist = std::abs(planeN.dot(pts[i] - pts[i0]));
    if (dist > best) {
      best = dist;
      i3 = i;
    }
  }
  if (i3 < 0) return false;
  if (planeN.dot(pts[i3] - pts[i0]) > 0) std::swap(i1, i2);

  Hull hull(pts, eps);
  hull.addFace(i0, i1, i2);
  hull.addFace(i0, i2, i3);
  hull.addFace(i2, i1, i3);
  hull.addFace(i1, i0, i3);

  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    for (Face& f : hull.faces)
      if (hull.visible(f, pts[i])) {
        f.outside.push_back(i);
        break;
      }
  }

  std::vector<int> pending;
  for (int fi = 0; fi < int(hull.faces.size()); ++fi)
    if (!hull.faces[fi].outside.empty()) pending.push_back(fi);

  while (!pending.empty()) {
    int fi = pending.back();
    pending.pop_back();
    if (!hull.faces[fi].alive || hull.faces[fi].outside.empty()) continue;

    const Face& f = hull.faces[fi];
    int far = f.outside[0];
    double farDist = f.normal.dot(pts[far]) - f.offset;
    for (int p : f.outside) {
      double d = f.normal.dot(pts[p]) - f.offset;
      if (d > farDist) {
        farDist = d;
        far = p;
      }
    }
    const Vec3& fp = pts[far];

    // flood the visible region, collecting horizon edges in order
    std::vector<int> visibleFaces{fi};
    std::vector<char> seen(hull.faces.size(), 0);
    seen[fi] = 1;
    std::vector<std::pair<int, int>> horizon;
    std::vector<int> stack{fi};
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      const Face& cf = hull.faces[cur];
      for (int e = 0; e < 3; ++e) {
        int a = cf.v[e], b = cf.v[(e + 1) % 3];
        auto it = hull.edgeFace.find({b, a});
        if (it == hull.edgeFace.end()) continue;
        int nb = it->second;
        if (seen[nb]) continue;
        if (hull.visible(hull.faces[nb], fp)) {
          seen[nb] = 1;
          visibleFaces.push_back(nb);
          stack.push_back(nb);
        } else {
          horizon.emplace_back(a, b);
        }
      }
    }

    std::vector<int> orphaned;
    for (int vf : visibleFaces) {
      Face& df = hull.faces[vf];
      orphaned.insert(orphaned.end(), df.outside.begin(), df.outside.end());
      df.alive = false;
      df.outside.clear();
      hull.unlink(vf);
    }

    std::vector<int> newFaces;
    for (const auto& [a, b] : horizon) newFaces.push_back(hull.addFace(a, b, far));
    for (int p : orphaned) {
      if (p == far) continue;
      for (int nf : newFaces)
        if (hull.visible(hull.faces[nf], pts[p])) {
          hull.faces[nf].outside.push_back(p);
          break;
        }
    }
    for (int nf : newFaces)
      if (!hull.faces[nf].outside.empty()) pending.push_back(nf);
  }

  std::vector<int> remap(pts.size(), -1);
  out.vertices.clear();
  out.faces.clear();
  for (const Face& f : hull.faces) {
    if (!f.alive) continue;
    int idx[3];
    for (int e = 0; e < 3; ++e) {
      int v = f.v[e];
      if (remap[v] < 0) {
        remap[v] = int(out.vertices.size());
        out.vertices.push_back(pts[v]);
      }
      idx[e] = remap[v];
    }
    out.faces.emplace_back(idx[0], idx[1], idx[2]);
  }
  return !out.faces.empty();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex-hull stand-in mesher (PLY points in, PLY mesh out)"};
  std::string inPath, outPath;
  int depth = 9, samplesPerNode = 10;
  app.add_option("--in", inPath, "input point PLY")->required();
  app.add_option("--out", outPath, "output mesh PLY")->required();
  app.add_option("--depth", depth, "octree depth (accepted, unused)");
  app.add_option("--samples-per-node", samplesPerNode, "samples per node (accepted, unused)");
  CLI11_PARSE(app, argc, argv);

  try {
    nrr::PointCloud cloud = nrr::readPlyCloud(inPath);
    nrr::TriangleMesh mesh;
    if (!buildHull(cloud.points, mesh)) {
      std::fprintf(stderr, "hull_mesher: degenerate input, no mesh produced\n");
      return 2;
    }
    nrr::writePlyMesh(outPath, mesh);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "hull_mesher: %s\n", ex.what());
    return 1;
  }
  return 0;
}
