#include "nrr/validate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace nrr {

std::vector<LandmarkObservations> loadLandmarksCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("loadLandmarksCsv: cannot open " + path);
  std::map<int, LandmarkObservations> byId;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line[0] == '#') continue;
    if (lineNo == 1 && line.find("landmark_id") != std::string::npos) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> fields;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    if (fields.size() != 4)
      throw std::runtime_error("loadLandmarksCsv: line " + std::to_string(lineNo) +
                               ": expected 4 comma-separated fields");
    try {
      int id = std::stoi(fields[0]);
      LandmarkSample s;
      s.frameIndex = std::stoi(fields[1]);
      s.pixel = Eigen::Vector2d(std::stod(fields[2]), std::stod(fields[3]));
      auto& obs = byId[id];
      obs.landmarkId = id;
      obs.samples.push_back(s);
    } catch (const std::exception&) {
      throw std::runtime_error("loadLandmarksCsv: line " + std::to_string(lineNo) +
                               ": parse error");
    }
  }
  std::vector<LandmarkObservations> out;
  for (auto& [id, obs] : byId) out.push_back(std::move(obs));
  return out;
}

void saveLandmarksCsv(const std::string& path,
                      const std::vector<LandmarkObservations>& obs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("saveLandmarksCsv: cannot open " + path);
  out << "landmark_id,frame_id,x,y\n";
  out.precision(10);
  for (const auto& o : obs)
    for (const auto& s : o.samples)
      out << o.landmarkId << ',' << s.frameIndex << ',' << s.pixel.x() << ','
          << s.pixel.y() << '\n';
}

namespace {

// subpixel depth: bilinear over the 2x2 cell when fully valid, else the
// closest valid value in the 3x3 neighborhood of the rounded pixel
double depthAtPixel(const RGBDFrame& frame, const Eigen::Vector2d& pixel) {
  int x0 = int(std::floor(pixel.x()));
  int y0 = int(std::floor(pixel.y()));
  if (x0 >= 0 && y0 >= 0 && x0 + 1 < frame.width && y0 + 1 < frame.height) {
    double d00 = frame.depth[size_t(y0) * frame.width + x0];
    double d10 = frame.depth[size_t(y0) * frame.width + x0 + 1];
    double d01 = frame.depth[size_t(y0 + 1) * frame.width + x0];
    double d11 = frame.depth[size_t(y0 + 1) * frame.width + x0 + 1];
    double mn = std::min({d00, d10, d01, d11});
    double mx = std::max({d00, d10, d01, d11});
    // refuse to interpolate across a depth discontinuity
    if (mn > 0 && mx - mn < 0.05) {
      double fx = pixel.x() - x0, fy = pixel.y() - y0;
      return (1 - fy) * ((1 - fx) * d00 + fx * d10) +
             fy * ((1 - fx) * d01 + fx * d11);
    }
  }
  int cx = int(std::lround(pixel.x()));
  int cy = int(std::lround(pixel.y()));
  double best = 0;
  double bestDist = std::numeric_limits<double>::max();
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      int x = cx + dx, y = cy + dy;
      if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) continue;
      double d = frame.depth[size_t(y) * frame.width + x];
      if (d <= 0) continue;
      double dist = std::abs(dx) + std::abs(dy);
      if (dist < bestDist) {
        bestDist = dist;
        best = d;
      }
    }
  return best;
}

}  // namespace

LandmarkErrorReport landmarkError(const std::vector<LandmarkObservations>& obs,
                                  const std::vector<RGBDFrame>& frames,
                                  const CalibrationBundle& calib,
                                  const PoseSequence& poses,
                                  const FrameDeformFn& deform) {
  LandmarkErrorReport report;
  for (const auto& lm : obs) {
    LandmarkErrorReport::PerLandmark per;
    per.landmarkId = lm.landmarkId;
    std::vector<Vec3> pts;
    for (const auto& s : lm.samples) {
      if (s.frameIndex < 0 || s.frameIndex >= int(frames.size()) ||
          s.frameIndex >= int(poses.poses.size())) {
        per.droppedSamples++;
        continue;
      }
      const RGBDFrame& frame = frames[s.frameIndex];
      double depth = depthAtPixel(frame, s.pixel);
      if (depth <= 0) {
        per.droppedSamples++;
        continue;
      }
      auto und = undistortPixel(s.pixel, calib.depthIntrinsics);
      if (!und) {
        per.droppedSamples++;
        continue;
      }
      const CameraIntrinsics& k = calib.depthIntrinsics;
      Vec3 cam(depth * (und->x() - k.cx) / k.fx, depth * (und->y() - k.cy) / k.fy,
               depth);
      Vec3 global = poses.poses[s.frameIndex].apply(cam);
      pts.push_back(deform ? deform(s.frameIndex, global) : global);
    }
    per.usedSamples = int(pts.size());
    if (!pts.empty()) {
      Vec3 mean = Vec3::Zero();
      for (const Vec3& p : pts) mean += p;
      mean /= double(pts.size());
      per.mean = mean;
      if (pts.size() > 1) {
        Mat3 cov = Mat3::Zero();
        for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
        cov /= double(pts.size() - 1);
        per.covariance = cov;
        per.frobenius = cov.norm();
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        for (int c = 0; c < 3; ++c)
          per.ellipsoidAxes.col(c) =
              eig.eigenvectors().col(c) *
              2.0 * std::sqrt(std::max(0.0, eig.eigenvalues()[c]));
      }
    }
    report.perLandmark.push_back(per);
  }
  double sum = 0;
  int counted = 0;
  for (const auto& per : report.perLandmark) {
    if (per.usedSamples > 1) {
      sum += per.frobenius;
      ++counted;
    }
  }
  report.epsilonL = counted > 0 ? sum / counted : 0;
  return report;
}

std::vector<int> geodesicContour(const TriangleMesh& mesh, int fromVertex,
                                 int toVertex) {
  const int n = int(mesh.vertices.size());
  if (fromVertex < 0 || fromVertex >= n || toVertex < 0 || toVertex >= n)
    throw std::runtime_error("geodesicContour: vertex index out of range");

  std::vector<std::vector<int>> adj(n);
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      adj[f[e]].push_back(f[(e + 1) % 3]);
      adj[f[(e + 1) % 3]].push_back(f[e]);
    }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  std::vector<double> dist(n, std::numeric_limits<double>::max());
  std::vector<int> prev(n, -1);
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
  dist[fromVertex] = 0;
  pq.emplace(0.0, fromVertex);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == toVertex) break;
    for (int v : adj[u]) {
      double nd = d + (mesh.vertices[u] - mesh.vertices[v]).norm();
      if (nd < dist[v] || (nd == dist[v] && prev[v] > u)) {
        dist[v] = nd;
        prev[v] = u;
        pq.emplace(nd, v);
      }
    }
  }
  if (dist[toVertex] == std::numeric_limits<double>::max())
    throw std::runtime_error("geodesicContour: vertices are not connected");
  std::vector<int> path;
  for (int v = toVertex; v != -1; v = prev[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

namespace {

// stretch a polyline to exactly `count` points by repeating entries over
// linearly spaced indices, preserving the originals in order
std::vector<Vec3> resampleByIndex(const std::vector<Vec3>& c, int count) {
  std::vector<Vec3> out(count);
  const int n = int(c.size());
  for (int i = 0; i < count; ++i) {
    double t = count > 1 ? double(i) / (count - 1) : 0.0;
    int idx = int(std::lround(t * (n - 1)));
    out[i] = c[std::min(idx, n - 1)];
  }
  return out;
}

// drop immediate duplicate points (overlap at contour junctions)
std::vector<Vec3> dedupe(const std::vector<Vec3>& c) {
  std::vector<Vec3> out;
  for (const Vec3& p : c)
    if (out.empty() || (out.back() - p).norm() > 1e-12) out.push_back(p);
  return out;
}

}  // namespace

TriangleMesh coonsPatch(const std::array<std::vector<Vec3>, 4>& contoursIn) {
  std::array<std::vector<Vec3>, 4> c;
  for (int i = 0; i < 4; ++i) {
    c[i] = dedupe(contoursIn[i]);
    if (c[i].size() < 2)
      throw std::runtime_error("coonsPatch: contour " + std::to_string(i) +
                               " has fewer than 2 points");
  }
  const double tol = 1e-9;
  for (int i = 0; i < 4; ++i) {
    double gap = (c[i].back() - c[(i + 1) % 4].front()).norm();
    if (gap > tol)
      throw std::runtime_error("coonsPatch: contours " + std::to_string(i) + " and " +
                               std::to_string((i + 1) % 4) +
                               " do not share an endpoint (gap " +
                               std::to_string(gap) + " m), boundary loop is open");
  }

  // bottom/top run A->B, left/right run A->D / B->C
  int nu = int(std::max(c[0].size(), c[2].size()));
  int nv = int(std::max(c[1].size(), c[3].size()));
  std::vector<Vec3> bottom = resampleByIndex(c[0], nu);
  std::vector<Vec3> top = resampleByIndex(c[2], nu);
  std::reverse(top.begin(), top.end());
  std::vector<Vec3> right = resampleByIndex(c[1], nv);
  std::vector<Vec3> left = resampleByIndex(c[3], nv);
  std::reverse(left.begin(), left.end());

  TriangleMesh mesh;
  mesh.vertices.resize(size_t(nu) * nv);
  auto at = [&](int u, int v) -> Vec3& { return mesh.vertices[size_t(v) * nu + u]; };
  const Vec3 pA = bottom.front(), pB = bottom.back();
  const Vec3 pD = top.front(), pC = top.back();
  for (int v = 0; v < nv; ++v) {
    double tv = nv > 1 ? double(v) / (nv - 1) : 0.0;
    for (int u = 0; u < nu; ++u) {
      double tu = nu > 1 ? double(u) / (nu - 1) : 0.0;
      if (v == 0) {
        at(u, v) = bottom[u];
      } else if (v == nv - 1) {
        at(u, v) = top[u];
      } else if (u == 0) {
        at(u, v) = left[v];
      } else if (u == nu - 1) {
        at(u, v) = right[v];
      } else {
        at(u, v) = (1 - tv) * bottom[u] + tv * top[u] + (1 - tu) * left[v] +
                   tu * right[v] -
                   ((1 - tu) * (1 - tv) * pA + tu * (1 - tv) * pB + tu * tv * pC +
                    (1 - tu) * tv * pD);
      }
    }
  }
  for (int v = 0; v + 1 < nv; ++v)
    for (int u = 0; u + 1 < nu; ++u) {
      int a = v * nu + u, b = v * nu + u + 1;
      int d = (v + 1) * nu + u, e = (v + 1) * nu + u + 1;
      mesh.faces.emplace_back(a, b, e);
      mesh.faces.emplace_back(a, e, d);
    }
  return mesh;
}

namespace {

std::pair<int, int> sortedEdge(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

std::vector<int> segmentBreast(const TriangleMesh& mesh, const EdgeSet& contourEdges,
                               const std::vector<Vec3>& landmarks,
                               double maxFraction) {
  if (mesh.faces.empty()) throw std::runtime_error("segmentBreast: empty mesh");
  if (landmarks.empty()) throw std::runtime_error("segmentBreast: no seed landmarks");

  Vec3 seed = Vec3::Zero();
  for (const Vec3& p : landmarks) seed += p;
  seed /= double(landmarks.size());

  std::map<std::pair<int, int>, std::vector<int>> edgeFaces;
  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    for (int e = 0; e < 3; ++e)
      edgeFaces[sortedEdge(f[e], f[(e + 1) % 3])].push_back(int(fi));
  }

  // faces sorted by centroid distance to the seed, used as fallback order
  std::vector<int> order(mesh.faces.size());
  std::vector<double> dist(mesh.faces.size());
  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    Vec3 c = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    dist[fi] = (c - seed).squaredNorm();
    order[fi] = int(fi);
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });

  auto allEdgesBlocked = [&](int fi) {
    const auto& f = mesh.faces[fi];
    for (int e = 0; e < 3; ++e)
      if (!contourEdges.count(sortedEdge(f[e], f[(e + 1) % 3]))) return false;
    return true;
  };

  int seedFace = -1;
  for (int fi : order)
    if (!allEdgesBlocked(fi)) {
      seedFace = fi;
      break;
    }
  if (seedFace < 0)
    throw std::runtime_error("segmentBreast: every candidate seed face is fenced in");

  std::vector<std::uint8_t> visited(mesh.faces.size(), 0);
  std::vector<int> region, stack{seedFace};
  visited[seedFace] = 1;
  while (!stack.empty()) {
    int fi = stack.back();
    stack.pop_back();
    region.push_back(fi);
    const auto& f = mesh.faces[fi];
    for (int e = 0; e < 3; ++e) {
      auto key = sortedEdge(f[e], f[(e + 1) % 3]);
      if (contourEdges.count(key)) continue;
      for (int nb : edgeFaces[key]) {
        if (visited[nb]) continue;
        visited[nb] = 1;
        stack.push_back(nb);
      }
    }
  }
  if (double(region.size()) > maxFraction * double(mesh.faces.size()))
    throw std::runtime_error(
        "segmentBreast: leaky contour, flood fill covered " +
        std::to_string(region.size()) + " of " + std::to_string(mesh.faces.size()) +
        " faces");
  std::sort(region.begin(), region.end());
  return region;
}

TriangleMesh extractFaces(const TriangleMesh& mesh, const std::vector<int>& faces) {
  TriangleMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  auto ensure = [&](int v) {
    if (remap[v] < 0) {
      remap[v] = int(out.vertices.size());
      out.vertices.push_back(mesh.vertices[v]);
      if (!mesh.vertexNormals.empty()) out.vertexNormals.push_back(mesh.vertexNormals[v]);
      if (!mesh.vertexColors.empty()) out.vertexColors.push_back(mesh.vertexColors[v]);
    }
    return remap[v];
  };
  for (int fi : faces) {
    const auto& f = mesh.faces[fi];
    out.faces.emplace_back(ensure(f[0]), ensure(f[1]), ensure(f[2]));
  }
  return out;
}

double signedVolume(const TriangleMesh& mesh) {
  double vol = 0;
  for (const auto& f : mesh.faces) {
    const Vec3& v0 = mesh.vertices[f[0]];
    const Vec3& v1 = mesh.vertices[f[1]];
    const Vec3& v2 = mesh.vertices[f[2]];
    vol += v0.dot(v1.cross(v2)) / 6.0;
  }
  return vol;
}

namespace {

// directed boundary edges (a->b as they appear in faces, edge used once)
std::vector<std::pair<int, int>> boundaryEdges(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) count[sortedEdge(f[e], f[(e + 1) % 3])]++;
  std::vector<std::pair<int, int>> out;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      if (count[sortedEdge(a, b)] == 1) out.emplace_back(a, b);
    }
  return out;
}

Vec3 meanFaceNormal(const TriangleMesh& mesh) {
  Vec3 n = Vec3::Zero();
  for (const auto& f : mesh.faces)
    n += (mesh.vertices[f[1]] - mesh.vertices[f[0]])
             .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
  double len = n.norm();
  if (len < 1e-15)
    throw std::runtime_error("closeAndMeasure: degenerate mean surface normal");
  return n / len;
}

double bboxDiagonal(const TriangleMesh& mesh) {
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

// close every boundary edge with a triangle to the apex, orientation matching
// the surface; returns the closed copy
TriangleMesh closeToApex(const TriangleMesh& mesh, const Vec3& apex) {
  TriangleMesh out = mesh;
  int apexIdx = int(out.vertices.size());
  out.vertices.push_back(apex);
  for (const auto& [a, b] : boundaryEdges(mesh)) out.faces.emplace_back(b, a, apexIdx);
  return out;
}

}  // namespace

double closeAndMeasure(const TriangleMesh& breast, const TriangleMesh& patch) {
  if (breast.vertices.empty() || breast.faces.empty())
    throw std::runtime_error("closeAndMeasure: empty breast surface");
  if (patch.vertices.empty() || patch.faces.empty())
    throw std::runtime_error("closeAndMeasure: empty patch surface");

  auto bb = boundaryEdges(breast);
  auto pb = boundaryEdges(patch);
  double vBreast, vPatch;
  if (bb.empty() && pb.empty()) {
    vBreast = signedVolume(breast);
    vPatch = signedVolume(patch);
  } else {
    // mutual apex on the far side of the torso so both closure cones share
    // geometry and cancel in the difference
    const TriangleMesh& loopMesh = bb.empty() ? patch : breast;
    const auto& loopEdges = bb.empty() ? pb : bb;
    Vec3 centroid = Vec3::Zero();
    for (const auto& [a, b] : loopEdges) centroid += loopMesh.vertices[a];
    centroid /= double(loopEdges.size());
    Vec3 apex = centroid - meanFaceNormal(breast) * bboxDiagonal(breast);
    vBreast = signedVolume(bb.empty() ? breast : closeToApex(breast, apex));
    vPatch = signedVolume(pb.empty() ? patch : closeToApex(patch, apex));
  }
  return std::abs(vBreast - vPatch) * 1e6;
}

RepeatabilityStats repeatabilityStats(
    const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw std::runtime_error("repeatabilityStats: no measurement pairs");
  double sumVar = 0, sumAll = 0;
  for (const auto& [a, b] : pairs) {
    double d = a - b;
    sumVar += d * d / 2.0;  // two-measurement sample variance
    sumAll += a + b;
  }
  RepeatabilityStats s;
  s.sigmaW = std::sqrt(sumVar / double(pairs.size()));
  s.cr = 1.96 * std::sqrt(2.0) * s.sigmaW;
  double mean = sumAll / (2.0 * double(pairs.size()));
  s.cv = mean != 0 ? 100.0 * s.sigmaW / mean : 0;
  return s;
}

}  // namespace nrr
