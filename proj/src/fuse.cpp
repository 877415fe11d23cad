#include "nrr/fuse.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "nrr/graph_build.hpp"
#include "nrr/io.hpp"
#include "nrr/spatial.hpp"

namespace nrr {

namespace {

int monomialCount(int order) { return (order + 1) * (order + 2) / 2; }

void monomials(double u, double v, int order, Eigen::VectorXd& row) {
  int idx = 0;
  for (int total = 0; total <= order; ++total)
    for (int i = 0; i <= total; ++i) row[idx++] = std::pow(u, total - i) * std::pow(v, i);
}

}  // namespace

PointCloud mlsSmooth(const PointCloud& cloud, double radius, int order, MlsStats* stats) {
  if (radius <= 0) throw std::runtime_error("mlsSmooth: radius must be > 0");
  if (order < 1 || order > 2) throw std::runtime_error("mlsSmooth: order must be 1 or 2");
  PointCloud out = cloud;
  if (cloud.empty()) return out;
  KdTree tree(cloud.points);
  const double sigma = radius / 2.0;
  size_t nPlaneFallback = 0, nPassthrough = 0;

#pragma omp parallel for schedule(dynamic, 64) reduction(+ : nPlaneFallback, nPassthrough)
  for (long i = 0; i < long(cloud.size()); ++i) {
    auto nb = tree.radiusSearch(cloud.points[i], radius);
    int fitOrder = order;
    if (int(nb.size()) < monomialCount(order)) fitOrder = 1;
    if (int(nb.size()) < 3) {
      nPassthrough++;
      continue;
    }
    if (fitOrder != order) nPlaneFallback++;

    // weighted PCA plane of the neighborhood
    Vec3 centroid = Vec3::Zero();
    double wSum = 0;
    std::vector<double> w(nb.size());
    for (size_t k = 0; k < nb.size(); ++k) {
      double d2 = (cloud.points[nb[k]] - cloud.points[i]).squaredNorm();
      w[k] = std::exp(-d2 / (2 * sigma * sigma));
      centroid += w[k] * cloud.points[nb[k]];
      wSum += w[k];
    }
    centroid /= wSum;
    Mat3 cov = Mat3::Zero();
    for (size_t k = 0; k < nb.size(); ++k) {
      Vec3 d = cloud.points[nb[k]] - centroid;
      cov += w[k] * d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 n = eig.eigenvectors().col(0);
    if (n.dot(cloud.normals[i]) < 0) n = -n;
    Vec3 e1 = std::abs(n.x()) < 0.9 ? n.cross(Vec3(1, 0, 0)) : n.cross(Vec3(0, 1, 0));
    e1.normalize();
    Vec3 e2 = n.cross(e1);

    // weighted polynomial fit h(u, v) over the plane frame
    const int m = monomialCount(fitOrder);
    Eigen::MatrixXd AtA = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd Atb = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd row(m);
    for (size_t k = 0; k < nb.size(); ++k) {
      Vec3 d = cloud.points[nb[k]] - centroid;
      monomials(d.dot(e1), d.dot(e2), fitOrder, row);
      AtA += w[k] * row * row.transpose();
      Atb += w[k] * row * d.dot(n);
    }
    Eigen::VectorXd coeff = AtA.ldlt().solve(Atb);

    Vec3 d = cloud.points[i] - centroid;
    double u = d.dot(e1), v = d.dot(e2);
    monomials(u, v, fitOrder, row);
    out.points[i] = centroid + u * e1 + v * e2 + coeff.dot(row) * n;

    // analytic gradient of the fitted height field
    double hu = 0, hv = 0;
    int idx = 0;
    for (int total = 0; total <= fitOrder; ++total)
      for (int j = 0; j <= total; ++j) {
        int pu = total - j, pv = j;
        if (pu > 0) hu += coeff[idx] * pu * std::pow(u, pu - 1) * std::pow(v, pv);
        if (pv > 0) hv += coeff[idx] * pv * std::pow(u, pu) * std::pow(v, pv - 1);
        ++idx;
      }
    Vec3 newN = (n - hu * e1 - hv * e2).normalized();
    if (newN.dot(cloud.normals[i]) < 0) newN = -newN;
    out.normals[i] = newN;
  }
  if (stats) *stats = {nPlaneFallback, nPassthrough};
  return out;
}

PointCloud reorientNormals(const PointCloud& cloud,
                           const std::vector<Vec3>& cameraCenters) {
  PointCloud out = cloud;
  if (cloud.empty()) return out;
  if (cameraCenters.size() == cloud.size()) {
#pragma omp parallel for
    for (long i = 0; i < long(cloud.size()); ++i) {
      if (out.normals[i].dot(cameraCenters[i] - out.points[i]) < 0)
        out.normals[i] = -out.normals[i];
    }
    return out;
  }
  std::fprintf(stderr,
               "[fuse] warning: missing camera provenance, orienting normals by "
               "neighbor consistency\n");
  KdTree tree(cloud.points);
  std::vector<std::uint8_t> visited(cloud.size(), 0);
  std::vector<int> queue;
  for (size_t seed = 0; seed < cloud.size(); ++seed) {
    if (visited[seed]) continue;
    visited[seed] = 1;
    queue.assign(1, int(seed));
    while (!queue.empty()) {
      int cur = queue.back();
      queue.pop_back();
      for (int j : tree.kNearest(cloud.points[cur], 9)) {
        if (j == cur || visited[j]) continue;
        visited[j] = 1;
        if (out.normals[j].dot(out.normals[cur]) < 0) out.normals[j] = -out.normals[j];
        queue.push_back(j);
      }
    }
  }
  return out;
}

PointCloud gridResample(const PointCloud& cloud, double cellSize) {
  return voxelDownsample(cloud, cellSize);
}

TriangleMesh clipToBand(const TriangleMesh& mesh, const PointCloud& points, double band) {
  KdTree tree(points.points);
  std::vector<std::uint8_t> keepVertex(mesh.vertices.size(), 0);
#pragma omp parallel for
  for (long i = 0; i < long(mesh.vertices.size()); ++i) {
    double dSq;
    tree.nearest(mesh.vertices[i], &dSq);
    keepVertex[i] = dSq <= band * band;
  }
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
  for (const auto& f : mesh.faces) {
    if (!keepVertex[f[0]] || !keepVertex[f[1]] || !keepVertex[f[2]]) continue;
    out.faces.emplace_back(ensure(f[0]), ensure(f[1]), ensure(f[2]));
  }
  return out;
}

std::optional<TriangleMesh> meshModel(const PointCloud& points, const MeshParams& params) {
  if (points.empty()) throw std::runtime_error("meshModel: empty cloud");
  namespace fs = std::filesystem;
  fs::path dir = params.workDir.empty() ? fs::temp_directory_path()
                                        : fs::path(params.workDir);
  fs::create_directories(dir);
  fs::path inPly = dir / "mesher_in.ply";
  fs::path outPly = dir / "mesher_out.ply";
  writePlyCloud(inPly.string(), points);
  std::error_code ec;
  fs::remove(outPly, ec);

  std::string cmd = params.mesherCommand + " --in " + inPly.string() + " --out " +
                    outPly.string() + " --depth " + std::to_string(params.depth) +
                    " --samples-per-node " + std::to_string(params.samplesPerNode);
  int rc = std::system(cmd.c_str());
  if (rc != 0 || !fs::exists(outPly)) {
    std::fprintf(stderr, "[fuse] warning: mesher '%s' unavailable (rc=%d), emitting "
                 "point set only\n",
                 params.mesherCommand.c_str(), rc);
    return std::nullopt;
  }
  TriangleMesh mesh = readPlyMesh(outPly.string());
  return clipToBand(mesh, points, params.clipBand);
}

void rgbToHsv(const Rgb& rgb, double& h, double& s, double& v) {
  double r = rgb[0] / 255.0, g = rgb[1] / 255.0, b = rgb[2] / 255.0;
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  double delta = mx - mn;
  v = mx;
  s = mx > 0 ? delta / mx : 0;
  if (delta <= 0) {
    h = 0;
    return;
  }
  if (mx == r) h = 60.0 * std::fmod((g - b) / delta, 6.0);
  else if (mx == g) h = 60.0 * ((b - r) / delta + 2.0);
  else h = 60.0 * ((r - g) / delta + 4.0);
  if (h < 0) h += 360.0;
}

Rgb hsvToRgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  double c = v * s;
  double x = c * (1 - std::abs(std::fmod(h / 60.0, 2.0) - 1));
  double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  auto to8 = [&](double q) { return std::uint8_t(std::lround((q + m) * 255.0)); };
  return Rgb(to8(r), to8(g), to8(b));
}

TriangleMesh reintegrateColor(const TriangleMesh& mesh, const PointCloud& points,
                              double radius, std::vector<std::uint8_t>* coloredMask) {
  TriangleMesh out = mesh;
  out.vertexColors.assign(mesh.vertices.size(), Rgb::Zero());
  std::vector<std::uint8_t> mask(mesh.vertices.size(), 0);
  KdTree tree(points.points);

#pragma omp parallel for schedule(dynamic, 64)
  for (long vi = 0; vi < long(mesh.vertices.size()); ++vi) {
    double r = radius;
    std::vector<int> nb;
    for (int attempt = 0; attempt <= 4; ++attempt) {
      nb = tree.radiusSearch(mesh.vertices[vi], r);  // ascending distance
      if (!nb.empty()) break;
      r *= 2;
    }
    if (nb.empty()) continue;  // stays uncolored
    double hMean = 0, sMean = 0, vMean = 0;
    int count = 0;
    for (int j : nb) {
      double h, s, v;
      rgbToHsv(points.colors[j], h, s, v);
      if (count == 0) {
        hMean = h;
      } else {
        // move the running mean along the shortest circular arc
        double delta = h - hMean;
        while (delta > 180) delta -= 360;
        while (delta <= -180) delta += 360;
        hMean += delta / double(count + 1);
        hMean = std::fmod(std::fmod(hMean, 360.0) + 360.0, 360.0);
      }
      sMean += s;
      vMean += v;
      ++count;
    }
    out.vertexColors[vi] = hsvToRgb(hMean, sMean / count, vMean / count);
    mask[vi] = 1;
  }
  if (coloredMask) *coloredMask = mask;
  return out;
}

}  // namespace nrr
