// End-to-end acceptance gate: one test case per release criterion, each
// printing a single pass/fail line with its pinned tolerances. Expensive
// synthetic sequences and pipeline runs are generated once and shared.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "nrr/nricp.hpp"
#include "nrr/pipeline.hpp"
#include "nrr/propagate.hpp"
#include "nrr/synth.hpp"
#include "nrr/validate.hpp"
#include "test_helpers.hpp"

using namespace nrr;
using namespace nrr::testutil;

namespace {

namespace fs = std::filesystem;

const fs::path& workRoot() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "nrr_acceptance";
    fs::create_directories(p);
    return p;
  }();
  return root;
}

void report(int n, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

SynthParams sequenceParams(double warpMm) {
  SynthParams p;
  p.frames = 20;
  p.warpMm = warpMm;
  p.seed = 11;
  p.sweepDegrees = 90.0;
  return p;
}

const std::string& sequenceDir(double warpMm, const std::string& tag,
                               double warpFreqScale = 1.0) {
  static std::map<std::string, std::string> cache;
  auto it = cache.find(tag);
  if (it == cache.end()) {
    SynthParams p = sequenceParams(warpMm);
    p.warpFreqScale = warpFreqScale;
    SyntheticScene scene(p);
    std::string dir = (workRoot() / tag).string();
    writeSequence(scene, dir);
    it = cache.emplace(tag, dir).first;
  }
  return it->second;
}

PipelineConfig baseConfig(const std::string& seqDir, const std::string& outTag) {
  PipelineConfig cfg;
  cfg.framesDir = seqDir;
  cfg.calibrationPath = seqDir + "/calibration.json";
  cfg.posesPath = seqDir + "/poses.txt";
  cfg.landmarksPath = seqDir + "/landmarks.csv";
  cfg.outDir = (workRoot() / outTag).string();
  if (const char* d = std::getenv("NRR_MESHER_DIR"))
    cfg.mesherCommand = std::string(d) + "/hull_mesher";
  return cfg;
}

// shared 5 mm warp recovery runs (criteria 5, 8, 13)
struct WarpRuns {
  PipelineResult rigid, shortest, closest;
};

const WarpRuns& warpRuns() {
  static WarpRuns runs = [] {
    const std::string& seq = sequenceDir(5.0, "seq_warp5");
    WarpRuns w;
    PipelineConfig cfg = baseConfig(seq, "out_warp5_rigid");
    cfg.rigidOnly = true;
    w.rigid = runPipeline(cfg);
    cfg = baseConfig(seq, "out_warp5_shortest");
    w.shortest = runPipeline(cfg);
    cfg = baseConfig(seq, "out_warp5_closest");
    cfg.mode = CorrespondenceMode::closestPoint;
    w.closest = runPipeline(cfg);
    return w;
  }();
  return runs;
}

// ---- local oracles ----------------------------------------------------

DeformationGraph chainGraph(int nodes, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(-0.02, 0.02);
  DeformationGraph g;
  for (int i = 0; i < nodes; ++i) {
    g.nodes.emplace_back(uni(rng) + 0.01 * i, uni(rng), uni(rng));
    g.nodeNormals.emplace_back(0, 0, 1);
    g.nodeColors.emplace_back(Rgb::Zero());
  }
  for (int i = 0; i + 1 < nodes; ++i) g.edges.emplace_back(i, i + 1);
  g.edges.emplace_back(0, nodes - 1);
  g.transforms.assign(nodes, identityNodeTransform());
  return g;
}

CorrespondenceSet syntheticCorr(const DeformationGraph& g,
                                const std::vector<int>& rejected) {
  CorrespondenceSet corr(g.nodeCount());
  for (size_t i = 0; i < g.nodeCount(); ++i) {
    corr[i].sourceIndex = int(i);
    corr[i].targetPoint = g.nodes[i] + Vec3(0.001 * double(i), 0.002, -0.001);
    corr[i].targetNormal = Vec3(0, 0, 1);
    corr[i].weight = 1;
    corr[i].rejectionReason = RejectionReason::none;
  }
  for (int r : rejected) {
    corr[r].weight = 0;
    corr[r].rejectionReason = RejectionReason::distance;
  }
  return corr;
}

Vec3 segClosest(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 d = b - a;
  double den = d.squaredNorm();
  double t = den > 0 ? std::clamp((p - a).dot(d) / den, 0.0, 1.0) : 0.0;
  return a + t * d;
}

// clamp-style closest point: plane projection when the barycentric weights
// are admissible, otherwise the best of the three edge segments
Vec3 clampOracle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 u = b - a, v = c - a, w = p - a;
  double uu = u.dot(u), vv = v.dot(v), uv = u.dot(v);
  double det = uu * vv - uv * uv;
  double s = (vv * w.dot(u) - uv * w.dot(v)) / det;
  double t = (uu * w.dot(v) - uv * w.dot(u)) / det;
  if (s >= 0 && t >= 0 && s + t <= 1) return a + s * u + t * v;
  Vec3 best = segClosest(p, a, b);
  for (const Vec3& q : {segClosest(p, b, c), segClosest(p, c, a)})
    if ((p - q).squaredNorm() < (p - best).squaredNorm()) best = q;
  return best;
}

TriangleMesh jitteredGridMesh(int n, double spacing, std::mt19937& rng) {
  TriangleMesh m = gridMesh(n, n, spacing);
  std::uniform_real_distribution<double> jit(-0.3 * spacing, 0.3 * spacing);
  for (auto& v : m.vertices) v += Vec3(jit(rng), jit(rng), jit(rng));
  return m;
}

// lat-long spherical cap down to thetaMaxDeg with the 90-degree ring exactly
// on a grid line; fills the equator vertex loop
TriangleMesh capMesh(double r, int rows, double thetaMaxDeg, int segs,
                     std::vector<int>* equator) {
  TriangleMesh m;
  m.vertices.emplace_back(0, 0, r);  // pole
  for (int i = 1; i <= rows; ++i) {
    double theta = thetaMaxDeg * M_PI / 180.0 * double(i) / rows;
    for (int j = 0; j < segs; ++j) {
      double phi = 2 * M_PI * j / segs;
      m.vertices.emplace_back(r * std::sin(theta) * std::cos(phi),
                              r * std::sin(theta) * std::sin(phi),
                              r * std::cos(theta));
    }
  }
  auto idx = [&](int i, int j) { return 1 + (i - 1) * segs + (j % segs); };
  for (int j = 0; j < segs; ++j) m.faces.emplace_back(0, idx(1, j), idx(1, j + 1));
  for (int i = 1; i < rows; ++i)
    for (int j = 0; j < segs; ++j) {
      m.faces.emplace_back(idx(i, j), idx(i + 1, j), idx(i, j + 1));
      m.faces.emplace_back(idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1));
    }
  if (equator) {
    equator->clear();
    int eqRow = int(std::lround(rows * 90.0 / thetaMaxDeg));
    for (int j = 0; j < segs; ++j) equator->push_back(idx(eqRow, j));
  }
  return m;
}

TriangleMesh closedCube(double side) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back(side * ((i >> 0) & 1), side * ((i >> 1) & 1),
                            side * ((i >> 2) & 1));
  int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                     {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (auto& q : quads) {
    m.faces.emplace_back(q[0], q[1], q[2]);
    m.faces.emplace_back(q[0], q[2], q[3]);
  }
  return m;
}

TriangleMesh midpointSubdivide(const TriangleMesh& mesh) {
  TriangleMesh out;
  out.vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> midOf;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midOf.find(key);
    if (it != midOf.end()) return it->second;
    int v = int(out.vertices.size());
    out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    midOf[key] = v;
    return v;
  };
  for (const auto& f : mesh.faces) {
    int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
    out.faces.emplace_back(f[0], ab, ca);
    out.faces.emplace_back(ab, f[1], bc);
    out.faces.emplace_back(ca, bc, f[2]);
    out.faces.emplace_back(ab, bc, ca);
  }
  return out;
}

std::string readAllBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("criterion 1: sparse solver matches a dense oracle on small graphs") {
  std::mt19937 rng(41);
  double worstRel = 0, worstGrad = 0;
  for (int nodes : {6, 14, 22, 30}) {
    DeformationGraph g = chainGraph(nodes, rng);
    CorrespondenceSet corr = syntheticCorr(g, {1, nodes - 2});
    StackedSystem sys = assembleSystem(g, corr, g.edges, 20.0, 1.0);
    Eigen::MatrixXd X = solveNormalEquations(sys);

    Eigen::MatrixXd Ad(sys.A);
    Eigen::MatrixXd Xref = Ad.completeOrthogonalDecomposition().pseudoInverse() * sys.B;
    worstRel = std::max(worstRel, (X - Xref).norm() / Xref.norm());

    double grad = (Ad.transpose() * (Ad * X - sys.B)).cwiseAbs().maxCoeff();
    double scale = (Ad.transpose() * Eigen::MatrixXd(sys.B)).cwiseAbs().maxCoeff();
    worstGrad = std::max(worstGrad, grad / scale);
  }
  bool pass = worstRel < 1e-9 && worstGrad <= 1e-8;
  report(1, pass,
         "solver vs dense pseudo-inverse: worst rel " + num(worstRel) +
             " < 1e-9, worst gradient ratio " + num(worstGrad) + " <= 1e-8");
  CHECK(worstRel < 1e-9);
  CHECK(worstGrad <= 1e-8);
}

TEST_CASE("criterion 2: shortest-distance dominates closest-point, index equals brute") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> span(-0.02, 0.2);
  int queries = 0;
  double worstGap = 0, worstIdxErr = 0;
  for (int m = 0; m < 20; ++m) {
    TriangleMesh mesh = jitteredGridMesh(9, 0.02, rng);
    SpatialIndex index(mesh);
    for (int q = 0; q < 50; ++q) {
      Vec3 g(span(rng), span(rng), span(rng) * 0.3);
      ++queries;

      TriangleBvh::Hit hit = index.triangleBvh().nearest(g);
      double brute = std::numeric_limits<double>::infinity();
      for (const auto& f : mesh.faces) {
        Vec3 p = closestPointOnTriangle(g, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                        mesh.vertices[f[2]])
                     .point;
        brute = std::min(brute, (g - p).norm());
      }
      worstIdxErr = std::max(worstIdxErr, std::abs(hit.distance - brute));

      int vi = index.vertexTree().nearest(g);
      double vBrute = std::numeric_limits<double>::infinity();
      for (const auto& v : mesh.vertices) vBrute = std::min(vBrute, (g - v).norm());
      double vDist = (g - mesh.vertices[vi]).norm();
      worstIdxErr = std::max(worstIdxErr, std::abs(vDist - vBrute));

      // surface distance never exceeds vertex distance
      worstGap = std::max(worstGap, hit.distance - vDist);
    }
  }
  bool pass = queries == 1000 && worstGap <= 1e-12 && worstIdxErr < 1e-12;
  report(2, pass,
         "1000 queries, 20 meshes: max(shortest - closest) " + num(worstGap) +
             " <= 1e-12, max |indexed - brute| " + num(worstIdxErr) + " < 1e-12");
  CHECK(queries == 1000);
  CHECK(worstGap <= 1e-12);
  CHECK(worstIdxErr < 1e-12);
}

TEST_CASE("criterion 3: point-to-triangle matches the barycentric-clamp oracle") {
  std::mt19937 rng(43);
  std::uniform_real_distribution<double> uni(-1, 1);
  auto rnd = [&] { return Vec3(uni(rng), uni(rng), uni(rng)); };
  int done = 0, interior = 0, edge = 0, vertex = 0;
  double worst = 0;
  while (done < 100000) {
    Vec3 a = rnd(), b = rnd(), c = rnd();
    if ((b - a).cross(c - a).norm() < 1e-6) continue;
    Vec3 p = rnd();
    TrianglePoint tp = closestPointOnTriangle(p, a, b, c);
    Vec3 ref = clampOracle(p, a, b, c);
    worst = std::max(worst, (tp.point - ref).norm());
    Vec3 rebuilt = tp.barycentric.x() * a + tp.barycentric.y() * b + tp.barycentric.z() * c;
    worst = std::max(worst, (tp.point - rebuilt).norm());
    (tp.region == TriangleRegion::interior
         ? interior
         : tp.region == TriangleRegion::edge ? edge : vertex)++;
    ++done;
  }
  bool covered = interior > 1000 && edge > 1000 && vertex > 1000;
  bool pass = worst < 1e-12 && covered;
  report(3, pass,
         "1e5 pairs: worst |query - oracle| " + num(worst) + " < 1e-12; regions " +
             std::to_string(interior) + "/" + std::to_string(edge) + "/" +
             std::to_string(vertex) + " each > 1000");
  CHECK(worst < 1e-12);
  CHECK(covered);
}

TEST_CASE("criterion 4: rejection thresholds flip exactly at their constants") {
  // distance and normal: one large triangle, query above its interior
  TriangleMesh tri;
  tri.vertices = {Vec3(-1, -1, 0), Vec3(3, -1, 0), Vec3(1, 3, 0)};
  tri.faces = {{0, 1, 2}};
  tri.vertexNormals.assign(3, Vec3(0, 0, 1));
  SpatialIndex triIndex(tri);
  Vec3 up(0, 0, 1);

  auto at = [&](double h, const Vec3& n) {
    return findCorrespondence(0, Vec3(1, 0.5, h), n, triIndex,
                              CorrespondenceMode::shortestDistance, {});
  };
  bool distOk = at(0.02 - 1e-6, up).rejectionReason == RejectionReason::none &&
                at(0.02 + 1e-6, up).rejectionReason == RejectionReason::distance;

  auto tilted = [&](double deg) {
    double r = deg * M_PI / 180.0;
    return at(0.001, Vec3(std::sin(r), 0, std::cos(r)));
  };
  bool normalOk = tilted(45.0 - 1e-6).rejectionReason == RejectionReason::none &&
                  tilted(45.0 + 1e-6).rejectionReason == RejectionReason::normal;

  // border: grid target, queries over the interior vs past the boundary
  TriangleMesh grid = gridMesh(5, 5, 0.01);
  SpatialIndex gridIndex(grid);
  Correspondence inside = findCorrespondence(0, Vec3(0.02, 0.02, 0.001), up, gridIndex,
                                             CorrespondenceMode::shortestDistance, {});
  Correspondence outside = findCorrespondence(0, Vec3(0.045, 0.02, 0.001), up, gridIndex,
                                              CorrespondenceMode::shortestDistance, {});
  bool borderOk = inside.rejectionReason == RejectionReason::none &&
                  outside.rejectionReason == RejectionReason::border;

  bool pass = distOk && normalOk && borderOk;
  report(4, pass,
         std::string("distance flips at 0.02 m +- 1e-6 (") + (distOk ? "ok" : "BAD") +
             "), normal at 45 deg +- 1e-6 deg (" + (normalOk ? "ok" : "BAD") +
             "), border edge rejected (" + (borderOk ? "ok" : "BAD") + ")");
  CHECK(distOk);
  CHECK(normalOk);
  CHECK(borderOk);
}

TEST_CASE("criterion 5: nonrigid recovery beats rigid fusion on the 5 mm warp set") {
  const WarpRuns& runs = warpRuns();
  SyntheticScene scene(sequenceParams(5.0));
  GroundTruthError eRigid = groundTruthError(runs.rigid.fusedPoints, scene, 0.0);
  GroundTruthError eNon = groundTruthError(runs.shortest.fusedPoints, scene, 0.0);

  REQUIRE(runs.rigid.landmarkReport);
  REQUIRE(runs.shortest.landmarkReport);
  REQUIRE(runs.closest.landmarkReport);
  double lRigid = runs.rigid.landmarkReport->epsilonL;
  double lShort = runs.shortest.landmarkReport->epsilonL;
  double lClose = runs.closest.landmarkReport->epsilonL;

  bool rmsOk = eNon.rms <= 0.7 * eRigid.rms;
  bool orderOk = lShort <= lClose && lClose <= lRigid;
  bool pass = rmsOk && orderOk;
  report(5, pass,
         "rms " + num(eNon.rms) + " <= 0.7 * " + num(eRigid.rms) + " m; eps_L " +
             num(lShort) + " <= " + num(lClose) + " <= " + num(lRigid) + " m^2");
  CHECK(rmsOk);
  CHECK(orderOk);
}

TEST_CASE("criterion 6: zero warp input produces no invented deformation") {
  const std::string& seq = sequenceDir(0.0, "seq_warp0");
  PipelineConfig cfg = baseConfig(seq, "out_warp0");
  PipelineResult r = runPipeline(cfg);
  double sum = 0;
  size_t count = 0;
  for (size_t f = 0; f < r.state.frameGraphs.size(); ++f) {
    const DeformationGraph& g = r.state.frameGraphs[f];
    for (size_t i = 0; i < g.nodeCount(); ++i) {
      sum += (deformFramePoint(r.state, int(f), g.nodes[i], cfg.influenceNodes) -
              g.nodes[i])
                 .norm();
      ++count;
    }
  }
  double mean = sum / double(count);
  bool pass = mean < 2e-4;
  report(6, pass, "mean node displacement " + num(mean) + " m < 2e-4 m");
  CHECK(mean < 2e-4);
}

TEST_CASE("criterion 7: landmark error vs stiffness has the expected sweep shape") {
  auto t0 = std::chrono::steady_clock::now();
  // fine-detail warp (5 cm scale): smooth sway is tracked at any stiffness
  // because solved increments get baked, but spatial detail is only recovered
  // when the regularizer lets neighboring nodes decouple
  const std::string& seq = sequenceDir(10.0, "seq_sweep", 5.0);
  const std::vector<double> alphas = {100, 50, 20, 10, 5, 2};
  std::vector<double> eps;
  for (double a : alphas) {
    PipelineConfig cfg = baseConfig(seq, "out_sweep_a" + std::to_string(int(a)));
    cfg.alpha = a;
    cfg.skipMesher = true;
    PipelineResult r = runPipeline(cfg);
    REQUIRE(r.landmarkReport);
    eps.push_back(r.landmarkReport->epsilonL);
  }
  size_t argmin = std::min_element(eps.begin(), eps.end()) - eps.begin();
  // qualitative shape: non-increasing (8% step slack for landmark noise) from
  // alpha 100 down to a clear minimum in the low-stiffness range
  bool monotone = true;
  for (size_t i = 0; i + 1 <= argmin; ++i)
    monotone = monotone && eps[i + 1] <= 1.08 * eps[i];
  bool lowAlphaMin = alphas[argmin] >= 2.0 && alphas[argmin] <= 15.0;
  bool clearDrop = eps[argmin] <= 0.97 * eps[0];
  bool risesBelow = argmin + 1 >= eps.size() || eps.back() > eps[argmin];
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string curve;
  for (size_t i = 0; i < eps.size(); ++i)
    curve += (i ? ", " : "") + num(alphas[i]) + ":" + num(eps[i]);
  bool pass = monotone && lowAlphaMin && clearDrop && risesBelow && secs < 1800;
  report(7, pass,
         "eps_L {" + curve + "} m^2: non-increasing (8% slack) to minimum at alpha " +
             num(alphas[argmin]) + " in [2,15], drop >= 3%, rise below minimum; " +
             num(secs) + " s < 1800 s");
  CHECK(monotone);
  CHECK(lowAlphaMin);
  CHECK(clearDrop);
  CHECK(risesBelow);
  CHECK(secs < 1800);
}

TEST_CASE("criterion 8: per-pass landmark error is non-increasing after pass one") {
  const std::vector<double>& eps = warpRuns().shortest.passEpsilonL;
  bool enough = eps.size() >= 3;
  bool monotone = true;
  double worstRise = 0;
  for (size_t i = 0; i + 1 < eps.size(); ++i) {
    worstRise = std::max(worstRise, eps[i + 1] - eps[i]);
    monotone = monotone && eps[i + 1] <= eps[i] + 1e-8;
  }
  bool pass = enough && monotone;
  report(8, pass,
         std::to_string(eps.size()) + " passes, worst per-pass rise " + num(worstRise) +
             " m^2 <= 1e-8");
  CHECK(enough);
  CHECK(monotone);
}

TEST_CASE("criterion 9: closed volumes are exact, the capped hemisphere within 1%") {
  TriangleMesh cube = closedCube(0.1);
  double v = signedVolume(cube);
  double cubeErr = std::abs(v - 1e-3) / 1e-3;

  TriangleMesh fine = midpointSubdivide(midpointSubdivide(cube));
  double refineErr = std::abs(signedVolume(fine) - v) / v;

  // spherical cap past the equator, segmented back to the hemisphere along
  // the equator contour, closed by its Coons disk
  const double r = 0.062;
  std::vector<int> equator;
  TriangleMesh cap = capMesh(r, 48, 135.0, 96, &equator);
  EdgeSet contour;
  for (size_t i = 0; i < equator.size(); ++i)
    contour.insert(std::minmax(equator[i], equator[(i + 1) % equator.size()]));
  std::vector<int> faces = segmentBreast(cap, contour, {Vec3(0, 0, r)});
  TriangleMesh hemi = extractFaces(cap, faces);

  std::array<std::vector<Vec3>, 4> arcs;
  int q = int(equator.size()) / 4;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i <= q; ++i)
      arcs[c].push_back(cap.vertices[equator[(c * q + i) % equator.size()]]);
  double ml = closeAndMeasure(hemi, coonsPatch(arcs));
  double expect = 2.0 / 3.0 * M_PI * r * r * r * 1e6;
  double hemiErr = std::abs(ml - expect) / expect;

  bool pass = cubeErr < 1e-12 && refineErr < 1e-4 && hemiErr < 0.01;
  report(9, pass,
         "cube rel err " + num(cubeErr) + " < 1e-12, refinement drift " + num(refineErr) +
             " < 1e-4, hemisphere " + num(ml) + " ml vs " + num(expect) + " (rel " +
             num(hemiErr) + " < 0.01)");
  CHECK(cubeErr < 1e-12);
  CHECK(refineErr < 1e-4);
  CHECK(hemiErr < 0.01);
}

TEST_CASE("criterion 10: Coons patch reproduces boundaries and planarity") {
  std::array<std::vector<Vec3>, 4> contours;
  auto lerp = [](const Vec3& a, const Vec3& b, double t) { return a + t * (b - a); };
  Vec3 A(0, 0, 0), B(0.2, 0, 0), C(0.2, 0.1, 0), D(0, 0.1, 0);
  for (int i = 0; i <= 20; ++i) contours[0].push_back(lerp(A, B, i / 20.0));
  for (int i = 0; i <= 10; ++i) contours[1].push_back(lerp(B, C, i / 10.0));
  for (int i = 0; i <= 20; ++i) contours[2].push_back(lerp(C, D, i / 20.0));
  for (int i = 0; i <= 10; ++i) contours[3].push_back(lerp(D, A, i / 10.0));
  TriangleMesh patch = coonsPatch(contours);
  REQUIRE(!patch.vertices.empty());

  double planar = 0;
  for (const auto& v : patch.vertices) planar = std::max(planar, std::abs(v.z()));

  double boundary = 0;
  for (const auto& contourPts : contours)
    for (const auto& p : contourPts) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& v : patch.vertices) best = std::min(best, (v - p).norm());
      boundary = std::max(boundary, best);
    }

  bool pass = planar < 1e-9 && boundary < 1e-12;
  report(10, pass,
         "max |z| " + num(planar) + " < 1e-9, worst contour-to-vertex gap " +
             num(boundary) + " < 1e-12");
  CHECK(planar < 1e-9);
  CHECK(boundary < 1e-12);
}

TEST_CASE("criterion 11: repeatability statistics match the worked example") {
  RepeatabilityStats st = repeatabilityStats({{100, 110}, {200, 190}});
  double sw = std::sqrt(50.0);
  double eS = std::abs(st.sigmaW - sw);
  double eCr = std::abs(st.cr - 1.96 * std::sqrt(2.0) * sw);
  double eCv = std::abs(st.cv - 100.0 * sw / 150.0);
  bool pass = eS < 1e-9 && eCr < 1e-9 && eCv < 1e-9;
  report(11, pass,
         "sigma_w err " + num(eS) + ", CR err " + num(eCr) + ", CV err " + num(eCv) +
             ", each < 1e-9 (sqrt(50) ml, 19.6 ml, 4.714%)");
  CHECK(eS < 1e-9);
  CHECK(eCr < 1e-9);
  CHECK(eCv < 1e-9);
}

TEST_CASE("criterion 12: more fused frames strictly reduce model error") {
  SynthParams p;
  p.frames = 20;
  p.warpMm = 0;
  p.sweepDegrees = 0;
  p.seed = 3;
  p.noiseSigma = 0.0015;
  SyntheticScene scene(p);
  CalibrationBundle calib = scene.calibration();
  std::vector<PointCloud> clouds;
  for (int f = 0; f < 20; ++f) {
    RenderedFrame rf = renderFrame(scene, f);
    computeForegroundMask(rf.frame);
    clouds.push_back(backproject(rf.frame, calib).cloud);
  }
  std::map<int, double> rms;
  for (int F : {1, 5, 20}) {
    PointCloud merged;
    for (int f = 0; f < F; ++f) merged.append(clouds[f]);
    PointCloud res = gridResample(mlsSmooth(merged, 0.008, 2), 0.002);
    rms[F] = groundTruthError(res, scene, 0.0).rms;
  }
  bool decreasing = rms[5] < rms[1] && rms[20] < rms[5];

  // MLS denoising factor on a seeded noisy plane
  std::mt19937 rng(44);
  std::normal_distribution<double> noise(0, 0.001);
  PointCloud plane = gridCloud(50, 50, 0.001);
  for (auto& pt : plane.points) pt.z() += noise(rng);
  auto planeRms = [](const PointCloud& c) {
    double s = 0;
    for (const auto& pt : c.points) s += pt.z() * pt.z();
    return std::sqrt(s / double(c.size()));
  };
  double before = planeRms(plane);
  double after = planeRms(mlsSmooth(plane, 0.008, 2));
  bool mlsOk = after * 3.0 <= before;

  bool pass = decreasing && mlsOk;
  report(12, pass,
         "rms F=1/5/20: " + num(rms[1]) + " > " + num(rms[5]) + " > " + num(rms[20]) +
             " m; MLS plane " + num(before) + " -> " + num(after) + " (>= 3x)");
  CHECK(decreasing);
  CHECK(mlsOk);
}

TEST_CASE("criterion 13: identical seeded runs are byte-identical") {
  const WarpRuns& runs = warpRuns();
  (void)runs;
  const std::string& seq = sequenceDir(5.0, "seq_warp5");
  PipelineConfig cfg = baseConfig(seq, "out_warp5_rerun");
  runPipeline(cfg);

  fs::path a = workRoot() / "out_warp5_shortest";
  fs::path b = workRoot() / "out_warp5_rerun";
  // wall-clock timing artifacts excluded; everything else must match
  const char* files[] = {"model_points.ply", "model_mesh.ply", "landmark_report.json",
                         "convergence.jsonl", "MANIFEST.json"};
  std::string bad;
  for (const char* f : files)
    if (readAllBytes(a / f) != readAllBytes(b / f)) bad += std::string(" ") + f;
  bool pass = bad.empty();
  report(13, pass,
         pass ? "model, mesh, landmark report, convergence log and manifest identical"
              : "differing files:" + bad);
  CHECK(bad.empty());
}

TEST_CASE("criterion 14: deformation propagation holds its invariants") {
  std::mt19937 rng(45);
  PointCloud cloud = gridCloud(25, 25, 0.008);
  for (auto& p : cloud.points) p.z() = 0.01 * std::sin(10 * p.x()) * std::cos(8 * p.y());
  DeformationGraph g = buildGraph(cloud, 0.008, 0.03, 2.5);
  REQUIRE(g.nodeCount() > 50);

  // identity transforms leave the dense cloud fixed
  PointCloud fixed = deformCloud(cloud, g, 4);
  double idErr = 0;
  for (size_t i = 0; i < cloud.size(); ++i)
    idErr = std::max(idErr, (fixed.points[i] - cloud.points[i]).norm());

  // every node sharing one rigid transform collapses to that rigid motion
  Mat3 R = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  Vec3 t(0.01, -0.02, 0.005);
  DeformationGraph rigidG = g;
  for (auto& tr : rigidG.transforms) {
    tr.topRows<3>() = R.transpose();
    tr.bottomRows<1>() = t.transpose();
  }
  std::uniform_real_distribution<double> uni(-0.02, 0.21);
  double rigidErr = 0;
  for (int i = 0; i < 500; ++i) {
    Vec3 q(uni(rng), uni(rng), uni(rng) * 0.1);
    NodeInfluence infl = computeInfluence(q, rigidG, 4);
    rigidErr = std::max(rigidErr, (deformPosition(q, rigidG, infl) - (R * q + t)).norm());
  }

  // weights normalized and the warp is continuous, 1e5 query pairs
  DeformationGraph wobble = g;
  std::normal_distribution<double> pert(0, 0.002);
  for (auto& tr : wobble.transforms)
    tr.bottomRows<1>() << pert(rng), pert(rng), pert(rng);
  double weightErr = 0, jump = 0;
  for (int i = 0; i < 100000; ++i) {
    Vec3 q(uni(rng), uni(rng), uni(rng) * 0.1);
    NodeInfluence infl = computeInfluence(q, wobble, 4);
    double sum = 0;
    for (double w : infl.weights) {
      weightErr = std::max(weightErr, std::max(0.0, -w));
      sum += w;
    }
    weightErr = std::max(weightErr, std::abs(sum - 1.0));
    Vec3 q2 = q + 1e-6 * randomUnit(rng);
    NodeInfluence infl2 = computeInfluence(q2, wobble, 4);
    jump = std::max(jump,
                    (deformPosition(q2, wobble, infl2) - deformPosition(q, wobble, infl))
                        .norm());
  }

  bool pass = idErr < 1e-12 && rigidErr < 1e-9 && weightErr < 1e-12 && jump < 1e-3;
  report(14, pass,
         "identity max " + num(idErr) + " < 1e-12, rigid collapse max " + num(rigidErr) +
             " < 1e-9, weight defect " + num(weightErr) + " < 1e-12, max jump " +
             num(jump) + " < 1e-3 over 1e5 pairs");
  CHECK(idErr < 1e-12);
  CHECK(rigidErr < 1e-9);
  CHECK(weightErr < 1e-12);
  CHECK(jump < 1e-3);
}
