#include <omp.h>

#include <random>

#include "doctest.h"
#include "nrr/fuse.hpp"
#include "nrr/nricp.hpp"
#include "nrr/preprocess.hpp"
#include "nrr/propagate.hpp"
#include "nrr/synth.hpp"
#include "test_helpers.hpp"

using namespace nrr;
using namespace nrr::testutil;

// The data-parallel kernels must be pure per-element maps: their output may
// not depend on the thread count. Each test compares the parallel kernel
// against a serial per-element reference (or a forced single-thread run)
// and requires bitwise equality.

namespace {

struct ThreadGuard {
  int saved;
  explicit ThreadGuard(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadGuard() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("correspondence search equals the serial per-node reference") {
  const int n = 25;
  PointCloud source = gridCloud(n, n, 0.008);
  TriangleMesh target = gridMesh(n, n, 0.008);
  for (auto& v : target.vertices) v += sinusoidWarp(v, 0.004);
  SpatialIndex index(target);
  DeformationGraph g = buildGraph(source, 0.006, 0.025, 2.5);

  ThreadGuard guard(3);
  CorrespondenceSet par =
      findCorrespondences(g, index, CorrespondenceMode::shortestDistance, {});

  REQUIRE(par.size() == g.nodeCount());
  for (size_t i = 0; i < g.nodeCount(); ++i) {
    Correspondence ref = findCorrespondence(int(i), g.deformedNode(int(i)),
                                            g.nodeNormals[i], index,
                                            CorrespondenceMode::shortestDistance, {});
    CHECK(par[i].sourceIndex == ref.sourceIndex);
    CHECK(par[i].weight == ref.weight);
    CHECK(par[i].rejectionReason == ref.rejectionReason);
    CHECK((par[i].targetPoint - ref.targetPoint).norm() == 0.0);
    CHECK(par[i].distance == ref.distance);
  }
}

TEST_CASE("cloud deformation equals the serial per-point reference") {
  std::mt19937 rng(111);
  PointCloud cloud = gridCloud(30, 30, 0.006);
  DeformationGraph g = buildGraph(cloud, 0.008, 0.03, 2.5);
  std::normal_distribution<double> pert(0, 0.002);
  for (auto& t : g.transforms) t.bottomRows<1>() << pert(rng), pert(rng), pert(rng);

  ThreadGuard guard(3);
  PointCloud par = deformCloud(cloud, g, 4);
  for (size_t i = 0; i < cloud.size(); ++i) {
    NodeInfluence infl = computeInfluence(cloud.points[i], g, 4);
    Vec3 vOut, nOut;
    deformPoint(cloud.points[i], cloud.normals[i], g, infl, vOut, nOut);
    CHECK((par.points[i] - vOut).norm() == 0.0);
    CHECK((par.normals[i] - nOut).norm() == 0.0);
  }
}

TEST_CASE("MLS smoothing is bitwise identical across thread counts") {
  std::mt19937 rng(112);
  std::normal_distribution<double> noise(0, 0.001);
  PointCloud plane = gridCloud(30, 30, 0.003);
  for (auto& p : plane.points) p.z() += noise(rng);

  PointCloud serial, parallel;
  {
    ThreadGuard guard(1);
    serial = mlsSmooth(plane, 0.008, 2);
  }
  {
    ThreadGuard guard(4);
    parallel = mlsSmooth(plane, 0.008, 2);
  }
  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial.points[i] == parallel.points[i]);
    CHECK(serial.normals[i] == parallel.normals[i]);
  }
}

TEST_CASE("grid backprojection is bitwise identical across thread counts") {
  CameraIntrinsics k;
  k.fx = k.fy = 140;
  k.cx = 80;
  k.cy = 60;
  k.width = 160;
  k.height = 120;
  k.distortion = {0.05, -0.01};
  RGBDFrame frame;
  frame.width = 160;
  frame.height = 120;
  frame.depth.assign(size_t(160) * 120, 0);
  for (int i = 0; i < 160 * 120; i += 3) frame.depth[i] = 0.8 + 0.0001 * (i % 97);

  DepthGrid serial, parallel;
  {
    ThreadGuard guard(1);
    serial = backprojectGrid(frame, k);
  }
  {
    ThreadGuard guard(4);
    parallel = backprojectGrid(frame, k);
  }
  CHECK(serial.valid == parallel.valid);
  for (size_t i = 0; i < serial.position.size(); ++i)
    CHECK(serial.position[i] == parallel.position[i]);
}

TEST_CASE("frame rendering is bitwise identical across thread counts") {
  SynthParams p;
  p.frames = 2;
  p.width = 64;
  p.height = 48;
  p.focal = 56;
  p.noiseSigma = 0.0015;
  SyntheticScene scene(p);

  RenderedFrame serial, parallel;
  {
    ThreadGuard guard(1);
    serial = renderFrame(scene, 1);
  }
  {
    ThreadGuard guard(4);
    parallel = renderFrame(scene, 1);
  }
  CHECK(serial.frame.depth == parallel.frame.depth);
  CHECK(serial.frame.color == parallel.frame.color);
  CHECK(serial.trueDepth == parallel.trueDepth);
}

TEST_CASE("nonrigid alignment is bitwise identical across thread counts") {
  const int n = 21;
  PointCloud source = gridCloud(n, n, 0.008);
  TriangleMesh target = gridMesh(n, n, 0.008);
  for (auto& v : target.vertices) v += sinusoidWarp(v, 0.003);
  SpatialIndex index(target);

  auto run = [&](int threads) {
    ThreadGuard guard(threads);
    DeformationGraph g = buildGraph(source, 0.006, 0.025, 2.5);
    AlignParams params;
    alignPair(g, index, params);
    return g;
  };
  DeformationGraph a = run(1);
  DeformationGraph b = run(4);
  REQUIRE(a.nodeCount() == b.nodeCount());
  for (size_t i = 0; i < a.nodeCount(); ++i)
    CHECK((a.transforms[i] - b.transforms[i]).norm() == 0.0);
}
