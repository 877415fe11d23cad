#include <random>

#include "doctest.h"
#include "nrr/scheduler.hpp"
#include "test_helpers.hpp"

using namespace nrr;
using namespace nrr::testutil;

namespace {

// gently curved sheet so graphs are not coplanar and correspondences are rich
PointCloud curvedCloud(double zOffset = 0.0) {
  PointCloud c = gridCloud(30, 30, 0.006);
  for (auto& p : c.points)
    p.z() = zOffset + 0.01 * std::sin(12.0 * p.x()) * std::cos(10.0 * p.y());
  return c;
}

std::vector<DeformationGraph> identicalGraphs(int n, double zOffset = 0.0) {
  std::vector<DeformationGraph> graphs;
  for (int i = 0; i < n; ++i) {
    DeformationGraph g = buildGraph(curvedCloud(zOffset), 0.006, 0.025, 2.5, i);
    graphs.push_back(std::move(g));
  }
  return graphs;
}

double meanNodeDisplacement(const DeformationGraph& g) {
  double sum = 0;
  for (size_t i = 0; i < g.nodeCount(); ++i)
    sum += (g.deformedNode(int(i)) - g.nodes[i]).norm();
  return g.nodeCount() ? sum / double(g.nodeCount()) : 0.0;
}

}  // namespace

TEST_CASE("23 frames partition into bundles of 10, 10 and 3") {
  SchedulerParams params;
  SchedulerState state = buildBundles(identicalGraphs(23), params);
  REQUIRE(state.bundles.size() == 3);
  CHECK(state.bundles[0].memberFrames.size() == 10);
  CHECK(state.bundles[1].memberFrames.size() == 10);
  CHECK(state.bundles[2].memberFrames.size() == 3);
  CHECK(state.bundles[0].referenceFrame == 0);
  CHECK(state.bundles[1].referenceFrame == 10);
  CHECK(state.bundles[2].referenceFrame == 20);
  for (int f = 0; f < 23; ++f) CHECK(state.frameBundle[f] == f / 10);
}

TEST_CASE("a trailing single frame merges into the previous bundle") {
  SchedulerParams params;
  SchedulerState state = buildBundles(identicalGraphs(21), params);
  REQUIRE(state.bundles.size() == 2);
  CHECK(state.bundles[0].memberFrames.size() == 10);
  CHECK(state.bundles[1].memberFrames.size() == 11);
  CHECK(state.frameBundle[20] == 1);
}

TEST_CASE("identical frames align with near-identity transforms") {
  SchedulerParams params;
  params.bundleSize = 5;
  SchedulerState state = buildBundles(identicalGraphs(5), params);
  REQUIRE(state.bundles.size() == 1);
  for (int f = 0; f < 5; ++f)
    CHECK(meanNodeDisplacement(state.frameGraphs[f]) < 1e-4);
}

TEST_CASE("global phase pulls a displaced bundle towards the consensus") {
  SchedulerParams params;
  params.bundleSize = 2;
  params.maxSteps = 12;
  std::vector<DeformationGraph> graphs;
  for (int i = 0; i < 6; ++i) {
    double z = i >= 4 ? 0.003 : 0.0;  // last bundle shifted 3 mm
    graphs.push_back(buildGraph(curvedCloud(z), 0.006, 0.025, 2.5, i));
  }
  SchedulerState state = buildBundles(std::move(graphs), params);
  REQUIRE(state.bundles.size() == 3);

  auto meanZ = [](const DeformationGraph& g) {
    double s = 0;
    for (const auto& p : g.nodes) s += p.z();
    return s / double(g.nodeCount());
  };
  auto surfaceZ = [&](double x, double y) {
    return 0.01 * std::sin(12.0 * x) * std::cos(10.0 * y);
  };
  auto meanOffset = [&](const DeformationGraph& g) {
    double s = 0;
    for (const auto& p : g.nodes) s += p.z() - surfaceZ(p.x(), p.y());
    return s / double(g.nodeCount());
  };
  (void)meanZ;
  double before = meanOffset(state.bundles[2].mergedGraph);
  runGlobalPhase(state, params);
  double after = meanOffset(state.bundles[2].mergedGraph);
  CHECK(std::abs(before - 0.003) < 5e-4);
  CHECK(std::abs(after) < 0.5 * std::abs(before));
}

TEST_CASE("without anchoring the global phase visits bundles round-robin") {
  SchedulerParams params;
  params.bundleSize = 2;
  params.anchorReference = false;
  params.stepConvergence = 0.0;  // never early-exit
  params.maxSteps = 7;
  SchedulerState state = buildBundles(identicalGraphs(6), params);
  REQUIRE(state.bundles.size() == 3);
  runGlobalPhase(state, params);
  REQUIRE(state.perStepReports.size() == 7);
  for (size_t i = 0; i < state.perStepReports.size(); ++i)
    CHECK(state.perStepReports[i].bundleIndex == int(i % 3));
}

TEST_CASE("anchoring keeps the reference bundle out of the global phase") {
  SchedulerParams params;
  params.bundleSize = 2;
  params.stepConvergence = 0.0;
  params.maxSteps = 6;
  SchedulerState state = buildBundles(identicalGraphs(6), params);
  runGlobalPhase(state, params);
  for (const auto& log : state.perStepReports) CHECK(log.bundleIndex != 0);
  CHECK(state.bundles[0].history.empty());
}

TEST_CASE("the global phase exits early once a pass stays below threshold") {
  SchedulerParams params;
  params.bundleSize = 2;
  params.maxSteps = 100;
  SchedulerState state = buildBundles(identicalGraphs(6), params);
  runGlobalPhase(state, params);
  CHECK(state.stepCount < params.maxSteps);

  int passes = 0;
  SchedulerState state2 = buildBundles(identicalGraphs(6), params);
  runGlobalPhase(state2, params, [&](const SchedulerState&) { ++passes; });
  CHECK(passes >= 1);
  CHECK(passes <= 3);
}

TEST_CASE("fewer than two bundles leaves the global phase idle") {
  SchedulerParams params;
  SchedulerState state = buildBundles(identicalGraphs(4), params);
  REQUIRE(state.bundles.size() == 1);
  runGlobalPhase(state, params);
  CHECK(state.stepCount == 0);
}

TEST_CASE("identity transforms leave a deformed frame cloud unchanged") {
  SchedulerParams params;
  params.bundleSize = 2;
  SchedulerState state = buildBundles(identicalGraphs(4), params);
  for (auto& g : state.frameGraphs)
    g.transforms.assign(g.nodeCount(), identityNodeTransform());
  for (auto& b : state.bundles) b.history.clear();
  PointCloud cloud = curvedCloud();
  PointCloud out = deformFrameCloud(state, 1, cloud, params.influenceNodes);
  REQUIRE(out.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i)
    CHECK((out.points[i] - cloud.points[i]).norm() < 1e-12);

  Vec3 p(0.05, 0.05, 0.002);
  CHECK((deformFramePoint(state, 1, p, params.influenceNodes) - p).norm() < 1e-12);
}
