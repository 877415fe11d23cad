#include "nrr/scheduler.hpp"

#include <cstdio>
#include <functional>

namespace nrr {

namespace {

PointCloud graphAsCloud(const DeformationGraph& g) {
  PointCloud c;
  c.points = g.nodes;
  c.normals = g.nodeNormals;
  c.colors = g.nodeColors;
  if (c.colors.size() != c.points.size()) c.colors.assign(c.points.size(), Rgb::Zero());
  if (c.normals.size() != c.points.size())
    c.normals.assign(c.points.size(), Vec3(0, 0, 1));
  return c;
}

DeformationGraph rebuildUniformGraph(const PointCloud& cloud,
                                     const SchedulerParams& params) {
  return buildGraph(cloud, params.voxelSize, params.triangulationRadius, params.mu);
}

// bake the solved transforms into the node positions and normals, resetting
// the transforms to identity
void bakeTransforms(DeformationGraph& g) {
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    Mat3 lin = g.transforms[i].topRows<3>().transpose();
    Vec3 n = g.nodeNormals[i];
    if (std::abs(lin.determinant()) > 1e-12) n = lin.inverse().transpose() * n;
    double nn = n.norm();
    g.nodeNormals[i] = nn > 1e-12 ? Vec3(n / nn) : g.nodeNormals[i];
    g.nodes[i] = g.deformedNode(int(i));
  }
  g.transforms.assign(g.nodes.size(), identityNodeTransform());
}

}  // namespace

SchedulerState buildBundles(std::vector<DeformationGraph> graphs,
                            const SchedulerParams& params) {
  SchedulerState state;
  const int n = int(graphs.size());
  state.frameGraphs = std::move(graphs);
  state.frameBundle.assign(n, -1);

  // partition into consecutive bundles; trailing remainder < 2 merges backwards
  std::vector<std::vector<int>> groups;
  for (int i = 0; i < n; i += params.bundleSize) {
    std::vector<int> members;
    for (int j = i; j < std::min(n, i + params.bundleSize); ++j) members.push_back(j);
    groups.push_back(members);
  }
  if (groups.size() > 1 && int(groups.back().size()) < 2) {
    auto tail = groups.back();
    groups.pop_back();
    groups.back().insert(groups.back().end(), tail.begin(), tail.end());
  }

  for (const auto& members : groups) {
    Bundle b;
    b.memberFrames = members;
    b.referenceFrame = members.front();
    for (int f : members) state.frameBundle[f] = int(state.bundles.size());

    // intra-bundle: register members 1..k to the first member's graph mesh
    DeformationGraph& ref = state.frameGraphs[b.referenceFrame];
    TriangleMesh refMesh = ref.toMesh();
    SpatialIndex refIndex(refMesh);
    for (size_t k = 1; k < members.size(); ++k) {
      DeformationGraph& g = state.frameGraphs[members[k]];
      if (g.nodeCount() == 0) continue;
      SolveReport rep = alignPair(g, refIndex, params.align);
      if (rep.acceptedCorrespondences == 0) {
        std::fprintf(stderr,
                     "[scheduler] warning: frame %d found no correspondences in its "
                     "bundle, keeping rigid-only pose\n",
                     members[k]);
        g.transforms.assign(g.nodeCount(), identityNodeTransform());
      }
    }

    // merged graph: union of aligned member node sets, resampled and re-meshed
    PointCloud merged;
    for (int f : members) {
      DeformationGraph deformed = state.frameGraphs[f];
      bakeTransforms(deformed);
      merged.append(graphAsCloud(deformed));
    }
    b.mergedGraph = rebuildUniformGraph(merged, params);
    state.bundles.push_back(std::move(b));
  }
  return state;
}

SolveReport globalStep(SchedulerState& state, int bundleIndex,
                       const SchedulerParams& params) {
  Bundle& bundle = state.bundles[bundleIndex];

  PointCloud unionCloud;
  for (size_t bi = 0; bi < state.bundles.size(); ++bi) {
    if (int(bi) == bundleIndex) continue;
    unionCloud.append(graphAsCloud(state.bundles[bi].mergedGraph));
  }
  DeformationGraph targetGraph = rebuildUniformGraph(unionCloud, params);
  TriangleMesh targetMesh = targetGraph.toMesh();
  SpatialIndex targetIndex(targetMesh);

  SolveReport rep = alignPair(bundle.mergedGraph, targetIndex, params.align);

  // snapshot carries entry positions + solved transforms; then bake
  bundle.history.push_back(bundle.mergedGraph);
  bakeTransforms(bundle.mergedGraph);

  state.stepCount++;
  state.perStepReports.push_back({state.stepCount, bundleIndex, rep});
  return rep;
}

void runGlobalPhase(SchedulerState& state, const SchedulerParams& params,
                    const std::function<void(const SchedulerState&)>& onPassEnd) {
  const int nBundles = int(state.bundles.size());
  if (nBundles < 2) return;  // nothing to align against
  const int first = params.anchorReference ? 1 : 0;
  double prevResidual = -1;
  while (state.stepCount < params.maxSteps) {
    double maxChange = 0, passResidual = 0;
    int passSteps = 0;
    for (int b = first; b < nBundles && state.stepCount < params.maxSteps; ++b) {
      SolveReport rep = globalStep(state, b, params);
      maxChange = std::max(maxChange, rep.finalChange);
      passResidual += rep.dataResidual;
      ++passSteps;
    }
    if (onPassEnd) onPassEnd(state);
    if (maxChange < params.stepConvergence) break;
    if (params.stepConvergence > 0 && passSteps > 0) {
      double cur = passResidual / passSteps;
      if (prevResidual > 0 && prevResidual - cur < params.minResidualGain * prevResidual)
        break;
      prevResidual = cur;
    }
  }
}

PointCloud deformFrameCloud(const SchedulerState& state, int frameIndex,
                            const PointCloud& cloud, int influenceNodes) {
  PointCloud out = cloud;
  const DeformationGraph& fg = state.frameGraphs[frameIndex];
  if (int(fg.nodeCount()) > influenceNodes) out = deformCloud(out, fg, influenceNodes);
  int b = state.frameBundle[frameIndex];
  if (b >= 0) {
    for (const DeformationGraph& snap : state.bundles[b].history) {
      if (int(snap.nodeCount()) > influenceNodes)
        out = deformCloud(out, snap, influenceNodes);
    }
  }
  return out;
}

Vec3 deformFramePoint(const SchedulerState& state, int frameIndex, const Vec3& p,
                      int influenceNodes) {
  PointCloud c;
  c.points.push_back(p);
  c.normals.push_back(Vec3(0, 0, 1));
  c.colors.push_back(Rgb::Zero());
  return deformFrameCloud(state, frameIndex, c, influenceNodes).points[0];
}

}  // namespace nrr
