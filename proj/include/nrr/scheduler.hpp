#ifndef NRR_SCHEDULER_HPP
#define NRR_SCHEDULER_HPP

#include "nrr/nricp.hpp"
#include "nrr/propagate.hpp"

namespace nrr {

struct SchedulerParams {
  int bundleSize = 10;
  double voxelSize = 0.006;       // meters
  double triangulationRadius = 0.025;
  double mu = 2.5;
  int maxSteps = 100;
  double stepConvergence = 1e-4;  // early exit when a full pass stays below
  // also stop once a pass improves the mean data residual by less than this
  // fraction: further steps only chase target noise and accumulate drift.
  // Inactive while stepConvergence is 0 (run to maxSteps).
  double minResidualGain = 0.01;
  int influenceNodes = 4;         // M nearest nodes for propagation
  // keep bundle 0 (holding the reference frame) fixed during the global
  // phase so the consensus stays anchored to the first frame's state instead
  // of drifting towards a temporal mean
  bool anchorReference = true;
  AlignParams align;
};

/// Ten consecutive frames aligned to their first member, then treated as a
/// unit in the global phase. `history` keeps one graph snapshot (entry node
/// positions plus solved transforms) per global step applied to this bundle;
/// their sequential application is the bundle's running composition.
struct Bundle {
  std::vector<int> memberFrames;
  int referenceFrame = -1;
  DeformationGraph mergedGraph;  // nodes at their current deformed positions
  std::vector<DeformationGraph> history;
};

struct StepLog {
  int step = 0;
  int bundleIndex = 0;
  SolveReport report;
};

struct SchedulerState {
  std::vector<DeformationGraph> frameGraphs;  // intra-bundle transforms applied
  std::vector<int> frameBundle;               // frame -> bundle index
  std::vector<Bundle> bundles;
  int stepCount = 0;
  std::vector<StepLog> perStepReports;
};

/// Partition per-frame graphs (temporal order, nodes already in the global
/// frame) into bundles, align members 1..k to member 0, and build each
/// bundle's merged graph by resampling and re-triangulating the union.
/// A trailing partial bundle smaller than 2 frames is merged into its
/// predecessor.
SchedulerState buildBundles(std::vector<DeformationGraph> graphs,
                            const SchedulerParams& params);

/// One global-phase step: align bundle `bundleIndex` against the resampled,
/// re-triangulated union of all other bundles' merged graphs.
SolveReport globalStep(SchedulerState& state, int bundleIndex,
                       const SchedulerParams& params);

/// Circular iteration over all bundles until maxSteps or until a full pass
/// where every bundle's transform change stays below stepConvergence.
/// `onPassEnd`, when set, is called after each full pass.
void runGlobalPhase(SchedulerState& state, const SchedulerParams& params,
                    const std::function<void(const SchedulerState&)>& onPassEnd = {});

/// Deform a frame's full-resolution cloud (global frame) through the frame's
/// intra-bundle transforms and its bundle's global-phase history.
PointCloud deformFrameCloud(const SchedulerState& state, int frameIndex,
                            const PointCloud& cloud, int influenceNodes = 4);

/// Deform a single global-frame point the same way (normals ignored).
Vec3 deformFramePoint(const SchedulerState& state, int frameIndex, const Vec3& p,
                      int influenceNodes = 4);

}  // namespace nrr

#endif
