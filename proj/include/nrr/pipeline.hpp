#ifndef NRR_PIPELINE_HPP
#define NRR_PIPELINE_HPP

#include <map>
#include <optional>
#include <string>

#include "nrr/fuse.hpp"
#include "nrr/scheduler.hpp"
#include "nrr/validate.hpp"

namespace nrr {

struct PipelineConfig {
  // inputs: framesDir holds depth/<stem>.png and color/<stem>.png pairs
  std::string framesDir;
  std::string calibrationPath;
  std::string posesPath;      // empty: frame-to-frame rigid ICP fallback
  std::string landmarksPath;  // optional, enables the landmark report
  std::string outDir = "out";

  double voxelSize = 0.006;
  double triangulationRadius = 0.025;
  double mu = 2.5;
  double correspondenceThreshold = 0.02;
  double normalThresholdDeg = 45.0;
  double alpha = 20.0;
  double beta = 1.0;
  int bundleSize = 10;
  int maxSteps = 100;
  int maxInnerIterations = 10;
  double innerConvergence = 1e-4;
  double mlsRadius = 0.008;
  double resampleCell = 0.001;
  int meshDepth = 9;
  int samplesPerNode = 10;
  int influenceNodes = 4;
  double maskMargin = 0.2;
  CorrespondenceMode mode = CorrespondenceMode::shortestDistance;
  std::string mesherCommand = "hull_mesher";
  bool rigidOnly = false;  // skip the nonrigid phases, fuse posed frames as-is
  bool skipMesher = false;

  std::map<std::string, std::string> overrides;  // echoed into the MANIFEST
};

PipelineConfig loadPipelineConfig(const std::string& path);

struct PipelineResult {
  PointCloud fusedPoints;
  std::optional<TriangleMesh> mesh;
  SchedulerState state;
  std::optional<LandmarkErrorReport> landmarkReport;
  std::vector<double> passEpsilonL;  // per global pass, when landmarks given
  std::map<std::string, double> stageSeconds;
};

/// Full reconstruction: preprocess frames, pose them, build per-frame graphs,
/// bundle and globally align, deform, then fuse (MLS, reorient, resample,
/// mesh, recolor). Writes model/convergence/timing artifacts plus a MANIFEST
/// into outDir; throws with a module-qualified message on failure.
PipelineResult runPipeline(const PipelineConfig& config);

/// Per-stage durations as fractions summing to one, emitted as JSON + CSV.
void emitTimings(const std::map<std::string, double>& stageSeconds,
                 const std::string& jsonPath, const std::string& csvPath);

}  // namespace nrr

#endif
