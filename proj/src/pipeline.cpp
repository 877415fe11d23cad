#include "nrr/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

#include "nrr/io.hpp"
#include "nrr/preprocess.hpp"
#include "nrr/rigid_init.hpp"

namespace nrr {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void writeManifest(const PipelineConfig& cfg, const std::string& stage,
                   const std::string& error = "") {
  nlohmann::json m;
  m["completion_stage"] = stage;
  if (!error.empty()) m["error"] = error;
  nlohmann::json params;
  params["voxel_size"] = cfg.voxelSize;
  params["triangulation_radius"] = cfg.triangulationRadius;
  params["mu"] = cfg.mu;
  params["correspondence_threshold"] = cfg.correspondenceThreshold;
  params["normal_threshold_deg"] = cfg.normalThresholdDeg;
  params["alpha"] = cfg.alpha;
  params["beta"] = cfg.beta;
  params["bundle_size"] = cfg.bundleSize;
  params["max_steps"] = cfg.maxSteps;
  params["max_inner_iterations"] = cfg.maxInnerIterations;
  params["inner_convergence"] = cfg.innerConvergence;
  params["mls_radius"] = cfg.mlsRadius;
  params["resample_cell"] = cfg.resampleCell;
  params["mesh_depth"] = cfg.meshDepth;
  params["samples_per_node"] = cfg.samplesPerNode;
  params["influence_nodes"] = cfg.influenceNodes;
  params["mask_margin"] = cfg.maskMargin;
  params["mode"] =
      cfg.mode == CorrespondenceMode::shortestDistance ? "shortestDistance" : "closestPoint";
  params["rigid_only"] = cfg.rigidOnly;
  m["parameters"] = params;
  nlohmann::json ov = nlohmann::json::object();
  for (const auto& [k, v] : cfg.overrides) ov[k] = v;
  m["overrides"] = ov;
  m["frames_dir"] = cfg.framesDir;
  m["calibration"] = cfg.calibrationPath;
  m["poses"] = cfg.posesPath;
  std::ofstream out(fs::path(cfg.outDir) / "MANIFEST.json");
  out << m.dump(2) << "\n";
}

struct LoadedFrame {
  std::string stem;
  RGBDFrame frame;
};

std::vector<LoadedFrame> loadFrames(const PipelineConfig& cfg) {
  fs::path depthDir = fs::path(cfg.framesDir) / "depth";
  fs::path colorDir = fs::path(cfg.framesDir) / "color";
  if (!fs::is_directory(depthDir))
    throw std::runtime_error("pipeline: depth directory not found: " + depthDir.string());
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(depthDir))
    if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  if (stems.empty())
    throw std::runtime_error("pipeline: no depth frames in " + depthDir.string());

  std::vector<LoadedFrame> frames;
  for (const auto& stem : stems) {
    LoadedFrame lf;
    lf.stem = stem;
    readDepthPng((depthDir / (stem + ".png")).string(), lf.frame);
    fs::path colorPath = colorDir / (stem + ".png");
    if (fs::exists(colorPath)) readColorPng(colorPath.string(), lf.frame);
    frames.push_back(std::move(lf));
  }
  return frames;
}

}  // namespace

PipelineConfig loadPipelineConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("pipeline: cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  PipelineConfig c;
  fs::path base = fs::path(path).parent_path();
  auto resolvePath = [&](const std::string& p) {
    if (p.empty()) return p;
    fs::path fp(p);
    return fp.is_absolute() ? p : (base / fp).string();
  };
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
      c.overrides[key] = j.at(key).dump();
    }
  };
  std::string framesDir, calibPath, posesPath, landmarksPath, outDir, modeStr, mesher;
  get("frames_dir", framesDir);
  get("calibration", calibPath);
  get("poses", posesPath);
  get("landmarks", landmarksPath);
  get("out_dir", outDir);
  c.framesDir = resolvePath(framesDir);
  c.calibrationPath = resolvePath(calibPath);
  c.posesPath = resolvePath(posesPath);
  c.landmarksPath = resolvePath(landmarksPath);
  if (!outDir.empty()) c.outDir = resolvePath(outDir);
  get("voxel_size", c.voxelSize);
  get("triangulation_radius", c.triangulationRadius);
  get("mu", c.mu);
  get("correspondence_threshold", c.correspondenceThreshold);
  get("normal_threshold_deg", c.normalThresholdDeg);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("bundle_size", c.bundleSize);
  get("max_steps", c.maxSteps);
  get("max_inner_iterations", c.maxInnerIterations);
  get("inner_convergence", c.innerConvergence);
  get("mls_radius", c.mlsRadius);
  get("resample_cell", c.resampleCell);
  get("mesh_depth", c.meshDepth);
  get("samples_per_node", c.samplesPerNode);
  get("influence_nodes", c.influenceNodes);
  get("mask_margin", c.maskMargin);
  get("rigid_only", c.rigidOnly);
  get("skip_mesher", c.skipMesher);
  get("mesher_command", mesher);
  if (!mesher.empty()) c.mesherCommand = mesher;
  get("mode", modeStr);
  if (!modeStr.empty()) {
    if (modeStr == "closestPoint") c.mode = CorrespondenceMode::closestPoint;
    else if (modeStr == "shortestDistance") c.mode = CorrespondenceMode::shortestDistance;
    else throw std::runtime_error("pipeline: unknown mode '" + modeStr + "'");
  }
  return c;
}

PipelineResult runPipeline(const PipelineConfig& cfg) {
  fs::create_directories(cfg.outDir);
  std::string stage = "start";
  PipelineResult result;
  std::map<std::string, double>& timing = result.stageSeconds;
  timing = {{"Bundle fit", 0}, {"Global fit", 0}, {"MLS", 0},
            {"Poisson recon.", 0}, {"Misc.", 0}};

  try {
    Clock::time_point tMisc = Clock::now();

    stage = "calibration";
    if (!fs::exists(cfg.calibrationPath))
      throw std::runtime_error("pipeline: calibration file not found: " +
                               cfg.calibrationPath);
    CalibrationBundle calib = loadCalibration(cfg.calibrationPath);

    stage = "frames";
    std::vector<LoadedFrame> frames = loadFrames(cfg);
    const int n = int(frames.size());

    stage = "poses";
    PoseSequence poses;
    if (!cfg.posesPath.empty()) {
      if (!fs::exists(cfg.posesPath))
        throw std::runtime_error("pipeline: pose file not found: " + cfg.posesPath);
      poses = loadPoses(cfg.posesPath);
      if (int(poses.poses.size()) != n)
        throw std::runtime_error("pipeline: pose count " +
                                 std::to_string(poses.poses.size()) +
                                 " does not match frame count " + std::to_string(n));
    }

    stage = "preprocess";
    std::vector<PointCloud> frameClouds(n);  // global coordinates
    std::vector<Vec3> cameraCenters(n);
    for (int i = 0; i < n; ++i) {
      computeForegroundMask(frames[i].frame, cfg.maskMargin);
      FrameCloud fc = backproject(frames[i].frame, calib);
      if (cfg.posesPath.empty()) {
        // rigid ICP fallback: chain frame-to-frame alignments
        if (i == 0) {
          poses.poses.push_back(RigidTransform{});
        } else {
          PointCloud prevCam;  // previous frame cloud back in its camera space
          RigidTransform prevInv = invertTransform(poses.poses[i - 1]);
          prevCam = frameClouds[i - 1];
          for (auto& pt : prevCam.points) pt = prevInv.apply(pt);
          for (auto& nm : prevCam.normals) nm = prevInv.rotation * nm;
          IcpResult icp = pairwiseRigidICP(fc.cloud, prevCam, RigidTransform{});
          if (!icp.converged)
            std::fprintf(stderr, "[pipeline] warning: rigid ICP weak for frame %d\n", i);
          poses.poses.push_back(composeTransforms(poses.poses[i - 1], icp.transform));
        }
        poses.frameIds.push_back(frames[i].stem);
      }
      const RigidTransform& pose = poses.poses[i];
      PointCloud global = fc.cloud;
      for (auto& pt : global.points) pt = pose.apply(pt);
      for (auto& nm : global.normals) nm = pose.rotation * nm;
      frameClouds[i] = std::move(global);
      cameraCenters[i] = pose.translation;
    }

    std::optional<std::vector<LandmarkObservations>> landmarks;
    if (!cfg.landmarksPath.empty()) {
      if (!fs::exists(cfg.landmarksPath))
        throw std::runtime_error("pipeline: landmark file not found: " +
                                 cfg.landmarksPath);
      landmarks = loadLandmarksCsv(cfg.landmarksPath);
    }
    timing["Misc."] += elapsed(tMisc);

    SchedulerParams sched;
    sched.bundleSize = cfg.bundleSize;
    sched.voxelSize = cfg.voxelSize;
    sched.triangulationRadius = cfg.triangulationRadius;
    sched.mu = cfg.mu;
    sched.maxSteps = cfg.maxSteps;
    sched.stepConvergence = cfg.innerConvergence;
    sched.influenceNodes = cfg.influenceNodes;
    sched.align.alpha = cfg.alpha;
    sched.align.beta = cfg.beta;
    sched.align.mode = cfg.mode;
    sched.align.correspondence.maxDistance = cfg.correspondenceThreshold;
    sched.align.correspondence.maxNormalAngleDeg = cfg.normalThresholdDeg;
    sched.align.maxIterations = cfg.maxInnerIterations;
    sched.align.convergenceThreshold = cfg.innerConvergence;

    if (!cfg.rigidOnly) {
      stage = "graphs";
      Clock::time_point tBundle = Clock::now();
      std::vector<DeformationGraph> graphs(n);
      for (int i = 0; i < n; ++i) {
        graphs[i] = buildGraph(frameClouds[i], cfg.voxelSize, cfg.triangulationRadius,
                               cfg.mu, i);
        if (graphs[i].nodeCount() == 0)
          throw std::runtime_error("pipeline: frame " + std::to_string(i) +
                                   " produced an empty deformation graph");
      }

      stage = "bundle fit";
      SchedulerState state = buildBundles(std::move(graphs), sched);
      timing["Bundle fit"] += elapsed(tBundle);

      stage = "global fit";
      Clock::time_point tGlobal = Clock::now();
      auto passEval = [&](const SchedulerState& st) {
        if (!landmarks) return;
        FrameDeformFn deform = [&](int fi, const Vec3& p) {
          return deformFramePoint(st, fi, p, cfg.influenceNodes);
        };
        std::vector<RGBDFrame> rawFrames;
        for (auto& lf : frames) rawFrames.push_back(lf.frame);
        LandmarkErrorReport rep =
            landmarkError(*landmarks, rawFrames, calib, poses, deform);
        result.passEpsilonL.push_back(rep.epsilonL);
      };
      runGlobalPhase(state, sched, passEval);
      timing["Global fit"] += elapsed(tGlobal);
      result.state = std::move(state);
    } else {
      // rigid baseline: every frame keeps its posed geometry untouched
      result.state.frameGraphs.resize(n);
      result.state.frameBundle.assign(n, -1);
    }

    stage = "deform";
    Clock::time_point tMisc2 = Clock::now();
    PointCloud merged;
    std::vector<Vec3> mergedCenters;
    for (int i = 0; i < n; ++i) {
      PointCloud d = cfg.rigidOnly
                         ? frameClouds[i]
                         : deformFrameCloud(result.state, i, frameClouds[i],
                                            cfg.influenceNodes);
      merged.append(d);
      mergedCenters.insert(mergedCenters.end(), d.size(), cameraCenters[i]);
    }
    if (merged.empty()) throw std::runtime_error("pipeline: no surface points survived");
    timing["Misc."] += elapsed(tMisc2);

    stage = "mls";
    Clock::time_point tMls = Clock::now();
    PointCloud smoothed = mlsSmooth(merged, cfg.mlsRadius, 2);
    smoothed = reorientNormals(smoothed, mergedCenters);
    PointCloud resampled = gridResample(smoothed, cfg.resampleCell);
    timing["MLS"] += elapsed(tMls);
    result.fusedPoints = resampled;

    stage = "mesh";
    Clock::time_point tMesh = Clock::now();
    if (!cfg.skipMesher) {
      MeshParams mp;
      mp.mesherCommand = cfg.mesherCommand;
      mp.depth = cfg.meshDepth;
      mp.samplesPerNode = cfg.samplesPerNode;
      mp.workDir = (fs::path(cfg.outDir) / "tmp").string();
      result.mesh = meshModel(resampled, mp);
      if (result.mesh)
        result.mesh = reintegrateColor(*result.mesh, resampled, 2 * cfg.resampleCell);
    }
    timing["Poisson recon."] += elapsed(tMesh);

    stage = "reports";
    Clock::time_point tMisc3 = Clock::now();
    writePlyCloud((fs::path(cfg.outDir) / "model_points.ply").string(), resampled);
    if (result.mesh)
      writePlyMesh((fs::path(cfg.outDir) / "model_mesh.ply").string(), *result.mesh);

    {
      std::ofstream conv(fs::path(cfg.outDir) / "convergence.jsonl");
      for (const StepLog& log : result.state.perStepReports) {
        nlohmann::json j;
        j["step"] = log.step;
        j["bundle"] = log.bundleIndex;
        j["iterations"] = log.report.iterations;
        j["final_change"] = log.report.finalChange;
        j["data_residual"] = log.report.dataResidual;
        j["stiffness_residual"] = log.report.stiffnessResidual;
        j["accepted"] = log.report.acceptedCorrespondences;
        conv << j.dump() << "\n";
      }
    }

    if (landmarks) {
      FrameDeformFn deform = [&](int fi, const Vec3& p) {
        return cfg.rigidOnly ? p
                             : deformFramePoint(result.state, fi, p, cfg.influenceNodes);
      };
      std::vector<RGBDFrame> rawFrames;
      for (auto& lf : frames) rawFrames.push_back(lf.frame);
      result.landmarkReport =
          landmarkError(*landmarks, rawFrames, calib, poses, deform);
      nlohmann::json j;
      j["epsilon_l_m2"] = result.landmarkReport->epsilonL;
      nlohmann::json per = nlohmann::json::array();
      for (const auto& pl : result.landmarkReport->perLandmark) {
        nlohmann::json e;
        e["landmark_id"] = pl.landmarkId;
        e["used_samples"] = pl.usedSamples;
        e["dropped_samples"] = pl.droppedSamples;
        e["frobenius_m2"] = pl.frobenius;
        per.push_back(e);
      }
      j["per_landmark"] = per;
      nlohmann::json passes = nlohmann::json::array();
      for (double v : result.passEpsilonL) passes.push_back(v);
      j["per_pass_epsilon_l"] = passes;
      std::ofstream out(fs::path(cfg.outDir) / "landmark_report.json");
      out << j.dump(2) << "\n";
    }
    timing["Misc."] += elapsed(tMisc3);

    emitTimings(timing, (fs::path(cfg.outDir) / "timings.json").string(),
                (fs::path(cfg.outDir) / "timings.csv").string());
    writeManifest(cfg, "complete");
    return result;
  } catch (const std::exception& ex) {
    writeManifest(cfg, stage, ex.what());
    throw;
  }
}

void emitTimings(const std::map<std::string, double>& stageSeconds,
                 const std::string& jsonPath, const std::string& csvPath) {
  double total = 0;
  for (const auto& [k, v] : stageSeconds) total += v;
  nlohmann::json j;
  nlohmann::json secs = nlohmann::json::object();
  nlohmann::json fracs = nlohmann::json::object();
  std::ofstream csv(csvPath);
  csv << "stage,seconds,fraction\n";
  for (const auto& [k, v] : stageSeconds) {
    double frac = total > 0 ? v / total : 0;
    secs[k] = v;
    fracs[k] = frac;
    csv << '"' << k << "\"," << v << ',' << frac << "\n";
  }
  j["seconds"] = secs;
  j["fractions"] = fracs;
  j["total_seconds"] = total;
  std::ofstream out(jsonPath);
  out << j.dump(2) << "\n";
}

}  // namespace nrr
