#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "nrr/io.hpp"
#include "nrr/pipeline.hpp"
#include "nrr/synth.hpp"
#include "nrr/validate.hpp"

namespace fs = std::filesystem;

namespace {

int runReconstruct(const std::string& configPath, const std::string& modeOverride,
                   double alphaOverride, const std::string& outOverride) {
  nrr::PipelineConfig cfg = nrr::loadPipelineConfig(configPath);
  if (!modeOverride.empty()) {
    if (modeOverride == "closestPoint")
      cfg.mode = nrr::CorrespondenceMode::closestPoint;
    else if (modeOverride == "shortestDistance")
      cfg.mode = nrr::CorrespondenceMode::shortestDistance;
    else
      throw std::runtime_error("reconstruct: unknown mode '" + modeOverride + "'");
    cfg.overrides["mode"] = modeOverride;
  }
  if (alphaOverride > 0) {
    cfg.alpha = alphaOverride;
    cfg.overrides["alpha"] = std::to_string(alphaOverride);
  }
  if (!outOverride.empty()) {
    cfg.outDir = outOverride;
    cfg.overrides["out_dir"] = outOverride;
  }
  nrr::PipelineResult result = nrr::runPipeline(cfg);
  std::printf("reconstruct: %zu fused points, %s, %d global steps -> %s\n",
              result.fusedPoints.size(), result.mesh ? "meshed" : "points only",
              result.state.stepCount, cfg.outDir.c_str());
  if (result.landmarkReport)
    std::printf("reconstruct: epsilon_L = %.6e m^2\n", result.landmarkReport->epsilonL);
  return 0;
}

int runSynth(const nrr::SynthParams& params, const std::string& outDir) {
  nrr::SyntheticScene scene(params);
  nrr::writeSequence(scene, outDir);
  std::printf("synth: wrote %d frames (seed %u, warp %.1f mm) -> %s\n", params.frames,
              params.seed, params.warpMm, outDir.c_str());
  return 0;
}

struct SideAnnotation {
  std::string name;
  int sternum = -1, fold = -1, axilla = -1;
};

std::vector<SideAnnotation> loadAnnotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("validate: cannot open annotations " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  std::vector<SideAnnotation> sides;
  for (const char* key : {"left", "right"}) {
    if (!j.contains(key)) continue;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 3)
      throw std::runtime_error(std::string("validate: annotations['") + key +
                               "'] must be [sternum, fold, axilla] vertex indices");
    SideAnnotation s;
    s.name = key;
    s.sternum = arr[0].get<int>();
    s.fold = arr[1].get<int>();
    s.axilla = arr[2].get<int>();
    sides.push_back(s);
  }
  if (sides.empty())
    throw std::runtime_error("validate: annotations define neither 'left' nor 'right'");
  return sides;
}

double measureSide(const nrr::TriangleMesh& mesh, const SideAnnotation& side) {
  auto pathSF = nrr::geodesicContour(mesh, side.sternum, side.fold);
  auto pathFA = nrr::geodesicContour(mesh, side.fold, side.axilla);
  auto pathAS = nrr::geodesicContour(mesh, side.axilla, side.sternum);

  nrr::EdgeSet contourEdges;
  auto addEdges = [&](const std::vector<int>& p) {
    for (size_t i = 0; i + 1 < p.size(); ++i)
      contourEdges.insert({std::min(p[i], p[i + 1]), std::max(p[i], p[i + 1])});
  };
  addEdges(pathSF);
  addEdges(pathFA);
  addEdges(pathAS);

  auto toPoints = [&](const std::vector<int>& p) {
    std::vector<nrr::Vec3> out;
    for (int v : p) out.push_back(mesh.vertices[v]);
    return out;
  };
  // four Coons contours: the closing path is split at its midpoint
  std::vector<nrr::Vec3> c0 = toPoints(pathSF), c1 = toPoints(pathFA);
  std::vector<nrr::Vec3> back = toPoints(pathAS);
  size_t mid = back.size() / 2;
  std::vector<nrr::Vec3> c2(back.begin(), back.begin() + mid + 1);
  std::vector<nrr::Vec3> c3(back.begin() + mid, back.end());
  nrr::TriangleMesh patch = nrr::coonsPatch({c0, c1, c2, c3});

  std::vector<nrr::Vec3> seeds{mesh.vertices[side.sternum], mesh.vertices[side.fold],
                               mesh.vertices[side.axilla]};
  std::vector<int> region = nrr::segmentBreast(mesh, contourEdges, seeds);
  nrr::TriangleMesh breast = nrr::extractFaces(mesh, region);
  return nrr::closeAndMeasure(breast, patch);
}

int runValidate(const std::vector<std::string>& models, const std::string& landmarksPath,
                const std::string& annotationsPath, const std::string& reportPath) {
  nlohmann::json report;
  if (!landmarksPath.empty()) {
    auto obs = nrr::loadLandmarksCsv(landmarksPath);
    size_t samples = 0;
    for (const auto& o : obs) samples += o.samples.size();
    report["landmarks"] = {{"count", obs.size()}, {"samples", samples}};
  }

  if (!annotationsPath.empty()) {
    auto sides = loadAnnotations(annotationsPath);
    nlohmann::json perModel = nlohmann::json::array();
    std::map<std::string, std::vector<double>> volumesBySide;
    for (const std::string& modelPath : models) {
      nrr::TriangleMesh mesh = nrr::readPlyMesh(modelPath);
      nlohmann::json entry;
      entry["model"] = modelPath;
      for (const auto& side : sides) {
        double ml = measureSide(mesh, side);
        entry[side.name + "_volume_ml"] = ml;
        volumesBySide[side.name].push_back(ml);
        std::printf("validate: %s %s volume %.1f ml\n", modelPath.c_str(),
                    side.name.c_str(), ml);
      }
      perModel.push_back(entry);
    }
    report["volumes"] = perModel;

    if (models.size() == 2) {
      std::vector<std::pair<double, double>> pairs;
      for (const auto& [name, vols] : volumesBySide)
        if (vols.size() == 2) pairs.emplace_back(vols[0], vols[1]);
      if (!pairs.empty()) {
        nrr::RepeatabilityStats st = nrr::repeatabilityStats(pairs);
        report["repeatability"] = {{"sigma_w_ml", st.sigmaW}, {"cr_ml", st.cr},
                                   {"cv_percent", st.cv}};
        std::printf("validate: sigma_w %.2f ml, CR %.2f ml, CV %.2f%%\n", st.sigmaW,
                    st.cr, st.cv);
      }
    }
  }

  if (!reportPath.empty()) {
    std::ofstream out(reportPath);
    out << report.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonrigid RGBD surface reconstruction"};
  app.require_subcommand(1);

  auto* rec = app.add_subcommand("reconstruct", "run the reconstruction pipeline");
  std::string configPath, modeOverride, outOverride;
  double alphaOverride = -1;
  rec->add_option("--config", configPath, "pipeline config JSON")->required();
  rec->add_option("--mode", modeOverride, "closestPoint | shortestDistance");
  rec->add_option("--alpha", alphaOverride, "stiffness weight override");
  rec->add_option("--out", outOverride, "output directory override");

  auto* synth = app.add_subcommand("synth", "generate a synthetic RGBD sequence");
  nrr::SynthParams sp;
  std::string synthOut;
  synth->add_option("--out", synthOut, "output directory")->required();
  synth->add_option("--frames", sp.frames, "frame count");
  synth->add_option("--warp-mm", sp.warpMm, "peak warp displacement, mm");
  synth->add_option("--warp-freq-scale", sp.warpFreqScale,
                    "spatial frequency scale of the warp field");
  synth->add_option("--seed", sp.seed, "random seed");
  synth->add_option("--noise-sigma", sp.noiseSigma, "depth noise sigma, meters");
  synth->add_option("--width", sp.width, "image width");
  synth->add_option("--height", sp.height, "image height");
  synth->add_option("--focal", sp.focal, "focal length, pixels");
  synth->add_option("--sweep-degrees", sp.sweepDegrees, "camera arc span");
  synth->add_option("--landmarks", sp.landmarkCount, "landmark dot count");

  auto* val = app.add_subcommand("validate", "landmark and volumetry reports");
  std::vector<std::string> models;
  std::string landmarksPath, annotationsPath, reportPath;
  val->add_option("--model", models, "model mesh PLY (repeat for two sessions)")
      ->required();
  val->add_option("--landmarks", landmarksPath, "landmark CSV");
  val->add_option("--annotations", annotationsPath, "torso annotation JSON");
  val->add_option("--report", reportPath, "report JSON output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rec->parsed())
      return runReconstruct(configPath, modeOverride, alphaOverride, outOverride);
    if (synth->parsed()) return runSynth(sp, synthOut);
    if (val->parsed())
      return runValidate(models, landmarksPath, annotationsPath, reportPath);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
