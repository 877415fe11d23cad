#ifndef NRR_SYNTH_HPP
#define NRR_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "nrr/core.hpp"
#include "nrr/preprocess.hpp"
#include "nrr/rigid_init.hpp"
#include "nrr/validate.hpp"

namespace nrr {

struct SynthParams {
  int frames = 20;
  double warpMm = 5.0;          // peak warp displacement
  std::uint32_t seed = 1;
  double noiseSigma = 0.0015;   // depth noise at reference range, meters
  int width = 160;
  int height = 120;
  double focal = 140.0;
  double cameraDistance = 0.9;  // meters to the torso center
  double wallDepth = 2.0;       // background depth for rays that miss
  double sweepDegrees = 180.0;
  int landmarkCount = 8;
  int warpComponents = 5;
  double warpFreqScale = 1.0;   // scales every component's spatial frequency
};

/// Analytic star-shaped torso proxy: a superellipsoid trunk with two
/// spherical-cap protrusions, expressed as a radius function over view
/// directions from the origin, deformed over time by a sum of low-frequency
/// sinusoidal displacement fields. All randomness derives from params.seed.
struct SyntheticScene {
  struct WarpComponent {
    Vec3 direction;
    Vec3 spatialFreq;   // rad per meter
    double phase = 0;
    double timeFreq = 0;  // rad per frame
    double amplitude = 0;
  };

  SynthParams params;
  std::vector<WarpComponent> warpBasis;
  std::vector<Vec3> landmarkDirections;  // unit, canonical frame

  explicit SyntheticScene(const SynthParams& p);

  CalibrationBundle calibration() const;
  RigidTransform cameraPose(int frame) const;  // camera -> global
  double frameTime(int frame) const { return double(frame); }

  double radius(const Vec3& dir) const;        // canonical surface radius
  Vec3 surfacePoint(const Vec3& dir) const { return radius(dir) * dir.normalized(); }
  double signedValue(const Vec3& p) const;     // <0 inside, 0 on surface

  Vec3 warpDisplacement(const Vec3& p, double t) const;
  Vec3 warpPoint(const Vec3& p, double t) const { return p + warpDisplacement(p, t); }
  Vec3 unwarpPoint(const Vec3& q, double t) const;  // fixed-point inverse

  Vec3 landmarkCanonical(int k) const;
  Vec3 landmarkAt(int k, double t) const;  // warped global position
};

struct RenderedFrame {
  RGBDFrame frame;                // quantized, noisy depth + color
  RigidTransform pose;            // camera -> global
  std::vector<double> trueDepth;  // noise-free z-depth per pixel, wall depth on miss
};

/// Ray-cast z-depth of the warped surface; misses fall back to the background
/// wall depth. Depth gets z^2-scaled Gaussian noise and 1 mm quantization.
RenderedFrame renderFrame(const SyntheticScene& scene, int frameIndex);

/// Dense parametric mesh of the warped surface at time t, used as the
/// distance oracle (poles excluded by a small polar margin).
TriangleMesh referenceSurfaceMesh(const SyntheticScene& scene, double t,
                                  int resolution = 192);

struct GroundTruthError {
  double rms = 0;        // meters, model points to surface
  double hausdorff = 0;  // meters, max model point to surface
};

GroundTruthError groundTruthError(const PointCloud& model, const SyntheticScene& scene,
                                  double tRef, int resolution = 192);

/// Perfect projections of every landmark visible in each frame.
std::vector<LandmarkObservations> landmarkObservations(
    const SyntheticScene& scene, const std::vector<RenderedFrame>& frames);

/// Emit the on-disk sequence the pipeline ingests: depth/<n>.png,
/// color/<n>.png, poses.txt, calibration.json, landmarks.csv, and a
/// ground_truth.json sidecar with the generating parameters.
void writeSequence(const SyntheticScene& scene, const std::string& outDir);

SynthParams loadSceneSidecar(const std::string& path);

}  // namespace nrr

#endif
