#ifndef NRR_VALIDATE_HPP
#define NRR_VALIDATE_HPP

#include <array>
#include <functional>
#include <set>

#include "nrr/core.hpp"
#include "nrr/preprocess.hpp"
#include "nrr/rigid_init.hpp"

namespace nrr {

struct LandmarkSample {
  int frameIndex = -1;
  Eigen::Vector2d pixel;  // registered (depth-aligned) image coordinates
};

struct LandmarkObservations {
  int landmarkId = -1;
  std::vector<LandmarkSample> samples;
};

/// `landmark_id,frame_id,x,y` rows, one per sample.
std::vector<LandmarkObservations> loadLandmarksCsv(const std::string& path);
void saveLandmarksCsv(const std::string& path,
                      const std::vector<LandmarkObservations>& obs);

struct LandmarkErrorReport {
  struct PerLandmark {
    int landmarkId = -1;
    int usedSamples = 0;
    int droppedSamples = 0;
    Mat3 covariance = Mat3::Zero();
    double frobenius = 0;
    Vec3 mean = Vec3::Zero();
    Mat3 ellipsoidAxes = Mat3::Zero();  // columns: principal axes scaled to 2 sigma
  };
  std::vector<PerLandmark> perLandmark;
  double epsilonL = 0;  // mean Frobenius norm over landmarks, m^2
};

/// Maps a frame's camera-space landmark point into the final model space:
/// usually pose composition followed by the interpolated graph deformation.
using FrameDeformFn = std::function<Vec3(int frameIndex, const Vec3& globalPoint)>;

/// Backproject every landmark sample through its frame's depth and pose,
/// deform it, and report per-landmark 3D covariance spread. Samples whose
/// pixel (and 3x3 neighborhood) has no valid depth are dropped and counted.
LandmarkErrorReport landmarkError(const std::vector<LandmarkObservations>& obs,
                                  const std::vector<RGBDFrame>& frames,
                                  const CalibrationBundle& calib,
                                  const PoseSequence& poses,
                                  const FrameDeformFn& deform);

/// Shortest vertex path by Dijkstra over mesh edges with Euclidean weights;
/// ties broken towards the lower vertex index.
std::vector<int> geodesicContour(const TriangleMesh& mesh, int fromVertex, int toVertex);

/// Bilinearly blended grid between four boundary polylines given in loop
/// order (c0: A->B, c1: B->C, c2: C->D, c3: D->A). Opposite contours are
/// length-matched by duplicating points over linearly spaced indices.
TriangleMesh coonsPatch(const std::array<std::vector<Vec3>, 4>& contours);

using EdgeSet = std::set<std::pair<int, int>>;

/// Flood fill over faces from the face closest to the landmark centroid,
/// never crossing a contour edge. Throws "leaky contour" when the region
/// exceeds maxFraction of all faces.
std::vector<int> segmentBreast(const TriangleMesh& mesh, const EdgeSet& contourEdges,
                               const std::vector<Vec3>& landmarks,
                               double maxFraction = 0.75);

TriangleMesh extractFaces(const TriangleMesh& mesh, const std::vector<int>& faces);

/// Signed volume of a surface via the divergence-theorem triangle sum
/// (meters^3; only meaningful on closed, consistently oriented surfaces).
double signedVolume(const TriangleMesh& mesh);

/// Close both open surfaces by triangulating their (shared) boundary loop to
/// a mutual apex found by walking the breast's opposite mean normal scaled by
/// the bounding box diagonal; returns |V(breast) - V(patch)| in milliliters.
double closeAndMeasure(const TriangleMesh& breast, const TriangleMesh& patch);

struct RepeatabilityStats {
  double sigmaW = 0;  // within-subject SD, ml
  double cr = 0;      // coefficient of repeatability, ml
  double cv = 0;      // coefficient of variation, percent
};

/// Bland-Altman style repeatability over per-breast two-session volume pairs.
RepeatabilityStats repeatabilityStats(
    const std::vector<std::pair<double, double>>& pairs);

}  // namespace nrr

#endif
