#ifndef NRR_RIGID_INIT_HPP
#define NRR_RIGID_INIT_HPP

#include <string>
#include <vector>

#include "nrr/core.hpp"

namespace nrr {

/// Per-frame camera-to-global poses, anchored so pose 0 is the identity.
struct PoseSequence {
  std::vector<RigidTransform> poses;
  std::vector<std::string> frameIds;
};

/// Pose file: one line per frame,
/// `frame_id tx ty tz r00 r01 r02 r10 r11 r12 r20 r21 r22`.
/// Rotations beyond 1e-4 orthogonality defect are projected to the nearest
/// rotation with a warning; the sequence is left-multiplied by the first
/// pose's inverse so pose 0 becomes the identity.
PoseSequence loadPoses(const std::string& path);
void savePoses(const std::string& path, const PoseSequence& seq);

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  double finalError = 0;     // mean squared point-to-plane distance
  double inlierFraction = 0; // source points with a match within 0.05 m
  bool converged = false;
};

/// Frame-to-frame point-to-plane ICP seeded by `init`. Fails (converged=false,
/// transform=init) when fewer than half the source points find matches within
/// 0.05 m.
IcpResult pairwiseRigidICP(const PointCloud& source, const PointCloud& target,
                           const RigidTransform& init);

}  // namespace nrr

#endif
