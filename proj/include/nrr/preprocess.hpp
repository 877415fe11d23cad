#ifndef NRR_PREPROCESS_HPP
#define NRR_PREPROCESS_HPP

#include <optional>

#include "nrr/core.hpp"

namespace nrr {

struct CalibrationBundle {
  CameraIntrinsics depthIntrinsics;
  CameraIntrinsics colorIntrinsics;
  RigidTransform depthToColor;

  bool valid() const {
    return depthIntrinsics.valid() && colorIntrinsics.valid() && depthToColor.valid(1e-6);
  }
};

/// Forward radial distortion: ideal (undistorted) pixel -> observed pixel.
Eigen::Vector2d distortPixel(const Eigen::Vector2d& p, const CameraIntrinsics& k);

/// Inverse of the radial distortion model. Returns the subpixel coordinate u
/// such that distortPixel(u) recovers p within 1e-6 px, or nullopt when the
/// fixed-point/Newton iteration fails to converge within 50 iterations.
std::optional<Eigen::Vector2d> undistortPixel(const Eigen::Vector2d& p,
                                              const CameraIntrinsics& k);

/// Project a camera-space point to (possibly distorted) pixel coordinates.
Eigen::Vector2d projectPoint(const Vec3& p, const CameraIntrinsics& k);

/// Foreground mask per depth frame: background depth taken as the median of
/// the 9x9 top-right corner patch, pixels closer than (median - margin) kept,
/// then 3 binary erosions with a 3x3 all-ones element. Stored into
/// frame.foreground and returned.
std::vector<std::uint8_t> computeForegroundMask(RGBDFrame& frame, double margin = 0.2);

/// Backprojection output: one cloud point per emitted depth pixel plus the
/// linear depth-pixel index it came from.
struct FrameCloud {
  PointCloud cloud;       // camera (depth) coordinates
  std::vector<int> pixelIndex;
};

/// Backproject valid, foreground depth pixels through the undistorted depth
/// camera model; assign RGB by reprojection into the color camera with
/// nearest-integer lookup; fill frame.registeredColor; estimate per-point
/// normals from a 3x3 projective depth window, flipped towards the camera
/// origin. Pixels failing any step (invalid depth, background, color bounds,
/// degenerate normal window) emit no point.
FrameCloud backproject(RGBDFrame& frame, const CalibrationBundle& calib);

/// Per-pixel camera-space positions for the whole grid (no mask or color
/// checks); invalid depth yields a zero entry and valid=false.
struct DepthGrid {
  std::vector<Vec3> position;
  std::vector<std::uint8_t> valid;
};
DepthGrid backprojectGrid(const RGBDFrame& frame, const CameraIntrinsics& k);

/// Normal for pixel (x,y) from PCA over the valid 3x3 window, flipped so
/// dot(point, normal) < 0. Returns nullopt when fewer than 3 valid neighbors.
std::optional<Vec3> windowNormal(const DepthGrid& grid, int width, int height, int x, int y);

}  // namespace nrr

#endif
