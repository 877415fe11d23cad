#ifndef NRR_CORE_HPP
#define NRR_CORE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace nrr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Rgb = Eigen::Matrix<std::uint8_t, 3, 1>;

/// Pinhole intrinsics with polynomial radial distortion (coefficients
/// ordered k1, k2, ...).
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  std::vector<double> distortion;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
};

/// Rigid body transform, applied as p' = rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Mat4 toHomogeneous() const {
    Mat4 h = Mat4::Identity();
    h.topLeftCorner<3, 3>() = rotation;
    h.topRightCorner<3, 1>() = translation;
    return h;
  }

  double orthogonalityDefect() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).norm();
  }
  bool valid(double tol = 1e-9) const {
    return orthogonalityDefect() < tol && std::abs(rotation.determinant() - 1.0) < tol;
  }
};

RigidTransform composeTransforms(const RigidTransform& a, const RigidTransform& b);
RigidTransform invertTransform(const RigidTransform& t);

/// Projection to the nearest rotation matrix (polar decomposition via SVD).
Mat3 nearestRotation(const Mat3& m);

/// Depth in meters, 0 = invalid. Color and registered color share the depth
/// image resolution after registration.
struct RGBDFrame {
  int width = 0, height = 0;
  std::vector<double> depth;            // row-major, meters
  std::vector<Rgb> color;               // raw color image (color camera)
  int colorWidth = 0, colorHeight = 0;
  std::vector<Rgb> registeredColor;     // aligned to depth pixels
  std::vector<std::uint8_t> foreground; // binary mask over depth pixels
  double timestamp = 0;

  double depthAt(int x, int y) const { return depth[size_t(y) * width + x]; }
  double& depthAt(int x, int y) { return depth[size_t(y) * width + x]; }
  bool validDepth(int x, int y) const {
    double d = depthAt(x, y);
    return d > 0;
  }
};

constexpr double kDepthMin = 0.4;  // sensor range guard, meters
constexpr double kDepthMax = 8.0;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Rgb> colors;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool consistent() const {
    return normals.size() == points.size() && colors.size() == points.size();
  }
  void append(const PointCloud& other) {
    points.insert(points.end(), other.points.begin(), other.points.end());
    normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::vector<Vec3> vertexNormals;  // optional, empty or size()==vertices
  std::vector<Rgb> vertexColors;    // optional

  bool facesValid() const {
    for (const auto& f : faces) {
      for (int k = 0; k < 3; ++k)
        if (f[k] < 0 || f[k] >= int(vertices.size())) return false;
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) return false;
    }
    return true;
  }
};

}  // namespace nrr

#endif
