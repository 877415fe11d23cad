#include "nrr/core.hpp"

namespace nrr {

RigidTransform composeTransforms(const RigidTransform& a, const RigidTransform& b) {
  // result applies b first, then a
  RigidTransform r;
  r.rotation = a.rotation * b.rotation;
  r.translation = a.rotation * b.translation + a.translation;
  return r;
}

RigidTransform invertTransform(const RigidTransform& t) {
  RigidTransform r;
  r.rotation = t.rotation.transpose();
  r.translation = -(t.rotation.transpose() * t.translation);
  return r;
}

Mat3 nearestRotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace nrr
