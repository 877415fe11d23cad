#include "nrr/rigid_init.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "nrr/spatial.hpp"

namespace nrr {

PoseSequence loadPoses(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open pose file " + path);
  PoseSequence seq;
  std::string line;
  int lineNo = 0;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id;
    double v[12];
    ss >> id;
    for (int i = 0; i < 12; ++i) {
      if (!(ss >> v[i]))
        throw std::runtime_error("pose file " + path + ": malformed line " +
                                 std::to_string(lineNo));
    }
    RigidTransform t;
    t.translation = Vec3(v[0], v[1], v[2]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[3 + r * 3 + c];
    if (t.orthogonalityDefect() > 1e-4 || std::abs(t.rotation.determinant() - 1) > 1e-4) {
      std::fprintf(stderr,
                   "[rigid_init] warning: line %d rotation defect %.2e, projecting to "
                   "nearest rotation\n",
                   lineNo, t.orthogonalityDefect());
      t.rotation = nearestRotation(t.rotation);
    }
    seq.poses.push_back(t);
    seq.frameIds.push_back(id);
  }
  if (!seq.poses.empty()) {
    RigidTransform anchor = invertTransform(seq.poses.front());
    for (auto& p : seq.poses) p = composeTransforms(anchor, p);
  }
  return seq;
}

void savePoses(const std::string& path, const PoseSequence& seq) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.precision(17);
  for (size_t i = 0; i < seq.poses.size(); ++i) {
    const RigidTransform& t = seq.poses[i];
    os << seq.frameIds[i] << " " << t.translation.x() << " " << t.translation.y() << " "
       << t.translation.z();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << " " << t.rotation(r, c);
    os << "\n";
  }
}

IcpResult pairwiseRigidICP(const PointCloud& source, const PointCloud& target,
                           const RigidTransform& init) {
  constexpr double kMaxMatchDist = 0.05;
  constexpr int kMaxIter = 50;
  constexpr double kRelTol = 1e-6;

  if (source.size() < 100 || target.size() < 100)
    throw std::runtime_error("pairwiseRigidICP: need >= 100 points per cloud");

  KdTree tree(target.points);
  IcpResult res;
  res.transform = init;
  double prevError = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < kMaxIter; ++iter) {
    res.iterations = iter + 1;
    // correspondences under the current estimate
    std::vector<int> match(source.size(), -1);
#pragma omp parallel for
    for (long i = 0; i < long(source.size()); ++i) {
      Vec3 p = res.transform.apply(source.points[i]);
      double dSq;
      int j = tree.nearest(p, &dSq);
      if (j >= 0 && dSq <= kMaxMatchDist * kMaxMatchDist) match[i] = j;
    }
    size_t nMatched = 0;
    for (int m : match)
      if (m >= 0) ++nMatched;
    res.inlierFraction = double(nMatched) / double(source.size());
    if (res.inlierFraction < 0.5) {
      res.transform = init;
      res.converged = false;
      return res;
    }

    // point-to-plane linearization, small-angle: unknowns (w, t)
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    double err = 0;
    for (size_t i = 0; i < source.size(); ++i) {
      if (match[i] < 0) continue;
      Vec3 p = res.transform.apply(source.points[i]);
      const Vec3& q = target.points[match[i]];
      const Vec3& n = target.normals[match[i]];
      double r = (p - q).dot(n);
      err += r * r;
      Eigen::Matrix<double, 6, 1> J;
      J.head<3>() = p.cross(n);
      J.tail<3>() = n;
      H += J * J.transpose();
      g -= J * r;
    }
    err /= double(nMatched);
    res.finalError = err;

    Eigen::Matrix<double, 6, 1> x = H.ldlt().solve(g);
    Mat3 skew;
    skew << 0, -x[2], x[1], x[2], 0, -x[0], -x[1], x[0], 0;
    RigidTransform delta;
    delta.rotation = nearestRotation(Mat3::Identity() + skew);
    delta.translation = x.tail<3>();
    res.transform = composeTransforms(delta, res.transform);
    res.transform.rotation = nearestRotation(res.transform.rotation);

    if (std::abs(prevError - err) < kRelTol * std::max(err, 1e-30)) {
      res.converged = true;
      break;
    }
    prevError = err;
  }
  res.converged = res.converged || res.iterations == kMaxIter;
  return res;
}

}  // namespace nrr
