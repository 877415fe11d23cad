#include "nrr/nricp.hpp"

#include <chrono>
#include <cstdio>

#include <Eigen/SparseCholesky>

namespace nrr {

namespace {
double nowSeconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}
}  // namespace

StackedSystem assembleSystem(const DeformationGraph& source,
                             const CorrespondenceSet& corr,
                             const std::vector<std::pair<int, int>>& edges,
                             double alpha, double beta) {
  const int J = int(source.nodeCount());
  if (int(corr.size()) != J)
    throw std::runtime_error("assembleSystem: correspondence set must cover every node");

  StackedSystem sys;
  sys.nodeCount = J;
  sys.edgeCount = int(edges.size());
  sys.alpha = alpha;
  sys.beta = beta;
  for (const auto& c : corr)
    if (c.weight == 0) sys.mobilityCount++;

  const int rows = 4 * sys.edgeCount + J + sys.mobilityCount;
  sys.A.resize(rows, 4 * J);
  sys.B.setZero(rows, 3);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(size_t(sys.edgeCount) * 8 + size_t(J) * 4 + size_t(sys.mobilityCount) * 4);

  // stiffness block: alpha * (M kron I4), RHS zero
  for (int e = 0; e < sys.edgeCount; ++e) {
    auto [i, j] = edges[e];
    for (int k = 0; k < 4; ++k) {
      trip.emplace_back(4 * e + k, 4 * i + k, -alpha);
      trip.emplace_back(4 * e + k, 4 * j + k, alpha);
    }
  }

  // data block: W * Ghat, RHS W * targets
  int dataBase = 4 * sys.edgeCount;
  for (int i = 0; i < J; ++i) {
    const Correspondence& c = corr[i];
    if (c.weight == 0) continue;  // zero-weight rows stay all-zero
    const Vec3& g = source.nodes[i];
    trip.emplace_back(dataBase + i, 4 * i + 0, c.weight * g.x());
    trip.emplace_back(dataBase + i, 4 * i + 1, c.weight * g.y());
    trip.emplace_back(dataBase + i, 4 * i + 2, c.weight * g.z());
    trip.emplace_back(dataBase + i, 4 * i + 3, c.weight);
    sys.B.row(dataBase + i) = c.weight * c.targetPoint.transpose();
  }

  // mobility block: beta * Phat over zero-weight nodes, self-correspondences
  int row = dataBase + J;
  for (int i = 0; i < J; ++i) {
    if (corr[i].weight != 0) continue;
    const Vec3& g = source.nodes[i];
    trip.emplace_back(row, 4 * i + 0, beta * g.x());
    trip.emplace_back(row, 4 * i + 1, beta * g.y());
    trip.emplace_back(row, 4 * i + 2, beta * g.z());
    trip.emplace_back(row, 4 * i + 3, beta);
    sys.B.row(row) = beta * g.transpose();
    ++row;
  }

  sys.A.setFromTriplets(trip.begin(), trip.end());
  if (sys.mobilityCount == J && J > 0)
    std::fprintf(stderr,
                 "[nricp] warning: all correspondences rejected, mobility rows pin "
                 "every node\n");
  return sys;
}

StackedSystem::TermCosts StackedSystem::evaluate(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd R = A * X - B;
  TermCosts t;
  int sr = stiffnessRows();
  if (alpha != 0) t.stiffness = R.topRows(sr).squaredNorm() / (alpha * alpha);
  t.data = R.middleRows(sr, dataRows()).squaredNorm();
  if (beta != 0)
    t.mobility = R.bottomRows(mobilityCount).squaredNorm() / (beta * beta);
  return t;
}

Eigen::MatrixXd solveNormalEquations(const StackedSystem& sys) {
  Eigen::SparseMatrix<double> AtA = sys.A.transpose() * sys.A;
  Eigen::Matrix<double, Eigen::Dynamic, 3> AtB = sys.A.transpose() * sys.B;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(AtA);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error(
        "solveNormalEquations: factorization failed (disconnected or unpinned "
        "nodes leave the normal matrix rank deficient)");
  Eigen::MatrixXd X = solver.solve(AtB);
  double grad = (sys.A.transpose() * (sys.A * X - sys.B))
                    .cwiseAbs()
                    .maxCoeff();
  double scale = AtB.cwiseAbs().maxCoeff();
  if (scale > 0 && grad > 1e-8 * scale) {
    // one refinement pass before giving up
    Eigen::MatrixXd dX = solver.solve(AtB - AtA * X);
    X += dX;
    grad = (sys.A.transpose() * (sys.A * X - sys.B)).cwiseAbs().maxCoeff();
    if (grad > 1e-8 * scale)
      throw std::runtime_error("solveNormalEquations: gradient residual " +
                               std::to_string(grad) + " exceeds tolerance");
  }
  return X;
}

CorrespondenceSet findCorrespondences(const DeformationGraph& source,
                                      const SpatialIndex& target,
                                      CorrespondenceMode mode,
                                      const CorrespondenceParams& params) {
  CorrespondenceSet corr(source.nodeCount());
#pragma omp parallel for schedule(dynamic, 32)
  for (long i = 0; i < long(source.nodeCount()); ++i) {
    Vec3 g = source.deformedNode(int(i));
    Mat3 lin = source.transforms[i].topRows<3>().transpose();
    Vec3 n = source.nodeNormals[i];
    if (std::abs(lin.determinant()) > 1e-12) n = lin.inverse().transpose() * n;
    double nn = n.norm();
    if (nn > 1e-12) n /= nn;
    corr[i] = findCorrespondence(int(i), g, n, target, mode, params);
  }
  return corr;
}

SolveReport alignPair(DeformationGraph& source, const SpatialIndex& target,
                      const AlignParams& params) {
  SolveReport report;
  const int J = int(source.nodeCount());
  if (J == 0) return report;

  Eigen::MatrixXd X(4 * J, 3);
  for (int i = 0; i < J; ++i) X.middleRows(4 * i, 4) = identityNodeTransform();
  source.transforms.assign(J, identityNodeTransform());

  StackedSystem lastSys;
  CorrespondenceSet lastCorr;
  for (int iter = 0; iter < params.maxIterations; ++iter) {
    report.iterations = iter + 1;

    double t0 = nowSeconds();
    CorrespondenceSet corr = findCorrespondences(source, target, params.mode,
                                                 params.correspondence);
    double t1 = nowSeconds();
    StackedSystem sys =
        assembleSystem(source, corr, source.edges, params.alpha, params.beta);
    double t2 = nowSeconds();
    Eigen::MatrixXd Xnew = solveNormalEquations(sys);
    double t3 = nowSeconds();
    if (params.correspondenceTime) *params.correspondenceTime += t1 - t0;
    if (params.assemblyTime) *params.assemblyTime += t2 - t1;
    if (params.solverTime) *params.solverTime += t3 - t2;

    report.finalChange = (Xnew - X).norm();
    X = Xnew;
    for (int i = 0; i < J; ++i) source.transforms[i] = X.middleRows(4 * i, 4);
    lastSys = std::move(sys);
    lastCorr = std::move(corr);
    if (report.finalChange < params.convergenceThreshold) {
      report.converged = true;
      break;
    }
  }

  auto costs = lastSys.evaluate(X);
  report.dataResidual = costs.data;
  report.stiffnessResidual = costs.stiffness;
  report.mobilityResidual = costs.mobility;
  for (const auto& c : lastCorr)
    if (c.weight != 0) report.acceptedCorrespondences++;
  return report;
}

}  // namespace nrr
