#ifndef NRR_NRICP_HPP
#define NRR_NRICP_HPP

#include <Eigen/Sparse>

#include "nrr/correspond.hpp"
#include "nrr/graph_build.hpp"

namespace nrr {

/// Stacked linear system A*X = B over the 4J x 3 transform stack:
/// stiffness block alpha*(M kron I4), data block W*Ghat, mobility rows
/// beta*phat for zero-weight nodes.
struct StackedSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::Matrix<double, Eigen::Dynamic, 3> B;
  int nodeCount = 0;
  int edgeCount = 0;
  int mobilityCount = 0;
  double alpha = 0;
  double beta = 0;

  int stiffnessRows() const { return 4 * edgeCount; }
  int dataRows() const { return nodeCount; }

  struct TermCosts {
    double data = 0;       // eps_d with the stacking weights excluded
    double stiffness = 0;  // unweighted eps_s
    double mobility = 0;   // unweighted eps_m
    double total() const { return data + stiffness + mobility; }
  };
  /// Per-term squared Frobenius costs of A*X - B, with the stacking weights
  /// divided back out of the stiffness/mobility blocks.
  TermCosts evaluate(const Eigen::MatrixXd& X) const;
};

StackedSystem assembleSystem(const DeformationGraph& source,
                             const CorrespondenceSet& corr,
                             const std::vector<std::pair<int, int>>& edges,
                             double alpha, double beta);

/// Closed-form normal-equation solve via sparse SPD factorization. Throws on
/// rank deficiency; postcondition: inf-norm of A^T (A X - B) below
/// 1e-8 * inf-norm of A^T B.
Eigen::MatrixXd solveNormalEquations(const StackedSystem& sys);

struct SolveReport {
  int iterations = 0;
  double finalChange = 0;  // Frobenius norm of X - X_prev at exit
  double dataResidual = 0;
  double stiffnessResidual = 0;
  double mobilityResidual = 0;
  int acceptedCorrespondences = 0;
  bool converged = false;
};

struct AlignParams {
  double alpha = 20.0;
  double beta = 1.0;
  CorrespondenceMode mode = CorrespondenceMode::shortestDistance;
  CorrespondenceParams correspondence;
  int maxIterations = 10;
  double convergenceThreshold = 1e-4;
  // optional per-iteration timing sinks (seconds)
  double* correspondenceTime = nullptr;
  double* assemblyTime = nullptr;
  double* solverTime = nullptr;
};

/// Nonrigid ICP of one source graph against an indexed target: iterate
/// {deform nodes, find correspondences, assemble, solve} until the transform
/// change drops below threshold or the iteration cap. Updates
/// source.transforms in place; transforms map the graph's entry positions.
SolveReport alignPair(DeformationGraph& source, const SpatialIndex& target,
                      const AlignParams& params);

/// Correspondences of the deformed source nodes against the target.
CorrespondenceSet findCorrespondences(const DeformationGraph& source,
                                      const SpatialIndex& target,
                                      CorrespondenceMode mode,
                                      const CorrespondenceParams& params);

}  // namespace nrr

#endif
