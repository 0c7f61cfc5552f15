#pragma once

#include <Eigen/Dense>
#include <optional>

namespace hieradmm {

// Dense convex quadratic program
//   minimize 0.5 z'Hz + g'z   subject to   lb <= Az <= ub
// with H symmetric positive semidefinite and +/-infinity entries in lb/ub
// encoding one-sided rows. Construction validates symmetry, a PSD screen
// (Gershgorin bound, falling back to an attempted Cholesky factorization),
// bound ordering and finiteness of H, g, A.
struct QuadraticProgram {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  QuadraticProgram(Eigen::MatrixXd H_in, Eigen::VectorXd g_in, Eigen::MatrixXd A_in,
                   Eigen::VectorXd lb_in, Eigen::VectorXd ub_in);

  Eigen::Index num_vars() const { return g.size(); }
  Eigen::Index num_rows() const { return lb.size(); }
};

enum class QpStatus { kSolved, kMaxIterations, kInfeasible };

struct QpSettings {
  double tol = 1e-6;
  int max_iter = 10000;
};

struct QpResult {
  QpStatus status = QpStatus::kMaxIterations;
  Eigen::VectorXd z;
  // Multipliers for the lower/upper side of each row (zero on infinite sides).
  Eigen::VectorXd nu_lower;
  Eigen::VectorXd nu_upper;
  int iterations = 0;
  double primal_residual = 0;  // max bound violation of z
  double dual_residual = 0;    // ||Hz + g + A'(nu_upper - nu_lower)||_inf
  double comp_gap = 0;         // max_i multiplier * slack
  double objective = 0;

  bool solved() const { return status == QpStatus::kSolved; }
};

// Primal-dual interior point solve. Deterministic: identical inputs and
// settings produce identical iterates. A starting point only seeds the primal
// iterate; the method re-centers it.
QpResult solve(const QuadraticProgram& qp, const QpSettings& settings = {},
               const std::optional<Eigen::VectorXd>& z0 = {});

}  // namespace hieradmm
