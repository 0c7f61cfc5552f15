#pragma once

// Independent reference computations for the test suites. Everything here is
// deliberately slow and simple, and shares no code path with the library
// solvers it checks.

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "hieradmm/prosumer.hpp"

namespace oracles {

// Long-run projected gradient for box-constrained QPs (projection onto the
// box is exact, so the limit is the true optimum).
Eigen::VectorXd projected_gradient_box(const Eigen::MatrixXd& h,
                                       const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& lb,
                                       const Eigen::VectorXd& ub, int iterations);

double qp_objective(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                    const Eigen::VectorXd& z);

// Ternary search for a scalar convex function on [lo, hi].
double minimize_scalar(const std::function<double(double)>& f, double lo, double hi,
                       int iterations = 200);

// Objective of the local agent subproblem at a given action profile.
double local_objective(const hieradmm::Prosumer& prosumer,
                       const std::vector<double>& x,
                       const std::vector<double>& x_prev,
                       const hieradmm::ReferenceBundle& refs, double rho);

bool battery_feasible(const hieradmm::Battery& battery, const std::vector<double>& x,
                      double tol = 1e-9);

// Coordinate-refined exhaustive search over battery-feasible profiles for
// horizons up to 4: a coarse full grid followed by shrinking local grids.
// Returns the best objective found.
double grid_search_local(const hieradmm::Prosumer& prosumer,
                         const std::vector<double>& x_prev,
                         const hieradmm::ReferenceBundle& refs, double rho);

}  // namespace oracles
