#pragma once

#include <map>
#include <vector>

#include "hieradmm/qp.hpp"
#include "hieradmm/scenario.hpp"

namespace hieradmm {

struct MonolithicSolution {
  std::map<NodeId, std::vector<double>> x;
  double objective = 0;
  int qp_iterations = 0;
  double qp_primal_residual = 0;
};

// Centralized reference solve of the whole instance as one dense QP: all
// battery sets, all coupling constraints, the epigraph of every piecewise
// cost and the root tracking term. Intended as a ground-truth instrument on
// desk-size instances (at most 2000 action variables). Throws
// InfeasibleError naming the violated constraint class when no feasible
// point exists.
MonolithicSolution solve_monolithic(const Scenario& scenario,
                                    const QpSettings& settings = {});

}  // namespace hieradmm
