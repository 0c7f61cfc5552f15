#include "hieradmm/monolithic.hpp"

#include <limits>

#include "hieradmm/errors.hpp"

namespace hieradmm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

MonolithicSolution solve_monolithic(const Scenario& scenario,
                                    const QpSettings& settings) {
  const auto leaves = scenario.tree.leaves();
  const int n_leaves = static_cast<int>(leaves.size());
  const int horizon = scenario.horizon;
  if (n_leaves * horizon > 2000) {
    throw ValidationError("monolithic solve: instance exceeds 2000 action variables");
  }

  // Layout: all action blocks first, then all epigraph blocks.
  const int n = 2 * n_leaves * horizon;
  const int c_base = n_leaves * horizon;
  std::map<NodeId, int> offset;
  for (int i = 0; i < n_leaves; ++i) offset[leaves[i]] = i * horizon;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  const RootObjective& objective = scenario.root_objective;
  if (objective.weight > 0) {
    for (int i = 0; i < n_leaves; ++i) {
      for (int j = 0; j < n_leaves; ++j) {
        for (int t = 0; t < horizon; ++t) {
          h(i * horizon + t, j * horizon + t) += 2.0 * objective.weight;
        }
      }
    }
    for (int i = 0; i < n_leaves; ++i) {
      for (int t = 0; t < horizon; ++t) {
        g[i * horizon + t] -= 2.0 * objective.weight * objective.target[t];
      }
    }
  }
  for (int i = 0; i < n_leaves; ++i) {
    for (int t = 0; t < horizon; ++t) g[c_base + i * horizon + t] = scenario.dt_hours;
  }

  const int m = n_leaves * 4 * horizon +
                static_cast<int>(scenario.constraints.size()) * horizon;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd lb(m), ub(m);
  int row = 0;
  for (int i = 0; i < n_leaves; ++i) {
    const Prosumer& prosumer = scenario.prosumers.at(leaves[i]);
    const Battery& battery = prosumer.battery;
    const int x0 = i * horizon;
    const int cc = c_base + i * horizon;
    for (int t = 0; t < horizon; ++t) {
      a(row, x0 + t) = 1.0;
      lb[row] = -battery.p_discharge_max_kw;
      ub[row] = battery.p_charge_max_kw;
      ++row;
    }
    for (int t = 0; t < horizon; ++t) {
      for (int tau = 0; tau <= t; ++tau) a(row, x0 + tau) = 1.0;
      lb[row] = -battery.soc0_kwh / scenario.dt_hours;
      ub[row] = (battery.capacity_kwh - battery.soc0_kwh) / scenario.dt_hours;
      ++row;
    }
    for (int t = 0; t < horizon; ++t) {
      a(row, x0 + t) = prosumer.price_buy;
      a(row, cc + t) = -1.0;
      lb[row] = -kInf;
      ub[row] = -prosumer.price_buy * prosumer.p_uncontrolled[t];
      ++row;
    }
    for (int t = 0; t < horizon; ++t) {
      a(row, x0 + t) = prosumer.price_sell;
      a(row, cc + t) = -1.0;
      lb[row] = -kInf;
      ub[row] = -prosumer.price_sell * prosumer.p_uncontrolled[t];
      ++row;
    }
  }
  for (const CouplingConstraint& constraint : scenario.constraints) {
    for (int t = 0; t < horizon; ++t) {
      for (const auto& [leaf, weight] : constraint.weights) {
        a(row, offset.at(leaf) + t) = weight;
      }
      lb[row] = constraint.lower[t];
      ub[row] = constraint.upper[t];
      ++row;
    }
  }

  QuadraticProgram qp(std::move(h), std::move(g), std::move(a), std::move(lb),
                      std::move(ub));
  QpResult result = solve(qp, settings);
  if (result.status == QpStatus::kInfeasible) {
    // The battery sets always contain x = 0 once the scenario validates, so a
    // certified infeasibility points at the coupling constraints.
    for (const auto& [leaf, prosumer] : scenario.prosumers) {
      if (prosumer.battery.soc0_kwh < 0 ||
          prosumer.battery.soc0_kwh > prosumer.battery.capacity_kwh) {
        throw InfeasibleError("monolithic solve: battery set of " + leaf.str() +
                              " is empty");
      }
    }
    throw InfeasibleError(
        "monolithic solve: coupling constraints admit no feasible point");
  }
  if (result.status != QpStatus::kSolved) {
    throw SolveError("monolithic solve: QP did not converge (primal " +
                     std::to_string(result.primal_residual) + ", dual " +
                     std::to_string(result.dual_residual) + ")");
  }

  MonolithicSolution solution;
  for (int i = 0; i < n_leaves; ++i) {
    solution.x.emplace(leaves[i],
                       std::vector<double>(result.z.data() + i * horizon,
                                           result.z.data() + (i + 1) * horizon));
  }
  solution.objective = total_objective(scenario, solution.x);
  solution.qp_iterations = result.iterations;
  solution.qp_primal_residual = result.primal_residual;
  return solution;
}

}  // namespace hieradmm
