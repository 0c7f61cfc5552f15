#include "hieradmm/prosumer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hieradmm/errors.hpp"

namespace hieradmm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void Battery::validate() const {
  if (!(capacity_kwh >= 0) || !std::isfinite(capacity_kwh)) {
    throw ValidationError("battery capacity must be non-negative");
  }
  if (!(p_charge_max_kw >= 0) || !(p_discharge_max_kw >= 0)) {
    throw ValidationError("battery power limits must be non-negative");
  }
  if (!(dt_hours > 0)) throw ValidationError("battery step length must be positive");
  if (soc0_kwh < 0 || soc0_kwh > capacity_kwh) {
    throw ValidationError("initial state of charge outside [0, capacity]");
  }
}

void Prosumer::validate(int horizon) const {
  battery.validate();
  if (static_cast<int>(p_uncontrolled.size()) != horizon) {
    throw ValidationError("prosumer " + id.str() + ": uncontrolled profile has length " +
                          std::to_string(p_uncontrolled.size()) + ", expected " +
                          std::to_string(horizon));
  }
  if (price_buy < price_sell) {
    throw ValidationError("prosumer " + id.str() +
                          ": buy price below sell price breaks convexity");
  }
}

double cost(const Prosumer& prosumer, std::span<const double> x) {
  if (x.size() != prosumer.p_uncontrolled.size()) {
    throw ValidationError("cost: profile length mismatch for " + prosumer.id.str());
  }
  double total = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double net = prosumer.p_uncontrolled[t] + x[t];
    total += std::max(prosumer.price_buy * net, prosumer.price_sell * net) *
             prosumer.battery.dt_hours;
  }
  return total;
}

std::vector<double> soc_trajectory(const Battery& battery, std::span<const double> x) {
  std::vector<double> soc(x.size());
  double state = battery.soc0_kwh;
  for (std::size_t t = 0; t < x.size(); ++t) {
    state += x[t] * battery.dt_hours;
    soc[t] = state;
  }
  return soc;
}

std::vector<double> local_update(const Prosumer& prosumer, std::span<const double> x_prev,
                                 const ReferenceBundle& refs, double rho,
                                 const QpSettings& qp_settings) {
  const int horizon = prosumer.horizon();
  if (rho <= 0) throw ValidationError("local_update: rho must be positive");
  if (static_cast<int>(x_prev.size()) != horizon) {
    throw ValidationError("local_update: x_prev length mismatch for " +
                          prosumer.id.str());
  }
  const Battery& battery = prosumer.battery;
  if (battery.soc0_kwh < 0 || battery.soc0_kwh > battery.capacity_kwh) {
    throw InfeasibleError("prosumer " + prosumer.id.str() +
                          ": initial state of charge outside [0, capacity]");
  }
  for (const ReferenceTerm& term : refs) {
    if (static_cast<int>(term.r.size()) != horizon) {
      throw ValidationError("local_update: reference " + term.constraint_id +
                            " has wrong length");
    }
  }

  // Variables are [x_0..x_{T-1}, c_0..c_{T-1}] with c_t the epigraph of the
  // per-step cost rate.
  const int n = 2 * horizon;
  double weight_sq = 0;
  for (const ReferenceTerm& term : refs) weight_sq += term.weight * term.weight;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (int t = 0; t < horizon; ++t) {
    h(t, t) = weight_sq / rho;
    double lin = 0;
    for (const ReferenceTerm& term : refs) {
      lin += term.weight * (term.r[t] - term.weight * x_prev[t]);
    }
    g[t] = lin / rho;
    g[horizon + t] = battery.dt_hours;
  }

  const int m = 4 * horizon;  // power box, soc, two epigraph families
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd lb(m), ub(m);
  const double dt = battery.dt_hours;
  for (int t = 0; t < horizon; ++t) {
    // power limits
    a(t, t) = 1.0;
    lb[t] = -battery.p_discharge_max_kw;
    ub[t] = battery.p_charge_max_kw;
    // state of charge: 0 <= soc0 + dt * sum_{tau<=t} x_tau <= capacity
    const int soc_row = horizon + t;
    for (int tau = 0; tau <= t; ++tau) a(soc_row, tau) = 1.0;
    lb[soc_row] = -battery.soc0_kwh / dt;
    ub[soc_row] = (battery.capacity_kwh - battery.soc0_kwh) / dt;
    // c_t >= price * (p_uncontrolled_t + x_t), both price branches
    const int buy_row = 2 * horizon + t;
    a(buy_row, t) = prosumer.price_buy;
    a(buy_row, horizon + t) = -1.0;
    lb[buy_row] = -kInf;
    ub[buy_row] = -prosumer.price_buy * prosumer.p_uncontrolled[t];
    const int sell_row = 3 * horizon + t;
    a(sell_row, t) = prosumer.price_sell;
    a(sell_row, horizon + t) = -1.0;
    lb[sell_row] = -kInf;
    ub[sell_row] = -prosumer.price_sell * prosumer.p_uncontrolled[t];
  }

  QuadraticProgram qp(std::move(h), std::move(g), std::move(a), std::move(lb),
                      std::move(ub));
  QpResult result = solve(qp, qp_settings);
  if (result.status == QpStatus::kInfeasible) {
    throw InfeasibleError("prosumer " + prosumer.id.str() +
                          ": local subproblem infeasible");
  }
  if (result.status != QpStatus::kSolved) {
    std::ostringstream msg;
    msg << "prosumer " << prosumer.id.str() << ": subproblem did not converge in "
        << result.iterations << " iterations (primal " << result.primal_residual
        << ", dual " << result.dual_residual << ", comp " << result.comp_gap << ")";
    throw SolveError(msg.str());
  }
  return std::vector<double>(result.z.data(), result.z.data() + horizon);
}

}  // namespace hieradmm
