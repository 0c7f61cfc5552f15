#pragma once

#include <span>
#include <string>
#include <vector>

#include "hieradmm/qp.hpp"
#include "hieradmm/tree.hpp"

namespace hieradmm {

// Ideal storage: pure integrator s_t = s_{t-1} + x_t * dt, no losses, no aging.
// Positive power charges the battery (consumption sign convention).
struct Battery {
  double capacity_kwh = 0;
  double soc0_kwh = 0;
  double p_charge_max_kw = 0;
  double p_discharge_max_kw = 0;
  double dt_hours = 1.0;

  void validate() const;  // throws ValidationError
};

// Flexible agent at a leaf node: a battery plus an uncontrolled base profile,
// billed at a buy price for net imports and credited at a sell price for net
// exports. price_buy >= price_sell keeps the cost convex.
struct Prosumer {
  NodeId id;
  Battery battery;
  std::vector<double> p_uncontrolled;  // kW, length T
  double price_buy = 0;                // currency per kWh
  double price_sell = 0;

  int horizon() const { return static_cast<int>(p_uncontrolled.size()); }
  void validate(int horizon) const;
};

// One penalty term of the local subproblem: reference signal r and this
// prosumer's weight in the originating coupling constraint.
struct ReferenceTerm {
  std::string constraint_id;
  std::vector<double> r;
  double weight = 1.0;
};

// Stacked references from every constraint on the prosumer's ancestors,
// ordered root-first.
using ReferenceBundle = std::vector<ReferenceTerm>;

// Electricity cost of running profile x on top of the uncontrolled load:
// sum_t max(price_buy * net_t, price_sell * net_t) * dt, net = p_uncontrolled + x.
// Net exports enter as negative cost (revenue).
double cost(const Prosumer& prosumer, std::span<const double> x);

// Battery state of charge after each step.
std::vector<double> soc_trajectory(const Battery& battery, std::span<const double> x);

// The local proximal subproblem: minimize
//   cost(x) + (1/2 rho) * sum_terms || r + a * x - a * x_prev ||^2
// over battery-feasible x (power limits and 0 <= soc <= capacity). The
// piecewise-linear cost enters through per-step epigraph variables, and the
// resulting QP goes through the interior-point solver.
std::vector<double> local_update(const Prosumer& prosumer, std::span<const double> x_prev,
                                 const ReferenceBundle& refs, double rho,
                                 const QpSettings& qp_settings = {});

}  // namespace hieradmm
