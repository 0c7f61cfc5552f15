#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hieradmm/tree.hpp"

namespace hieradmm {

// Weighted aggregation constraint on one branching node:
//   lower <= sum_i weights[i] * x_i <= upper   (elementwise over the horizon).
// Bounds use +/-infinity entries for one-sided or never-binding rows. Weights
// are keyed by exactly the branch's leaf descendants.
struct CouplingConstraint {
  NodeId branch;
  std::map<NodeId, double> weights;
  std::vector<double> lower;  // length T, entries may be -inf
  std::vector<double> upper;  // length T, entries may be +inf
  std::string id;             // display id, e.g. "root#0"; set by the scenario layer

  int horizon() const { return static_cast<int>(upper.size()); }
  bool bounded_below() const;
  bool bounded_above() const;
};

// First-order voltage response at a branch: |V| ~ v0 + sum_i grad_p[i]*P_i
// (+ tan_phi * grad_q[i]*P_i when a fixed power factor ties Q to P).
struct SensitivityModel {
  double v0 = 1.0;    // per-unit reference voltage
  double vmax = 1.0;  // per-unit upper limit
  std::optional<double> vmin;
  std::map<NodeId, double> grad_p;  // pu per kW, keyed by leaf descendants
  std::optional<std::map<NodeId, double>> grad_q;
  std::optional<double> tan_phi;
};

// S_B x: per-time-step weighted sum of the leaf profiles named by the
// constraint. Throws ValidationError on a missing leaf or a length mismatch.
std::vector<double> aggregate(const CouplingConstraint& constraint,
                              const std::map<NodeId, std::vector<double>>& x);

// Voltage limits as a coupling constraint: weights are the (collapsed)
// sensitivities, upper bound vmax - v0, lower bound vmin - v0 when vmin is
// set. Requires a sensitivity for every leaf descendant of the branch.
CouplingConstraint voltage_constraint(const Tree& tree, const NodeId& branch,
                                      const SensitivityModel& model, int horizon);

// Unit-weight cap on the summed power of a branch's leaf descendants.
CouplingConstraint power_constraint(const Tree& tree, const NodeId& branch,
                                    std::vector<double> upper,
                                    std::optional<std::vector<double>> lower = {});

}  // namespace hieradmm
