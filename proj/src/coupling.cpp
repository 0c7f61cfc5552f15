#include "hieradmm/coupling.hpp"

#include <cmath>
#include <limits>

#include "hieradmm/errors.hpp"

namespace hieradmm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

bool CouplingConstraint::bounded_below() const {
  for (double v : lower) {
    if (v > -kInf) return true;
  }
  return false;
}

bool CouplingConstraint::bounded_above() const {
  for (double v : upper) {
    if (v < kInf) return true;
  }
  return false;
}

std::vector<double> aggregate(const CouplingConstraint& constraint,
                              const std::map<NodeId, std::vector<double>>& x) {
  const int horizon = constraint.horizon();
  std::vector<double> out(horizon, 0.0);
  for (const auto& [leaf, weight] : constraint.weights) {
    auto it = x.find(leaf);
    if (it == x.end()) {
      throw ValidationError("aggregate: no profile for leaf " + leaf.str());
    }
    const std::vector<double>& profile = it->second;
    if (static_cast<int>(profile.size()) != horizon) {
      throw ValidationError("aggregate: profile for leaf " + leaf.str() +
                            " has length " + std::to_string(profile.size()) +
                            ", expected " + std::to_string(horizon));
    }
    for (int t = 0; t < horizon; ++t) out[t] += weight * profile[t];
  }
  return out;
}

CouplingConstraint voltage_constraint(const Tree& tree, const NodeId& branch,
                                      const SensitivityModel& model, int horizon) {
  CouplingConstraint constraint;
  constraint.branch = branch;
  for (const NodeId& leaf : tree.leaf_descendants(branch)) {
    auto it = model.grad_p.find(leaf);
    if (it == model.grad_p.end()) {
      throw ValidationError("voltage constraint on " + branch.str() +
                            ": no sensitivity for leaf " + leaf.str());
    }
    double weight = it->second;
    if (model.grad_q && model.tan_phi) {
      auto q = model.grad_q->find(leaf);
      if (q == model.grad_q->end()) {
        throw ValidationError("voltage constraint on " + branch.str() +
                              ": no reactive sensitivity for leaf " + leaf.str());
      }
      weight += *model.tan_phi * q->second;
    }
    constraint.weights.emplace(leaf, weight);
  }
  constraint.upper.assign(horizon, model.vmax - model.v0);
  constraint.lower.assign(horizon, model.vmin ? *model.vmin - model.v0 : -kInf);
  return constraint;
}

CouplingConstraint power_constraint(const Tree& tree, const NodeId& branch,
                                    std::vector<double> upper,
                                    std::optional<std::vector<double>> lower) {
  CouplingConstraint constraint;
  constraint.branch = branch;
  for (const NodeId& leaf : tree.leaf_descendants(branch)) {
    constraint.weights.emplace(leaf, 1.0);
  }
  const int horizon = static_cast<int>(upper.size());
  if (lower) {
    if (lower->size() != upper.size()) {
      throw ValidationError("power constraint on " + branch.str() +
                            ": bound lengths differ");
    }
    for (int t = 0; t < horizon; ++t) {
      if ((*lower)[t] > upper[t]) {
        throw ValidationError("power constraint on " + branch.str() +
                              ": lower bound exceeds upper bound at step " +
                              std::to_string(t));
      }
    }
    constraint.lower = std::move(*lower);
  } else {
    constraint.lower.assign(horizon, -kInf);
  }
  constraint.upper = std::move(upper);
  return constraint;
}

}  // namespace hieradmm
