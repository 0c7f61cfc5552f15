#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hieradmm/coupling.hpp"
#include "hieradmm/objective.hpp"
#include "hieradmm/prosumer.hpp"
#include "hieradmm/tree.hpp"

namespace hieradmm {

enum class ConstraintKind { kPower, kVoltage };

// File-level description of one coupling constraint, in absolute units
// (bounds apply to the total including uncontrolled load, or to absolute
// voltage for the voltage kind). The solver-facing action-space constraint is
// derived from this at finalize time.
struct ConstraintSpec {
  NodeId branch;
  ConstraintKind kind = ConstraintKind::kPower;
  std::optional<std::vector<double>> upper;  // length T once parsed
  std::optional<std::vector<double>> lower;
  std::map<NodeId, double> weights;  // power kind; empty means unit weights
  SensitivityModel sens;             // voltage kind
};

// Randomized instance generator controls. Levels count the whole hierarchy,
// root level included, so levels = 2 is a single aggregator over its leaves.
struct GeneratorParams {
  int levels = 3;  // in [2, 5]
  int max_branch_children = 2;
  int min_leaves_per_branch = 1;
  int max_leaves_per_branch = 10;
  int horizon = 96;
  double dt_hours = 0.25;

  double base_load_min_kw = 0.2;
  double base_load_max_kw = 2.0;
  double pv_peak_min_kw = 0.0;
  double pv_peak_max_kw = 3.0;
  double capacity_min_kwh = 5.0;
  double capacity_max_kwh = 15.0;
  double p_max_min_kw = 2.0;
  double p_max_max_kw = 5.0;
  double soc0_min_frac = 0.2;
  double soc0_max_frac = 0.8;
  double price_buy = 0.25;
  double price_sell = 0.10;

  double cap_min_frac = 0.4;  // power cap as a fraction of the uncontrolled peak
  double cap_max_frac = 0.8;
  double voltage_probability = 0.5;
  double grad_p_min = 0.002;  // pu per kW, scaled down on branches with many leaves
  double grad_p_max = 0.01;
  double v0 = 1.0;
  double vmax = 1.05;
  double vmin = 0.95;

  std::uint64_t seed = 0;

  void validate() const;
};

// A full problem instance: topology, horizon, one prosumer per leaf, coupling
// constraints and the root tracking objective. `constraints` holds the
// action-space form (bounds shifted by the aggregated uncontrolled load) that
// the solvers consume; `specs` keeps the absolute form for serialization and
// reporting.
struct Scenario {
  Tree tree;
  int horizon = 0;
  double dt_hours = 1.0;
  std::map<NodeId, Prosumer> prosumers;
  std::vector<ConstraintSpec> specs;
  RootObjective root_objective;
  bool peak_shaving_target = false;  // target written as "peak_shaving" on save
  double objective_weight = 0;       // file-level weight (kept through save/load)
  std::string metadata_json = "{}";

  std::vector<CouplingConstraint> constraints;  // built by finalize()

  // Validates every invariant and builds the action-space constraints and the
  // resolved root objective. Must be called after manual construction;
  // generate()/load() return finalized scenarios.
  void finalize();

  std::vector<NodeId> leaves() const { return tree.leaves(); }
  int num_agents() const { return static_cast<int>(prosumers.size()); }
  int levels() const { return tree.depth() + 1; }

  // Unit-weight aggregate of the uncontrolled profiles over all leaves.
  std::vector<double> uncontrolled_root_aggregate() const;

  // Absolute-units display series for one constraint: aggregate without and
  // with the battery actions, plus the absolute bounds.
  struct DisplaySeries {
    std::vector<double> before, after, lower, upper;
  };
  DisplaySeries display_series(std::size_t spec_index,
                               const std::map<NodeId, std::vector<double>>& x) const;
};

// Total objective: root tracking term plus every prosumer's electricity cost.
double total_objective(const Scenario& scenario,
                       const std::map<NodeId, std::vector<double>>& x);

std::map<NodeId, std::vector<double>> zero_actions(const Scenario& scenario);

Scenario generate(const GeneratorParams& params);

std::string to_json_string(const Scenario& scenario);
Scenario from_json_string(const std::string& text);
void save(const Scenario& scenario, const std::string& path);
Scenario load(const std::string& path);

}  // namespace hieradmm
