#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "hieradmm/coordinator.hpp"
#include "hieradmm/scenario.hpp"

namespace hieradmm::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitThreshold = 1;  // verify: gap or violation too large
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNoConvergence = 3;
inline constexpr int kExitInfeasible = 4;

struct GenerateOptions {
  GeneratorParams params;
  std::string out_path;
};

struct RunOptions {
  std::string scenario_path;
  SolverConfig config;
  std::string out_dir;
  bool svg = false;
};

struct BatchOptions {
  int count = 50;
  int levels_min = 2;
  int levels_max = 5;
  std::uint64_t seed = 0;
  GeneratorParams base;  // horizon, dt, caps; levels and seed set per run
  SolverConfig config;
  std::string out_dir;
  int jobs = 1;
  bool svg = false;
};

struct VerifyOptions {
  std::string scenario_path;
  SolverConfig config;
  double gap_threshold = 0.01;
  double violation_factor = 1.5;  // allowed violation = factor * tol
};

// Writes a scenario file and prints a structural summary.
int cmd_generate(const GenerateOptions& options, std::ostream& log);

// Runs one scenario; writes residuals.csv, solution.csv, aggregates.csv and
// run.json under out_dir. Exit 0 on convergence, 3 on the iteration cap.
int cmd_run(const RunOptions& options, std::ostream& log);

// Runs `count` seeded scenarios with levels drawn uniformly from
// [levels_min, levels_max]; writes records.csv, batch_residuals.csv and
// summary.json. Individual failures are recorded, not fatal.
int cmd_batch(const BatchOptions& options, std::ostream& log);

// Hierarchical vs monolithic comparison; exit 0 iff the relative objective
// gap and the constraint violations stay within the thresholds.
int cmd_verify(const VerifyOptions& options, std::ostream& log);

// Worst elementwise violation of the action-space coupling constraints.
double max_constraint_violation(const Scenario& scenario,
                                const std::map<NodeId, std::vector<double>>& x);

}  // namespace hieradmm::cli
