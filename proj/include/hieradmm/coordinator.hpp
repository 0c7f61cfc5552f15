#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "hieradmm/coupling.hpp"
#include "hieradmm/objective.hpp"
#include "hieradmm/prosumer.hpp"
#include "hieradmm/qp.hpp"
#include "hieradmm/scenario.hpp"
#include "hieradmm/tree.hpp"

namespace hieradmm {

// Running consensus state for one coupling constraint: the averaged auxiliary
// aggregate y_bar, the averaged dual lambda_bar, and the leaf count that
// scales the averaged updates.
struct BranchState {
  CouplingConstraint constraint;
  std::vector<double> y_bar;
  std::vector<double> lambda_bar;
  int n_leaves = 0;
  bool carries_objective = false;  // root state composing prox-then-project
};

enum class SolveMode { kParallel, kSequential };

struct SolverConfig {
  double rho = 1.0;
  double tol = 1e-2;       // infinity norm of the worst branch residual
  int max_iter = 5000;
  SolveMode mode = SolveMode::kParallel;
  int threads = 0;  // agent-phase workers; 0 picks hardware concurrency
  bool trace_messages = false;
  QpSettings qp;

  void validate() const;
};

// One payload crossing an edge of the hierarchy, recorded when tracing is on.
// Upward branch messages are aggregates; the only per-leaf payloads are each
// leaf's own contribution to its direct parent.
struct Message {
  enum class Direction { kDown, kUp };
  enum class Kind { kReference, kLeafContribution, kAggregate };
  Direction direction = Direction::kDown;
  Kind kind = Kind::kReference;
  NodeId from;
  NodeId to;
  std::string constraint_id;
  int payload_length = 0;
  int span_leaves = 0;  // number of leaf profiles folded into the payload
  std::vector<double> payload;
};

struct IterationRecord {
  std::vector<double> primal;  // per constraint, infinity norm
  std::vector<double> dual;    // rho * ||y_bar change||_inf per constraint
  double err = 0;              // max primal over constraints
};

struct PhaseTimes {
  double forward_s = 0;
  double agents_wall_s = 0;
  double agents_cpu_s = 0;       // summed per-agent solve time
  double agents_critical_s = 0;  // per-iteration max agent time, summed
  double backward_s = 0;
  double update_s = 0;
  double total_s = 0;
};

struct SolveReport {
  std::map<NodeId, std::vector<double>> x;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> constraint_ids;
  std::vector<IterationRecord> history;
  PhaseTimes times;
  double objective = 0;
  double no_action_objective = 0;
  std::vector<Message> messages;  // only with trace_messages
};

// r_B = (S_B x - y_bar) / N_B + lambda_bar.
std::vector<double> reference_signal(const BranchState& state,
                                     std::span<const double> sx);

// argmin_y weight*||y - target||^2 + (1/2 rho)*||y - z||^2, elementwise.
std::vector<double> prox_tracking(std::span<const double> z, double rho,
                                  const RootObjective& objective);

// Euclidean projection onto the constraint's box.
std::vector<double> project_branch(const CouplingConstraint& constraint,
                                   std::span<const double> z);

// lambda_bar += (rho / N_B) * (S_B x_new - y_bar); call after the y update.
void dual_update(BranchState& state, std::span<const double> sx_new, double rho);

// ||S_B x_new - y_bar||_inf.
double primal_residual(const BranchState& state, std::span<const double> sx_new);

// One state per scenario constraint, plus a synthetic unbounded unit-weight
// root state when the objective has no unit-weight root power constraint to
// ride on.
std::vector<BranchState> init_states(const Scenario& scenario);

// Root-to-leaves distribution of reference signals. Only aggregated
// quantities flow; each leaf receives one (r, weight) pair per constraint on
// each of its ancestors, ordered root-first.
std::map<NodeId, ReferenceBundle> forward_pass(
    const Tree& tree, const std::vector<BranchState>& states,
    const std::map<NodeId, std::vector<double>>& x,
    std::vector<Message>* trace = nullptr);

// Leaves-to-root aggregation of the new actions; returns S_B x per state.
// Partial sums merge at every crossing, so a parent only ever sees per-child
// aggregates.
std::vector<std::vector<double>> backward_pass(
    const Tree& tree, const std::vector<BranchState>& states,
    const std::map<NodeId, std::vector<double>>& x,
    std::vector<Message>* trace = nullptr);

// The full solve loop: forward pass, agent updates, backward pass, branch and
// dual updates, until every branch residual is within tol or max_iter hits.
SolveReport run(const Scenario& scenario, const SolverConfig& config);

}  // namespace hieradmm
