#include "hieradmm/coordinator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "hieradmm/errors.hpp"

namespace hieradmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool unit_weights(const CouplingConstraint& constraint) {
  for (const auto& [leaf, weight] : constraint.weights) {
    if (std::abs(weight - 1.0) > 1e-12) return false;
  }
  return true;
}

}  // namespace

void SolverConfig::validate() const {
  if (rho <= 0) throw ValidationError("solver: rho must be positive");
  if (tol <= 0) throw ValidationError("solver: tol must be positive");
  if (max_iter < 1) throw ValidationError("solver: max_iter must be >= 1");
}

std::vector<double> reference_signal(const BranchState& state,
                                     std::span<const double> sx) {
  std::vector<double> out(sx.size());
  for (std::size_t t = 0; t < sx.size(); ++t) {
    out[t] = (sx[t] - state.y_bar[t]) / state.n_leaves + state.lambda_bar[t];
  }
  return out;
}

std::vector<double> prox_tracking(std::span<const double> z, double rho,
                                  const RootObjective& objective) {
  std::vector<double> out(z.size());
  const double scale = 2.0 * rho * objective.weight;
  for (std::size_t t = 0; t < z.size(); ++t) {
    const double target = objective.target.empty() ? 0.0 : objective.target[t];
    out[t] = (z[t] + scale * target) / (1.0 + scale);
  }
  return out;
}

std::vector<double> project_branch(const CouplingConstraint& constraint,
                                   std::span<const double> z) {
  std::vector<double> out(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) {
    out[t] = std::clamp(z[t], constraint.lower[t], constraint.upper[t]);
  }
  return out;
}

void dual_update(BranchState& state, std::span<const double> sx_new, double rho) {
  const double step = rho / state.n_leaves;
  for (std::size_t t = 0; t < sx_new.size(); ++t) {
    state.lambda_bar[t] += step * (sx_new[t] - state.y_bar[t]);
  }
}

double primal_residual(const BranchState& state, std::span<const double> sx_new) {
  double worst = 0;
  for (std::size_t t = 0; t < sx_new.size(); ++t) {
    worst = std::max(worst, std::abs(sx_new[t] - state.y_bar[t]));
  }
  return worst;
}

std::vector<BranchState> init_states(const Scenario& scenario) {
  std::vector<BranchState> states;
  bool objective_attached = scenario.root_objective.weight <= 0;
  for (const CouplingConstraint& constraint : scenario.constraints) {
    BranchState state;
    state.constraint = constraint;
    state.n_leaves = static_cast<int>(constraint.weights.size());
    state.y_bar.assign(scenario.horizon, 0.0);
    state.lambda_bar.assign(scenario.horizon, 0.0);
    if (!objective_attached && constraint.branch.is_root() && unit_weights(constraint)) {
      state.carries_objective = true;
      objective_attached = true;
    }
    states.push_back(std::move(state));
  }
  if (!objective_attached) {
    BranchState state;
    state.constraint.branch = NodeId::root();
    for (const auto& [leaf, prosumer] : scenario.prosumers) {
      state.constraint.weights.emplace(leaf, 1.0);
    }
    state.constraint.lower.assign(scenario.horizon, -kInf);
    state.constraint.upper.assign(scenario.horizon, kInf);
    state.constraint.id = "root#objective";
    state.n_leaves = static_cast<int>(state.constraint.weights.size());
    state.y_bar.assign(scenario.horizon, 0.0);
    state.lambda_bar.assign(scenario.horizon, 0.0);
    state.carries_objective = true;
    states.push_back(std::move(state));
  }
  return states;
}

std::map<NodeId, ReferenceBundle> forward_pass(
    const Tree& tree, const std::vector<BranchState>& states,
    const std::map<NodeId, std::vector<double>>& x, std::vector<Message>* trace) {
  // References per state, computed from the current aggregates.
  std::vector<std::vector<double>> refs(states.size());
  std::map<NodeId, std::vector<std::size_t>> by_branch;
  for (std::size_t s = 0; s < states.size(); ++s) {
    std::map<NodeId, std::vector<double>> subset;
    for (const auto& [leaf, weight] : states[s].constraint.weights) {
      subset.emplace(leaf, x.at(leaf));
    }
    refs[s] = reference_signal(states[s], aggregate(states[s].constraint, subset));
    by_branch[states[s].constraint.branch].push_back(s);
  }

  std::map<NodeId, ReferenceBundle> bundles;
  // Depth-first walk carrying the references collected on the path so far.
  auto walk = [&](auto&& self, const NodeId& node,
                  std::vector<std::size_t> carried) -> void {
    if (auto it = by_branch.find(node); it != by_branch.end()) {
      carried.insert(carried.end(), it->second.begin(), it->second.end());
    }
    if (tree.is_leaf(node)) {
      ReferenceBundle bundle;
      for (std::size_t s : carried) {
        ReferenceTerm term;
        term.constraint_id = states[s].constraint.id;
        term.r = refs[s];
        term.weight = states[s].constraint.weights.at(node);
        bundle.push_back(std::move(term));
      }
      bundles.emplace(node, std::move(bundle));
      return;
    }
    for (const NodeId& child : tree.children(node)) {
      if (trace) {
        for (std::size_t s : carried) {
          Message msg;
          msg.direction = Message::Direction::kDown;
          msg.kind = Message::Kind::kReference;
          msg.from = node;
          msg.to = child;
          msg.constraint_id = states[s].constraint.id;
          msg.payload_length = static_cast<int>(refs[s].size());
          msg.span_leaves = states[s].n_leaves;
          msg.payload = refs[s];
          trace->push_back(std::move(msg));
        }
      }
      self(self, child, carried);
    }
  };
  walk(walk, NodeId::root(), {});
  return bundles;
}

std::vector<std::vector<double>> backward_pass(
    const Tree& tree, const std::vector<BranchState>& states,
    const std::map<NodeId, std::vector<double>>& x, std::vector<Message>* trace) {
  const int horizon = states.empty() ? 0 : states.front().constraint.horizon();
  std::vector<std::vector<double>> aggregates(states.size());

  struct Partial {
    std::vector<double> sum;
    int span = 0;
  };
  // Per node, the partial sums of the constraints that pass through it.
  std::map<NodeId, std::map<std::size_t, Partial>> pending;

  std::vector<NodeId> order = tree.nodes();
  std::sort(order.begin(), order.end(), [](const NodeId& a, const NodeId& b) {
    if (a.level() != b.level()) return a.level() > b.level();
    return a < b;
  });

  // Constraint states indexed by branch for termination checks.
  std::map<NodeId, std::vector<std::size_t>> by_branch;
  for (std::size_t s = 0; s < states.size(); ++s) {
    by_branch[states[s].constraint.branch].push_back(s);
  }

  for (const NodeId& node : order) {
    std::map<std::size_t, Partial>& mine = pending[node];
    if (tree.is_leaf(node)) {
      for (std::size_t s = 0; s < states.size(); ++s) {
        auto w = states[s].constraint.weights.find(node);
        if (w == states[s].constraint.weights.end()) continue;
        Partial partial;
        partial.sum.resize(horizon);
        const std::vector<double>& profile = x.at(node);
        for (int t = 0; t < horizon; ++t) partial.sum[t] = w->second * profile[t];
        partial.span = 1;
        mine.emplace(s, std::move(partial));
      }
    }
    if (node.is_root()) {
      for (auto& [s, partial] : mine) aggregates[s] = std::move(partial.sum);
      continue;
    }
    const NodeId parent = node.parent();
    std::map<std::size_t, Partial>& up = pending[parent];
    for (auto& [s, partial] : mine) {
      if (states[s].constraint.branch == node) {
        // The constraint lives here; its aggregate is complete.
        aggregates[s] = std::move(partial.sum);
        continue;
      }
      if (trace) {
        Message msg;
        msg.direction = Message::Direction::kUp;
        msg.kind = tree.is_leaf(node) ? Message::Kind::kLeafContribution
                                      : Message::Kind::kAggregate;
        msg.from = node;
        msg.to = parent;
        msg.constraint_id = states[s].constraint.id;
        msg.payload_length = horizon;
        msg.span_leaves = partial.span;
        msg.payload = partial.sum;
        trace->push_back(msg);
      }
      auto [it, inserted] = up.try_emplace(s);
      if (inserted) {
        it->second.sum.assign(horizon, 0.0);
      }
      for (int t = 0; t < horizon; ++t) it->second.sum[t] += partial.sum[t];
      it->second.span += partial.span;
    }
    pending.erase(node);
  }
  for (std::size_t s = 0; s < states.size(); ++s) {
    if (aggregates[s].empty()) aggregates[s].assign(horizon, 0.0);
  }
  return aggregates;
}

namespace {

// Duplicated-variable sweep for the sequential validation mode: per-leaf
// copies y_{B,i} with their own duals, agents updated one at a time, then the
// joint y minimization per constraint (an equal-shift projection, with the
// tracking prox folded in at the root carrier).
SolveReport run_sequential(const Scenario& scenario, const SolverConfig& config) {
  SolveReport report;
  std::vector<BranchState> states = init_states(scenario);
  const int horizon = scenario.horizon;
  const double rho = config.rho;
  const auto leaves = scenario.tree.leaves();

  // y and lambda copies indexed per state, then per leaf of that constraint.
  std::vector<std::map<NodeId, std::vector<double>>> y_copies(states.size());
  std::vector<std::map<NodeId, std::vector<double>>> l_copies(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    for (const auto& [leaf, weight] : states[s].constraint.weights) {
      y_copies[s].emplace(leaf, std::vector<double>(horizon, 0.0));
      l_copies[s].emplace(leaf, std::vector<double>(horizon, 0.0));
    }
    report.constraint_ids.push_back(states[s].constraint.id);
  }

  std::map<NodeId, std::vector<double>> x = zero_actions(scenario);
  report.no_action_objective = total_objective(scenario, x);

  const auto t_start = Clock::now();
  for (int iter = 0; iter < config.max_iter; ++iter) {
    // Agents in lexicographic order, each against the latest copies.
    const auto t_agents = Clock::now();
    for (const NodeId& leaf : leaves) {
      ReferenceBundle bundle;
      for (std::size_t s = 0; s < states.size(); ++s) {
        auto w = states[s].constraint.weights.find(leaf);
        if (w == states[s].constraint.weights.end()) continue;
        ReferenceTerm term;
        term.constraint_id = states[s].constraint.id;
        term.weight = w->second;
        term.r.resize(horizon);
        const auto& y = y_copies[s].at(leaf);
        const auto& l = l_copies[s].at(leaf);
        const auto& xi = x.at(leaf);
        for (int t = 0; t < horizon; ++t) {
          term.r[t] = w->second * xi[t] - y[t] + l[t];
        }
        bundle.push_back(std::move(term));
      }
      x[leaf] = local_update(scenario.prosumers.at(leaf), x.at(leaf), bundle, rho,
                             config.qp);
    }
    report.times.agents_wall_s += seconds_since(t_agents);
    report.times.agents_cpu_s += seconds_since(t_agents);

    // Joint y update per constraint, then the per-copy dual step.
    const auto t_update = Clock::now();
    IterationRecord record;
    record.primal.resize(states.size());
    record.dual.resize(states.size());
    for (std::size_t s = 0; s < states.size(); ++s) {
      BranchState& state = states[s];
      const int n = state.n_leaves;
      std::vector<double> z_sum(horizon, 0.0);
      std::map<NodeId, std::vector<double>> z;
      for (const auto& [leaf, weight] : state.constraint.weights) {
        std::vector<double> zi(horizon);
        const auto& xi = x.at(leaf);
        const auto& li = l_copies[s].at(leaf);
        for (int t = 0; t < horizon; ++t) {
          zi[t] = weight * xi[t] + li[t];
          z_sum[t] += zi[t];
        }
        z.emplace(leaf, std::move(zi));
      }
      std::vector<double> y_bar(horizon);
      for (int t = 0; t < horizon; ++t) {
        double target = z_sum[t];
        if (state.carries_objective && scenario.root_objective.weight > 0) {
          const double scale = 2.0 * scenario.root_objective.weight * rho * n;
          target = (z_sum[t] + scale * scenario.root_objective.target[t]) /
                   (1.0 + scale);
        }
        y_bar[t] = std::clamp(target, state.constraint.lower[t],
                              state.constraint.upper[t]);
      }
      double dual_norm = 0;
      for (int t = 0; t < horizon; ++t) {
        dual_norm = std::max(dual_norm, rho * std::abs(y_bar[t] - state.y_bar[t]));
      }
      // Distribute the aggregate back onto the copies (equal shift is the
      // Euclidean-optimal split) and step the duals.
      std::vector<double> sx(horizon, 0.0);
      for (auto& [leaf, zi] : z) {
        auto& yi = y_copies[s].at(leaf);
        auto& li = l_copies[s].at(leaf);
        const double weight = state.constraint.weights.at(leaf);
        const auto& xi = x.at(leaf);
        for (int t = 0; t < horizon; ++t) {
          yi[t] = zi[t] + (y_bar[t] - z_sum[t]) / n;
          li[t] += rho * (weight * xi[t] - yi[t]);
          sx[t] += weight * xi[t];
        }
      }
      state.y_bar = y_bar;
      record.primal[s] = primal_residual(state, sx);
      record.dual[s] = dual_norm;
    }
    report.times.update_s += seconds_since(t_update);

    record.err = record.primal.empty()
                     ? 0.0
                     : *std::max_element(record.primal.begin(), record.primal.end());
    report.history.push_back(std::move(record));
    report.iterations = iter + 1;
    if (report.history.back().err <= config.tol) {
      report.converged = true;
      break;
    }
  }
  report.times.total_s = seconds_since(t_start);
  report.x = std::move(x);
  report.objective = total_objective(scenario, report.x);
  return report;
}

}  // namespace

SolveReport run(const Scenario& scenario, const SolverConfig& config) {
  config.validate();
  if (config.mode == SolveMode::kSequential) {
    return run_sequential(scenario, config);
  }

  SolveReport report;
  std::vector<BranchState> states = init_states(scenario);
  for (const BranchState& state : states) {
    report.constraint_ids.push_back(state.constraint.id);
  }

  const auto leaves = scenario.tree.leaves();
  const int n_leaves = static_cast<int>(leaves.size());
  std::map<NodeId, std::vector<double>> x = zero_actions(scenario);
  report.no_action_objective = total_objective(scenario, x);

  int threads = config.threads > 0
                    ? config.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, std::max(1, n_leaves));

  std::vector<Message>* trace = config.trace_messages ? &report.messages : nullptr;

  const auto t_start = Clock::now();
  for (int iter = 0; iter < config.max_iter; ++iter) {
    const auto t_forward = Clock::now();
    std::map<NodeId, ReferenceBundle> bundles =
        forward_pass(scenario.tree, states, x, trace);
    report.times.forward_s += seconds_since(t_forward);

    // Agent phase: every leaf solves against the same references; results land
    // in per-leaf slots so scheduling does not affect the outcome.
    const auto t_agents = Clock::now();
    std::vector<std::vector<double>> x_new(n_leaves);
    std::vector<double> agent_seconds(n_leaves, 0.0);
    auto solve_leaf = [&](int i) {
      const NodeId& leaf = leaves[i];
      const auto t0 = Clock::now();
      x_new[i] = local_update(scenario.prosumers.at(leaf), x.at(leaf),
                              bundles.at(leaf), config.rho, config.qp);
      agent_seconds[i] = seconds_since(t0);
    };
    if (threads == 1) {
      for (int i = 0; i < n_leaves; ++i) solve_leaf(i);
    } else {
      std::atomic<int> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      std::vector<std::thread> pool;
      pool.reserve(threads);
      for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
          for (int i = next.fetch_add(1); i < n_leaves; i = next.fetch_add(1)) {
            try {
              solve_leaf(i);
            } catch (...) {
              std::scoped_lock lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
      for (std::thread& worker : pool) worker.join();
      if (failure) std::rethrow_exception(failure);
    }
    report.times.agents_wall_s += seconds_since(t_agents);
    double critical = 0, cpu = 0;
    for (double s : agent_seconds) {
      critical = std::max(critical, s);
      cpu += s;
    }
    report.times.agents_critical_s += critical;
    report.times.agents_cpu_s += cpu;
    for (int i = 0; i < n_leaves; ++i) x[leaves[i]] = std::move(x_new[i]);

    const auto t_backward = Clock::now();
    std::vector<std::vector<double>> aggregates =
        backward_pass(scenario.tree, states, x, trace);
    report.times.backward_s += seconds_since(t_backward);

    const auto t_update = Clock::now();
    IterationRecord record;
    record.primal.resize(states.size());
    record.dual.resize(states.size());
    for (std::size_t s = 0; s < states.size(); ++s) {
      BranchState& state = states[s];
      const std::vector<double>& sx = aggregates[s];
      std::vector<double> z(scenario.horizon);
      for (int t = 0; t < scenario.horizon; ++t) {
        z[t] = sx[t] + state.lambda_bar[t];
      }
      std::vector<double> proxed =
          state.carries_objective ? prox_tracking(z, config.rho, scenario.root_objective)
                                  : std::move(z);
      std::vector<double> y_new = project_branch(state.constraint, proxed);
      double dual_norm = 0;
      for (int t = 0; t < scenario.horizon; ++t) {
        dual_norm =
            std::max(dual_norm, config.rho * std::abs(y_new[t] - state.y_bar[t]));
      }
      state.y_bar = std::move(y_new);
      dual_update(state, sx, config.rho);
      record.primal[s] = primal_residual(state, sx);
      record.dual[s] = dual_norm;
    }
    report.times.update_s += seconds_since(t_update);

    record.err = record.primal.empty()
                     ? 0.0
                     : *std::max_element(record.primal.begin(), record.primal.end());
    report.history.push_back(std::move(record));
    report.iterations = iter + 1;
    if (report.history.back().err <= config.tol) {
      report.converged = true;
      break;
    }
  }
  report.times.total_s = seconds_since(t_start);
  report.x = std::move(x);
  report.objective = total_objective(scenario, report.x);
  return report;
}

}  // namespace hieradmm
