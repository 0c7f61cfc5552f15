#include "hieradmm/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hieradmm/errors.hpp"
#include "hieradmm/monolithic.hpp"

namespace hieradmm::cli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Shortest round-tripping decimal text; used everywhere a CSV needs a number
// so that repeated runs emit identical bytes.
std::string fmt(double value) {
  if (value == kInf) return "inf";
  if (value == -kInf) return "-inf";
  char buffer[32];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, end);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void write_residuals_csv(const fs::path& path, const SolveReport& report) {
  std::ofstream out = open_out(path);
  out << "iter,branch_id,primal_inf,dual_inf\n";
  for (std::size_t k = 0; k < report.history.size(); ++k) {
    const IterationRecord& record = report.history[k];
    for (std::size_t s = 0; s < report.constraint_ids.size(); ++s) {
      out << (k + 1) << ',' << report.constraint_ids[s] << ','
          << fmt(record.primal[s]) << ',' << fmt(record.dual[s]) << '\n';
    }
  }
}

void write_solution_csv(const fs::path& path, const Scenario& scenario,
                        const SolveReport& report) {
  std::ofstream out = open_out(path);
  out << "leaf_id,t,x,soc\n";
  for (const auto& [leaf, profile] : report.x) {
    const auto soc = soc_trajectory(scenario.prosumers.at(leaf).battery, profile);
    for (int t = 0; t < scenario.horizon; ++t) {
      out << leaf.str() << ',' << t << ',' << fmt(profile[t]) << ',' << fmt(soc[t])
          << '\n';
    }
  }
}

void write_aggregates_csv(const fs::path& path, const Scenario& scenario,
                          const SolveReport& report) {
  std::ofstream out = open_out(path);
  out << "branch_id,t,sx_before,sx_after,lower,upper\n";
  std::map<NodeId, int> ordinal;
  for (std::size_t k = 0; k < scenario.specs.size(); ++k) {
    const auto series = scenario.display_series(k, report.x);
    const std::string id = scenario.specs[k].branch.str() + "#" +
                           std::to_string(ordinal[scenario.specs[k].branch]++);
    for (int t = 0; t < scenario.horizon; ++t) {
      out << id << ',' << t << ',' << fmt(series.before[t]) << ','
          << fmt(series.after[t]) << ',' << fmt(series.lower[t]) << ','
          << fmt(series.upper[t]) << '\n';
    }
  }
}

Json run_record(const Scenario& scenario, const SolveReport& report) {
  Json record;
  Json meta = Json::parse(scenario.metadata_json);
  if (meta.contains("seed")) record["seed"] = meta["seed"];
  record["levels"] = scenario.levels();
  record["agents"] = scenario.num_agents();
  record["iterations"] = report.iterations;
  record["converged"] = report.converged;
  record["objective"] = report.objective;
  record["no_action_objective"] = report.no_action_objective;
  Json times;
  times["total_s"] = report.times.total_s;
  times["forward_s"] = report.times.forward_s;
  times["agents_wall_s"] = report.times.agents_wall_s;
  times["agents_cpu_s"] = report.times.agents_cpu_s;
  times["agents_critical_path_s"] = report.times.agents_critical_s;
  times["backward_s"] = report.times.backward_s;
  times["update_s"] = report.times.update_s;
  record["wall_time"] = std::move(times);
  record["time_per_agent_s"] =
      report.times.total_s / std::max(1, scenario.num_agents());
  return record;
}

// Minimal SVG polyline chart; enough for eyeballing residual decay and
// aggregate profiles.
void write_svg_chart(const fs::path& path, const std::string& title,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series,
                     bool log_y) {
  const double width = 820, height = 420, left = 60, bottom = 380, top = 30,
               right = 790;
  double lo = kInf, hi = -kInf;
  std::size_t max_len = 1;
  for (const auto& [name, values] : series) {
    max_len = std::max(max_len, values.size());
    for (double v : values) {
      if (log_y && v <= 0) continue;
      const double y = log_y ? std::log10(v) : v;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (!(lo < hi)) {
    lo = log_y ? -1 : 0;
    hi = log_y ? 1 : 1;
  }
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<text x=\"20\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"8\" y=\"" << top + 5 << "\" font-size=\"11\">"
      << fmt(log_y ? std::pow(10.0, hi) : hi) << "</text>\n";
  out << "<text x=\"8\" y=\"" << bottom << "\" font-size=\"11\">"
      << fmt(log_y ? std::pow(10.0, lo) : lo) << "</text>\n";
  int color = 0;
  for (const auto& [name, values] : series) {
    std::ostringstream points;
    for (std::size_t i = 0; i < values.size(); ++i) {
      double v = values[i];
      if (log_y) v = std::log10(std::max(v, 1e-300));
      const double px =
          left + (right - left) * (max_len > 1 ? double(i) / (max_len - 1) : 0.5);
      const double py =
          bottom - (bottom - top) * std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
      points << fmt(px) << ',' << fmt(py) << ' ';
    }
    out << "<polyline fill=\"none\" stroke=\"" << palette[color % 5]
        << "\" stroke-width=\"1.5\" points=\"" << points.str() << "\"/>\n";
    out << "<text x=\"" << right - 120 << "\" y=\"" << top + 16 * (color + 1)
        << "\" font-size=\"11\" fill=\"" << palette[color % 5] << "\">" << name
        << "</text>\n";
    ++color;
  }
  out << "</svg>\n";
}

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

}  // namespace

double max_constraint_violation(const Scenario& scenario,
                                const std::map<NodeId, std::vector<double>>& x) {
  double worst = 0;
  for (const CouplingConstraint& constraint : scenario.constraints) {
    std::map<NodeId, std::vector<double>> subset;
    for (const auto& [leaf, weight] : constraint.weights) subset.emplace(leaf, x.at(leaf));
    const auto sx = aggregate(constraint, subset);
    for (int t = 0; t < constraint.horizon(); ++t) {
      if (constraint.upper[t] < kInf) worst = std::max(worst, sx[t] - constraint.upper[t]);
      if (constraint.lower[t] > -kInf) worst = std::max(worst, constraint.lower[t] - sx[t]);
    }
  }
  return worst;
}

int cmd_generate(const GenerateOptions& options, std::ostream& log) {
  if (options.out_path.empty()) {
    log << "generate: --out is required\n";
    return kExitUsage;
  }
  Scenario scenario;
  try {
    scenario = generate(options.params);
  } catch (const ValidationError& err) {
    log << "generate: " << err.what() << '\n';
    return kExitUsage;
  }
  save(scenario, options.out_path);
  log << "wrote " << options.out_path << ": levels=" << scenario.levels()
      << " branching_nodes=" << scenario.tree.branching_nodes().size()
      << " leaves=" << scenario.num_agents()
      << " constraints=" << scenario.specs.size() << " horizon=" << scenario.horizon
      << '\n';
  return kExitOk;
}

int cmd_run(const RunOptions& options, std::ostream& log) {
  Scenario scenario;
  try {
    scenario = load(options.scenario_path);
  } catch (const Error& err) {
    log << "run: " << err.what() << '\n';
    return kExitUsage;
  }

  SolveReport report;
  try {
    report = run(scenario, options.config);
  } catch (const InfeasibleError& err) {
    log << "run: " << err.what() << '\n';
    return kExitInfeasible;
  }

  const fs::path dir(options.out_dir.empty() ? "." : options.out_dir);
  fs::create_directories(dir);
  write_residuals_csv(dir / "residuals.csv", report);
  write_solution_csv(dir / "solution.csv", scenario, report);
  write_aggregates_csv(dir / "aggregates.csv", scenario, report);
  {
    std::ofstream out = open_out(dir / "run.json");
    out << run_record(scenario, report).dump(2) << '\n';
  }
  if (options.svg) {
    std::vector<std::pair<std::string, std::vector<double>>> series;
    std::vector<double> err;
    err.reserve(report.history.size());
    for (const auto& record : report.history) err.push_back(record.err);
    series.emplace_back("max primal residual", std::move(err));
    write_svg_chart(dir / "residuals.svg", "residual vs iteration", series, true);
    if (!scenario.specs.empty()) {
      const auto display = scenario.display_series(0, report.x);
      std::vector<std::pair<std::string, std::vector<double>>> agg_series;
      agg_series.emplace_back("no actions", display.before);
      agg_series.emplace_back("optimized", display.after);
      agg_series.emplace_back("upper bound", display.upper);
      write_svg_chart(dir / "aggregates.svg", "root aggregate", agg_series, false);
    }
  }

  log << "iterations=" << report.iterations << " converged=" << report.converged
      << " objective=" << fmt(report.objective)
      << " no_action_objective=" << fmt(report.no_action_objective)
      << " wall_s=" << fmt(report.times.total_s) << '\n';
  return report.converged ? kExitOk : kExitNoConvergence;
}

int cmd_batch(const BatchOptions& options, std::ostream& log) {
  if (options.count < 1) {
    log << "batch: --count must be positive\n";
    return kExitUsage;
  }
  if (options.levels_min < 2 || options.levels_max > 5 ||
      options.levels_min > options.levels_max) {
    log << "batch: levels must stay within [2, 5]\n";
    return kExitUsage;
  }

  struct RunOutcome {
    std::uint64_t seed = 0;
    int levels = 0;
    int agents = 0;
    int iterations = 0;
    bool converged = false;
    double objective = 0;
    double no_action_objective = 0;
    double wall_s = 0;
    double time_per_agent_s = 0;
    std::vector<double> residuals;
    std::string error;
  };

  // Per-run level draws come from one dedicated stream so that run i is
  // reproducible regardless of --jobs.
  std::vector<int> levels(options.count);
  {
    std::mt19937_64 engine(options.seed);
    const int span = options.levels_max - options.levels_min + 1;
    for (int i = 0; i < options.count; ++i) {
      levels[i] = options.levels_min +
                  static_cast<int>(engine() % static_cast<std::uint64_t>(span));
    }
  }

  std::vector<RunOutcome> outcomes(options.count);
  auto execute = [&](int i) {
    RunOutcome& outcome = outcomes[i];
    outcome.seed = options.seed + static_cast<std::uint64_t>(i);
    outcome.levels = levels[i];
    GeneratorParams params = options.base;
    params.levels = levels[i];
    params.seed = outcome.seed;
    SolverConfig config = options.config;
    if (options.jobs > 1) config.threads = 1;
    try {
      Scenario scenario = generate(params);
      outcome.agents = scenario.num_agents();
      SolveReport report = run(scenario, config);
      outcome.iterations = report.iterations;
      outcome.converged = report.converged;
      outcome.objective = report.objective;
      outcome.no_action_objective = report.no_action_objective;
      outcome.wall_s = report.times.total_s;
      outcome.time_per_agent_s = report.times.total_s / std::max(1, outcome.agents);
      outcome.residuals.reserve(report.history.size());
      for (const auto& record : report.history) outcome.residuals.push_back(record.err);
    } catch (const Error& err) {
      outcome.error = err.what();
    }
  };

  const int jobs = std::clamp(options.jobs, 1, options.count);
  if (jobs == 1) {
    for (int i = 0; i < options.count; ++i) execute(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < options.count; i = next.fetch_add(1)) {
          execute(i);
        }
      });
    }
    for (std::thread& worker : pool) worker.join();
  }

  const fs::path dir(options.out_dir.empty() ? "." : options.out_dir);
  fs::create_directories(dir);

  {
    std::ofstream out = open_out(dir / "records.csv");
    out << "run,seed,levels,agents,iterations,converged,objective,"
           "no_action_objective,error\n";
    for (int i = 0; i < options.count; ++i) {
      const RunOutcome& outcome = outcomes[i];
      out << i << ',' << outcome.seed << ',' << outcome.levels << ','
          << outcome.agents << ',' << outcome.iterations << ','
          << (outcome.converged ? 1 : 0) << ',' << fmt(outcome.objective) << ','
          << fmt(outcome.no_action_objective) << ',' << outcome.error << '\n';
    }
  }

  // Mean residual-vs-iteration curves: averaged over the runs still active at
  // each iteration, truncated once fewer than max(5, 10%) of the runs remain.
  auto mean_curve = [&](const std::vector<const RunOutcome*>& group) {
    std::vector<std::pair<double, int>> curve;  // (mean, active)
    const int floor_active =
        std::max(5, static_cast<int>(group.size()) / 10);
    for (std::size_t k = 0;; ++k) {
      double sum = 0;
      int active = 0;
      for (const RunOutcome* outcome : group) {
        if (k < outcome->residuals.size()) {
          sum += outcome->residuals[k];
          ++active;
        }
      }
      if (active == 0 || (active < floor_active && k > 0)) break;
      curve.emplace_back(sum / active, active);
    }
    return curve;
  };

  std::vector<const RunOutcome*> all;
  std::map<int, std::vector<const RunOutcome*>> by_level;
  for (const RunOutcome& outcome : outcomes) {
    if (!outcome.error.empty()) continue;
    all.push_back(&outcome);
    by_level[outcome.levels].push_back(&outcome);
  }

  {
    std::ofstream out = open_out(dir / "batch_residuals.csv");
    out << "group,iter,mean_primal,active_runs\n";
    const auto overall = mean_curve(all);
    for (std::size_t k = 0; k < overall.size(); ++k) {
      out << "all," << (k + 1) << ',' << fmt(overall[k].first) << ','
          << overall[k].second << '\n';
    }
    for (const auto& [level, group] : by_level) {
      const auto curve = mean_curve(group);
      for (std::size_t k = 0; k < curve.size(); ++k) {
        out << 'L' << level << ',' << (k + 1) << ',' << fmt(curve[k].first) << ','
            << curve[k].second << '\n';
      }
    }
    if (options.svg) {
      std::vector<std::pair<std::string, std::vector<double>>> series;
      std::vector<double> values;
      for (const auto& [value, active] : overall) values.push_back(value);
      series.emplace_back("mean primal residual", std::move(values));
      write_svg_chart(dir / "batch_residuals.svg", "mean residual vs iteration",
                      series, true);
    }
  }

  // Per-level stats plus the what-if cost of nesting a single-level
  // decomposition per level (relative to the measured level-2 medians), which
  // grows roughly as iters^(L-2) * 2^((L+L^2)/2 - 3).
  Json summary;
  summary["count"] = options.count;
  summary["seed"] = options.seed;
  int failed = 0;
  for (const RunOutcome& outcome : outcomes) {
    if (!outcome.error.empty()) ++failed;
  }
  summary["failed_runs"] = failed;
  const auto level2 = by_level.find(2);
  double t2 = 0, iters2 = 0;
  if (level2 != by_level.end()) {
    std::vector<double> walls, iters;
    for (const RunOutcome* outcome : level2->second) {
      walls.push_back(outcome->wall_s);
      iters.push_back(outcome->iterations);
    }
    t2 = median(walls);
    iters2 = median(iters);
  }
  Json groups = Json::array();
  for (const auto& [level, group] : by_level) {
    std::vector<double> time_per_agent, iterations, agents;
    int converged = 0;
    for (const RunOutcome* outcome : group) {
      time_per_agent.push_back(outcome->time_per_agent_s);
      iterations.push_back(outcome->iterations);
      agents.push_back(outcome->agents);
      if (outcome->converged) ++converged;
    }
    Json entry;
    entry["levels"] = level;
    entry["runs"] = group.size();
    entry["converged"] = converged;
    entry["median_agents"] = median(agents);
    entry["median_iterations"] = median(iterations);
    entry["median_time_per_agent_s"] = median(time_per_agent);
    entry["time_per_agent_q25_s"] = quantile(time_per_agent, 0.25);
    entry["time_per_agent_q75_s"] = quantile(time_per_agent, 0.75);
    if (t2 > 0 && iters2 > 0) {
      entry["naive_nested_time_estimate_s"] =
          t2 * std::pow(iters2, level - 2) *
          std::pow(2.0, 0.5 * (level + level * level) - 3.0);
    }
    groups.push_back(std::move(entry));
  }
  summary["levels"] = std::move(groups);
  {
    std::ofstream out = open_out(dir / "summary.json");
    out << summary.dump(2) << '\n';
  }

  log << "batch: " << options.count << " runs, " << failed << " failed, outputs in "
      << dir.string() << '\n';
  return failed == options.count ? kExitThreshold : kExitOk;
}

int cmd_verify(const VerifyOptions& options, std::ostream& log) {
  Scenario scenario;
  try {
    scenario = load(options.scenario_path);
  } catch (const Error& err) {
    log << "verify: " << err.what() << '\n';
    return kExitUsage;
  }

  bool hier_infeasible = false;
  SolveReport report;
  try {
    report = run(scenario, options.config);
  } catch (const InfeasibleError& err) {
    log << "verify: hierarchical solve infeasible: " << err.what() << '\n';
    hier_infeasible = true;
  }

  MonolithicSolution reference;
  try {
    reference = solve_monolithic(scenario);
  } catch (const InfeasibleError& err) {
    log << "verify: monolithic: " << err.what() << '\n';
    if (!hier_infeasible && !report.converged) {
      log << "verify: hierarchical solve also failed to converge ("
          << report.iterations << " iterations)\n";
    }
    return kExitInfeasible;
  }
  if (hier_infeasible) return kExitInfeasible;

  const double gap = std::abs(report.objective - reference.objective) /
                     std::max(1e-12, std::abs(reference.objective));
  const double violation_h = max_constraint_violation(scenario, report.x);
  const double violation_m = max_constraint_violation(scenario, reference.x);
  log << "hierarchical objective: " << fmt(report.objective) << " (converged="
      << report.converged << ", iterations=" << report.iterations << ")\n";
  log << "monolithic objective:   " << fmt(reference.objective) << '\n';
  log << "relative gap:           " << fmt(gap) << '\n';
  log << "max violation (hier):   " << fmt(violation_h) << '\n';
  log << "max violation (mono):   " << fmt(violation_m) << '\n';

  if (!report.converged) return kExitNoConvergence;
  const bool ok = gap <= options.gap_threshold &&
                  violation_h <= options.violation_factor * options.config.tol &&
                  violation_m <= 1e-6;
  return ok ? kExitOk : kExitThreshold;
}

}  // namespace hieradmm::cli
