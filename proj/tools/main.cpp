#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hieradmm/cli.hpp"
#include "hieradmm/errors.hpp"

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("HIERADMM_OUT_DIR");
  return env ? env : ".";
}

void add_solver_flags(CLI::App* cmd, hieradmm::SolverConfig& config,
                      std::string& mode) {
  cmd->add_option("--rho", config.rho, "augmented Lagrangian parameter");
  cmd->add_option("--tol", config.tol, "stopping tolerance on the branch residual");
  cmd->add_option("--max-iter", config.max_iter, "iteration cap");
  cmd->add_option("--mode", mode, "parallel|sequential")
      ->check(CLI::IsMember({"parallel", "sequential"}));
  cmd->add_option("--threads", config.threads, "agent-phase worker threads (0 = auto)");
}

void add_generator_flags(CLI::App* cmd, hieradmm::GeneratorParams& params) {
  cmd->add_option("--horizon", params.horizon, "steps in the planning horizon");
  cmd->add_option("--dt", params.dt_hours, "step length in hours");
  cmd->add_option("--min-leaves", params.min_leaves_per_branch,
                  "minimum leaves per branching node");
  cmd->add_option("--max-leaves", params.max_leaves_per_branch,
                  "maximum leaves per branching node (<= 10)");
  cmd->add_option("--voltage-prob", params.voltage_probability,
                  "probability of a voltage constraint per branching node");
  cmd->add_option("--cap-min", params.cap_min_frac,
                  "power cap lower fraction of the uncontrolled peak");
  cmd->add_option("--cap-max", params.cap_max_frac,
                  "power cap upper fraction of the uncontrolled peak");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical coordination of battery prosumers"};
  app.require_subcommand(1);

  hieradmm::cli::GenerateOptions generate;
  CLI::App* cmd_generate = app.add_subcommand("generate", "write a random scenario");
  cmd_generate->add_option("--seed", generate.params.seed, "generator seed");
  cmd_generate->add_option("--levels", generate.params.levels, "tree levels in [2, 5]");
  cmd_generate->add_option("--out", generate.out_path, "output scenario file")
      ->required();
  add_generator_flags(cmd_generate, generate.params);

  hieradmm::cli::RunOptions run;
  run.out_dir = default_out_dir();
  std::string run_mode = "parallel";
  CLI::App* cmd_run = app.add_subcommand("run", "solve one scenario");
  cmd_run->add_option("--scenario", run.scenario_path, "scenario file")->required();
  cmd_run->add_option("--out", run.out_dir, "output directory");
  cmd_run->add_flag("--svg", run.svg, "also write svg charts");
  add_solver_flags(cmd_run, run.config, run_mode);

  hieradmm::cli::BatchOptions batch;
  batch.out_dir = default_out_dir();
  std::string batch_mode = "parallel";
  CLI::App* cmd_batch = app.add_subcommand("batch", "run a seeded scenario study");
  cmd_batch->add_option("--count", batch.count, "number of scenarios");
  cmd_batch->add_option("--levels-min", batch.levels_min, "minimum tree levels");
  cmd_batch->add_option("--levels-max", batch.levels_max, "maximum tree levels");
  cmd_batch->add_option("--seed", batch.seed, "base seed; run i uses seed + i");
  cmd_batch->add_option("--out", batch.out_dir, "output directory");
  cmd_batch->add_option("--jobs", batch.jobs, "concurrent runs");
  cmd_batch->add_flag("--svg", batch.svg, "also write svg charts");
  add_generator_flags(cmd_batch, batch.base);
  add_solver_flags(cmd_batch, batch.config, batch_mode);

  hieradmm::cli::VerifyOptions verify;
  std::string verify_mode = "parallel";
  CLI::App* cmd_verify =
      app.add_subcommand("verify", "compare against the monolithic solve");
  cmd_verify->add_option("--scenario", verify.scenario_path, "scenario file")
      ->required();
  cmd_verify->add_option("--gap-threshold", verify.gap_threshold,
                         "relative objective gap limit");
  add_solver_flags(cmd_verify, verify.config, verify_mode);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hieradmm::cli::kExitUsage;
  }

  auto to_mode = [](const std::string& text) {
    return text == "sequential" ? hieradmm::SolveMode::kSequential
                                : hieradmm::SolveMode::kParallel;
  };

  try {
    if (cmd_generate->parsed()) {
      return hieradmm::cli::cmd_generate(generate, std::cout);
    }
    if (cmd_run->parsed()) {
      run.config.mode = to_mode(run_mode);
      return hieradmm::cli::cmd_run(run, std::cout);
    }
    if (cmd_batch->parsed()) {
      batch.config.mode = to_mode(batch_mode);
      return hieradmm::cli::cmd_batch(batch, std::cout);
    }
    if (cmd_verify->parsed()) {
      verify.config.mode = to_mode(verify_mode);
      return hieradmm::cli::cmd_verify(verify, std::cout);
    }
  } catch (const hieradmm::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return hieradmm::cli::kExitUsage;
  }
  return hieradmm::cli::kExitUsage;
}
