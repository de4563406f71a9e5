// loadshed: solve, learn and fast-path the fairness-aware load-shedding QP.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "loadshed/errors.hpp"

namespace {

using namespace loadshed;
using namespace loadshed::cli;

void add_case_overrides(CLI::App* sub, CaseOverrides& ov) {
  sub->add_option("--lambda", ov.lambda, "Load-shed weight");
  sub->add_option("--gamma", ov.gamma, "Proportionality cap");
  sub->add_option("--delta", ov.delta, "Uniform pairwise spread bound");
  sub->add_option("--epsilon", ov.epsilon, "Feature orthogonality threshold");
  sub->add_flag("--copper-plate", ov.copper_plate, "Drop the network: one aggregate balance");
  sub->add_option("--loads", ov.loads, "Full demand vector (MW), comma separated")->delimiter(',');
  sub->add_option("--load", ov.load_sets, "Set one demand, k=MW with k 1-based (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware DC load shedding: full QP, learned binding patterns and KKT fast path"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for shuffling and weight initialisation")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Parallel solves during sweeps")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--tol-feas", g.solver.tol_feas, "Primal/dual feasibility tolerance")->capture_default_str();
  app.add_option("--tol-comp", g.solver.tol_comp, "Complementarity tolerance")->capture_default_str();
  app.add_option("--max-iter", g.solver.max_iter, "Interior-point iteration limit")->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "Directory for all outputs")->capture_default_str();

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "Solve one instance with the interior-point solver");
  solve->add_option("case", solve_args.case_file, "Case file (.case or .json)")->required()->check(CLI::ExistingFile);
  solve->add_option("--out", solve_args.out, "Solution file name")->capture_default_str();
  add_case_overrides(solve, solve_args.overrides);

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Sweep loads on a grid and record binding patterns");
  sweep->add_option("case", sweep_args.case_file, "Case file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", sweep_args.axes, "load:start:step:count, load 1-based (repeatable)")->required();
  sweep->add_option("--max-points", sweep_args.max_points, "Cap on grid points")->capture_default_str();
  sweep->add_option("--out", sweep_args.out, "Dataset CSV name")->capture_default_str();
  add_case_overrides(sweep, sweep_args.overrides);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the binding-pattern classifier");
  train->add_option("dataset", train_args.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--hidden", train_args.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  train->add_option("--lr", train_args.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--epochs", train_args.epochs, "Epochs")->capture_default_str();
  train->add_option("--batch-size", train_args.batch_size, "Mini-batch size, 0 = full batch")->capture_default_str();
  train->add_option("--loss", train_args.loss, "bce or focal")->capture_default_str();
  train->add_option("--validation-fraction", train_args.validation_fraction, "Held-out share")->capture_default_str();
  train->add_option("--threshold", train_args.threshold, "Decision threshold")->capture_default_str();
  train->add_option("--out", train_args.out, "Model file name")->capture_default_str();

  FastSolveArgs fast_args;
  auto* fast = app.add_subcommand("fastsolve", "Predict the pattern, solve the KKT system, verify or fall back");
  fast->add_option("case", fast_args.case_file, "Case file")->required()->check(CLI::ExistingFile);
  fast->add_option("model", fast_args.model, "Model JSON")->required()->check(CLI::ExistingFile);
  fast->add_option("--points", fast_args.points, "CSV with pi_1..pi_N columns, one point per row")
      ->check(CLI::ExistingFile);
  fast->add_flag("--no-fallback", fast_args.no_fallback, "Report failures instead of running the full solver");
  fast->add_flag("--compare", fast_args.compare, "Also run the full solver and report the objective gap");
  fast->add_option("--out", fast_args.out, "Summary CSV name")->capture_default_str();
  add_case_overrides(fast, fast_args.overrides);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time the full solve against the KKT fast path");
  bench->add_option("case", bench_args.case_file, "Case file")->required()->check(CLI::ExistingFile);
  bench->add_option("model", bench_args.model, "Model JSON; without it the full-solve pattern is used")
      ->check(CLI::ExistingFile);
  bench->add_option("--trials", bench_args.trials, "Timed runs per method")->capture_default_str();
  bench->add_option("--out", bench_args.out, "Timing CSV name")->capture_default_str();
  add_case_overrides(bench, bench_args.overrides);

  FairnessSweepArgs fair_args;
  auto* fair = app.add_subcommand("fairness-sweep", "Per-load shed fractions for a list of delta values");
  fair->add_option("case", fair_args.case_file, "Case file")->required()->check(CLI::ExistingFile);
  fair->add_option("--deltas", fair_args.deltas, "Delta values, comma separated")->required()->delimiter(',');
  fair->add_option("--out", fair_args.out, "CSV name")->capture_default_str();
  add_case_overrides(fair, fair_args.overrides);

  RiskArgs risk_args;
  auto* risk = app.add_subcommand("risk", "VaR/CVaR or worst-case loads, optionally solved");
  risk->add_option("distributions", risk_args.distributions, "Distribution CSV")->check(CLI::ExistingFile);
  risk->add_option("--bounds", risk_args.bounds, "node,d_min,d_max CSV for robust loads")->check(CLI::ExistingFile);
  risk->add_option("--alpha", risk_args.alpha, "Risk level for every node")->capture_default_str();
  risk->add_option("--alpha-file", risk_args.alpha_file, "node,alpha CSV")->check(CLI::ExistingFile);
  risk->add_option("--case", risk_args.case_file, "Solve this case with the resulting loads")
      ->check(CLI::ExistingFile);
  risk->add_option("--model", risk_args.model, "Use the fast path for that solve")->check(CLI::ExistingFile);
  risk->add_option("--out", risk_args.out, "CSV name")->capture_default_str();
  add_case_overrides(risk, risk_args.overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kIoError;
  }

  RunArtifact run;
  run.seed = g.seed;
  for (int i = 0; i < argc; ++i) run.command += (i ? " " : "") + std::string(argv[i]);

  int code = kFailure;
  try {
    std::filesystem::create_directories(g.output_dir);
    if (*solve) {
      run.subcommand = "solve";
      code = cmd_solve(g, solve_args, run);
    } else if (*sweep) {
      run.subcommand = "sweep";
      code = cmd_sweep(g, sweep_args, run);
    } else if (*train) {
      run.subcommand = "train";
      code = cmd_train(g, train_args, run);
    } else if (*fast) {
      run.subcommand = "fastsolve";
      code = cmd_fastsolve(g, fast_args, run);
    } else if (*bench) {
      run.subcommand = "bench";
      code = cmd_bench(g, bench_args, run);
    } else if (*fair) {
      run.subcommand = "fairness-sweep";
      code = cmd_fairness_sweep(g, fair_args, run);
    } else if (*risk) {
      run.subcommand = "risk";
      code = cmd_risk(g, risk_args, run);
    }
  } catch (const SingularSystemError& e) {
    std::cerr << "error: " << e.what() << " (condition estimate " << e.condition_estimate() << ")\n";
    code = kSingular;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kFailure;
  }

  run.exit_code = code;
  try {
    run.write(g.output_dir);
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write run record: " << e.what() << '\n';
  }
  return code;
}
