#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "loadshed/grid_model.hpp"
#include "loadshed/qp_solver.hpp"
#include "run_artifact.hpp"

namespace loadshed::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInfeasible = 2,
  kSingular = 3,
  kIoError = 4,
  kMaxIterations = 5,
};

int exit_code_for(SolveStatus status);

struct GlobalOptions {
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  SolverOptions solver;
  std::filesystem::path output_dir = ".";
};

/// Edits applied to a case after it is read.
struct CaseOverrides {
  std::optional<double> lambda, gamma, delta, epsilon;
  bool copper_plate = false;
  std::vector<double> loads;           ///< full demand vector
  std::vector<std::string> load_sets;  ///< "k=value", k 1-based
};

GridCase load_with_overrides(const std::filesystem::path& path, const CaseOverrides& ov);

struct SolveArgs {
  std::filesystem::path case_file;
  CaseOverrides overrides;
  std::string out = "solution.json";
};

struct SweepArgs {
  std::filesystem::path case_file;
  CaseOverrides overrides;
  std::vector<std::string> axes;  ///< "load:start:step:count", load 1-based
  std::size_t max_points = 100000;
  std::string out = "dataset.csv";
};

struct TrainArgs {
  std::filesystem::path dataset;
  std::vector<int> hidden{64, 64, 64};
  double learning_rate = 0.01;
  int epochs = 500;
  std::size_t batch_size = 0;
  std::string loss = "bce";
  double validation_fraction = 0.2;
  double threshold = 0.5;
  std::string out = "model.json";
};

struct FastSolveArgs {
  std::filesystem::path case_file;
  std::filesystem::path model;
  CaseOverrides overrides;
  std::filesystem::path points;  ///< CSV with pi_1..pi_N columns; empty = case loads
  bool no_fallback = false;
  bool compare = false;
  std::string out = "fastsolve.csv";
};

struct BenchArgs {
  std::filesystem::path case_file;
  std::filesystem::path model;  ///< optional; pattern from the full solve otherwise
  CaseOverrides overrides;
  int trials = 100;
  std::string out = "bench.csv";
};

struct FairnessSweepArgs {
  std::filesystem::path case_file;
  CaseOverrides overrides;
  std::vector<double> deltas;
  std::string out = "fairness_sweep.csv";
};

struct RiskArgs {
  std::filesystem::path distributions;  ///< node,mean,std or node,s1,...
  std::filesystem::path bounds;         ///< node,d_min,d_max (robust mode)
  double alpha = 0.95;
  std::filesystem::path alpha_file;     ///< node,alpha
  std::filesystem::path case_file;      ///< solve with the resulting loads
  std::filesystem::path model;          ///< use the fast path for that solve
  CaseOverrides overrides;
  std::string out = "risk.csv";
};

int cmd_solve(const GlobalOptions& g, const SolveArgs& a, RunArtifact& run);
int cmd_sweep(const GlobalOptions& g, const SweepArgs& a, RunArtifact& run);
int cmd_train(const GlobalOptions& g, const TrainArgs& a, RunArtifact& run);
int cmd_fastsolve(const GlobalOptions& g, const FastSolveArgs& a, RunArtifact& run);
int cmd_bench(const GlobalOptions& g, const BenchArgs& a, RunArtifact& run);
int cmd_fairness_sweep(const GlobalOptions& g, const FairnessSweepArgs& a, RunArtifact& run);
int cmd_risk(const GlobalOptions& g, const RiskArgs& a, RunArtifact& run);

}  // namespace loadshed::cli
