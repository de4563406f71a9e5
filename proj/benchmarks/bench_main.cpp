// Microbenchmarks for the full interior-point solve against the reduced KKT
// path on the bundled cases.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <string>

#include "loadshed/kkt_reduction.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/risk.hpp"

using namespace loadshed;

namespace {

GridCase bundled(const std::string& name) {
  return load_case(std::filesystem::path(LOADSHED_CASES_DIR) / name);
}

const char* case_name(const benchmark::State& state) { return state.range(0) == 0 ? "3bus.case" : "syn73.case"; }

void BM_Build(benchmark::State& state) {
  const GridCase g = bundled(case_name(state));
  for (auto _ : state) benchmark::DoNotOptimize(build(g));
}
BENCHMARK(BM_Build)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_FullSolve(benchmark::State& state) {
  const QuadraticProgram qp = build(bundled(case_name(state)));
  for (auto _ : state) benchmark::DoNotOptimize(solve(qp));
}
BENCHMARK(BM_FullSolve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FastSolve(benchmark::State& state) {
  const QuadraticProgram qp = build(bundled(case_name(state)));
  const BindingPattern tau = binding_status(solve(qp), qp).pattern;
  const LoadVector d(qp.loads);
  for (auto _ : state) benchmark::DoNotOptimize(fast_solve(qp, tau, d));
}
BENCHMARK(BM_FastSolve)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_AssembleOnly(benchmark::State& state) {
  const QuadraticProgram qp = build(bundled(case_name(state)));
  const BindingPattern tau = binding_status(solve(qp), qp).pattern;
  const LoadVector d(qp.loads);
  for (auto _ : state) benchmark::DoNotOptimize(assemble(qp, tau, d));
}
BENCHMARK(BM_AssembleOnly)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_MlpForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n_in = static_cast<int>(state.range(0));
  const Mlp net = Mlp::init({n_in, 64, 64, 64, 180}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(n_in, 1);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlpForward)->Arg(40)->Unit(benchmark::kMicrosecond);

void BM_EmpiricalCvar(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> s(static_cast<std::size_t>(state.range(0)));
  for (auto& v : s) v = nd(rng);
  const LoadDistribution d(EmpiricalLoad{s});
  for (auto _ : state) benchmark::DoNotOptimize(cvar_alpha(d, 0.95));
}
BENCHMARK(BM_EmpiricalCvar)->Arg(100000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
