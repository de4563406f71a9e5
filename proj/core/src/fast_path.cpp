#include "loadshed/fast_path.hpp"

namespace loadshed {

FastPathResult fast_path(const QuadraticProgram& qp, const BindingModel& model, const LoadVector& d,
                         const SolverOptions& solver, const FastSolveOptions& verify) {
  FastPathResult out;
  Prediction pred = predict(model, d);
  out.extrapolated = pred.extrapolated;
  out.pattern = std::move(pred.pattern);
  out.report = fast_solve(qp, out.pattern, d, verify);
  if (!out.report.needs_fallback()) {
    out.x = out.report.x;
    out.objective = out.report.objective;
    return out;
  }
  out.fallback = true;
  const PrimalDualSolution full = solve(qp.with_loads(d), solver);
  out.x = full.x;
  out.objective = full.objective;
  out.status = full.status;
  return out;
}

}  // namespace loadshed
