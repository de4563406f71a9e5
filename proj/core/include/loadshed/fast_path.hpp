#pragma once

// Online answer for a new demand vector: predict the binding pattern, solve
// the reduced KKT system, verify it against every inequality and fall back to
// the full solver when the pattern does not hold.

#include "loadshed/binding_learner.hpp"
#include "loadshed/kkt_reduction.hpp"

namespace loadshed {

struct FastPathResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  SolveStatus status = SolveStatus::optimal;
  bool fallback = false;
  bool extrapolated = false;
  FastSolveReport report;  ///< outcome of the KKT attempt
  BindingPattern pattern;  ///< predicted pattern
};

/// `qp` supplies the structure; its embedded loads are replaced by `d`.
FastPathResult fast_path(const QuadraticProgram& qp, const BindingModel& model, const LoadVector& d,
                         const SolverOptions& solver = {}, const FastSolveOptions& verify = {});

}  // namespace loadshed
