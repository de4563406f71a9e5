#pragma once

// Reduced KKT system for a known binding pattern:
//
//   [ P    A_t'  G' ] [x]   [-q ]
//   [ A_t  0     0  ] [v] = [b_t]
//   [ G    0     0  ] [w]   [ h ]
//
// Solving it replaces the full QP solve when the pattern is known.

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "loadshed/qp_builder.hpp"
#include "loadshed/qp_solver.hpp"

namespace loadshed {

struct KktLayout {
  Eigen::Index n = 0;        ///< primal variables, at offset 0
  Eigen::Index n_bind = 0;   ///< binding rows, duals at offset n
  Eigen::Index p = 0;        ///< equalities, duals at offset n + n_bind

  Eigen::Index dim() const noexcept { return n + n_bind + p; }
};

struct KktSystem {
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> M;
  Eigen::VectorXd rhs;
  KktLayout layout;
  std::vector<Eigen::Index> binding_rows;  ///< inequality row of each v entry
};

struct NonsingularCheck {
  bool nonsingular = false;
  double condition_estimate = 0.0;
  double min_pivot = 0.0;  ///< smallest |U_ii| of the LU factorization
};

struct KktSolution {
  Eigen::VectorXd x, v, w;
  double condition_estimate = 0.0;
  double residual = 0.0;  ///< |M z - rhs|_inf
};

struct FastSolveOptions {
  /// Row i is satisfied when A_i x <= b_i + feas_rel * (1 + |b_i|).
  double feas_rel = 1e-6;
  /// v is flagged negative when min(v) < -dual_rel * (1 + |v|_inf).
  double dual_rel = 1e-9;
};

struct FastSolveReport {
  Eigen::VectorXd x, v, w;
  bool singular = false;
  bool feasible = false;
  bool negative_dual = false;
  double max_violation = 0.0;
  std::string worst_row;  ///< label of the most violated inequality
  double condition_estimate = 0.0;
  double residual = 0.0;  ///< |M z - rhs|_inf of the reduced system
  double objective = 0.0;

  /// The pattern cannot be trusted for this demand; re-solve the full QP.
  bool needs_fallback() const noexcept { return singular || !feasible || negative_dual; }
};

/// Build the reduced system with demand `d` injected into q, G and h.
KktSystem assemble(const QuadraticProgram& qp, const BindingPattern& tau, const LoadVector& d);

/// Sparse LU with pivot test |U_ii| > 1e-10 |M|_inf.
NonsingularCheck check_nonsingular(const KktSystem& kkt);

/// Throws SingularSystemError (with the condition estimate) on a singular system.
KktSolution solve_kkt(const KktSystem& kkt);

/// assemble, factor, solve and verify every inequality row. Never throws on
/// singularity; the report carries it instead.
FastSolveReport fast_solve(const QuadraticProgram& qp, const BindingPattern& tau, const LoadVector& d,
                           const FastSolveOptions& opts = {});

/// Explicit rank test of ker(P) and ker([A_t; G]) intersecting only at 0, and
/// [A_t; G] having full row rank. Dense; meant for small instances.
bool reduced_system_well_posed(const QuadraticProgram& qp, const BindingPattern& tau);

}  // namespace loadshed
