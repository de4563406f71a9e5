#pragma once

// Primal-dual interior-point solver for the generic QP, followed by a
// crossover that moves the solution to a vertex of the optimal face so the
// active set determines it uniquely.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loadshed/qp_builder.hpp"

namespace loadshed {

struct SolverOptions {
  double tol_feas = 1e-8;
  double tol_comp = 1e-8;
  int max_iter = 100;
  /// Move the interior solution to a vertex of the optimal face.
  bool crossover = true;
  /// Relative activity thresholds shared by crossover and binding_status.
  double tol_mu_rel = 1e-6;
  double tol_slack_rel = 1e-6;
};

enum class SolveStatus { optimal, infeasible, max_iterations };

std::string to_string(SolveStatus s);

struct Residuals {
  double primal = 0.0;  ///< max(|max(Ax - b, 0)|_inf, |Gx - h|_inf)
  double dual = 0.0;    ///< |Px + q + A'mu + G'w|_inf
  double complementarity = 0.0;  ///< mu'(b - Ax)
};

struct PrimalDualSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd mu;  ///< inequality duals, >= 0
  Eigen::VectorXd w;   ///< equality duals
  double objective = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
  int iterations = 0;
  Residuals residuals;
  /// Rows of the optimal basis whose dual is at or below the dual threshold
  /// (weakly active rows crossover needed to pin x, or small multipliers).
  std::vector<Eigen::Index> degenerate_basis;
  /// For infeasible problems: labels of the rows that carry the violation.
  std::vector<std::string> infeasible_rows;
};

PrimalDualSolution solve(const QuadraticProgram& qp, const SolverOptions& opts = {});

/// KKT residuals of (x, mu, w) for qp.
Residuals kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& w);

enum class BindingSource { dual_threshold, slack_threshold, predicted };

struct BindingPattern {
  std::vector<std::uint8_t> tau;  ///< one 0/1 entry per inequality row
  BindingSource source = BindingSource::dual_threshold;

  std::size_t size() const noexcept { return tau.size(); }
  std::size_t count() const noexcept;
  bool operator[](std::size_t i) const { return tau[i] != 0; }
  bool operator==(const BindingPattern& o) const { return tau == o.tau; }
};

struct BindingStatus {
  BindingPattern pattern;  ///< dual-based, plus degenerate basis rows
  BindingPattern slack;    ///< slack-based cross-check
  /// Rows where the pure dual test (mu > tol) and the slack test disagree.
  std::vector<Eigen::Index> mismatches;
  /// Subset of mismatches that are weakly active (slack ~ 0 and mu ~ 0).
  std::vector<Eigen::Index> weakly_active;
};

struct BindingTolerances {
  double mu_rel = 1e-6;     ///< tol_mu = mu_rel * (1 + |mu|_inf)
  double slack_rel = 1e-6;  ///< tol_slack_i = slack_rel * (1 + |b_i|)
};

/// Throws Error unless sol.status is optimal.
BindingStatus binding_status(const PrimalDualSolution& sol, const QuadraticProgram& qp,
                             const BindingTolerances& tol = {});

namespace detail {
/// Vertex crossover on a converged interior solution; exposed for tests.
/// Returns false and leaves `sol` unchanged when no basis can be certified.
bool crossover(const QuadraticProgram& qp, PrimalDualSolution& sol, const SolverOptions& opts);
}  // namespace detail

}  // namespace loadshed
