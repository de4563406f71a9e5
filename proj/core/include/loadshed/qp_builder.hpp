#pragma once

// Assembly of the fairness-aware load-shedding problem into the generic QP
//
//   min 1/2 x'Px + q'x + r   s.t.   A x <= b,   G x = h
//
// with x = [theta; g; f; s] (theta and f omitted for copper-plate cases).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <json.hpp>

#include "loadshed/grid_model.hpp"

namespace loadshed {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Demand per load (MW), in load order.
struct LoadVector {
  Eigen::VectorXd d;

  LoadVector() = default;
  explicit LoadVector(Eigen::VectorXd values);
  static LoadVector from(std::span<const double> values);
  static LoadVector of_case(const GridCase& grid);

  Eigen::Index size() const noexcept { return d.size(); }
};

/// Contiguous index range of one variable block.
struct VarBlock {
  std::string name;  ///< "theta", "g", "f" or "s"
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Where a load's demand enters the problem, so a new demand vector can be
/// injected without rebuilding (q on the s-block, G and h on the balance row).
struct LoadSlot {
  Eigen::Index s_var = 0;
  Eigen::Index balance_row = 0;
};

struct QuadraticProgram {
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd q;
  double r = 0.0;
  SparseRowMatrix A;
  Eigen::VectorXd b;
  SparseRowMatrix G;
  Eigen::VectorXd h;

  std::vector<VarBlock> var_layout;
  /// Inequality labels first (m of them), then equality labels (p).
  std::vector<std::string> row_labels;

  std::vector<LoadSlot> load_slots;
  double lambda = 0.0;
  Eigen::VectorXd loads;  ///< demand vector currently embedded in q, G and h

  Eigen::Index num_vars() const noexcept { return q.size(); }
  Eigen::Index num_ineq() const noexcept { return b.size(); }
  Eigen::Index num_eq() const noexcept { return h.size(); }

  const std::string& ineq_label(Eigen::Index i) const { return row_labels[static_cast<std::size_t>(i)]; }
  const std::string& eq_label(Eigen::Index i) const {
    return row_labels[static_cast<std::size_t>(num_ineq() + i)];
  }
  const VarBlock* block(const std::string& name) const;

  double objective(const Eigen::VectorXd& x) const;

  /// Linear term and equality data with `d` injected in place of `loads`.
  Eigen::VectorXd q_for(const LoadVector& d) const;
  Eigen::VectorXd h_for(const LoadVector& d) const;
  /// Same program with a different demand vector.
  QuadraticProgram with_loads(const LoadVector& d) const;

  /// Row family of an inequality label, e.g. "fair_pair" for "fair_pair[1,3]".
  static std::string family(const std::string& label);
};

/// Build the QP for `grid` with demand `d`. Throws DimensionError or InvariantError.
QuadraticProgram build(const GridCase& grid, const LoadVector& d);
inline QuadraticProgram build(const GridCase& grid) { return build(grid, LoadVector::of_case(grid)); }

/// Load pairs (1-based, i < j) that receive a pairwise spread constraint.
std::vector<LoadPair> pairwise_rows(const GridCase& grid);

/// Pairwise bound for a pair returned by pairwise_rows.
double pair_bound(const GridCase& grid, const LoadPair& pair);

/// Evaluates generation cost plus weighted shed directly from the grid data.
double direct_objective(const GridCase& grid, const LoadVector& d, const Eigen::VectorXd& x,
                        const QuadraticProgram& qp);

/// JSON dump of (P, q, r, A, b, G, h) with labels; sparse matrices as
/// {"rows","cols","entries":[[i,j,v],...]}.
nlohmann::json qp_to_json(const QuadraticProgram& qp);

}  // namespace loadshed
