// Vertex crossover for a converged interior-point solution.
//
// Interior-point iterates converge to the relative interior of the optimal
// face. When that face is not a single point (e.g. shed power that can be
// redistributed at equal cost) the active set does not determine x and the
// reduced KKT matrix is singular. Crossover runs in two stages:
//
//  1. dual: reduce the rows with positive dual to a linearly independent set
//     that still carries a nonnegative dual, taking rows in row order (a
//     fixed order keeps the chosen basis stable across nearby instances);
//  2. primal: move x inside the optimal face, activating inequality rows in
//     row order, until ker(P) and the active rows intersect trivially.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/QR>

#include "loadshed/kkt_reduction.hpp"
#include "loadshed/qp_solver.hpp"

namespace loadshed::detail {

namespace {

struct SparseRow {
  std::vector<std::pair<Eigen::Index, double>> entries;
};

SparseRow row_of(const SparseRowMatrix& m, Eigen::Index i) {
  SparseRow r;
  for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) {
    if (it.value() != 0.0) r.entries.emplace_back(it.col(), it.value());
  }
  return r;
}

// Rows that touch a single variable fix that variable; the remaining rows are
// projected onto the other ("free") columns.
struct ColumnSplit {
  std::vector<Eigen::Index> pivot_row_of_col;  // -1 when the column is free
  std::vector<Eigen::Index> free_cols;
  std::vector<Eigen::Index> col_to_free;  // -1 for pivot columns
  std::vector<bool> is_pivot_row;
};

ColumnSplit split_columns(const std::vector<SparseRow>& rows, Eigen::Index n) {
  ColumnSplit cs;
  cs.pivot_row_of_col.assign(static_cast<std::size_t>(n), -1);
  cs.is_pivot_row.assign(rows.size(), false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].entries.size() != 1) continue;
    const auto col = static_cast<std::size_t>(rows[r].entries.front().first);
    if (cs.pivot_row_of_col[col] < 0) {
      cs.pivot_row_of_col[col] = static_cast<Eigen::Index>(r);
      cs.is_pivot_row[r] = true;
    }
  }
  cs.col_to_free.assign(static_cast<std::size_t>(n), -1);
  for (Eigen::Index c = 0; c < n; ++c) {
    if (cs.pivot_row_of_col[static_cast<std::size_t>(c)] < 0) {
      cs.col_to_free[static_cast<std::size_t>(c)] = static_cast<Eigen::Index>(cs.free_cols.size());
      cs.free_cols.push_back(c);
    }
  }
  return cs;
}

// Orthonormal basis (n x k) of the common null space of `rows`.
Eigen::MatrixXd null_space(const std::vector<SparseRow>& rows, Eigen::Index n) {
  const ColumnSplit cs = split_columns(rows, n);
  const auto nf = static_cast<Eigen::Index>(cs.free_cols.size());
  std::vector<std::size_t> reduced;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (cs.is_pivot_row[r]) continue;
    bool touches_free = false;
    for (const auto& [c, v] : rows[r].entries) touches_free |= cs.col_to_free[static_cast<std::size_t>(c)] >= 0;
    if (touches_free) reduced.push_back(r);
  }
  Eigen::MatrixXd basis_free;
  if (nf == 0) return Eigen::MatrixXd::Zero(n, 0);
  if (reduced.empty()) {
    basis_free = Eigen::MatrixXd::Identity(nf, nf);
  } else {
    // Columns of rt are the reduced rows; its column space is their span.
    Eigen::MatrixXd rt = Eigen::MatrixXd::Zero(nf, static_cast<Eigen::Index>(reduced.size()));
    for (std::size_t k = 0; k < reduced.size(); ++k) {
      for (const auto& [c, v] : rows[reduced[k]].entries) {
        const auto f = cs.col_to_free[static_cast<std::size_t>(c)];
        if (f >= 0) rt(f, static_cast<Eigen::Index>(k)) = v;
      }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(rt);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    if (rank == nf) return Eigen::MatrixXd::Zero(n, 0);
    Eigen::MatrixXd q = qr.householderQ();
    basis_free = q.rightCols(nf - rank);
  }
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(n, basis_free.cols());
  for (Eigen::Index f = 0; f < nf; ++f) basis.row(cs.free_cols[static_cast<std::size_t>(f)]) = basis_free.row(f);
  return basis;
}

// Restrict an orthonormal basis to the complement of direction u = N' a.
void restrict_basis(Eigen::MatrixXd& basis, const Eigen::VectorXd& u) {
  const Eigen::Index k = basis.cols();
  Eigen::VectorXd v = u;
  const double nu = u.norm();
  v[0] += (u[0] >= 0.0 ? nu : -nu);
  const double vv = v.squaredNorm();
  if (vv == 0.0) return;
  Eigen::VectorXd nv = basis * v;
  basis.noalias() -= (2.0 / vv) * nv * v.transpose();
  basis = basis.rightCols(k - 1).eval();
}

Eigen::VectorXd project(const Eigen::MatrixXd& basis, const SparseRow& row) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(basis.cols());
  for (const auto& [c, v] : row.entries) u += v * basis.row(c).transpose();
  return u;
}

double row_norm(const SparseRow& row) {
  double s = 0.0;
  for (const auto& e : row.entries) s += e.second * e.second;
  return std::sqrt(s);
}

enum class Polish { accepted, singular, rejected };

// Solves the reduced KKT system for the rows in `basis` and accepts the result
// when it is primal feasible and its duals are nonnegative.
Polish polish(const QuadraticProgram& qp, const std::vector<Eigen::Index>& basis, PrimalDualSolution& sol,
              const SolverOptions& opts, double tol_mu) {
  BindingPattern pattern;
  pattern.tau.assign(static_cast<std::size_t>(qp.num_ineq()), 0);
  for (auto i : basis) pattern.tau[static_cast<std::size_t>(i)] = 1;
  const LoadVector d(qp.loads);
  const KktSystem kkt = assemble(qp, pattern, d);
  if (!check_nonsingular(kkt).nonsingular) return Polish::singular;
  const KktSolution z = solve_kkt(kkt);
  if (z.v.size() > 0 && z.v.minCoeff() < -tol_mu) return Polish::rejected;
  const Eigen::VectorXd slack = qp.b - qp.A * z.x;
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    if (slack[i] < -opts.tol_feas * (1.0 + std::abs(qp.b[i]))) return Polish::rejected;
  }
  sol.x = z.x;
  sol.w = z.w;
  sol.mu.setZero();
  for (std::size_t k = 0; k < basis.size(); ++k) sol.mu[basis[k]] = std::max(0.0, z.v[static_cast<Eigen::Index>(k)]);
  return Polish::accepted;
}

// Incremental QR of a growing set of rows: rows = R' Q' with Q orthonormal.
class RowQr {
 public:
  explicit RowQr(Eigen::Index n) : q_(n, 0), r_(0, 0) {}

  Eigen::Index rank() const noexcept { return q_.cols(); }

  /// Appends `v` if it is independent of the rows so far. Otherwise returns
  /// false and stores in `coef` the c with v = sum_k c_k row_k.
  bool add(const Eigen::VectorXd& v, Eigen::VectorXd& coef) {
    const Eigen::Index k = rank();
    Eigen::VectorXd h = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd res = v;
    for (int pass = 0; pass < 2 && k > 0; ++pass) {
      const Eigen::VectorXd dh = q_.transpose() * res;
      res.noalias() -= q_ * dh;
      h += dh;
    }
    const double rho = res.norm();
    if (rho <= 1e-9 * v.norm()) {
      coef = r_.triangularView<Eigen::Upper>().solve(h);
      return false;
    }
    q_.conservativeResize(Eigen::NoChange, k + 1);
    q_.col(k) = res / rho;
    r_.conservativeResize(k + 1, k + 1);
    r_.col(k).head(k) = h;
    r_.row(k).setZero();
    r_(k, k) = rho;
    return true;
  }

 private:
  Eigen::MatrixXd q_;
  Eigen::MatrixXd r_;
};

Eigen::VectorXd dense_row(const SparseRowMatrix& m, Eigen::Index i) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m.cols());
  for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) v[it.col()] = it.value();
  return v;
}

// Rows of `rows`, in order, that are independent of the equalities and of the
// rows kept before them.
std::vector<Eigen::Index> independent_subset(const QuadraticProgram& qp, const std::vector<Eigen::Index>& rows) {
  RowQr qr(qp.num_vars());
  Eigen::VectorXd coef;
  for (Eigen::Index e = 0; e < qp.num_eq(); ++e) qr.add(dense_row(qp.G, e), coef);
  std::vector<Eigen::Index> kept;
  for (auto i : rows) {
    if (qr.add(dense_row(qp.A, i), coef)) kept.push_back(i);
  }
  return kept;
}

// Reduces `rows` to a linearly independent set (together with the equality
// rows) that still represents the objective gradient with nonnegative duals.
// Rows are taken in row order. A dependent row hands its dual to the
// rows it depends on; when that would drive one of them negative, the ratio
// test swaps that row out instead.
std::vector<Eigen::Index> dual_basis(const QuadraticProgram& qp, const std::vector<Eigen::Index>& rows,
                                     PrimalDualSolution& sol) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();

  std::vector<Eigen::Index> eq_kept;
  std::vector<Eigen::Index> kept;  // inequality rows, in insertion order
  RowQr qr(n);
  Eigen::VectorXd coef;
  auto rebuild = [&]() {
    qr = RowQr(n);
    for (auto e : eq_kept) qr.add(dense_row(qp.G, e), coef);
    for (auto i : kept) qr.add(dense_row(qp.A, i), coef);
  };
  for (Eigen::Index e = 0; e < p; ++e) {
    if (qr.add(dense_row(qp.G, e), coef)) eq_kept.push_back(e);
  }
  const auto n_eq = static_cast<Eigen::Index>(eq_kept.size());

  for (auto i : rows) {
    const Eigen::VectorXd a = dense_row(qp.A, i);
    if (qr.add(a, coef)) {
      kept.push_back(i);
      continue;
    }
    // a_i = sum_k coef_k row_k: shift t of mu_i onto the kept rows.
    double t = sol.mu[i];
    Eigen::Index leave = -1;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const double ck = coef[n_eq + static_cast<Eigen::Index>(k)];
      if (ck < -1e-12 && sol.mu[kept[k]] / -ck < t) {
        t = sol.mu[kept[k]] / -ck;
        leave = static_cast<Eigen::Index>(k);
      }
    }
    for (Eigen::Index k = 0; k < n_eq; ++k) sol.w[eq_kept[static_cast<std::size_t>(k)]] += t * coef[k];
    for (std::size_t k = 0; k < kept.size(); ++k) {
      auto& mu = sol.mu[kept[k]];
      mu = std::max(0.0, mu + t * coef[n_eq + static_cast<Eigen::Index>(k)]);
    }
    sol.mu[i] -= t;
    if (leave < 0) {
      sol.mu[i] = 0.0;
      continue;
    }
    sol.mu[kept[static_cast<std::size_t>(leave)]] = 0.0;
    kept.erase(kept.begin() + leave);
    kept.push_back(i);
    rebuild();
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// Rows of the final basis whose dual does not pass the dual threshold.
void record_extra_rows(const std::vector<Eigen::Index>& basis, PrimalDualSolution& sol, const SolverOptions& opts) {
  const double tol_mu = opts.tol_mu_rel * (1.0 + sol.mu.lpNorm<Eigen::Infinity>());
  sol.degenerate_basis.clear();
  for (auto i : basis) {
    if (sol.mu[i] <= tol_mu) sol.degenerate_basis.push_back(i);
  }
}

}  // namespace

bool crossover(const QuadraticProgram& qp, PrimalDualSolution& sol, const SolverOptions& opts) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.num_ineq();
  const Eigen::Index p = qp.num_eq();
  const double tol_mu = opts.tol_mu_rel * (1.0 + sol.mu.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd slack = qp.b - qp.A * sol.x;
  auto slack_tol = [&](Eigen::Index i) { return opts.tol_slack_rel * (1.0 + std::abs(qp.b[i])); };

  // Rows that pass the dual threshold, plus rows whose dual dominates their
  // slack (small but genuine multipliers).
  std::vector<Eigen::Index> basis_rows;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (sol.mu[i] > tol_mu || sol.mu[i] > std::max(slack[i], 0.0)) {
      basis_rows.push_back(i);
    }
  }
  const PrimalDualSolution interior = sol;
  if (polish(qp, basis_rows, sol, opts, tol_mu) == Polish::accepted) {
    record_extra_rows(basis_rows, sol, opts);
    return true;
  }
  // Stage 1: dual crossover. Dependent active rows mean several dual
  // solutions; keep a basic one. Dropping the dependent rows usually leaves a
  // valid one; otherwise their duals are moved onto the kept rows.
  std::vector<Eigen::Index> reduced = independent_subset(qp, basis_rows);
  if (reduced.size() != basis_rows.size() && polish(qp, reduced, sol, opts, tol_mu) == Polish::accepted) {
    record_extra_rows(reduced, sol, opts);
    return true;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::binary_search(basis_rows.begin(), basis_rows.end(), i)) sol.mu[i] = 0.0;
  }
  std::vector<Eigen::Index> transferred = dual_basis(qp, basis_rows, sol);
  if (transferred != reduced && polish(qp, transferred, sol, opts, tol_mu) == Polish::accepted) {
    record_extra_rows(transferred, sol, opts);
    return true;
  }
  basis_rows = std::move(transferred);

  std::vector<SparseRow> a_rows(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) a_rows[static_cast<std::size_t>(i)] = row_of(qp.A, i);
  std::vector<SparseRow> g_rows(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) g_rows[static_cast<std::size_t>(i)] = row_of(qp.G, i);

  // Stage 2: primal crossover.
  std::vector<SparseRow> rows;
  for (auto i : basis_rows) rows.push_back(a_rows[static_cast<std::size_t>(i)]);
  rows.insert(rows.end(), g_rows.begin(), g_rows.end());
  const SparseRowMatrix p_rows = qp.P;
  for (Eigen::Index i = 0; i < n; ++i) {
    SparseRow pr = row_of(p_rows, i);
    if (!pr.entries.empty()) rows.push_back(std::move(pr));
  }
  Eigen::MatrixXd basis = null_space(rows, n);

  std::vector<bool> in_set(static_cast<std::size_t>(m), false);
  for (auto i : basis_rows) in_set[static_cast<std::size_t>(i)] = true;

  auto absorb_active = [&]() {
    for (Eigen::Index i = 0; i < m && basis.cols() > 0; ++i) {
      if (in_set[static_cast<std::size_t>(i)] || slack[i] > slack_tol(i)) continue;
      const auto& row = a_rows[static_cast<std::size_t>(i)];
      const Eigen::VectorXd u = project(basis, row);
      if (u.norm() > 1e-9 * row_norm(row)) {
        in_set[static_cast<std::size_t>(i)] = true;
        basis_rows.push_back(i);
        restrict_basis(basis, u);
      }
    }
  };

  absorb_active();
  while (basis.cols() > 0) {
    bool moved = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_set[static_cast<std::size_t>(i)]) continue;
      const auto& row = a_rows[static_cast<std::size_t>(i)];
      const Eigen::VectorXd u = project(basis, row);
      if (u.norm() <= 1e-9 * row_norm(row)) continue;
      const Eigen::VectorXd dir = basis * u;
      const Eigen::VectorXd rate = qp.A * dir;
      double t = std::numeric_limits<double>::infinity();
      Eigen::Index block = -1;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (in_set[static_cast<std::size_t>(j)] || rate[j] <= 1e-12 * dir.norm()) continue;
        const double tj = std::max(0.0, slack[j]) / rate[j];
        if (tj < t) {
          t = tj;
          block = j;
        }
      }
      if (block < 0) continue;  // unbounded along this row; try the next one
      sol.x += t * dir;
      slack = qp.b - qp.A * sol.x;
      in_set[static_cast<std::size_t>(block)] = true;
      basis_rows.push_back(block);
      restrict_basis(basis, project(basis, a_rows[static_cast<std::size_t>(block)]));
      absorb_active();
      moved = true;
      break;
    }
    if (!moved) break;
  }
  std::sort(basis_rows.begin(), basis_rows.end());

  const double tol_mu_now = opts.tol_mu_rel * (1.0 + sol.mu.lpNorm<Eigen::Infinity>());
  if (polish(qp, basis_rows, sol, opts, tol_mu_now) == Polish::accepted) {
    record_extra_rows(basis_rows, sol, opts);
    return true;
  }
  // The basis could not be certified; leave the interior solution untouched.
  sol = interior;
  return false;
}

}  // namespace loadshed::detail
