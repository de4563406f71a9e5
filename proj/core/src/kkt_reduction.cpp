#include "loadshed/kkt_reduction.hpp"

#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "klu_lu.hpp"
#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

using detail::CscMatrix;
using detail::KluLu;

NonsingularCheck pivot_check(KluLu& lu, const KktSystem& kkt) {
  NonsingularCheck out;
  if (kkt.layout.dim() == 0) {
    out.nonsingular = true;
    out.condition_estimate = 1.0;
    return out;
  }
  if (!lu.has_factor()) {
    out.condition_estimate = std::numeric_limits<double>::infinity();
    return out;
  }
  const double pivot_tol = 1e-10 * detail::inf_norm(kkt.M);
  out.min_pivot = lu.min_pivot();
  out.nonsingular = lu.ok() && out.min_pivot > pivot_tol;
  out.condition_estimate = out.nonsingular ? lu.condest(kkt.M) : std::numeric_limits<double>::infinity();
  return out;
}

KktSolution solve_factored(KluLu& lu, const KktSystem& kkt, double condition_estimate) {
  Eigen::VectorXd z = kkt.rhs;
  lu.solve_in_place(z);
  Eigen::VectorXd r = kkt.rhs - kkt.M * z;
  Eigen::VectorXd dz = r;
  lu.solve_in_place(dz);
  z += dz;
  r = kkt.rhs - kkt.M * z;

  const KktLayout& l = kkt.layout;
  KktSolution out;
  out.x = z.head(l.n);
  out.v = z.segment(l.n, l.n_bind);
  out.w = z.tail(l.p);
  out.condition_estimate = condition_estimate;
  out.residual = r.size() ? r.lpNorm<Eigen::Infinity>() : 0.0;
  return out;
}

}  // namespace

KktSystem assemble(const QuadraticProgram& qp, const BindingPattern& tau, const LoadVector& d) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.num_ineq();
  const Eigen::Index p = qp.num_eq();
  if (static_cast<Eigen::Index>(tau.size()) != m) {
    throw DimensionError("binding pattern has " + std::to_string(tau.size()) + " entries, expected " +
                         std::to_string(m));
  }
  if (d.size() != static_cast<Eigen::Index>(qp.load_slots.size())) {
    throw DimensionError("load vector has " + std::to_string(d.size()) + " entries, expected " +
                         std::to_string(qp.load_slots.size()));
  }

  KktSystem kkt;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (tau[static_cast<std::size_t>(i)]) kkt.binding_rows.push_back(i);
  }
  const auto nb = static_cast<Eigen::Index>(kkt.binding_rows.size());
  kkt.layout = {n, nb, p};
  const Eigen::Index dim = n + nb + p;

  // Balance-row entries that carry demand, keyed by variable.
  std::vector<Eigen::Index> slot_of_var(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < qp.load_slots.size(); ++k) {
    slot_of_var[static_cast<std::size_t>(qp.load_slots[k].s_var)] = static_cast<Eigen::Index>(k);
  }

  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(static_cast<std::size_t>(qp.P.nonZeros() + 2 * qp.G.nonZeros() + 2 * nb * 4));
  for (Eigen::Index c = 0; c < qp.P.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.P, c); it; ++it) {
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  auto add_sym = [&](Eigen::Index row, Eigen::Index col, double v) {
    trip.emplace_back(static_cast<int>(row), static_cast<int>(col), v);
    trip.emplace_back(static_cast<int>(col), static_cast<int>(row), v);
  };
  for (Eigen::Index k = 0; k < nb; ++k) {
    const Eigen::Index i = kkt.binding_rows[static_cast<std::size_t>(k)];
    for (SparseRowMatrix::InnerIterator it(qp.A, i); it; ++it) add_sym(n + k, it.col(), it.value());
  }
  for (Eigen::Index e = 0; e < p; ++e) {
    for (SparseRowMatrix::InnerIterator it(qp.G, e); it; ++it) {
      double v = it.value();
      const Eigen::Index k = slot_of_var[static_cast<std::size_t>(it.col())];
      if (k >= 0 && qp.load_slots[static_cast<std::size_t>(k)].balance_row == e) v = d.d[k];
      add_sym(n + nb + e, it.col(), v);
    }
  }
  kkt.M.resize(static_cast<int>(dim), static_cast<int>(dim));
  kkt.M.setFromTriplets(trip.begin(), trip.end());
  kkt.M.makeCompressed();

  kkt.rhs.resize(dim);
  kkt.rhs.head(n) = -qp.q_for(d);
  for (Eigen::Index k = 0; k < nb; ++k) kkt.rhs[n + k] = qp.b[kkt.binding_rows[static_cast<std::size_t>(k)]];
  kkt.rhs.tail(p) = qp.h_for(d);
  return kkt;
}

NonsingularCheck check_nonsingular(const KktSystem& kkt) {
  KluLu lu;
  lu.compute(kkt.M);
  return pivot_check(lu, kkt);
}

KktSolution solve_kkt(const KktSystem& kkt) {
  KluLu lu;
  lu.compute(kkt.M);
  const NonsingularCheck chk = pivot_check(lu, kkt);
  if (!chk.nonsingular) {
    throw SingularSystemError("KKT system is singular (smallest pivot " + std::to_string(chk.min_pivot) + ")",
                              chk.condition_estimate);
  }
  return solve_factored(lu, kkt, chk.condition_estimate);
}

FastSolveReport fast_solve(const QuadraticProgram& qp, const BindingPattern& tau, const LoadVector& d,
                           const FastSolveOptions& opts) {
  const KktSystem kkt = assemble(qp, tau, d);
  KluLu lu;
  lu.compute(kkt.M);
  const NonsingularCheck chk = pivot_check(lu, kkt);

  FastSolveReport rep;
  rep.condition_estimate = chk.condition_estimate;
  if (!chk.nonsingular) {
    rep.singular = true;
    return rep;
  }
  KktSolution sol = solve_factored(lu, kkt, chk.condition_estimate);
  rep.residual = sol.residual;
  rep.x = std::move(sol.x);
  rep.v = std::move(sol.v);
  rep.w = std::move(sol.w);

  const Eigen::VectorXd ax = qp.A * rep.x;
  rep.feasible = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    const double viol = ax[i] - qp.b[i];
    if (viol > worst) {
      worst = viol;
      rep.worst_row = qp.ineq_label(i);
    }
    if (viol > opts.feas_rel * (1.0 + std::abs(qp.b[i]))) rep.feasible = false;
  }
  rep.max_violation = std::max(0.0, worst);
  if (rep.v.size() > 0) {
    rep.negative_dual = rep.v.minCoeff() < -opts.dual_rel * (1.0 + rep.v.lpNorm<Eigen::Infinity>());
  }
  const Eigen::VectorXd q = qp.q_for(d);
  rep.objective = 0.5 * rep.x.dot(qp.P * rep.x) + q.dot(rep.x) + qp.r;
  return rep;
}

bool reduced_system_well_posed(const QuadraticProgram& qp, const BindingPattern& tau) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < qp.num_ineq(); ++i) {
    if (tau[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  const auto nb = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd c(nb + p, n);
  const Eigen::MatrixXd a = Eigen::MatrixXd(qp.A);
  for (Eigen::Index k = 0; k < nb; ++k) c.row(k) = a.row(rows[static_cast<std::size_t>(k)]);
  c.bottomRows(p) = Eigen::MatrixXd(qp.G);

  Eigen::FullPivLU<Eigen::MatrixXd> lu_c(c);
  if (lu_c.rank() != nb + p) return false;

  Eigen::MatrixXd stacked(n + nb + p, n);
  stacked.topRows(n) = Eigen::MatrixXd(qp.P);
  stacked.bottomRows(nb + p) = c;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_s(stacked);
  return lu_s.rank() == n;
}

}  // namespace loadshed
