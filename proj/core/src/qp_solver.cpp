#include "loadshed/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>


#include "klu_lu.hpp"
#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Largest step in (0, 1] keeping v + t dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double t = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) t = std::min(t, -v[i] / dv[i]);
  }
  return t;
}

struct IpmState {
  Eigen::VectorXd x, z, mu, w;
  SolveStatus status = SolveStatus::max_iterations;
  int iterations = 0;
  bool diverged = false;
};

// Newton system of the interior-point method in augmented form
//
//   [H  G'] [dx]   [rx]
//   [G  0 ] [dw] = [re],   H = P + A' diag(D) A,
//
// factored by sparse LU. The sparsity pattern is fixed per problem, so the
// symbolic analysis runs once.
class NewtonSystem {
 public:
  explicit NewtonSystem(const QuadraticProgram& qp) : qp_(qp), n_(qp.num_vars()), p_(qp.num_eq()) {
    const Eigen::Index n = n_;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n * n), 0);
    auto mark = [&](Eigen::Index i, Eigen::Index j) { mask[static_cast<std::size_t>(i + j * n)] = 1; };
    for (Eigen::Index i = 0; i < n; ++i) mark(i, i);
    for (Eigen::Index c = 0; c < qp.P.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(qp.P, c); it; ++it) mark(it.row(), it.col());
    }
    for (Eigen::Index r = 0; r < qp.A.outerSize(); ++r) {
      for (SparseRowMatrix::InnerIterator it(qp.A, r); it; ++it) {
        for (SparseRowMatrix::InnerIterator jt(qp.A, r); jt; ++jt) mark(it.col(), jt.col());
      }
    }
    const SparseRowMatrix gt = qp.G.transpose();  // row j of gt lists the equalities touching x_j

    std::vector<Eigen::Triplet<double, int>> trip;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i + j * n)]) trip.emplace_back(int(i), int(j), 1.0);
      }
    }
    for (Eigen::Index e = 0; e < p_; ++e) {
      for (SparseRowMatrix::InnerIterator it(qp.G, e); it; ++it) {
        trip.emplace_back(int(n + e), int(it.col()), it.value());
        trip.emplace_back(int(it.col()), int(n + e), it.value());
      }
      trip.emplace_back(int(n + e), int(n + e), 1.0);
    }
    k_.resize(int(n + p_), int(n + p_));
    k_.setFromTriplets(trip.begin(), trip.end());
    k_.makeCompressed();

    // Value slots refreshed on every factorization.
    for (int c = 0; c < k_.outerSize(); ++c) {
      for (int pos = k_.outerIndexPtr()[c]; pos < k_.outerIndexPtr()[c + 1]; ++pos) {
        const int r = k_.innerIndexPtr()[pos];
        if (r < n && c < n) {
          h_slots_.emplace_back(pos, r + c * static_cast<int>(n));
          if (r == c) h_diag_slots_.push_back(pos);
        } else if (r >= n && c >= n) {
          k_.valuePtr()[pos] = 0.0;
          e_diag_slots_.push_back(pos);
        }
      }
    }
    h_.resize(n, n);
    lu_.analyze(k_);
  }

  void factor(const Eigen::VectorXd& d) {
    h_ = Eigen::MatrixXd(qp_.P);
    const auto& a = qp_.A;
    for (Eigen::Index i = 0; i < a.outerSize(); ++i) {
      const double di = d[i];
      for (SparseRowMatrix::InnerIterator it(a, i); it; ++it) {
        const double s = di * it.value();
        for (SparseRowMatrix::InnerIterator jt(a, i); jt; ++jt) h_(jt.col(), it.col()) += s * jt.value();
      }
    }
    double* val = k_.valuePtr();
    for (const auto& [pos, idx] : h_slots_) val[pos] = h_.data()[idx];
    for (int pos : e_diag_slots_) val[pos] = 0.0;

    exact_ = k_;
    regularized_ = false;
    if (lu_.factor(k_)) return;
    // Structurally or numerically singular: factor a quasi-definite perturbation
    // and rely on refinement against the exact matrix.
    const double scale = 1.0 + h_.cwiseAbs().maxCoeff();
    double reg = 1e-12 * scale;
    for (int attempt = 0; attempt < 8; ++attempt, reg *= 100.0) {
      for (int pos : h_diag_slots_) val[pos] = exact_.valuePtr()[pos] + reg;
      for (int pos : e_diag_slots_) val[pos] = -reg;
      if (lu_.factor(k_)) break;
    }
    regularized_ = true;
  }

  void solve(const Eigen::VectorXd& rx, const Eigen::VectorXd& re, Eigen::VectorXd& dx,
             Eigen::VectorXd& dw) {
    Eigen::VectorXd rhs(n_ + p_);
    rhs << rx, re;
    Eigen::VectorXd z = rhs;
    lu_.solve_in_place(z);
    const int refinements = regularized_ ? 5 : 2;
    for (int k = 0; k < refinements; ++k) {
      Eigen::VectorXd r = rhs - exact_ * z;
      lu_.solve_in_place(r);
      z += r;
    }
    dx = z.head(n_);
    dw = z.tail(p_);
  }

 private:
  const QuadraticProgram& qp_;
  Eigen::Index n_, p_;
  detail::CscMatrix k_;
  detail::CscMatrix exact_;  // k_ without regularization
  bool regularized_ = false;
  std::vector<std::pair<int, int>> h_slots_;  // (position in k_, index into h_)
  std::vector<int> h_diag_slots_;
  std::vector<int> e_diag_slots_;
  Eigen::MatrixXd h_;
  detail::KluLu lu_;
};

// Mehrotra predictor-corrector on  Ax + z = b, z >= 0, Gx = h.
// With `warm`, continues from that state instead of the default start.
IpmState interior_point(const QuadraticProgram& qp, const SolverOptions& opts, const IpmState* warm = nullptr) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.num_ineq();

  const double b_norm = inf_norm(qp.b);
  const double h_norm = inf_norm(qp.h);
  const double q_norm = inf_norm(qp.q);

  IpmState st;
  NewtonSystem newton(qp);

  // Starting point: least-squares fit with unit scaling, then shift into the interior.
  if (warm) {
    st = *warm;
    st.status = SolveStatus::max_iterations;
  } else {
    newton.factor(Eigen::VectorXd::Ones(m));
    Eigen::VectorXd rx = -qp.q + qp.A.transpose() * qp.b;
    Eigen::VectorXd dw;
    newton.solve(rx, qp.h, st.x, dw);
    st.w = dw;
    st.z = qp.b - qp.A * st.x;
    st.mu = -st.z;
    if (m > 0) {
      const double zmin = st.z.minCoeff();
      if (zmin <= 0.0) st.z.array() += 1.0 - zmin;
      const double mumin = st.mu.minCoeff();
      if (mumin <= 0.0) st.mu.array() += 1.0 - mumin;
    }
  }

  Eigen::VectorXd dx, dw, dz, dmu, dx_a, dw_a, dz_a, dmu_a;
  const int first = warm ? warm->iterations : 0;
  for (int it = first; it <= opts.max_iter; ++it) {
    st.iterations = it;
    const Eigen::VectorXd ax = qp.A * st.x;
    const Eigen::VectorXd r_p = ax + st.z - qp.b;
    const Eigen::VectorXd r_e = qp.G * st.x - qp.h;
    const Eigen::VectorXd r_d = qp.P * st.x + qp.q + qp.A.transpose() * st.mu + qp.G.transpose() * st.w;
    const double gap = m > 0 ? st.mu.dot(st.z) : 0.0;
    const double obj = qp.objective(st.x);

    const bool converged = inf_norm(r_p) <= opts.tol_feas * (1.0 + b_norm) &&
                           inf_norm(r_e) <= opts.tol_feas * (1.0 + h_norm) &&
                           inf_norm(r_d) <= opts.tol_feas * (1.0 + q_norm) &&
                           gap <= opts.tol_comp * (1.0 + std::abs(obj));
    if (converged) {
      st.status = SolveStatus::optimal;
      return st;
    }
    if (it == opts.max_iter) break;
    if (m > 0 && (!std::isfinite(gap) || inf_norm(st.mu) > 1e13 * (1.0 + q_norm) ||
                  inf_norm(st.z) > 1e13 * (1.0 + b_norm))) {
      st.diverged = true;
      break;
    }

    const double nu = m > 0 ? gap / static_cast<double>(m) : 0.0;
    const Eigen::VectorXd d = m > 0 ? Eigen::VectorXd(st.mu.cwiseQuotient(st.z)) : Eigen::VectorXd();
    newton.factor(d);

    auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& ox, Eigen::VectorXd& ow,
                         Eigen::VectorXd& oz, Eigen::VectorXd& omu) {
      Eigen::VectorXd rx = -r_d;
      if (m > 0) {
        const Eigen::VectorXd t = (st.mu.cwiseProduct(r_p) - rc).cwiseQuotient(st.z);
        rx -= qp.A.transpose() * t;
      }
      newton.solve(rx, -r_e, ox, ow);
      if (m > 0) {
        oz = -r_p - qp.A * ox;
        omu = (-rc - st.mu.cwiseProduct(oz)).cwiseQuotient(st.z);
      } else {
        oz.resize(0);
        omu.resize(0);
      }
    };

    if (m == 0) {
      direction(Eigen::VectorXd(), dx, dw, dz, dmu);
      st.x += dx;
      st.w += dw;
      continue;
    }

    // Predictor.
    const Eigen::VectorXd rc_aff = st.mu.cwiseProduct(st.z);
    direction(rc_aff, dx_a, dw_a, dz_a, dmu_a);
    const double a_aff = std::min(max_step(st.z, dz_a), max_step(st.mu, dmu_a));
    const double nu_aff = (st.z + a_aff * dz_a).dot(st.mu + a_aff * dmu_a) / static_cast<double>(m);
    const double sigma = std::pow(std::clamp(nu_aff / nu, 0.0, 1.0), 3);

    // Corrector.
    Eigen::VectorXd rc = rc_aff + dz_a.cwiseProduct(dmu_a);
    rc.array() -= sigma * nu;
    direction(rc, dx, dw, dz, dmu);
    const double a_max = std::min(max_step(st.z, dz), max_step(st.mu, dmu));
    const double alpha = std::min(1.0, 0.99 * a_max);

    st.x += alpha * dx;
    st.w += alpha * dw;
    st.z += alpha * dz;
    st.mu += alpha * dmu;
  }
  (void)n;
  st.status = SolveStatus::max_iterations;
  return st;
}

// Minimizes the total constraint violation t + sum|e| over
//   Ax - t 1 <= b,  t >= 0,  Gx + e+ - e- = h,  e+/- >= 0.
// A positive optimum certifies infeasibility of the original problem.
struct ElasticResult {
  bool solved = false;
  double violation = 0.0;
  Eigen::VectorXd x;
  double t = 0.0;
  Eigen::VectorXd e;
};

ElasticResult elastic_phase(const QuadraticProgram& qp, const SolverOptions& opts) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.num_ineq();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index ne = n + 1 + 2 * p;

  QuadraticProgram el;
  el.P.resize(ne, ne);
  el.q = Eigen::VectorXd::Zero(ne);
  el.q.tail(1 + 2 * p).setOnes();

  std::vector<Eigen::Triplet<double>> at;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (SparseRowMatrix::InnerIterator it(qp.A, i); it; ++it) {
      at.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
    }
    at.emplace_back(static_cast<int>(i), static_cast<int>(n), -1.0);
  }
  for (Eigen::Index k = 0; k < 1 + 2 * p; ++k) {
    at.emplace_back(static_cast<int>(m + k), static_cast<int>(n + k), -1.0);
  }
  el.A.resize(m + 1 + 2 * p, ne);
  el.A.setFromTriplets(at.begin(), at.end());
  el.b = Eigen::VectorXd::Zero(m + 1 + 2 * p);
  el.b.head(m) = qp.b;

  std::vector<Eigen::Triplet<double>> gt;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (SparseRowMatrix::InnerIterator it(qp.G, i); it; ++it) {
      gt.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
    }
    gt.emplace_back(static_cast<int>(i), static_cast<int>(n + 1 + i), 1.0);
    gt.emplace_back(static_cast<int>(i), static_cast<int>(n + 1 + p + i), -1.0);
  }
  el.G.resize(p, ne);
  el.G.setFromTriplets(gt.begin(), gt.end());
  el.h = qp.h;

  SolverOptions eo = opts;
  eo.max_iter = std::max(opts.max_iter, 200);
  IpmState st = interior_point(el, eo);
  ElasticResult res;
  res.solved = st.status == SolveStatus::optimal;
  res.x = st.x.head(n);
  res.t = st.x[n];
  res.e = st.x.segment(n + 1, p) - st.x.segment(n + 1 + p, p);
  res.violation = std::max(0.0, res.t) + res.e.cwiseAbs().sum();
  return res;
}

}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::max_iterations:
      return "max_iterations";
  }
  return "unknown";
}

Residuals kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                        const Eigen::VectorXd& w) {
  Residuals r;
  const Eigen::VectorXd slack = qp.b - qp.A * x;
  double viol = 0.0;
  for (Eigen::Index i = 0; i < slack.size(); ++i) viol = std::max(viol, -slack[i]);
  r.primal = std::max(viol, inf_norm(qp.G * x - qp.h));
  r.dual = inf_norm(qp.P * x + qp.q + qp.A.transpose() * mu + qp.G.transpose() * w);
  r.complementarity = mu.size() ? mu.dot(slack) : 0.0;
  return r;
}

PrimalDualSolution solve(const QuadraticProgram& qp, const SolverOptions& opts) {
  if (qp.A.cols() != qp.num_vars() || qp.G.cols() != qp.num_vars() || qp.P.rows() != qp.num_vars() ||
      qp.A.rows() != qp.num_ineq() || qp.G.rows() != qp.num_eq()) {
    throw DimensionError("quadratic program has inconsistent dimensions");
  }
  IpmState st = interior_point(qp, opts);

  PrimalDualSolution sol;
  sol.x = st.x;
  sol.mu = st.mu;
  sol.w = st.w;
  sol.iterations = st.iterations;
  sol.status = st.status;

  if (st.status != SolveStatus::optimal) {
    ElasticResult el = elastic_phase(qp, opts);
    const double scale = 1.0 + inf_norm(qp.b) + inf_norm(qp.h);
    if (el.solved && el.violation > 1e-6 * scale) {
      sol.status = SolveStatus::infeasible;
      sol.x = el.x;
      const Eigen::VectorXd viol = qp.A * el.x - qp.b;
      for (Eigen::Index i = 0; i < viol.size(); ++i) {
        if (el.t > 0.0 && viol[i] >= 0.5 * el.t) sol.infeasible_rows.push_back(qp.ineq_label(i));
      }
      for (Eigen::Index i = 0; i < el.e.size(); ++i) {
        if (std::abs(el.e[i]) > 1e-7 * scale) sol.infeasible_rows.push_back(qp.eq_label(i));
      }
    }
  } else if (opts.crossover && qp.num_ineq() > 0) {
    // A basis that cannot be certified usually means the interior iterate is
    // too coarse to separate small multipliers from small slacks; tighten the
    // complementarity target and continue a few iterations.
    SolverOptions tight = opts;
    for (int round = 0; round < 3; ++round) {
      PrimalDualSolution trial = sol;
      if (detail::crossover(qp, trial, opts)) {
        sol = std::move(trial);
        break;
      }
      if (round == 2) break;
      tight.tol_comp /= 100.0;
      tight.max_iter = st.iterations + 6;
      st = interior_point(qp, tight, &st);
      sol.x = st.x;
      sol.mu = st.mu;
      sol.w = st.w;
      sol.iterations = st.iterations;
    }
  }

  sol.objective = qp.objective(sol.x);
  sol.residuals = kkt_residuals(qp, sol.x, sol.mu, sol.w);
  return sol;
}

std::size_t BindingPattern::count() const noexcept {
  return static_cast<std::size_t>(std::count(tau.begin(), tau.end(), std::uint8_t{1}));
}

BindingStatus binding_status(const PrimalDualSolution& sol, const QuadraticProgram& qp,
                             const BindingTolerances& tol) {
  if (sol.status != SolveStatus::optimal) {
    throw Error("binding_status needs an optimal solution, got " + to_string(sol.status));
  }
  const Eigen::Index m = qp.num_ineq();
  if (sol.mu.size() != m) throw DimensionError("dual vector does not match the inequality count");
  const double tol_mu = tol.mu_rel * (1.0 + inf_norm(sol.mu));
  const Eigen::VectorXd slack = qp.b - qp.A * sol.x;

  BindingStatus out;
  out.pattern.tau.assign(static_cast<std::size_t>(m), 0);
  out.pattern.source = BindingSource::dual_threshold;
  out.slack.tau.assign(static_cast<std::size_t>(m), 0);
  out.slack.source = BindingSource::slack_threshold;
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool by_dual = sol.mu[i] > tol_mu;
    const bool by_slack = slack[i] < tol.slack_rel * (1.0 + std::abs(qp.b[i]));
    out.pattern.tau[static_cast<std::size_t>(i)] = by_dual;
    out.slack.tau[static_cast<std::size_t>(i)] = by_slack;
    if (by_dual != by_slack) {
      out.mismatches.push_back(i);
      if (by_slack && !by_dual) out.weakly_active.push_back(i);
    }
  }
  for (Eigen::Index i : sol.degenerate_basis) out.pattern.tau[static_cast<std::size_t>(i)] = 1;
  return out;
}

}  // namespace loadshed
