#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "loadshed/errors.hpp"
#include "loadshed/qp_solver.hpp"
#include "support/paths.hpp"
#include "support/random_case.hpp"

using namespace loadshed;

namespace {

// Box-constrained QP without equalities: lo <= x <= hi.
QuadraticProgram box_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  const Eigen::Index n = q.size();
  QuadraticProgram qp;
  qp.P = P.sparseView();
  qp.q = q;
  qp.A.resize(2 * n, n);
  std::vector<Eigen::Triplet<double>> t;
  qp.b.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t.emplace_back(static_cast<int>(2 * i), static_cast<int>(i), 1.0);
    t.emplace_back(static_cast<int>(2 * i + 1), static_cast<int>(i), -1.0);
    qp.b[2 * i] = hi[i];
    qp.b[2 * i + 1] = -lo[i];
    qp.row_labels.push_back("x_upper[" + std::to_string(i + 1) + "]");
    qp.row_labels.push_back("x_lower[" + std::to_string(i + 1) + "]");
  }
  qp.A.setFromTriplets(t.begin(), t.end());
  qp.G.resize(0, n);
  qp.h.resize(0);
  qp.var_layout.push_back({"x", 0, n});
  return qp;
}

// Cheapest dispatch of `total` MW: g_k = clamp((nu - b_k) / 2a_k), bisection on nu.
double dispatch_cost(const GridCase& g, double total) {
  double cap_lo = 0.0, cap_hi = 0.0;
  for (const auto& gen : g.generators) {
    cap_lo += gen.g_min;
    cap_hi += gen.g_max;
  }
  if (total < cap_lo - 1e-12 || total > cap_hi + 1e-12) return std::numeric_limits<double>::infinity();
  auto output = [&](double nu, std::size_t k) {
    const auto& gen = g.generators[k];
    return std::clamp((nu - gen.b_lin) / (2.0 * gen.a), gen.g_min, gen.g_max);
  };
  double lo = -1e7, hi = 1e7;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    double sum = 0.0;
    for (std::size_t k = 0; k < g.generators.size(); ++k) sum += output(mid, k);
    (sum < total ? lo : hi) = mid;
  }
  double cost = 0.0;
  for (std::size_t k = 0; k < g.generators.size(); ++k) {
    const double gk = output(0.5 * (lo + hi), k);
    const auto& gen = g.generators[k];
    cost += gen.a * gk * gk + gen.b_lin * gk + gen.c;
  }
  return cost;
}

struct GridBest {
  double value = std::numeric_limits<double>::infinity();
  std::vector<double> s;
};

// Minimum over s on the grid lo + k step inside [lo, hi] (fairness rows
// checked directly, generation dispatched optimally for the remaining demand).
GridBest grid_minimum(const GridCase& g, const std::vector<double>& lo, const std::vector<double>& hi, double step) {
  const std::size_t n = g.num_loads();
  const double share = g.gamma() / static_cast<double>(n);
  double demand = 0.0;
  for (const auto& l : g.loads) demand += l.d;
  std::vector<double> s(n, 0.0);
  std::vector<int> count(n);
  for (std::size_t i = 0; i < n; ++i) count[i] = static_cast<int>(std::floor((hi[i] - lo[i]) / step + 1e-9));
  std::vector<int> idx(n, 0);
  GridBest best;
  while (true) {
    double total_s = 0.0, shed_mw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = lo[i] + idx[i] * step;
      total_s += s[i];
      shed_mw += s[i] * g.loads[i].d;
    }
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) ok = s[i] <= share * total_s + 1e-12;
    if (ok && g.fairness.delta) {
      for (std::size_t i = 0; i < n && ok; ++i) {
        for (std::size_t j = i + 1; j < n && ok; ++j) ok = std::abs(s[i] - s[j]) <= *g.fairness.delta + 1e-12;
      }
    }
    if (ok && g.lambda * shed_mw < best.value) {
      const double v = g.lambda * shed_mw + dispatch_cost(g, demand - shed_mw);
      if (v < best.value) best = {v, s};
    }
    std::size_t k = 0;
    while (k < n && ++idx[k] > count[k]) idx[k++] = 0;
    if (k == n) break;
  }
  return best;
}

// Grid search at step 1e-3 over the whole s-box, then repeated zooms on a
// 10x finer grid around the incumbent.
double brute_force_minimum(const GridCase& g) {
  const std::size_t n = g.num_loads();
  std::vector<double> lo(n, 0.0), hi(n);
  for (std::size_t i = 0; i < n; ++i) hi[i] = g.loads[i].s_max;
  double step = 1e-3;
  GridBest best = grid_minimum(g, lo, hi, step);
  for (int level = 0; level < 5 && std::isfinite(best.value); ++level) {
    for (std::size_t i = 0; i < n; ++i) {
      lo[i] = std::max(0.0, best.s[i] - 2.0 * step);
      hi[i] = std::min(g.loads[i].s_max, best.s[i] + 2.0 * step);
    }
    step /= 10.0;
    const GridBest finer = grid_minimum(g, lo, hi, step);
    if (finer.value < best.value) best = finer;
  }
  return best.value;
}

double complementarity_gap(const QuadraticProgram& qp, const PrimalDualSolution& sol) {
  return std::abs(sol.mu.dot(qp.b - qp.A * sol.x));
}

}  // namespace

TEST_SUITE("qp_solver") {

TEST_CASE("3-bus golden solution") {
  const GridCase g = load_case(testing::case_path("3bus.case"));
  const QuadraticProgram qp = build(g);
  const PrimalDualSolution sol = solve(qp);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.x[0] - 30.0) <= 1e-5);
  CHECK(std::abs(sol.x[1] - 50.0) <= 1e-5);
  CHECK(std::abs(sol.x[2] - 0.1) <= 1e-5);
  CHECK(std::abs(sol.x[3] - 0.1) <= 1e-5);
  CHECK(std::abs(sol.x[4] - 0.125) <= 1e-5);
  CHECK(std::abs(sol.w[0] + 1000.0) <= 1e-5);

  const BindingStatus st = binding_status(sol, qp);
  std::vector<std::string> binding;
  for (std::size_t i = 0; i < st.pattern.size(); ++i) {
    if (st.pattern[i]) binding.push_back(qp.ineq_label(static_cast<Eigen::Index>(i)));
  }
  CHECK(binding == std::vector<std::string>{"gen_upper[1]", "gen_upper[2]", "shed_upper[1]", "shed_upper[2]"});
  auto mu_of = [&](const std::string& label) {
    for (Eigen::Index i = 0; i < qp.num_ineq(); ++i) {
      if (qp.ineq_label(i) == label) return sol.mu[i];
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK(std::abs(mu_of("gen_upper[1]") - 937.0) <= 1e-5);
  CHECK(std::abs(mu_of("gen_upper[2]") - 799.0) <= 1e-5);
  CHECK(std::abs(mu_of("shed_upper[1]")) <= 1e-5);
  CHECK(std::abs(mu_of("shed_upper[2]")) <= 1e-5);
  CHECK(sol.objective == doctest::Approx(qp.objective(sol.x)));
}

TEST_CASE("s3 = 0.125 by brute force over s3") {
  // g1 = 30, g2 = 50, s1 = s2 = 0.1 fixed; balance then forces s3.
  const GridCase g = load_case(testing::case_path("3bus.case"));
  const QuadraticProgram qp = build(g);
  double best = std::numeric_limits<double>::infinity(), best_s3 = -1.0;
  for (int k = 0; k <= 2000; ++k) {
    const double s3 = k * 1e-4;
    Eigen::VectorXd x(5);
    x << 30, 50, 0.1, 0.1, s3;
    const bool balanced = std::abs((qp.G * x - qp.h)[0]) <= 1e-9;
    const bool feasible = (qp.b - qp.A * x).minCoeff() >= -1e-12;
    if (balanced && feasible && qp.objective(x) < best) {
      best = qp.objective(x);
      best_s3 = s3;
    }
  }
  CHECK(best_s3 == doctest::Approx(0.125));
}

TEST_CASE("grid-search oracle on small copper-plate cases") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int compared = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const bool three = trial % 2 == 1;
    GridCase g;
    g.copper_plate = true;
    g.lambda = 1000.0;
    const int n = three ? 3 : 2;
    for (int i = 1; i <= n; ++i) {
      Bus b;
      b.id = i;
      b.is_reference = i == 1;
      g.buses.push_back(b);
    }
    double demand = 0.0;
    for (int i = 1; i <= n; ++i) {
      LoadPoint l;
      l.bus = i;
      l.d = 10.0 + 40.0 * u(rng);
      l.s_max = three ? 0.05 + 0.07 * u(rng) : 0.1 + 0.3 * u(rng);
      demand += l.d;
      g.loads.push_back(l);
    }
    for (int k = 1; k <= 2; ++k) {
      Generator gen;
      gen.bus = k;
      gen.a = 0.01 + u(rng);
      gen.b_lin = 30.0 * u(rng);
      gen.g_max = demand * (0.4 + 0.2 * u(rng));
      g.generators.push_back(gen);
    }
    g.fairness.gamma = 1.0 + (n - 1.0) * u(rng);
    if (trial % 4 >= 2) g.fairness.delta = 0.02 + 0.05 * u(rng);
    validate(g);

    const QuadraticProgram qp = build(g);
    const PrimalDualSolution sol = solve(qp);
    const double oracle = brute_force_minimum(g);
    if (!std::isfinite(oracle)) {
      CHECK(sol.status == SolveStatus::infeasible);
      continue;
    }
    REQUIRE(sol.status == SolveStatus::optimal);
    CAPTURE(trial);
    CHECK(sol.objective <= oracle + 1e-6 * std::abs(oracle));
    CHECK(oracle - sol.objective <= 1e-3);
    ++compared;
  }
  CHECK(compared >= 6);
}

TEST_CASE("interior minimum of a box QP") {
  const Eigen::Index n = 4;
  const QuadraticProgram qp = box_qp(2.0 * Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n),
                                     Eigen::VectorXd::Constant(n, -1.0), Eigen::VectorXd::Constant(n, 1.0));
  const PrimalDualSolution sol = solve(qp);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.x.lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK(sol.mu.lpNorm<Eigen::Infinity>() <= 1e-8);
  const BindingStatus st = binding_status(sol, qp);
  CHECK(st.pattern.count() == 0);
  CHECK(st.mismatches.empty());
}

TEST_CASE("weakly active row: min x^2 s.t. x <= 0") {
  QuadraticProgram qp;
  qp.P = (2.0 * Eigen::MatrixXd::Identity(1, 1)).sparseView();
  qp.q = Eigen::VectorXd::Zero(1);
  qp.A.resize(1, 1);
  qp.A.insert(0, 0) = 1.0;
  qp.b = Eigen::VectorXd::Zero(1);
  qp.G.resize(0, 1);
  qp.h.resize(0);
  qp.row_labels = {"x_upper[1]"};
  qp.var_layout.push_back({"x", 0, 1});
  const PrimalDualSolution sol = solve(qp);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.x[0]) <= 1e-8);
  CHECK(std::abs(sol.mu[0]) <= 1e-6);
  const BindingStatus st = binding_status(sol, qp);
  CHECK_FALSE(st.slack.tau.empty());
  CHECK(st.slack[0]);
  CHECK(st.mismatches == std::vector<Eigen::Index>{0});
  CHECK(st.weakly_active == std::vector<Eigen::Index>{0});
}

TEST_CASE("active box bounds carry the gradient") {
  // min (x1 - 3)^2 + (x2 + 3)^2 on [-1, 1]^2: x = (1, -1), mu = 4 on both.
  Eigen::VectorXd q(2);
  q << -6.0, 6.0;
  const QuadraticProgram qp = box_qp(2.0 * Eigen::MatrixXd::Identity(2, 2), q, Eigen::VectorXd::Constant(2, -1.0),
                                     Eigen::VectorXd::Constant(2, 1.0));
  const PrimalDualSolution sol = solve(qp);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0));
  CHECK(sol.x[1] == doctest::Approx(-1.0));
  CHECK(sol.mu[0] == doctest::Approx(4.0));
  CHECK(sol.mu[3] == doctest::Approx(4.0));
  const BindingStatus st = binding_status(sol, qp);
  CHECK(st.pattern.tau == std::vector<std::uint8_t>{1, 0, 0, 1});
}

TEST_CASE("complementarity, residuals and determinism on random cases") {
  std::mt19937_64 rng(3);
  int optimal = 0;
  for (int trial = 0; trial < 40; ++trial) {
    testing::RandomCaseOptions opt;
    opt.buses = 2 + trial % 20;
    opt.copper_plate = trial % 4 == 0;
    const GridCase g = testing::random_case(rng, opt);
    const QuadraticProgram qp = build(g);
    const PrimalDualSolution sol = solve(qp);
    if (sol.status != SolveStatus::optimal) continue;
    ++optimal;
    CAPTURE(trial);
    CHECK(complementarity_gap(qp, sol) <= 1e-6 * (1.0 + std::abs(sol.objective)));
    CHECK((qp.b - qp.A * sol.x).minCoeff() >= -1e-8 * (1.0 + qp.b.lpNorm<Eigen::Infinity>()));
    CHECK((qp.G * sol.x - qp.h).lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + qp.h.lpNorm<Eigen::Infinity>()));
    CHECK(sol.mu.minCoeff() >= 0.0);
    const Residuals r = kkt_residuals(qp, sol.x, sol.mu, sol.w);
    CHECK(r.dual <= 1e-6 * (1.0 + sol.mu.lpNorm<Eigen::Infinity>()));
    if (trial % 5 == 0) {
      const PrimalDualSolution again = solve(qp);
      CHECK((again.x - sol.x).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
  }
  CHECK(optimal >= 30);
}

TEST_CASE("infeasible and iteration-limited problems") {
  GridCase g = load_case(testing::case_path("3bus.case"));
  g.fairness.delta = 0.0;
  g.fairness.epsilon = 0.0;
  const QuadraticProgram qp = build(g);
  const PrimalDualSolution sol = solve(qp);
  CHECK(sol.status == SolveStatus::infeasible);
  CHECK_FALSE(sol.infeasible_rows.empty());
  CHECK_THROWS_AS(binding_status(sol, qp), Error);

  SolverOptions few;
  few.max_iter = 2;
  const PrimalDualSolution cut = solve(build(load_case(testing::case_path("3bus.case"))), few);
  CHECK(cut.status == SolveStatus::max_iterations);
  CHECK(to_string(cut.status) == "max_iterations");
}

}  // TEST_SUITE
