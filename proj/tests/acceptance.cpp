// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "loadshed/binding_learner.hpp"
#include "loadshed/fast_path.hpp"
#include "loadshed/kkt_reduction.hpp"
#include "loadshed/risk.hpp"
#include "support/paths.hpp"
#include "support/random_case.hpp"

using namespace loadshed;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Largest violation of the fairness families and the shed bounds.
double fairness_violation(const QuadraticProgram& qp, const Eigen::VectorXd& x) {
  const Eigen::VectorXd r = qp.A * x - qp.b;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const std::string fam = QuadraticProgram::family(qp.ineq_label(i));
    if (fam == "shed_upper" || fam == "shed_lower" || fam == "fair_prop" || fam == "fair_pair" || fam == "fair_feat") {
      worst = std::max(worst, r[i]);
    }
  }
  return worst;
}

// Evidence gathered across criteria for the suite-wide checks (8 and 9).
struct Ledger {
  std::size_t fairness_checked = 0;
  double fairness_worst = 0.0;
  std::size_t kkt_solves = 0;
  double kkt_worst_ratio = 0.0;  ///< max residual / (1 + |rhs|_inf)

  void optimal(const QuadraticProgram& qp, const Eigen::VectorXd& x) {
    ++fairness_checked;
    fairness_worst = std::max(fairness_worst, fairness_violation(qp, x));
  }
  void kkt(const FastSolveReport& rep, const QuadraticProgram& qp, const LoadVector& d) {
    if (rep.singular) return;
    // b_t is left out, which can only shrink |rhs| and so tightens the check.
    Eigen::VectorXd rhs(qp.num_vars() + rep.v.size() + qp.num_eq());
    rhs << qp.q_for(d), Eigen::VectorXd::Zero(rep.v.size()), qp.h_for(d);
    ++kkt_solves;
    kkt_worst_ratio = std::max(kkt_worst_ratio, rep.residual / (1.0 + rhs.lpNorm<Eigen::Infinity>()));
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(int id, const char* name, const Outcome& o, bool& all) {
  std::printf("criterion %d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
  all = all && o.pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome golden(Ledger& led) {
  const auto t0 = Clock::now();
  const GridCase g = load_case(testing::case_path("3bus.case"));
  const QuadraticProgram qp = build(g);
  const PrimalDualSolution sol = solve(qp);
  const double elapsed = seconds_since(t0);
  if (sol.status != SolveStatus::optimal) return {false, "solve status " + to_string(sol.status)};
  led.optimal(qp, sol.x);
  auto mu = [&](const char* label) {
    for (Eigen::Index i = 0; i < qp.num_ineq(); ++i) {
      if (qp.ineq_label(i) == label) return sol.mu[i];
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double expect[] = {30, 50, 0.1, 0.1, 0.125, 937, 799, 0, 0, -1000};
  const double got[] = {sol.x[0], sol.x[1], sol.x[2], sol.x[3], sol.x[4],
                        mu("gen_upper[1]"), mu("gen_upper[2]"), mu("shed_upper[1]"), mu("shed_upper[2]"), sol.w[0]};
  double err = 0.0;
  for (int k = 0; k < 10; ++k) err = std::max(err, std::abs(got[k] - expect[k]));
  return {err <= 1e-5 && elapsed < 1.0,
          fmt("max abs error %.2e over g, s, v, w; s3 = %.6f; %.3f s", err, sol.x[4], elapsed)};
}

struct RandomRuns {
  Outcome equivalence;
  Outcome consistency;
};

RandomRuns random_instances(Ledger& led) {
  std::mt19937_64 rng(7);
  const auto t0 = Clock::now();
  int optimal = 0, rejected = 0, bad = 0;
  double worst_x = 0.0, worst_obj = 0.0;
  std::size_t rows = 0, agree = 0, weak = 0, unexplained = 0, weak_no_shed = 0;
  std::map<std::string, std::size_t> weak_by_family;
  while (optimal < 200) {
    testing::RandomCaseOptions opt;
    opt.buses = std::uniform_int_distribution<int>(3, 73)(rng);
    opt.copper_plate = optimal % 5 == 0;
    const GridCase g = testing::random_case(rng, opt);
    const QuadraticProgram qp = build(g);
    const PrimalDualSolution full = solve(qp);
    if (full.status != SolveStatus::optimal) {
      ++rejected;
      continue;
    }
    ++optimal;
    led.optimal(qp, full.x);
    const BindingStatus st = binding_status(full, qp);
    const LoadVector d(qp.loads);
    const FastSolveReport rep = fast_solve(qp, st.pattern, d);
    led.kkt(rep, qp, d);
    if (rep.singular) {
      ++bad;
    } else {
      led.optimal(qp, rep.x);
      const double dx = (rep.x - full.x).lpNorm<Eigen::Infinity>() / (1.0 + full.x.lpNorm<Eigen::Infinity>());
      const double dobj = std::abs(rep.objective - full.objective) / std::max(1.0, std::abs(full.objective));
      worst_x = std::max(worst_x, dx);
      worst_obj = std::max(worst_obj, dobj);
      if (dx > 1e-6 || dobj > 1e-6) ++bad;
    }
    rows += static_cast<std::size_t>(qp.num_ineq());
    agree += static_cast<std::size_t>(qp.num_ineq()) - st.mismatches.size();
    weak += st.weakly_active.size();
    for (auto i : st.weakly_active) ++weak_by_family[QuadraticProgram::family(qp.ineq_label(i))];
    unexplained += st.mismatches.size() - st.weakly_active.size();
    const auto* s = qp.block("s");
    if (full.x.segment(s->offset, s->size).maxCoeff() <= 1e-9) weak_no_shed += st.weakly_active.size();
  }
  const double elapsed = seconds_since(t0);
  RandomRuns out;
  out.equivalence = {bad == 0 && elapsed < 120.0,
                     fmt("%d optimal instances (%d infeasible skipped), %d mismatched; worst rel dx %.2e, dobj %.2e; "
                         "%.1f s",
                         optimal, rejected, bad, worst_x, worst_obj, elapsed)};
  const double rate = static_cast<double>(agree) / static_cast<double>(rows);
  std::string families;
  for (const auto& [fam, count] : weak_by_family) families += fmt(" %s %zu", fam.c_str(), count);
  out.consistency = {rate >= 0.999 && unexplained == 0,
                     fmt("agreement %.4f%% of %zu rows (gate 99.9%%); %zu disagreements, %zu flagged weakly active, "
                         "%zu unexplained; %zu of the weakly active rows are in zero-shed instances; by family:",
                         100.0 * rate, rows, rows - agree, weak, unexplained, weak_no_shed) +
                         families};
  return out;
}

struct LearningRuns {
  Outcome learning, speedup, safety;
};

LearningRuns learning(Ledger& led) {
  LearningRuns out;
  const auto t0 = Clock::now();
  const GridCase g = load_case(testing::case_path("syn73.case"));
  SweepSpec spec;
  spec.axes = {{4, 50.0, 5.0, 50}, {26, 50.0, 5.0, 50}};
  spec.jobs = std::max(1u, std::thread::hardware_concurrency());
  const Dataset ds = generate_dataset(g, spec);
  const double t_data = seconds_since(t0);
  const OutputReduction red = reduce_outputs(ds);

  // Every retained column varies and every pruned column is constant.
  bool pruning_ok = red.varying.size() + red.constant.size() == red.num_rows;
  for (auto c : red.varying) {
    bool seen[2] = {false, false};
    for (const auto& t : ds.outputs) seen[t[c]] = true;
    pruning_ok = pruning_ok && seen[0] && seen[1];
  }
  for (const auto& [c, v] : red.constant) {
    for (const auto& t : ds.outputs) pruning_ok = pruning_ok && t[c] == v;
  }
  const std::set<std::vector<std::uint8_t>> unique(ds.outputs.begin(), ds.outputs.end());

  TrainConfig cfg;
  cfg.hidden = {64, 64, 64};
  cfg.learning_rate = 0.01;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.seed = 1;
  const TrainResult res = train(ds, red, cfg);
  const double elapsed = seconds_since(t0);
  const Accuracy& va = res.validation_accuracy;
  out.learning = {ds.size() == 2500 && pruning_ok && va.per_constraint >= 0.99 && elapsed < 600.0,
                  fmt("%zu samples; %zu of %zu columns vary, %zu unique patterns; held-out accuracy %.2f%% "
                      "per constraint, %.2f%% per sample; dataset %.0f s, total %.0f s",
                      ds.size(), red.varying.size(), red.num_rows, unique.size(), 100.0 * va.per_constraint,
                      100.0 * va.per_sample, t_data, elapsed)};

  const QuadraticProgram base = build(g);
  std::vector<double> t_full, t_kkt, t_path;
  std::size_t fallbacks = 0, within = 0, extrapolated = 0;
  double worst = 0.0;
  const std::size_t n_timed = 100;
  for (std::size_t k = 0; k < res.validation_indices.size(); ++k) {
    const LoadVector d(ds.inputs[res.validation_indices[k]]);
    const QuadraticProgram qp = base.with_loads(d);

    auto t = Clock::now();
    const PrimalDualSolution full = solve(qp);
    const double dt_full = seconds_since(t);

    t = Clock::now();
    const Prediction pred = predict(res.model, d);
    fast_solve(base, pred.pattern, d);
    const double dt_path = seconds_since(t);
    t = Clock::now();
    fast_solve(base, pred.pattern, d);
    const double dt_kkt = seconds_since(t);

    const FastPathResult fp = fast_path(base, res.model, d);
    led.kkt(fp.report, base, d);
    fallbacks += fp.fallback;
    extrapolated += fp.extrapolated;
    if (full.status == SolveStatus::optimal && fp.status == SolveStatus::optimal) {
      led.optimal(qp, full.x);
      led.optimal(qp, fp.x);
      const double rel = std::abs(fp.objective - full.objective) / std::max(1.0, std::abs(full.objective));
      worst = std::max(worst, rel);
      within += rel <= 1e-6;
    }
    if (k > 0 && k <= n_timed) {  // the first point warms caches and is discarded
      t_full.push_back(dt_full);
      t_kkt.push_back(dt_kkt);
      t_path.push_back(dt_path);
    }
  }
  const double m_full = median(t_full), m_kkt = median(t_kkt), m_path = median(t_path);
  out.speedup = {m_full / m_kkt >= 100.0 && m_kkt < 0.010,
                 fmt("%zu trials; median full solve %.2f ms, KKT fast path %.3f ms, ratio %.0fx; with prediction "
                     "%.3f ms, ratio %.0fx",
                     t_full.size(), 1e3 * m_full, 1e3 * m_kkt, m_full / m_kkt, 1e3 * m_path, m_full / m_path)};
  const std::size_t n = res.validation_indices.size();
  const double fb_rate = static_cast<double>(fallbacks) / static_cast<double>(n);
  out.safety = {n == 500 && within == n && fb_rate < 0.05,
                fmt("%zu held-out points, %zu within 1e-6 (worst %.2e); fallback rate %.2f%% (%zu), %zu extrapolated",
                    n, within, worst, 100.0 * fb_rate, fallbacks, extrapolated)};
  return out;
}

Outcome risk_checks() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  std::vector<double> s(100000);
  for (auto& v : s) v = nd(rng);
  const double cvar = cvar_alpha(LoadDistribution(EmpiricalLoad{s}), 0.95);
  const bool close = std::abs(cvar - 2.0627) <= 0.02;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  int ordered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(1 + static_cast<std::size_t>(300 * u(rng)));
    for (auto& v : x) v = std::round(100.0 * u(rng) * u(rng));
    const LoadDistribution d(EmpiricalLoad{x});
    const double a = 0.01 + 0.98 * u(rng);
    ordered += cvar_alpha(d, a) >= var_alpha(d, a);
  }
  return {close && ordered == 1000,
          fmt("empirical CVaR_0.95 of 1e5 normal draws %.4f (target 2.0627 +- 0.02); CVaR >= VaR on %d of 1000 arrays",
              cvar, ordered)};
}

Outcome fairness(Ledger& led) {
  std::string detail;
  bool ok = true;
  for (const char* name : {"3bus.case", "syn73.case"}) {
    GridCase g = load_case(testing::case_path(name));
    g.fairness.delta_pairs.clear();
    double prev_spread = INFINITY;
    std::string line = std::string(name) + ":";
    bool zero_ok = false;
    for (double delta : {0.2, 0.1, 0.05, 0.02, 0.01, 0.0}) {
      g.fairness.delta = delta;
      const QuadraticProgram qp = build(g);
      const PrimalDualSolution sol = solve(qp);
      if (sol.status == SolveStatus::optimal) {
        led.optimal(qp, sol.x);
        const auto* sb = qp.block("s");
        const Eigen::VectorXd s = sol.x.segment(sb->offset, sb->size);
        const double spread = s.maxCoeff() - s.minCoeff();
        ok = ok && spread <= prev_spread + 1e-9;
        prev_spread = spread;
        line += fmt(" d=%g spread %.4f;", delta, spread);
        if (delta == 0.0) zero_ok = spread <= 1e-6;
      } else {
        const bool flagged = sol.status == SolveStatus::infeasible && !sol.infeasible_rows.empty();
        line += fmt(" d=%g %s;", delta, flagged ? "infeasible (flagged)" : to_string(sol.status).c_str());
        if (delta == 0.0) zero_ok = flagged;
        ok = ok && flagged;
      }
    }
    ok = ok && zero_ok;
    detail += line + " ";
  }
  ok = ok && led.fairness_worst <= 1e-6;
  detail += fmt("worst fairness/shed-bound violation %.2e over %zu optimal solutions", led.fairness_worst,
                led.fairness_checked);
  return {ok, detail};
}

Outcome hygiene(const Ledger& led) {
  std::mt19937_64 rng(3);
  Mlp net = Mlp::init({4, 8, 8, 8, 3}, rng);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (auto& b : net.b) b = b.unaryExpr([&](double) { return nd(rng); });
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(4, 16, [&] { return 2.0 * nd(rng); });
  std::bernoulli_distribution coin(0.4);
  const Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(3, 16, [&] { return coin(rng) ? 1.0 : 0.0; });
  MlpGradient g;
  loss_and_gradient(net, x, y, LossKind::bce, 2.0, &g);
  double worst = 0.0;
  const double h = 1e-5;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = loss(net, x, y, LossKind::bce, 2.0);
    param = keep - h;
    const double down = loss(net, x, y, LossKind::bce, 2.0);
    param = keep;
    const double numeric = (up - down) / (2.0 * h);
    return std::abs(numeric - analytic);
  };
  double grad_norm = 0.0, diff_norm = 0.0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < net.W[l].size(); ++i) {
      const double e = probe(net.W[l].data()[i], g.dW[l].data()[i]);
      diff_norm += e * e;
      grad_norm += g.dW[l].data()[i] * g.dW[l].data()[i];
    }
    for (Eigen::Index i = 0; i < net.b[l].size(); ++i) {
      const double e = probe(net.b[l][i], g.db[l][i]);
      diff_norm += e * e;
      grad_norm += g.db[l][i] * g.db[l][i];
    }
  }
  worst = std::sqrt(diff_norm / grad_norm);
  return {worst <= 1e-6 && led.kkt_worst_ratio <= 1e-8,
          fmt("gradient relative error %.2e; worst KKT residual / (1 + |rhs|) %.2e over %zu nonsingular solves", worst,
              led.kkt_worst_ratio, led.kkt_solves)};
}

}  // namespace

int main() {
  bool all = true;
  Ledger led;
  report(1, "3-bus golden solution", golden(led), all);
  const RandomRuns rr = random_instances(led);
  report(2, "KKT equivalence on random instances", rr.equivalence, all);
  report(3, "binding-status consistency", rr.consistency, all);
  const LearningRuns lr = learning(led);
  report(4, "learning pipeline", lr.learning, all);
  report(5, "speedup", lr.speedup, all);
  report(6, "end-to-end safety", lr.safety, all);
  report(7, "risk module", risk_checks(), all);
  report(8, "fairness properties", fairness(led), all);
  report(9, "numerical hygiene", hygiene(led), all);
  return all ? 0 : 1;
}
