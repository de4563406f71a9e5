#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "loadshed/binding_learner.hpp"
#include "loadshed/errors.hpp"
#include "loadshed/fast_path.hpp"
#include "loadshed/kkt_reduction.hpp"
#include "loadshed/qp_builder.hpp"
#include "loadshed/risk.hpp"

namespace loadshed::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("bad number '" + std::string(s) + "' in " + what);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json block_values(const QuadraticProgram& qp, const Eigen::VectorXd& x) {
  json j = json::object();
  for (const auto& blk : qp.var_layout) j[blk.name] = vec(x.segment(blk.offset, blk.size));
  return j;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class F>
std::vector<double> time_trials(int trials, F&& body) {
  body();  // warm-up, discarded
  std::vector<double> seconds;
  seconds.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return seconds;
}

/// Rows of a CSV whose header names pi_1..pi_N; other columns are ignored.
std::vector<Eigen::VectorXd> read_points(const fs::path& path, std::size_t num_loads) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty points file " + path.string());
  std::vector<std::size_t> cols(num_loads, static_cast<std::size_t>(-1));
  const auto header = split(line, ',');
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string h = trim(header[c]);
    if (h.rfind("pi_", 0) != 0) continue;
    const auto k = static_cast<std::size_t>(parse_double(h.substr(3), path.string()));
    if (k >= 1 && k <= num_loads) cols[k - 1] = c;
  }
  for (std::size_t k = 0; k < num_loads; ++k) {
    if (cols[k] == static_cast<std::size_t>(-1)) {
      throw ParseError(path.string() + ": missing column pi_" + std::to_string(k + 1));
    }
  }
  std::vector<Eigen::VectorXd> pts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    Eigen::VectorXd d(static_cast<Eigen::Index>(num_loads));
    for (std::size_t k = 0; k < num_loads; ++k) {
      if (cols[k] >= fields.size()) throw ParseError("too few columns", lineno);
      d[static_cast<Eigen::Index>(k)] = parse_double(trim(fields[cols[k]]), path.string());
    }
    pts.push_back(std::move(d));
  }
  return pts;
}

/// Two-column CSV `node,value`, header optional.
std::vector<double> read_node_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t.rfind("node", 0) == 0) continue;
    const auto f = split(t, ',');
    if (f.size() < 2) throw ParseError("expected node,value", lineno);
    out.push_back(parse_double(trim(f[1]), path.string()));
  }
  return out;
}

std::vector<LoadBounds> read_bounds(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<LoadBounds> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t.rfind("node", 0) == 0) continue;
    const auto f = split(t, ',');
    if (f.size() < 3) throw ParseError("expected node,d_min,d_max", lineno);
    out.push_back({parse_double(trim(f[1]), path.string()), parse_double(trim(f[2]), path.string())});
  }
  return out;
}

void print_infeasibility(const PrimalDualSolution& sol) {
  std::set<std::string> families;
  for (const auto& label : sol.infeasible_rows) families.insert(QuadraticProgram::family(label));
  std::cerr << "problem is infeasible";
  if (!families.empty()) {
    std::cerr << "; constraint families involved:";
    for (const auto& f : families) std::cerr << ' ' << f;
  }
  std::cerr << '\n';
}

json solution_json(const QuadraticProgram& qp, const PrimalDualSolution& sol) {
  json j;
  j["status"] = to_string(sol.status);
  j["iterations"] = sol.iterations;
  j["objective"] = sol.objective;
  j["residuals"] = {{"primal", sol.residuals.primal},
                    {"dual", sol.residuals.dual},
                    {"complementarity", sol.residuals.complementarity}};
  j["x"] = vec(sol.x);
  j["blocks"] = block_values(qp, sol.x);
  j["mu"] = vec(sol.mu);
  j["w"] = vec(sol.w);
  j["row_labels"] = qp.row_labels;
  if (sol.status == SolveStatus::optimal) {
    const BindingStatus bs = binding_status(sol, qp);
    j["tau"] = bs.pattern.tau;
    json binding = json::array();
    for (std::size_t i = 0; i < bs.pattern.size(); ++i) {
      if (bs.pattern[i]) binding.push_back(qp.ineq_label(static_cast<Eigen::Index>(i)));
    }
    j["binding"] = binding;
    json weak = json::array();
    for (auto i : bs.weakly_active) weak.push_back(qp.ineq_label(i));
    j["weakly_active"] = weak;
  } else {
    j["infeasible_rows"] = sol.infeasible_rows;
  }
  return j;
}

}  // namespace

int exit_code_for(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return kOk;
    case SolveStatus::infeasible: return kInfeasible;
    case SolveStatus::max_iterations: return kMaxIterations;
  }
  return kFailure;
}

GridCase load_with_overrides(const fs::path& path, const CaseOverrides& ov) {
  GridCase grid = load_case(path);
  if (ov.lambda) grid.lambda = *ov.lambda;
  if (ov.gamma) grid.fairness.gamma = *ov.gamma;
  if (ov.epsilon) grid.fairness.epsilon = *ov.epsilon;
  if (ov.delta) {
    grid.fairness.delta = *ov.delta;
    grid.fairness.delta_pairs.clear();
  }
  if (ov.copper_plate) {
    grid.copper_plate = true;
    grid.lines.clear();
  }
  if (!ov.loads.empty()) {
    if (ov.loads.size() != grid.loads.size()) {
      throw DimensionError("--loads has " + std::to_string(ov.loads.size()) + " values, case has " +
                           std::to_string(grid.loads.size()) + " loads");
    }
    for (std::size_t k = 0; k < ov.loads.size(); ++k) grid.loads[k].d = ov.loads[k];
  }
  for (const auto& set : ov.load_sets) {
    const auto eq = set.find('=');
    if (eq == std::string::npos) throw ParseError("--load expects k=value, got '" + set + "'");
    const auto k = static_cast<std::size_t>(parse_double(set.substr(0, eq), "--load"));
    if (k < 1 || k > grid.loads.size()) throw DimensionError("--load index out of range: " + set);
    grid.loads[k - 1].d = parse_double(set.substr(eq + 1), "--load");
  }
  validate(grid);
  return grid;
}

int cmd_solve(const GlobalOptions& g, const SolveArgs& a, RunArtifact& run) {
  run.inputs.push_back(a.case_file);
  const GridCase grid = load_with_overrides(a.case_file, a.overrides);
  const QuadraticProgram qp = build(grid);
  const PrimalDualSolution sol = solve(qp, g.solver);

  const fs::path out_path = g.output_dir / a.out;
  open_out(out_path) << solution_json(qp, sol).dump(2) << '\n';
  run.outputs.push_back(out_path);

  std::cout << "status " << to_string(sol.status) << "\niterations " << sol.iterations << "\nobjective "
            << num(sol.objective) << '\n';
  if (sol.status == SolveStatus::infeasible) print_infeasibility(sol);
  return exit_code_for(sol.status);
}

int cmd_sweep(const GlobalOptions& g, const SweepArgs& a, RunArtifact& run) {
  run.inputs.push_back(a.case_file);
  const GridCase grid = load_with_overrides(a.case_file, a.overrides);

  SweepSpec spec;
  spec.max_points = a.max_points;
  spec.jobs = g.jobs;
  spec.solver = g.solver;
  for (const auto& text : a.axes) {
    const auto f = split(text, ':');
    if (f.size() != 4) throw ParseError("--axis expects load:start:step:count, got '" + text + "'");
    const auto load = static_cast<std::size_t>(parse_double(f[0], "--axis"));
    if (load < 1) throw ParseError("--axis load index is 1-based");
    spec.axes.push_back({load - 1, parse_double(f[1], "--axis"), parse_double(f[2], "--axis"),
                         static_cast<std::size_t>(parse_double(f[3], "--axis"))});
  }

  Dataset ds = generate_dataset(grid, spec);
  ds.meta["case_file"] = a.case_file.string();
  const fs::path out_path = g.output_dir / a.out;
  write_dataset(ds, out_path);
  run.outputs.push_back(out_path);
  run.outputs.emplace_back(out_path.string() + ".meta.json");

  const OutputReduction red = reduce_outputs(ds);
  const std::set<std::vector<std::uint8_t>> unique(ds.outputs.begin(), ds.outputs.end());
  std::cout << "samples " << ds.size() << "\ninfeasible " << ds.meta.value("infeasible", 0)
            << "\nnot_converged " << ds.meta.value("not_converged", 0) << "\nvarying_constraints "
            << red.varying.size() << "\nunique_patterns " << unique.size() << '\n';
  return kOk;
}

int cmd_train(const GlobalOptions& g, const TrainArgs& a, RunArtifact& run) {
  run.inputs.push_back(a.dataset);
  const Dataset ds = read_dataset(a.dataset);
  const OutputReduction red = reduce_outputs(ds);

  TrainConfig cfg;
  cfg.hidden = a.hidden;
  cfg.learning_rate = a.learning_rate;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  if (a.loss == "focal") {
    cfg.loss = LossKind::focal;
  } else if (a.loss != "bce") {
    throw ParseError("--loss must be bce or focal");
  }
  cfg.validation_fraction = a.validation_fraction;
  cfg.seed = g.seed;
  cfg.threshold = a.threshold;

  const TrainResult res = train(ds, red, cfg);

  const fs::path model_path = g.output_dir / a.out;
  write_model(res.model, model_path);
  const fs::path hist_path = g.output_dir / (fs::path(a.out).stem().string() + "_loss.csv");
  {
    auto out = open_out(hist_path);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < res.loss_history.size(); ++e) out << e + 1 << ',' << num(res.loss_history[e]) << '\n';
  }
  run.outputs = {model_path, hist_path};

  const std::set<std::vector<std::uint8_t>> unique(ds.outputs.begin(), ds.outputs.end());
  std::cout << "samples " << ds.size() << "\nvarying_constraints " << red.varying.size() << "\nunique_patterns "
            << unique.size() << "\nfinal_loss " << num(res.loss_history.back()) << "\ntrain_accuracy "
            << num(res.train_accuracy.per_constraint) << "\nvalidation_accuracy "
            << num(res.validation_accuracy.per_constraint) << "\nvalidation_sample_accuracy "
            << num(res.validation_accuracy.per_sample) << '\n';
  return kOk;
}

int cmd_fastsolve(const GlobalOptions& g, const FastSolveArgs& a, RunArtifact& run) {
  run.inputs = {a.case_file, a.model};
  const GridCase grid = load_with_overrides(a.case_file, a.overrides);
  const BindingModel model = read_model(a.model);
  const QuadraticProgram qp = build(grid);

  std::vector<Eigen::VectorXd> points;
  if (a.points.empty()) {
    points.push_back(LoadVector::of_case(grid).d);
  } else {
    run.inputs.push_back(a.points);
    points = read_points(a.points, grid.num_loads());
  }

  const fs::path csv_path = g.output_dir / a.out;
  const fs::path json_path = g.output_dir / (fs::path(a.out).stem().string() + ".json");
  auto csv = open_out(csv_path);
  csv << "point,fallback,extrapolated,singular,feasible,negative_dual,max_violation,worst_row,status,objective";
  if (a.compare) csv << ",full_objective,rel_diff";
  csv << '\n';
  json records = json::array();

  int code = kOk;
  std::size_t fallbacks = 0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const LoadVector d(points[k]);
    FastPathResult r;
    if (a.no_fallback) {
      Prediction pred = predict(model, d);
      r.pattern = std::move(pred.pattern);
      r.extrapolated = pred.extrapolated;
      r.report = fast_solve(qp, r.pattern, d);
      r.x = r.report.x;
      r.objective = r.report.objective;
      if (r.report.singular) {
        r.status = SolveStatus::infeasible;
        if (code == kOk) code = kSingular;
      } else if (r.report.needs_fallback()) {
        r.status = SolveStatus::infeasible;
        if (code == kOk) code = kInfeasible;
      }
    } else {
      r = fast_path(qp, model, d, g.solver);
      if (r.status != SolveStatus::optimal && code == kOk) code = exit_code_for(r.status);
    }
    fallbacks += r.fallback ? 1 : 0;

    csv << k + 1 << ',' << r.fallback << ',' << r.extrapolated << ',' << r.report.singular << ','
        << r.report.feasible << ',' << r.report.negative_dual << ',' << num(r.report.max_violation) << ','
        << r.report.worst_row << ',' << to_string(r.status) << ',' << num(r.objective);
    json rec = {{"point", k + 1}, {"fallback", r.fallback}, {"status", to_string(r.status)},
                {"objective", r.objective}, {"loads", vec(points[k])}};
    if (r.x.size()) rec["blocks"] = block_values(qp, r.x);
    if (a.compare) {
      const PrimalDualSolution full = solve(qp.with_loads(d), g.solver);
      const double rel = std::abs(r.objective - full.objective) / std::max(1.0, std::abs(full.objective));
      csv << ',' << num(full.objective) << ',' << num(rel);
      rec["full_objective"] = full.objective;
    }
    csv << '\n';
    records.push_back(std::move(rec));
  }
  open_out(json_path) << records.dump(2) << '\n';
  run.outputs = {csv_path, json_path};

  std::cout << "points " << points.size() << "\nfallbacks " << fallbacks << "\nfallback_rate "
            << num(points.empty() ? 0.0 : static_cast<double>(fallbacks) / static_cast<double>(points.size()))
            << '\n';
  return code;
}

int cmd_bench(const GlobalOptions& g, const BenchArgs& a, RunArtifact& run) {
  if (a.trials < 1) throw ParseError("--trials must be at least 1");
  run.inputs.push_back(a.case_file);
  const GridCase grid = load_with_overrides(a.case_file, a.overrides);
  const QuadraticProgram qp = build(grid);
  const LoadVector d = LoadVector::of_case(grid);

  BindingPattern tau;
  if (!a.model.empty()) {
    run.inputs.push_back(a.model);
    tau = predict(read_model(a.model), d).pattern;
  } else {
    const PrimalDualSolution sol = solve(qp, g.solver);
    if (sol.status != SolveStatus::optimal) return exit_code_for(sol.status);
    tau = binding_status(sol, qp).pattern;
  }

  const auto full = time_trials(a.trials, [&] { (void)solve(qp, g.solver); });
  bool fell_back = false;
  const auto fast = time_trials(a.trials, [&] { fell_back = fast_solve(qp, tau, d).needs_fallback(); });

  const double fmin = *std::min_element(full.begin(), full.end());
  const double fmed = median(full);
  const double fmax = *std::max_element(full.begin(), full.end());
  const double lmin = *std::min_element(fast.begin(), fast.end());
  const double lmed = median(fast);
  const double lmax = *std::max_element(fast.begin(), fast.end());

  const fs::path out_path = g.output_dir / a.out;
  {
    auto out = open_out(out_path);
    out << "quantity,min,median,max\n";
    out << "optimization," << num(fmin) << ',' << num(fmed) << ',' << num(fmax) << '\n';
    out << "linear_system," << num(lmin) << ',' << num(lmed) << ',' << num(lmax) << '\n';
    out << "speedup," << num(fmin / lmin) << ',' << num(fmed / lmed) << ',' << num(fmax / lmax) << '\n';
  }
  run.outputs.push_back(out_path);

  std::cout << "trials " << a.trials << "\noptimization_median_s " << num(fmed) << "\nlinear_system_median_s "
            << num(lmed) << "\nspeedup_median " << num(fmed / lmed) << '\n';
  if (fell_back) std::cout << "warning: the pattern fails verification at these loads\n";
  return kOk;
}

int cmd_fairness_sweep(const GlobalOptions& g, const FairnessSweepArgs& a, RunArtifact& run) {
  if (a.deltas.empty()) throw ParseError("--deltas needs at least one value");
  run.inputs.push_back(a.case_file);

  struct Column {
    double delta;
    SolveStatus status;
    std::vector<double> s;
  };
  std::vector<Column> cols;
  std::vector<LoadPoint> loads;
  for (double delta : a.deltas) {
    if (delta < 0) throw InvariantError("delta must be >= 0");
    CaseOverrides ov = a.overrides;
    ov.delta = delta;
    const GridCase grid = load_with_overrides(a.case_file, ov);
    loads = grid.loads;
    const QuadraticProgram qp = build(grid);
    const PrimalDualSolution sol = solve(qp, g.solver);
    Column c{delta, sol.status, {}};
    if (sol.status == SolveStatus::optimal) {
      const VarBlock* sb = qp.block("s");
      for (Eigen::Index i = 0; i < sb->size; ++i) c.s.push_back(sol.x[sb->offset + i]);
    }
    cols.push_back(std::move(c));
  }

  const fs::path out_path = g.output_dir / a.out;
  auto out = open_out(out_path);
  out << "load,bus";
  for (const auto& c : cols) out << ",delta=" << num(c.delta);
  out << '\n';
  for (std::size_t i = 0; i < loads.size(); ++i) {
    out << i + 1 << ',' << loads[i].bus;
    for (const auto& c : cols) out << ',' << (c.s.empty() ? std::string() : num(c.s[i]));
    out << '\n';
  }
  out << "spread,";
  for (const auto& c : cols) {
    out << ',';
    if (!c.s.empty()) out << num(*std::max_element(c.s.begin(), c.s.end()) - *std::min_element(c.s.begin(), c.s.end()));
  }
  out << "\nstatus,";
  for (const auto& c : cols) out << ',' << to_string(c.status);
  out << '\n';
  out.close();
  run.outputs.push_back(out_path);

  for (const auto& c : cols) {
    std::cout << "delta " << num(c.delta) << ' ' << to_string(c.status) << '\n';
  }
  return kOk;
}

int cmd_risk(const GlobalOptions& g, const RiskArgs& a, RunArtifact& run) {
  const bool robust = !a.bounds.empty();
  if (robust == !a.distributions.empty()) throw ParseError("give exactly one of a distribution file or --bounds");

  LoadVector loads;
  const fs::path out_path = g.output_dir / a.out;
  auto out = open_out(out_path);
  if (robust) {
    run.inputs.push_back(a.bounds);
    const auto bounds = read_bounds(a.bounds);
    loads = robust_loads(bounds);
    out << "node,d_min,d_max,load\n";
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      out << i + 1 << ',' << num(bounds[i].d_min) << ',' << num(bounds[i].d_max) << ','
          << num(loads.d[static_cast<Eigen::Index>(i)]) << '\n';
    }
  } else {
    run.inputs.push_back(a.distributions);
    const auto dists = read_distributions(a.distributions);
    std::vector<double> alphas(dists.size(), a.alpha);
    if (!a.alpha_file.empty()) {
      run.inputs.push_back(a.alpha_file);
      alphas = read_node_values(a.alpha_file);
    }
    loads = risk_averse_loads(dists, alphas);
    out << "node,alpha,var,cvar\n";
    for (std::size_t i = 0; i < dists.size(); ++i) {
      out << i + 1 << ',' << num(alphas[i]) << ',' << num(var_alpha(dists[i], alphas[i])) << ','
          << num(loads.d[static_cast<Eigen::Index>(i)]) << '\n';
    }
  }
  out.close();
  run.outputs.push_back(out_path);

  if (a.case_file.empty()) return kOk;

  run.inputs.push_back(a.case_file);
  CaseOverrides ov = a.overrides;
  ov.loads.assign(loads.d.data(), loads.d.data() + loads.d.size());
  const GridCase grid = load_with_overrides(a.case_file, ov);
  const QuadraticProgram qp = build(grid);

  json j;
  j["loads"] = vec(loads.d);
  int code = kOk;
  if (!a.model.empty()) {
    run.inputs.push_back(a.model);
    const FastPathResult r = fast_path(qp, read_model(a.model), loads, g.solver);
    j["method"] = "fast_path";
    j["fallback"] = r.fallback;
    j["status"] = to_string(r.status);
    j["objective"] = r.objective;
    if (r.x.size()) j["blocks"] = block_values(qp, r.x);
    code = exit_code_for(r.status);
  } else {
    const PrimalDualSolution sol = solve(qp, g.solver);
    j = solution_json(qp, sol);
    j["loads"] = vec(loads.d);
    j["method"] = "full_solve";
    code = exit_code_for(sol.status);
    if (sol.status == SolveStatus::infeasible) print_infeasibility(sol);
  }
  const fs::path sol_path = g.output_dir / (fs::path(a.out).stem().string() + "_solution.json");
  open_out(sol_path) << j.dump(2) << '\n';
  run.outputs.push_back(sol_path);
  std::cout << "status " << j.value("status", "") << "\nobjective " << num(j.value("objective", 0.0)) << '\n';
  return code;
}

}  // namespace loadshed::cli
