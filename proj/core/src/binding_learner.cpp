#include "loadshed/binding_learner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "loadshed/errors.hpp"

namespace loadshed {

void Dataset::validate() const {
  if (inputs.size() != outputs.size()) throw InvariantError("dataset has different input and output counts");
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].size() != inputs.front().size()) throw InvariantError("dataset inputs differ in length");
    if (outputs[k].size() != outputs.front().size()) throw InvariantError("dataset outputs differ in length");
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      if (!(inputs[k][i] >= 0.0) || !std::isfinite(inputs[k][i])) {
        throw InvariantError("dataset input " + std::to_string(k + 1) + " is negative or not finite");
      }
    }
  }
}

Dataset generate_dataset(const GridCase& grid, const SweepSpec& sweep) {
  const Eigen::VectorXd base = LoadVector::of_case(grid).d;
  std::size_t total = 1;
  for (const auto& ax : sweep.axes) {
    if (ax.load >= static_cast<std::size_t>(base.size())) {
      throw DimensionError("sweep axis refers to load " + std::to_string(ax.load + 1) + " of " +
                           std::to_string(base.size()));
    }
    if (ax.count == 0) throw InvariantError("sweep axis has zero points");
    total *= ax.count;
    if (total > sweep.max_points) {
      throw InvariantError("sweep has more than " + std::to_string(sweep.max_points) + " points");
    }
  }

  const QuadraticProgram qp0 = build(grid);
  struct Point {
    Eigen::VectorXd d;
    std::vector<std::uint8_t> tau;
    SolveStatus status = SolveStatus::max_iterations;
  };
  std::vector<Point> points(total);
  for (std::size_t k = 0; k < total; ++k) {
    Eigen::VectorXd d = base;
    std::size_t rem = k;
    // Last axis varies fastest.
    for (std::size_t a = sweep.axes.size(); a-- > 0;) {
      const auto& ax = sweep.axes[a];
      d[static_cast<Eigen::Index>(ax.load)] = ax.start + ax.step * static_cast<double>(rem % ax.count);
      rem /= ax.count;
    }
    points[k].d = std::move(d);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < total; k = next++) {
      Point& pt = points[k];
      const QuadraticProgram qp = qp0.with_loads(LoadVector(pt.d));
      const PrimalDualSolution sol = solve(qp, sweep.solver);
      pt.status = sol.status;
      if (sol.status == SolveStatus::optimal) pt.tau = binding_status(sol, qp, sweep.tolerances).pattern.tau;
    }
  };
  const unsigned jobs = std::max(1u, sweep.jobs);
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  Dataset ds;
  std::size_t infeasible = 0, not_converged = 0;
  for (auto& pt : points) {
    if (pt.status == SolveStatus::optimal) {
      ds.inputs.push_back(std::move(pt.d));
      ds.outputs.push_back(std::move(pt.tau));
    } else if (pt.status == SolveStatus::infeasible) {
      ++infeasible;
    } else {
      ++not_converged;
    }
  }
  if (ds.inputs.empty()) throw Error("no sweep point has an optimal solution");

  nlohmann::json axes = nlohmann::json::array();
  for (const auto& ax : sweep.axes) {
    axes.push_back({{"load", ax.load + 1}, {"start", ax.start}, {"step", ax.step}, {"count", ax.count}});
  }
  ds.meta = {{"case", grid.name},
             {"sweep", axes},
             {"points", total},
             {"samples", ds.inputs.size()},
             {"infeasible", infeasible},
             {"not_converged", not_converged},
             {"row_labels", std::vector<std::string>(qp0.row_labels.begin(),
                                                     qp0.row_labels.begin() + qp0.num_ineq())}};
  return ds;
}

std::vector<std::uint8_t> OutputReduction::reconstruct(const std::vector<std::uint8_t>& varying_values) const {
  if (varying_values.size() != varying.size()) throw DimensionError("wrong number of varying outputs");
  std::vector<std::uint8_t> tau(num_rows, 0);
  for (const auto& [i, v] : constant) tau[i] = v;
  for (std::size_t k = 0; k < varying.size(); ++k) tau[varying[k]] = varying_values[k];
  return tau;
}

OutputReduction reduce_outputs(const Dataset& ds) {
  if (ds.size() == 0) throw InvariantError("cannot reduce an empty dataset");
  ds.validate();
  OutputReduction red;
  red.num_rows = ds.outputs.front().size();
  for (std::size_t i = 0; i < red.num_rows; ++i) {
    const std::uint8_t first = ds.outputs.front()[i];
    bool varies = false;
    for (const auto& t : ds.outputs) {
      if (t[i] != first) {
        varies = true;
        break;
      }
    }
    if (varies) {
      red.varying.push_back(i);
    } else {
      red.constant.emplace(i, first);
    }
  }
  return red;
}

namespace {

Eigen::MatrixXd normalized_inputs(const BindingModel& model, const Dataset& ds,
                                  const std::vector<std::size_t>& idx) {
  const Eigen::Index k = model.input_mean.size();
  Eigen::MatrixXd x(k, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) =
        (ds.inputs[idx[j]] - model.input_mean).cwiseQuotient(model.input_scale);
  }
  return x;
}

Eigen::MatrixXd targets(const OutputReduction& red, const Dataset& ds, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(red.varying.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    for (std::size_t r = 0; r < red.varying.size(); ++r) {
      y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = ds.outputs[idx[j]][red.varying[r]];
    }
  }
  return y;
}

}  // namespace

Accuracy evaluate(const BindingModel& model, const Dataset& ds, const std::vector<std::size_t>& indices) {
  Accuracy acc;
  acc.samples = indices.size();
  if (indices.empty() || model.reduction.varying.empty()) {
    acc.per_constraint = acc.per_sample = 1.0;
    return acc;
  }
  const Eigen::MatrixXd p = model.net.forward(normalized_inputs(model, ds, indices));
  const Eigen::MatrixXd y = targets(model.reduction, ds, indices);
  std::size_t right = 0, samples_right = 0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    bool all = true;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const bool ok = (p(i, j) >= model.threshold) == (y(i, j) > 0.5);
      right += ok;
      all &= ok;
    }
    samples_right += all;
  }
  acc.per_constraint = static_cast<double>(right) / static_cast<double>(p.size());
  acc.per_sample = static_cast<double>(samples_right) / static_cast<double>(p.cols());
  return acc;
}

TrainResult train(const Dataset& ds, const OutputReduction& red, const TrainConfig& cfg) {
  ds.validate();
  if (red.varying.empty()) throw Error("no varying outputs: use the constant pattern directly");
  if (ds.size() < 2) throw InvariantError("training needs at least two samples");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
    throw InvariantError("validation fraction must lie in [0, 1)");
  }

  TrainResult res;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(ds.size())));
  res.validation_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  res.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(res.validation_indices.begin(), res.validation_indices.end());
  std::sort(res.train_indices.begin(), res.train_indices.end());

  BindingModel& model = res.model;
  model.reduction = red;
  model.threshold = cfg.threshold;
  const Eigen::Index k = ds.inputs.front().size();
  model.input_mean = Eigen::VectorXd::Zero(k);
  model.input_min = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
  model.input_max = Eigen::VectorXd::Constant(k, -std::numeric_limits<double>::infinity());
  for (auto i : res.train_indices) {
    model.input_mean += ds.inputs[i];
    model.input_min = model.input_min.cwiseMin(ds.inputs[i]);
    model.input_max = model.input_max.cwiseMax(ds.inputs[i]);
  }
  model.input_mean /= static_cast<double>(res.train_indices.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(k);
  for (auto i : res.train_indices) var += (ds.inputs[i] - model.input_mean).cwiseAbs2();
  var /= static_cast<double>(res.train_indices.size());
  model.input_scale = var.cwiseSqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });

  std::vector<int> sizes{static_cast<int>(k)};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(static_cast<int>(red.varying.size()));
  model.net = Mlp::init(sizes, rng);

  const Eigen::MatrixXd x_train = normalized_inputs(model, ds, res.train_indices);
  const Eigen::MatrixXd y_train = targets(red, ds, res.train_indices);
  const auto n_train = static_cast<std::size_t>(x_train.cols());
  const std::size_t batch = cfg.batch_size == 0 ? n_train : std::min(cfg.batch_size, n_train);

  std::vector<Eigen::Index> perm(n_train);
  std::iota(perm.begin(), perm.end(), 0);
  MlpGradient grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n_train) std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t len = std::min(batch, n_train - start);
      double l;
      if (len == n_train) {
        l = loss_and_gradient(model.net, x_train, y_train, cfg.loss, cfg.focal_gamma, &grad);
      } else {
        Eigen::MatrixXd xb(x_train.rows(), static_cast<Eigen::Index>(len));
        Eigen::MatrixXd yb(y_train.rows(), static_cast<Eigen::Index>(len));
        for (std::size_t j = 0; j < len; ++j) {
          xb.col(static_cast<Eigen::Index>(j)) = x_train.col(perm[start + j]);
          yb.col(static_cast<Eigen::Index>(j)) = y_train.col(perm[start + j]);
        }
        l = loss_and_gradient(model.net, xb, yb, cfg.loss, cfg.focal_gamma, &grad);
      }
      if (!std::isfinite(l)) throw Error("training diverged: loss is not finite");
      for (std::size_t L = 0; L < model.net.num_layers(); ++L) {
        model.net.W[L] -= cfg.learning_rate * grad.dW[L];
        model.net.b[L] -= cfg.learning_rate * grad.db[L];
      }
    }
    res.loss_history.push_back(loss(model.net, x_train, y_train, cfg.loss, cfg.focal_gamma));
  }

  res.train_accuracy = evaluate(model, ds, res.train_indices);
  res.validation_accuracy = evaluate(model, ds, res.validation_indices);
  return res;
}

Prediction predict(const BindingModel& model, const LoadVector& pi) {
  const Eigen::Index k = model.input_mean.size();
  if (pi.size() != k) {
    throw DimensionError("model expects " + std::to_string(k) + " loads, got " + std::to_string(pi.size()));
  }
  Prediction out;
  out.pattern.source = BindingSource::predicted;
  const double slack = 1e-9;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double span = slack * (1.0 + std::abs(model.input_max[i]));
    if (pi.d[i] < model.input_min[i] - span || pi.d[i] > model.input_max[i] + span) out.extrapolated = true;
  }
  std::vector<std::uint8_t> vary(model.reduction.varying.size(), 0);
  if (!vary.empty()) {
    const Eigen::VectorXd x = (pi.d - model.input_mean).cwiseQuotient(model.input_scale);
    const Eigen::MatrixXd p = model.net.forward(x);
    for (std::size_t r = 0; r < vary.size(); ++r) vary[r] = p(static_cast<Eigen::Index>(r), 0) >= model.threshold;
  }
  out.pattern.tau = model.reduction.reconstruct(vary);
  return out;
}

}  // namespace loadshed
