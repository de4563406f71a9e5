#pragma once

// Offline learning of binding patterns: sweep loads and record the binding
// status of every inequality, drop the columns that never change, train a
// classifier on the rest and predict full patterns for new loads.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "loadshed/grid_model.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/qp_solver.hpp"

namespace loadshed {

/// Values start, start + step, ..., start + (count - 1) step for one load.
struct SweepAxis {
  std::size_t load = 0;  ///< 0-based load index
  double start = 0.0;
  double step = 0.0;
  std::size_t count = 1;
};

struct SweepSpec {
  std::vector<SweepAxis> axes;
  std::size_t max_points = 100000;
  unsigned jobs = 1;
  SolverOptions solver;
  BindingTolerances tolerances;
};

struct Dataset {
  std::vector<Eigen::VectorXd> inputs;         ///< full demand vector per sample (MW)
  std::vector<std::vector<std::uint8_t>> outputs;  ///< tau per sample
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const noexcept { return inputs.size(); }
  /// Throws InvariantError if the invariants do not hold.
  void validate() const;
};

/// Solve every sweep point and record its binding pattern. Points that are not
/// optimal are skipped and counted in meta ("infeasible", "not_converged").
Dataset generate_dataset(const GridCase& grid, const SweepSpec& sweep);

struct OutputReduction {
  std::vector<std::size_t> varying;               ///< row indices whose status changes
  std::map<std::size_t, std::uint8_t> constant;   ///< fixed status of the others
  std::size_t num_rows = 0;

  std::vector<std::uint8_t> reconstruct(const std::vector<std::uint8_t>& varying_values) const;
};

OutputReduction reduce_outputs(const Dataset& ds);

struct TrainConfig {
  std::vector<int> hidden{64, 64, 64};
  double learning_rate = 0.01;
  int epochs = 500;
  std::size_t batch_size = 0;  ///< 0 = full batch
  LossKind loss = LossKind::bce;
  double focal_gamma = 2.0;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  double threshold = 0.5;
};

struct Accuracy {
  double per_constraint = 0.0;  ///< fraction of (sample, varying row) entries right
  double per_sample = 0.0;      ///< fraction of samples with every varying row right
  std::size_t samples = 0;
};

/// Trained classifier with everything needed to predict a full pattern.
struct BindingModel {
  Mlp net;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;  ///< > 0
  Eigen::VectorXd input_min;    ///< bounding box of the training inputs
  Eigen::VectorXd input_max;
  double threshold = 0.5;
  OutputReduction reduction;
};

struct TrainResult {
  BindingModel model;
  std::vector<double> loss_history;  ///< training loss per epoch
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
  Accuracy train_accuracy;
  Accuracy validation_accuracy;
};

/// Throws Error("no varying outputs") when red.varying is empty and on a
/// non-finite loss.
TrainResult train(const Dataset& ds, const OutputReduction& red, const TrainConfig& cfg);

struct Prediction {
  BindingPattern pattern;
  bool extrapolated = false;  ///< input outside the training bounding box
};

Prediction predict(const BindingModel& model, const LoadVector& pi);

/// Accuracy of the model on the given samples of ds.
Accuracy evaluate(const BindingModel& model, const Dataset& ds, const std::vector<std::size_t>& indices);

/// Dataset as CSV (pi_1..pi_k, tau_1..tau_m) plus `<path>.meta.json`.
void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path);

nlohmann::json model_to_json(const BindingModel& model);
BindingModel model_from_json(const nlohmann::json& j);
void write_model(const BindingModel& model, const std::filesystem::path& path);
BindingModel read_model(const std::filesystem::path& path);

}  // namespace loadshed
