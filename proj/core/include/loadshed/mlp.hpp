#pragma once

// Feed-forward multi-label classifier: ReLU hidden layers, sigmoid outputs.
// Samples are stored column-wise (features x batch).

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace loadshed {

enum class LossKind { bce, focal };

struct Mlp {
  std::vector<int> layer_sizes;  ///< [n_in, h1, ..., n_out]
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;

  /// Glorot-uniform weights, zero biases.
  static Mlp init(const std::vector<int>& layer_sizes, std::mt19937_64& rng);
  /// All weights and biases zero.
  static Mlp zeros(const std::vector<int>& layer_sizes);

  std::size_t num_layers() const noexcept { return W.size(); }
  /// Sigmoid outputs, n_out x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
};

struct MlpGradient {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

/// Mean loss over every (output, sample) entry of y (0/1 targets) and its
/// gradient. Focal loss uses weight (1 - p_t)^focal_gamma.
double loss_and_gradient(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind,
                         double focal_gamma, MlpGradient* grad);

inline double loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind,
                   double focal_gamma) {
  return loss_and_gradient(net, x, y, kind, focal_gamma, nullptr);
}

}  // namespace loadshed
