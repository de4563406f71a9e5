#include "loadshed/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw DimensionError("an MLP needs at least an input and an output layer");
  for (int s : sizes) {
    if (s <= 0) throw DimensionError("layer sizes must be positive");
  }
}

}  // namespace

Mlp Mlp::zeros(const std::vector<int>& layer_sizes) {
  check_sizes(layer_sizes);
  Mlp net;
  net.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    net.W.push_back(Eigen::MatrixXd::Zero(layer_sizes[l + 1], layer_sizes[l]));
    net.b.push_back(Eigen::VectorXd::Zero(layer_sizes[l + 1]));
  }
  return net;
}

Mlp Mlp::init(const std::vector<int>& layer_sizes, std::mt19937_64& rng) {
  Mlp net = zeros(layer_sizes);
  for (auto& w : net.W) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
  }
  return net;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (x.rows() != layer_sizes.front()) throw DimensionError("input has the wrong number of features");
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < W.size(); ++l) {
    Eigen::MatrixXd z = W[l] * a;
    z.colwise() += b[l];
    a = l + 1 < W.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : sigmoid(z);
  }
  return a;
}

double loss_and_gradient(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind,
                         double focal_gamma, MlpGradient* grad) {
  const std::size_t L = net.num_layers();
  if (x.cols() != y.cols() || y.rows() != net.layer_sizes.back()) {
    throw DimensionError("targets do not match the network output");
  }
  std::vector<Eigen::MatrixXd> acts{x};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = net.W[l] * acts.back();
    z.colwise() += net.b[l];
    pre.push_back(z);
    acts.push_back(l + 1 < L ? Eigen::MatrixXd(z.cwiseMax(0.0)) : sigmoid(z));
  }

  const Eigen::MatrixXd& zo = pre.back();
  const double count = static_cast<double>(y.size());
  double total = 0.0;
  Eigen::MatrixXd delta(zo.rows(), zo.cols());  // dLoss/dz at the output
  for (Eigen::Index j = 0; j < zo.cols(); ++j) {
    for (Eigen::Index i = 0; i < zo.rows(); ++i) {
      const double t = y(i, j);
      const double z = zo(i, j);
      // Signed logit so that p_t = sigmoid(zt).
      const double zt = t > 0.5 ? z : -z;
      const double log_pt = log_sigmoid(zt);
      const double pt = std::exp(log_pt);
      double li, dl_dzt;
      if (kind == LossKind::bce) {
        li = -log_pt;
        dl_dzt = -(1.0 - pt);
      } else {
        const double one_m = 1.0 - pt;
        const double w = std::pow(one_m, focal_gamma);
        li = -w * log_pt;
        // d/dzt of -(1-pt)^g log pt, with dpt/dzt = pt (1 - pt).
        const double dw = focal_gamma > 0.0 ? -focal_gamma * std::pow(one_m, focal_gamma - 1.0) * pt * one_m : 0.0;
        dl_dzt = -(dw * log_pt + w * one_m);
      }
      total += li;
      delta(i, j) = (t > 0.5 ? dl_dzt : -dl_dzt) / count;
    }
  }
  if (!grad) return total / count;

  grad->dW.assign(L, {});
  grad->db.assign(L, {});
  for (std::size_t l = L; l-- > 0;) {
    grad->dW[l] = delta * acts[l].transpose();
    grad->db[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = net.W[l].transpose() * delta;
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return total / count;
}

}  // namespace loadshed
