#pragma once

// Value-at-risk and conditional value-at-risk of nodal loads, and the load
// vectors built from them for the fast path.

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "loadshed/qp_builder.hpp"

namespace loadshed {

struct EmpiricalLoad {
  std::vector<double> samples;  ///< MW
};

struct NormalLoad {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Distribution of one nodal load. Throws InvariantError on empty or
/// non-finite samples and on a negative standard deviation.
class LoadDistribution {
 public:
  explicit LoadDistribution(EmpiricalLoad e);
  explicit LoadDistribution(NormalLoad n);

  bool is_normal() const noexcept { return std::holds_alternative<NormalLoad>(dist_); }
  const EmpiricalLoad& empirical() const { return std::get<EmpiricalLoad>(dist_); }
  const NormalLoad& normal() const { return std::get<NormalLoad>(dist_); }

 private:
  std::variant<EmpiricalLoad, NormalLoad> dist_;
};

/// Inverse of the standard normal CDF, 0 < p < 1.
double normal_quantile(double p);

/// min{z : F(z) >= alpha}. Empirical: the ceil(alpha n)-th order statistic.
double var_alpha(const LoadDistribution& dist, double alpha);

/// Mean of the tail at or above VaR (ties included). Normal: closed form.
double cvar_alpha(const LoadDistribution& dist, double alpha);

/// Elementwise CVaR with one alpha per node.
LoadVector risk_averse_loads(const std::vector<LoadDistribution>& dists, const std::vector<double>& alphas);

struct LoadBounds {
  double d_min = 0.0;
  double d_max = 0.0;
};

/// Worst case: the vector of upper bounds.
LoadVector robust_loads(const std::vector<LoadBounds>& bounds);

/// CSV with one node per line. A header `node,mean,std` marks a normal file;
/// otherwise each line is `node,s1,s2,...` (a header starting with `node` is
/// skipped). Distributions are returned in file order.
std::vector<LoadDistribution> read_distributions(const std::filesystem::path& path);

}  // namespace loadshed
