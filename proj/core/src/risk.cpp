#include "loadshed/risk.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvariantError("alpha must lie in (0, 1)");
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::vector<double> sorted(const std::vector<double>& v) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

}  // namespace

LoadDistribution::LoadDistribution(EmpiricalLoad e) : dist_(std::move(e)) {
  const auto& s = std::get<EmpiricalLoad>(dist_).samples;
  if (s.empty()) throw InvariantError("empirical load distribution has no samples");
  for (double v : s) {
    if (!std::isfinite(v)) throw InvariantError("empirical load sample is not finite");
  }
}

LoadDistribution::LoadDistribution(NormalLoad n) : dist_(n) {
  if (!std::isfinite(n.mean) || !(n.stddev >= 0.0) || !std::isfinite(n.stddev)) {
    throw InvariantError("normal load distribution needs a finite mean and std >= 0");
  }
}

// Acklam's rational approximation, then one Halley step on the erfc-based CDF.
double normal_quantile(double p) {
  check_alpha(p);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double var_alpha(const LoadDistribution& dist, double alpha) {
  check_alpha(alpha);
  if (dist.is_normal()) {
    const auto& n = dist.normal();
    return n.stddev == 0.0 ? n.mean : n.mean + n.stddev * normal_quantile(alpha);
  }
  const auto s = sorted(dist.empirical().samples);
  const auto n = static_cast<double>(s.size());
  // Guard against alpha * n landing a hair above an integer.
  auto k = static_cast<std::size_t>(std::ceil(alpha * n - 1e-9 * n));
  k = std::clamp<std::size_t>(k, 1, s.size());
  return s[k - 1];
}

double cvar_alpha(const LoadDistribution& dist, double alpha) {
  check_alpha(alpha);
  if (dist.is_normal()) {
    const auto& n = dist.normal();
    if (n.stddev == 0.0) return n.mean;
    return n.mean + n.stddev * normal_pdf(normal_quantile(alpha)) / (1.0 - alpha);
  }
  const double v = var_alpha(dist, alpha);
  double sum = 0.0;
  std::size_t count = 0;
  for (double x : dist.empirical().samples) {
    if (x >= v) {
      sum += x;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

LoadVector risk_averse_loads(const std::vector<LoadDistribution>& dists, const std::vector<double>& alphas) {
  if (dists.size() != alphas.size()) {
    throw DimensionError("got " + std::to_string(dists.size()) + " distributions but " +
                         std::to_string(alphas.size()) + " alphas");
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(dists.size()));
  for (std::size_t i = 0; i < dists.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = std::max(0.0, cvar_alpha(dists[i], alphas[i]));
  }
  return LoadVector(std::move(out));
}

LoadVector robust_loads(const std::vector<LoadBounds>& bounds) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (!(bounds[i].d_min <= bounds[i].d_max)) {
      throw InvariantError("load bound " + std::to_string(i + 1) + ": d_min > d_max");
    }
    out[static_cast<Eigen::Index>(i)] = bounds[i].d_max;
  }
  return LoadVector(std::move(out));
}

std::vector<LoadDistribution> read_distributions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open distribution file " + path.string());
  std::vector<LoadDistribution> out;
  bool normal = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cells = split_csv(t);
    if (cells[0] == "node") {
      if (!out.empty()) throw ParseError("header after data rows", line_no);
      normal = cells.size() == 3 && cells[1] == "mean" && cells[2] == "std";
      continue;
    }
    std::vector<double> vals;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cells[k], &used));
        if (used != cells[k].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + cells[k] + "'", line_no);
      }
    }
    try {
      if (normal) {
        if (vals.size() != 2) throw ParseError("normal row needs node,mean,std", line_no);
        out.emplace_back(NormalLoad{vals[0], vals[1]});
      } else {
        if (vals.empty()) throw ParseError("sample row has no samples", line_no);
        out.emplace_back(EmpiricalLoad{std::move(vals)});
      }
    } catch (const InvariantError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace loadshed
