#pragma once

// Grid case data and the DC power-flow network matrices.
//
// Sign convention: the incidence column of line (i, j) is +1 at i and -1 at j,
// and f > 0 means power flowing from i to j. (A f)_i is therefore the net
// power leaving bus i, and nodal balance reads (A f)_i = g_i - (1 - s_i) d_i.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>
#include <json.hpp>

namespace loadshed {

inline constexpr double kDefaultThetaBound = 1.5707963267948966;  // pi / 2
inline constexpr double kDefaultLambda = 1.0e4;

struct Bus {
  int id = 0;
  double theta_min = -kDefaultThetaBound;
  double theta_max = kDefaultThetaBound;
  bool is_reference = false;

  bool operator==(const Bus&) const = default;
};

struct Line {
  int from = 0;
  int to = 0;
  double b = 0.0;  ///< inverse reactance, per unit on the case base
  double f_min = 0.0;
  double f_max = 0.0;

  bool operator==(const Line&) const = default;
};

struct Generator {
  int bus = 0;
  double a = 0.0;      ///< quadratic cost coefficient
  double b_lin = 0.0;  ///< linear cost coefficient
  double c = 0.0;      ///< constant cost
  double g_min = 0.0;
  double g_max = 0.0;

  bool operator==(const Generator&) const = default;
};

struct LoadPoint {
  int bus = 0;
  double d = 0.0;  ///< demand, MW
  double s_max = 1.0;

  bool operator==(const LoadPoint&) const = default;
};

/// Pair of 1-based load indices (i < j).
using LoadPair = std::pair<std::size_t, std::size_t>;

struct FairnessParams {
  /// Proportionality cap; unset means gamma = number of loads.
  std::optional<double> gamma;
  /// Uniform pairwise spread bound applied to every pair of loads.
  std::optional<double> delta;
  /// Explicit pairwise bounds; used instead of `delta` when non-empty.
  std::map<LoadPair, double> delta_pairs;
  /// Feature orthogonality threshold; unset means the vacuous value (number of loads).
  std::optional<double> epsilon;

  bool operator==(const FairnessParams&) const = default;
};

struct GridCase {
  std::string name;
  double base_mva = 100.0;
  bool copper_plate = false;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<LoadPoint> loads;
  /// K feature vectors, each with one entry per load, entries in [0, 1].
  std::vector<std::vector<double>> features;
  FairnessParams fairness;
  double lambda = kDefaultLambda;

  bool operator==(const GridCase&) const = default;

  std::size_t num_buses() const noexcept { return buses.size(); }
  std::size_t num_loads() const noexcept { return loads.size(); }

  /// Position of the bus with the given id. Throws InvariantError if absent.
  std::size_t bus_index(int id) const;
  /// Position of the reference bus (first flagged bus).
  std::size_t reference_bus() const;

  double gamma() const { return fairness.gamma.value_or(static_cast<double>(loads.size())); }
  double epsilon() const { return fairness.epsilon.value_or(static_cast<double>(loads.size())); }

  /// Current demand vector in load order.
  std::vector<double> demands() const;
};

enum class CaseFormat { text, json };

/// Parse a case from text. Applies defaults and validates every invariant.
GridCase parse_case(std::string_view text, CaseFormat format = CaseFormat::text);

/// Read a case file, choosing the format from the extension (".json" or text).
GridCase load_case(const std::filesystem::path& path);

/// Serialize to the text case format. parse_case(write_case(c)) == c.
std::string write_case(const GridCase& grid);

nlohmann::json case_to_json(const GridCase& grid);
GridCase case_from_json(const nlohmann::json& j);

/// Check every GridCase invariant; throws InvariantError naming the violation.
/// Also assigns the first bus as reference when a networked case flags none.
void validate(GridCase& grid);

/// L x N matrix mapping bus angles to line flows (MW); row of line (i, j) is
/// base_mva * b_ij * (e_i - e_j)^T.
Eigen::SparseMatrix<double> flow_matrix(const GridCase& grid);

/// N x L incidence matrix: +1 at the from-bus, -1 at the to-bus.
Eigen::SparseMatrix<double> incidence_matrix(const GridCase& grid);

}  // namespace loadshed
