#include "loadshed/qp_builder.hpp"

#include <string>

#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

using Triplet = Eigen::Triplet<double>;

std::string indexed(const char* family, std::size_t i) {
  return std::string(family) + "[" + std::to_string(i) + "]";
}

struct RowBuilder {
  std::vector<Triplet> trip;
  std::vector<double> rhs;
  std::vector<std::string> labels;

  int add(std::string label, double rhs_value) {
    labels.push_back(std::move(label));
    rhs.push_back(rhs_value);
    return static_cast<int>(rhs.size() - 1);
  }
  void coef(int row, Eigen::Index col, double v) {
    if (v != 0.0) trip.emplace_back(row, static_cast<int>(col), v);
  }
  // Two rows: x_col <= hi and -x_col <= -lo.
  void bounds(const char* family, std::size_t k, Eigen::Index col, double lo, double hi) {
    const std::string base(family);
    int up = add(indexed((base + "_upper").c_str(), k), hi);
    coef(up, col, 1.0);
    int low = add(indexed((base + "_lower").c_str(), k), -lo);
    coef(low, col, -1.0);
  }
  SparseRowMatrix matrix(Eigen::Index n) const {
    SparseRowMatrix m(static_cast<Eigen::Index>(rhs.size()), n);
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    return m;
  }
  Eigen::VectorXd vector() const {
    return Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  }
};

}  // namespace

LoadVector::LoadVector(Eigen::VectorXd values) : d(std::move(values)) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] >= 0.0)) throw InvariantError("load vector entries must be finite and >= 0");
  }
}

LoadVector LoadVector::from(std::span<const double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return LoadVector(std::move(v));
}

LoadVector LoadVector::of_case(const GridCase& grid) {
  auto d = grid.demands();
  return from(d);
}

const VarBlock* QuadraticProgram::block(const std::string& name) const {
  for (const auto& blk : var_layout) {
    if (blk.name == name) return &blk;
  }
  return nullptr;
}

double QuadraticProgram::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(P * x) + q.dot(x) + r;
}

Eigen::VectorXd QuadraticProgram::q_for(const LoadVector& d) const {
  if (d.size() != static_cast<Eigen::Index>(load_slots.size())) {
    throw DimensionError("load vector has " + std::to_string(d.size()) + " entries, expected " +
                         std::to_string(load_slots.size()));
  }
  Eigen::VectorXd out = q;
  for (std::size_t k = 0; k < load_slots.size(); ++k) {
    out[load_slots[k].s_var] = lambda * d.d[static_cast<Eigen::Index>(k)];
  }
  return out;
}

Eigen::VectorXd QuadraticProgram::h_for(const LoadVector& d) const {
  if (d.size() != static_cast<Eigen::Index>(load_slots.size())) {
    throw DimensionError("load vector has " + std::to_string(d.size()) + " entries, expected " +
                         std::to_string(load_slots.size()));
  }
  Eigen::VectorXd out = h;
  for (const auto& slot : load_slots) out[slot.balance_row] = 0.0;
  for (std::size_t k = 0; k < load_slots.size(); ++k) {
    out[load_slots[k].balance_row] += d.d[static_cast<Eigen::Index>(k)];
  }
  return out;
}

QuadraticProgram QuadraticProgram::with_loads(const LoadVector& d) const {
  QuadraticProgram out = *this;
  out.q = q_for(d);
  out.h = h_for(d);
  for (std::size_t k = 0; k < load_slots.size(); ++k) {
    out.G.coeffRef(load_slots[k].balance_row, load_slots[k].s_var) = d.d[static_cast<Eigen::Index>(k)];
  }
  out.loads = d.d;
  return out;
}

std::string QuadraticProgram::family(const std::string& label) {
  return label.substr(0, label.find('['));
}

std::vector<LoadPair> pairwise_rows(const GridCase& grid) {
  std::vector<LoadPair> pairs;
  if (!grid.fairness.delta_pairs.empty()) {
    for (const auto& [pair, v] : grid.fairness.delta_pairs) pairs.push_back(pair);
    return pairs;
  }
  if (!grid.fairness.delta) return pairs;
  const std::size_t n = grid.num_loads();
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

double pair_bound(const GridCase& grid, const LoadPair& pair) {
  if (auto it = grid.fairness.delta_pairs.find(pair); it != grid.fairness.delta_pairs.end()) {
    return it->second;
  }
  if (!grid.fairness.delta) throw InvariantError("no spread bound for this pair");
  return *grid.fairness.delta;
}

QuadraticProgram build(const GridCase& grid, const LoadVector& d) {
  const std::size_t n_loads = grid.num_loads();
  if (static_cast<std::size_t>(d.size()) != n_loads) {
    throw DimensionError("load vector has " + std::to_string(d.size()) + " entries, case has " +
                         std::to_string(n_loads) + " loads");
  }
  if (grid.fairness.gamma) {
    const double g = *grid.fairness.gamma;
    if (!(g > 1.0) || g > static_cast<double>(n_loads)) {
      throw InvariantError("gamma must lie in (1, number of loads]");
    }
  }

  const bool network = !grid.copper_plate;
  const auto n_bus = static_cast<Eigen::Index>(grid.num_buses());
  const auto n_gen = static_cast<Eigen::Index>(grid.generators.size());
  const auto n_line = static_cast<Eigen::Index>(grid.lines.size());
  const auto n_shed = static_cast<Eigen::Index>(n_loads);

  QuadraticProgram qp;
  Eigen::Index off = 0;
  auto add_block = [&](const char* name, Eigen::Index size) {
    qp.var_layout.push_back({name, off, size});
    off += size;
  };
  if (network) add_block("theta", n_bus);
  add_block("g", n_gen);
  if (network) add_block("f", n_line);
  add_block("s", n_shed);
  const Eigen::Index n = off;
  const Eigen::Index th0 = network ? qp.block("theta")->offset : 0;
  const Eigen::Index g0 = qp.block("g")->offset;
  const Eigen::Index f0 = network ? qp.block("f")->offset : 0;
  const Eigen::Index s0 = qp.block("s")->offset;

  // Objective.
  qp.P.resize(n, n);
  std::vector<Triplet> ptrip;
  qp.q = Eigen::VectorXd::Zero(n);
  qp.r = 0.0;
  for (Eigen::Index k = 0; k < n_gen; ++k) {
    const auto& gen = grid.generators[static_cast<std::size_t>(k)];
    if (gen.a != 0.0) ptrip.emplace_back(static_cast<int>(g0 + k), static_cast<int>(g0 + k), 2.0 * gen.a);
    qp.q[g0 + k] = gen.b_lin;
    qp.r += gen.c;
  }
  qp.P.setFromTriplets(ptrip.begin(), ptrip.end());
  qp.lambda = grid.lambda;
  for (Eigen::Index k = 0; k < n_shed; ++k) qp.q[s0 + k] = grid.lambda * d.d[k];

  // Equalities: flow definition, nodal balance, reference angle.
  RowBuilder eq;
  qp.load_slots.resize(n_loads);
  if (network) {
    for (Eigen::Index l = 0; l < n_line; ++l) {
      const auto& line = grid.lines[static_cast<std::size_t>(l)];
      const double bij = grid.base_mva * line.b;
      int row = eq.add(indexed("flow_def", static_cast<std::size_t>(l + 1)), 0.0);
      eq.coef(row, f0 + l, 1.0);
      eq.coef(row, th0 + static_cast<Eigen::Index>(grid.bus_index(line.from)), -bij);
      eq.coef(row, th0 + static_cast<Eigen::Index>(grid.bus_index(line.to)), bij);
    }
    std::vector<int> bal_row(static_cast<std::size_t>(n_bus));
    for (Eigen::Index i = 0; i < n_bus; ++i) {
      bal_row[static_cast<std::size_t>(i)] =
          eq.add(indexed("balance", static_cast<std::size_t>(grid.buses[static_cast<std::size_t>(i)].id)), 0.0);
    }
    for (Eigen::Index k = 0; k < n_gen; ++k) {
      const auto bus = grid.bus_index(grid.generators[static_cast<std::size_t>(k)].bus);
      eq.trip.emplace_back(bal_row[bus], static_cast<int>(g0 + k), 1.0);
    }
    for (Eigen::Index l = 0; l < n_line; ++l) {
      const auto& line = grid.lines[static_cast<std::size_t>(l)];
      // -(A f)_i with A = +1 at from, -1 at to.
      eq.trip.emplace_back(bal_row[grid.bus_index(line.from)], static_cast<int>(f0 + l), -1.0);
      eq.trip.emplace_back(bal_row[grid.bus_index(line.to)], static_cast<int>(f0 + l), 1.0);
    }
    for (std::size_t k = 0; k < n_loads; ++k) {
      const int row = bal_row[grid.bus_index(grid.loads[k].bus)];
      qp.load_slots[k] = {s0 + static_cast<Eigen::Index>(k), row};
    }
  } else {
    int row = eq.add("balance", 0.0);
    for (Eigen::Index k = 0; k < n_gen; ++k) eq.trip.emplace_back(row, static_cast<int>(g0 + k), 1.0);
    for (std::size_t k = 0; k < n_loads; ++k) qp.load_slots[k] = {s0 + static_cast<Eigen::Index>(k), row};
  }
  for (std::size_t k = 0; k < n_loads; ++k) {
    const double dk = d.d[static_cast<Eigen::Index>(k)];
    const auto& slot = qp.load_slots[k];
    // Explicit zero keeps the slot in the sparsity pattern for later injection.
    eq.trip.emplace_back(static_cast<int>(slot.balance_row), static_cast<int>(slot.s_var), dk);
    eq.rhs[static_cast<std::size_t>(slot.balance_row)] += dk;
  }
  if (network) {
    int row = eq.add("theta_ref", 0.0);
    eq.coef(row, th0 + static_cast<Eigen::Index>(grid.reference_bus()), 1.0);
  }

  // Inequalities.
  RowBuilder in;
  if (network) {
    for (Eigen::Index i = 0; i < n_bus; ++i) {
      const auto& bus = grid.buses[static_cast<std::size_t>(i)];
      in.bounds("theta", static_cast<std::size_t>(bus.id), th0 + i, bus.theta_min, bus.theta_max);
    }
  }
  for (Eigen::Index k = 0; k < n_gen; ++k) {
    const auto& gen = grid.generators[static_cast<std::size_t>(k)];
    in.bounds("gen", static_cast<std::size_t>(k + 1), g0 + k, gen.g_min, gen.g_max);
  }
  if (network) {
    for (Eigen::Index l = 0; l < n_line; ++l) {
      const auto& line = grid.lines[static_cast<std::size_t>(l)];
      in.bounds("flow", static_cast<std::size_t>(l + 1), f0 + l, line.f_min, line.f_max);
    }
  }
  for (Eigen::Index k = 0; k < n_shed; ++k) {
    in.bounds("shed", static_cast<std::size_t>(k + 1), s0 + k, 0.0,
              grid.loads[static_cast<std::size_t>(k)].s_max);
  }
  const double share = n_shed > 0 ? grid.gamma() / static_cast<double>(n_shed) : 0.0;
  for (Eigen::Index i = 0; i < n_shed; ++i) {
    int row = in.add(indexed("fair_prop", static_cast<std::size_t>(i + 1)), 0.0);
    for (Eigen::Index j = 0; j < n_shed; ++j) in.coef(row, s0 + j, (i == j ? 1.0 : 0.0) - share);
  }
  for (const auto& pair : pairwise_rows(grid)) {
    const double delta = pair_bound(grid, pair);
    const auto si = s0 + static_cast<Eigen::Index>(pair.first - 1);
    const auto sj = s0 + static_cast<Eigen::Index>(pair.second - 1);
    int fwd = in.add("fair_pair[" + std::to_string(pair.first) + "," + std::to_string(pair.second) + "]", delta);
    in.coef(fwd, si, 1.0);
    in.coef(fwd, sj, -1.0);
    int bwd = in.add("fair_pair[" + std::to_string(pair.second) + "," + std::to_string(pair.first) + "]", delta);
    in.coef(bwd, sj, 1.0);
    in.coef(bwd, si, -1.0);
  }
  for (std::size_t k = 0; k < grid.features.size(); ++k) {
    int row = in.add("fair_feat[k=" + std::to_string(k + 1) + "]", grid.epsilon());
    for (Eigen::Index i = 0; i < n_shed; ++i) in.coef(row, s0 + i, grid.features[k][static_cast<std::size_t>(i)]);
  }

  qp.A = in.matrix(n);
  qp.b = in.vector();
  qp.G = eq.matrix(n);
  qp.h = eq.vector();
  qp.row_labels = std::move(in.labels);
  qp.row_labels.insert(qp.row_labels.end(), eq.labels.begin(), eq.labels.end());
  qp.loads = d.d;
  return qp;
}

double direct_objective(const GridCase& grid, const LoadVector& d, const Eigen::VectorXd& x,
                        const QuadraticProgram& qp) {
  const auto* g = qp.block("g");
  const auto* s = qp.block("s");
  double total = 0.0;
  for (std::size_t k = 0; k < grid.generators.size(); ++k) {
    const auto& gen = grid.generators[k];
    const double gk = x[g->offset + static_cast<Eigen::Index>(k)];
    total += gen.a * gk * gk + gen.b_lin * gk + gen.c;
  }
  double shed = 0.0;
  for (Eigen::Index k = 0; k < s->size; ++k) shed += x[s->offset + k] * d.d[k];
  return total + grid.lambda * shed;
}

namespace {

template <class Mat>
nlohmann::json sparse_json(const Mat& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (Eigen::Index o = 0; o < m.outerSize(); ++o) {
    for (typename Mat::InnerIterator it(m, o); it; ++it) {
      entries.push_back({it.row(), it.col(), it.value()});
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"entries", entries}};
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json qp_to_json(const QuadraticProgram& qp) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& blk : qp.var_layout) {
    layout.push_back({{"name", blk.name}, {"offset", blk.offset}, {"size", blk.size}});
  }
  std::vector<std::string> ineq(qp.row_labels.begin(), qp.row_labels.begin() + qp.num_ineq());
  std::vector<std::string> eq(qp.row_labels.begin() + qp.num_ineq(), qp.row_labels.end());
  return {{"n", qp.num_vars()},
          {"m", qp.num_ineq()},
          {"p", qp.num_eq()},
          {"P", sparse_json(qp.P)},
          {"q", to_std(qp.q)},
          {"r", qp.r},
          {"A", sparse_json(qp.A)},
          {"b", to_std(qp.b)},
          {"G", sparse_json(qp.G)},
          {"h", to_std(qp.h)},
          {"var_layout", layout},
          {"inequality_labels", ineq},
          {"equality_labels", eq}};
}

}  // namespace loadshed
