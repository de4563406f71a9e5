#include "loadshed/grid_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double to_double(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    // from_chars rejects a leading '+'; allow it.
    if (!tok.empty() && tok.front() == '+') return to_double(tok.substr(1), line_no);
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line_no);
  }
  return v;
}

int to_int(std::string_view tok, std::size_t line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("expected an integer, got '" + std::string(tok) + "'", line_no);
  }
  return v;
}

bool to_flag(std::string_view tok, std::size_t line_no) {
  if (tok == "1" || tok == "true" || tok == "yes") return true;
  if (tok == "0" || tok == "false" || tok == "no") return false;
  throw ParseError("expected a boolean flag, got '" + std::string(tok) + "'", line_no);
}

void expect_columns(const std::vector<std::string_view>& toks, std::size_t lo, std::size_t hi,
                    std::string_view section, std::size_t line_no) {
  if (toks.size() < lo || toks.size() > hi) {
    std::ostringstream msg;
    msg << section << " row needs " << lo;
    if (hi != lo) msg << " to " << hi;
    msg << " columns, got " << toks.size();
    throw ParseError(msg.str(), line_no);
  }
}

GridCase parse_text(std::string_view text) {
  GridCase grid;
  enum class Section { none, bus, branch, gen, load, fairness, features };
  Section section = Section::none;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    if (auto c = line.find_first_of("#%"); c != std::string_view::npos) line = line.substr(0, c);
    auto toks = split_ws(line);
    if (toks.empty()) {
      if (nl == text.size()) break;
      continue;
    }

    if (toks[0] == "end") {
      if (section == Section::none) throw ParseError("'end' outside of a section", line_no);
      section = Section::none;
      continue;
    }

    switch (section) {
      case Section::none: {
        const auto key = toks[0];
        if (key == "bus" || key == "branch" || key == "gen" || key == "load" || key == "fairness" ||
            key == "features") {
          if (toks.size() != 1) throw ParseError("section header takes no arguments", line_no);
          section = key == "bus"      ? Section::bus
                    : key == "branch" ? Section::branch
                    : key == "gen"    ? Section::gen
                    : key == "load"   ? Section::load
                    : key == "fairness" ? Section::fairness
                                        : Section::features;
        } else if (key == "case") {
          if (toks.size() != 2) throw ParseError("'case' takes one name", line_no);
          grid.name = std::string(toks[1]);
        } else if (key == "base_mva") {
          if (toks.size() != 2) throw ParseError("'base_mva' takes one value", line_no);
          grid.base_mva = to_double(toks[1], line_no);
        } else if (key == "copper_plate") {
          if (toks.size() != 2) throw ParseError("'copper_plate' takes one flag", line_no);
          grid.copper_plate = to_flag(toks[1], line_no);
        } else {
          throw ParseError("unknown keyword '" + std::string(key) + "'", line_no);
        }
        break;
      }
      case Section::bus: {
        // id [theta_min theta_max [is_reference]]
        expect_columns(toks, 1, 4, "bus", line_no);
        if (toks.size() == 2) throw ParseError("bus row gives theta_min without theta_max", line_no);
        Bus b;
        b.id = to_int(toks[0], line_no);
        if (toks.size() >= 3) {
          b.theta_min = to_double(toks[1], line_no);
          b.theta_max = to_double(toks[2], line_no);
        }
        if (toks.size() == 4) b.is_reference = to_flag(toks[3], line_no);
        grid.buses.push_back(b);
        break;
      }
      case Section::branch: {
        // from to b f_min f_max
        expect_columns(toks, 5, 5, "branch", line_no);
        grid.lines.push_back({to_int(toks[0], line_no), to_int(toks[1], line_no),
                              to_double(toks[2], line_no), to_double(toks[3], line_no),
                              to_double(toks[4], line_no)});
        break;
      }
      case Section::gen: {
        // bus a b c g_min g_max
        expect_columns(toks, 6, 6, "gen", line_no);
        grid.generators.push_back({to_int(toks[0], line_no), to_double(toks[1], line_no),
                                   to_double(toks[2], line_no), to_double(toks[3], line_no),
                                   to_double(toks[4], line_no), to_double(toks[5], line_no)});
        break;
      }
      case Section::load: {
        // bus d [s_max]
        expect_columns(toks, 2, 3, "load", line_no);
        LoadPoint l;
        l.bus = to_int(toks[0], line_no);
        l.d = to_double(toks[1], line_no);
        if (toks.size() == 3) l.s_max = to_double(toks[2], line_no);
        grid.loads.push_back(l);
        break;
      }
      case Section::fairness: {
        const auto key = toks[0];
        if (key == "delta_pair") {
          expect_columns(toks, 4, 4, "delta_pair", line_no);
          int i = to_int(toks[1], line_no);
          int j = to_int(toks[2], line_no);
          if (i < 1 || j < 1) throw ParseError("delta_pair load indices are 1-based", line_no);
          if (i == j) throw ParseError("delta_pair needs two distinct loads", line_no);
          LoadPair pair{static_cast<std::size_t>(std::min(i, j)),
                        static_cast<std::size_t>(std::max(i, j))};
          grid.fairness.delta_pairs[pair] = to_double(toks[3], line_no);
          break;
        }
        if (toks.size() != 2) throw ParseError("'" + std::string(key) + "' takes one value", line_no);
        const double v = to_double(toks[1], line_no);
        if (key == "gamma") {
          grid.fairness.gamma = v;
        } else if (key == "delta") {
          grid.fairness.delta = v;
        } else if (key == "epsilon") {
          grid.fairness.epsilon = v;
        } else if (key == "lambda") {
          grid.lambda = v;
        } else {
          throw ParseError("unknown fairness key '" + std::string(key) + "'", line_no);
        }
        break;
      }
      case Section::features: {
        std::vector<double> row;
        row.reserve(toks.size());
        for (auto t : toks) row.push_back(to_double(t, line_no));
        grid.features.push_back(std::move(row));
        break;
      }
    }
    if (nl == text.size()) break;
  }
  if (section != Section::none) throw ParseError("unterminated section at end of file", line_no);
  return grid;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

std::size_t GridCase::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw InvariantError("unknown bus id " + std::to_string(id));
}

std::size_t GridCase::reference_bus() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].is_reference) return i;
  }
  throw InvariantError("case has no reference bus");
}

std::vector<double> GridCase::demands() const {
  std::vector<double> d;
  d.reserve(loads.size());
  for (const auto& l : loads) d.push_back(l.d);
  return d;
}

void validate(GridCase& grid) {
  if (!(grid.base_mva > 0.0)) throw InvariantError("base_mva must be positive");
  if (grid.buses.empty()) throw InvariantError("case has no buses");
  if (!(grid.lambda >= 0.0)) throw InvariantError("lambda must be non-negative");

  std::set<int> ids;
  std::size_t n_ref = 0;
  for (const auto& b : grid.buses) {
    if (!ids.insert(b.id).second) throw InvariantError("duplicate bus id " + std::to_string(b.id));
    if (!(b.theta_min <= b.theta_max)) {
      throw InvariantError("bus " + std::to_string(b.id) + ": theta_min > theta_max");
    }
    if (b.is_reference) ++n_ref;
  }
  if (!grid.copper_plate) {
    if (n_ref == 0) grid.buses.front().is_reference = true;
    if (n_ref > 1) throw InvariantError("more than one reference bus");
  }

  auto check_bus = [&](int id, const std::string& what) {
    if (!ids.count(id)) {
      throw InvariantError(what + " references unknown bus " + std::to_string(id));
    }
  };
  for (std::size_t k = 0; k < grid.lines.size(); ++k) {
    const auto& l = grid.lines[k];
    const std::string tag = "branch " + std::to_string(k + 1);
    check_bus(l.from, tag);
    check_bus(l.to, tag);
    if (l.from == l.to) throw InvariantError(tag + " is a self-loop");
    if (!(l.b > 0.0)) throw InvariantError(tag + ": susceptance must be positive");
    if (!(l.f_min <= l.f_max)) throw InvariantError(tag + ": f_min > f_max");
  }
  for (std::size_t k = 0; k < grid.generators.size(); ++k) {
    const auto& g = grid.generators[k];
    const std::string tag = "generator " + std::to_string(k + 1);
    check_bus(g.bus, tag);
    if (!(g.a >= 0.0)) throw InvariantError(tag + ": quadratic cost coefficient must be >= 0");
    if (!(g.g_min <= g.g_max)) throw InvariantError(tag + ": g_min > g_max");
  }
  for (std::size_t k = 0; k < grid.loads.size(); ++k) {
    const auto& l = grid.loads[k];
    const std::string tag = "load " + std::to_string(k + 1);
    check_bus(l.bus, tag);
    if (!(l.d >= 0.0)) throw InvariantError(tag + ": demand must be >= 0");
    if (!(l.s_max >= 0.0 && l.s_max <= 1.0)) throw InvariantError(tag + ": s_max outside [0, 1]");
  }

  const auto n_loads = grid.loads.size();
  if (grid.fairness.gamma) {
    const double g = *grid.fairness.gamma;
    if (!(g > 1.0) || g > static_cast<double>(n_loads)) {
      throw InvariantError("gamma must lie in (1, number of loads]");
    }
  }
  if (grid.fairness.delta && !(*grid.fairness.delta >= 0.0)) {
    throw InvariantError("delta must be >= 0");
  }
  for (const auto& [pair, v] : grid.fairness.delta_pairs) {
    if (pair.first < 1 || pair.second > n_loads || pair.first >= pair.second) {
      throw InvariantError("delta_pair (" + std::to_string(pair.first) + "," +
                           std::to_string(pair.second) + ") is not a pair of loads");
    }
    if (!(v >= 0.0)) throw InvariantError("delta_pair bound must be >= 0");
  }
  if (grid.fairness.epsilon && !(*grid.fairness.epsilon >= 0.0)) {
    throw InvariantError("epsilon must be >= 0");
  }
  for (std::size_t k = 0; k < grid.features.size(); ++k) {
    const auto& v = grid.features[k];
    if (v.size() != n_loads) {
      throw InvariantError("feature " + std::to_string(k + 1) + " has " + std::to_string(v.size()) +
                           " entries, expected one per load (" + std::to_string(n_loads) + ")");
    }
    for (double x : v) {
      if (!(x >= 0.0 && x <= 1.0)) {
        throw InvariantError("feature " + std::to_string(k + 1) + " is not normalized to [0, 1]");
      }
    }
  }
}

GridCase parse_case(std::string_view text, CaseFormat format) {
  GridCase grid;
  if (format == CaseFormat::json) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    grid = case_from_json(j);
  } else {
    grid = parse_text(text);
  }
  validate(grid);
  return grid;
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open case file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto fmt = path.extension() == ".json" ? CaseFormat::json : CaseFormat::text;
  GridCase grid = parse_case(buf.str(), fmt);
  if (grid.name.empty()) grid.name = path.stem().string();
  return grid;
}

std::string write_case(const GridCase& grid) {
  std::ostringstream out;
  auto num = format_number;
  if (!grid.name.empty()) out << "case " << grid.name << "\n";
  out << "base_mva " << num(grid.base_mva) << "\n";
  out << "copper_plate " << (grid.copper_plate ? 1 : 0) << "\n\n";
  out << "bus\n# id theta_min theta_max is_reference\n";
  for (const auto& b : grid.buses) {
    out << b.id << ' ' << num(b.theta_min) << ' ' << num(b.theta_max) << ' '
        << (b.is_reference ? 1 : 0) << "\n";
  }
  out << "end\n\nbranch\n# from to b f_min f_max\n";
  for (const auto& l : grid.lines) {
    out << l.from << ' ' << l.to << ' ' << num(l.b) << ' ' << num(l.f_min) << ' ' << num(l.f_max)
        << "\n";
  }
  out << "end\n\ngen\n# bus a b c g_min g_max\n";
  for (const auto& g : grid.generators) {
    out << g.bus << ' ' << num(g.a) << ' ' << num(g.b_lin) << ' ' << num(g.c) << ' '
        << num(g.g_min) << ' ' << num(g.g_max) << "\n";
  }
  out << "end\n\nload\n# bus d s_max\n";
  for (const auto& l : grid.loads) {
    out << l.bus << ' ' << num(l.d) << ' ' << num(l.s_max) << "\n";
  }
  out << "end\n\nfairness\n";
  if (grid.fairness.gamma) out << "gamma " << num(*grid.fairness.gamma) << "\n";
  if (grid.fairness.delta) out << "delta " << num(*grid.fairness.delta) << "\n";
  for (const auto& [pair, v] : grid.fairness.delta_pairs) {
    out << "delta_pair " << pair.first << ' ' << pair.second << ' ' << num(v) << "\n";
  }
  if (grid.fairness.epsilon) out << "epsilon " << num(*grid.fairness.epsilon) << "\n";
  out << "lambda " << num(grid.lambda) << "\n";
  out << "end\n";
  if (!grid.features.empty()) {
    out << "\nfeatures\n";
    for (const auto& v : grid.features) {
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << num(v[i]);
      out << "\n";
    }
    out << "end\n";
  }
  return out.str();
}

nlohmann::json case_to_json(const GridCase& grid) {
  using nlohmann::json;
  json j;
  j["name"] = grid.name;
  j["base_mva"] = grid.base_mva;
  j["copper_plate"] = grid.copper_plate;
  j["bus"] = json::array();
  for (const auto& b : grid.buses) {
    j["bus"].push_back({{"id", b.id},
                        {"theta_min", b.theta_min},
                        {"theta_max", b.theta_max},
                        {"is_reference", b.is_reference}});
  }
  j["branch"] = json::array();
  for (const auto& l : grid.lines) {
    j["branch"].push_back(
        {{"from", l.from}, {"to", l.to}, {"b", l.b}, {"f_min", l.f_min}, {"f_max", l.f_max}});
  }
  j["gen"] = json::array();
  for (const auto& g : grid.generators) {
    j["gen"].push_back({{"bus", g.bus},
                        {"a", g.a},
                        {"b", g.b_lin},
                        {"c", g.c},
                        {"g_min", g.g_min},
                        {"g_max", g.g_max}});
  }
  j["load"] = json::array();
  for (const auto& l : grid.loads) {
    j["load"].push_back({{"bus", l.bus}, {"d", l.d}, {"s_max", l.s_max}});
  }
  json fair = json::object();
  if (grid.fairness.gamma) fair["gamma"] = *grid.fairness.gamma;
  if (grid.fairness.delta) fair["delta"] = *grid.fairness.delta;
  if (!grid.fairness.delta_pairs.empty()) {
    fair["delta_pairs"] = json::array();
    for (const auto& [pair, v] : grid.fairness.delta_pairs) {
      fair["delta_pairs"].push_back({pair.first, pair.second, v});
    }
  }
  if (grid.fairness.epsilon) fair["epsilon"] = *grid.fairness.epsilon;
  fair["lambda"] = grid.lambda;
  j["fairness"] = fair;
  j["features"] = grid.features;
  return j;
}

GridCase case_from_json(const nlohmann::json& j) {
  GridCase grid;
  try {
    grid.name = get_or<std::string>(j, "name", "");
    grid.base_mva = get_or<double>(j, "base_mva", 100.0);
    grid.copper_plate = get_or<bool>(j, "copper_plate", false);
    for (const auto& b : j.at("bus")) {
      Bus bus;
      bus.id = b.at("id").get<int>();
      bus.theta_min = get_or<double>(b, "theta_min", -kDefaultThetaBound);
      bus.theta_max = get_or<double>(b, "theta_max", kDefaultThetaBound);
      bus.is_reference = get_or<bool>(b, "is_reference", false);
      grid.buses.push_back(bus);
    }
    if (j.contains("branch")) {
      for (const auto& l : j.at("branch")) {
        grid.lines.push_back({l.at("from").get<int>(), l.at("to").get<int>(), l.at("b").get<double>(),
                              l.at("f_min").get<double>(), l.at("f_max").get<double>()});
      }
    }
    for (const auto& g : j.at("gen")) {
      grid.generators.push_back({g.at("bus").get<int>(), g.at("a").get<double>(),
                                 g.at("b").get<double>(), get_or<double>(g, "c", 0.0),
                                 g.at("g_min").get<double>(), g.at("g_max").get<double>()});
    }
    for (const auto& l : j.at("load")) {
      grid.loads.push_back(
          {l.at("bus").get<int>(), l.at("d").get<double>(), get_or<double>(l, "s_max", 1.0)});
    }
    if (j.contains("fairness")) {
      const auto& f = j.at("fairness");
      if (f.contains("gamma")) grid.fairness.gamma = f.at("gamma").get<double>();
      if (f.contains("delta")) grid.fairness.delta = f.at("delta").get<double>();
      if (f.contains("epsilon")) grid.fairness.epsilon = f.at("epsilon").get<double>();
      if (f.contains("lambda")) grid.lambda = f.at("lambda").get<double>();
      if (f.contains("delta_pairs")) {
        for (const auto& p : f.at("delta_pairs")) {
          auto i = p.at(0).get<std::size_t>();
          auto k = p.at(1).get<std::size_t>();
          if (i == k) throw ParseError("delta_pairs entry needs two distinct loads");
          grid.fairness.delta_pairs[{std::min(i, k), std::max(i, k)}] = p.at(2).get<double>();
        }
      }
    }
    if (j.contains("features")) grid.features = j.at("features").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed case JSON: ") + e.what());
  }
  return grid;
}

Eigen::SparseMatrix<double> flow_matrix(const GridCase& grid) {
  if (grid.copper_plate) throw UnsupportedOperation("flow_matrix: copper-plate case has no network");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * grid.lines.size());
  for (std::size_t l = 0; l < grid.lines.size(); ++l) {
    const auto& line = grid.lines[l];
    const double b = grid.base_mva * line.b;
    const auto i = static_cast<int>(grid.bus_index(line.from));
    const auto j = static_cast<int>(grid.bus_index(line.to));
    trip.emplace_back(static_cast<int>(l), i, b);
    trip.emplace_back(static_cast<int>(l), j, -b);
  }
  Eigen::SparseMatrix<double> k(static_cast<Eigen::Index>(grid.lines.size()),
                                static_cast<Eigen::Index>(grid.buses.size()));
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

Eigen::SparseMatrix<double> incidence_matrix(const GridCase& grid) {
  if (grid.copper_plate) {
    throw UnsupportedOperation("incidence_matrix: copper-plate case has no network");
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * grid.lines.size());
  for (std::size_t l = 0; l < grid.lines.size(); ++l) {
    const auto& line = grid.lines[l];
    trip.emplace_back(static_cast<int>(grid.bus_index(line.from)), static_cast<int>(l), 1.0);
    trip.emplace_back(static_cast<int>(grid.bus_index(line.to)), static_cast<int>(l), -1.0);
  }
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(grid.buses.size()),
                                static_cast<Eigen::Index>(grid.lines.size()));
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

}  // namespace loadshed
