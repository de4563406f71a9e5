#include <charconv>
#include <fstream>
#include <sstream>

#include "loadshed/binding_learner.hpp"
#include "loadshed/errors.hpp"

namespace loadshed {

namespace {

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_num(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("expected a number, got '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::filesystem::path meta_path(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".meta.json");
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("matrix data has the wrong size");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
  }
  return m;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path) {
  ds.validate();
  std::ofstream out(csv_path);
  if (!out) throw ParseError("cannot write dataset " + csv_path.string());
  const Eigen::Index k = ds.size() ? ds.inputs.front().size() : 0;
  const std::size_t m = ds.size() ? ds.outputs.front().size() : 0;
  std::string line;
  for (Eigen::Index i = 0; i < k; ++i) line += (i ? ",pi_" : "pi_") + std::to_string(i + 1);
  for (std::size_t i = 0; i < m; ++i) line += (k + static_cast<Eigen::Index>(i) ? ",tau_" : "tau_") + std::to_string(i + 1);
  out << line << '\n';
  for (std::size_t s = 0; s < ds.size(); ++s) {
    line.clear();
    for (Eigen::Index i = 0; i < k; ++i) {
      if (i) line += ',';
      line += num(ds.inputs[s][i]);
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (k || i) line += ',';
      line += ds.outputs[s][i] ? '1' : '0';
    }
    out << line << '\n';
  }
  std::ofstream meta(meta_path(csv_path));
  if (!meta) throw ParseError("cannot write dataset metadata " + meta_path(csv_path).string());
  meta << ds.meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open dataset " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset is empty", 1);
  const auto header = split(line);
  std::size_t k = 0;
  while (k < header.size() && header[k].starts_with("pi_")) ++k;
  for (std::size_t i = k; i < header.size(); ++i) {
    if (!header[i].starts_with("tau_")) throw ParseError("unexpected column '" + std::string(header[i]) + "'", 1);
  }
  const std::size_t m = header.size() - k;

  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ParseError("row has " + std::to_string(cells.size()) + " columns, header has " +
                           std::to_string(header.size()),
                       line_no);
    }
    Eigen::VectorXd pi(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) pi[static_cast<Eigen::Index>(i)] = parse_num(cells[i], line_no);
    std::vector<std::uint8_t> tau(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto c = cells[k + i];
      if (c != "0" && c != "1") throw ParseError("binding status must be 0 or 1", line_no);
      tau[i] = c == "1";
    }
    ds.inputs.push_back(std::move(pi));
    ds.outputs.push_back(std::move(tau));
  }
  const auto mp = meta_path(csv_path);
  if (std::filesystem::exists(mp)) {
    std::ifstream meta(mp);
    try {
      ds.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid dataset metadata: ") + e.what());
    }
  }
  try {
    ds.validate();
  } catch (const InvariantError& e) {
    throw ParseError(e.what());
  }
  return ds;
}

nlohmann::json model_to_json(const BindingModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.net.num_layers(); ++l) {
    layers.push_back({{"W", matrix_json(model.net.W[l])}, {"b", vector_json(model.net.b[l])}});
  }
  nlohmann::json constant = nlohmann::json::array();
  for (const auto& [i, v] : model.reduction.constant) constant.push_back({i, v});
  return {{"layer_sizes", model.net.layer_sizes},
          {"hidden_activation", "relu"},
          {"output_activation", "sigmoid"},
          {"layers", layers},
          {"input_mean", vector_json(model.input_mean)},
          {"input_scale", vector_json(model.input_scale)},
          {"input_min", vector_json(model.input_min)},
          {"input_max", vector_json(model.input_max)},
          {"threshold", model.threshold},
          {"reduction",
           {{"num_rows", model.reduction.num_rows}, {"varying", model.reduction.varying}, {"constant", constant}}}};
}

BindingModel model_from_json(const nlohmann::json& j) {
  try {
    BindingModel m;
    m.net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    for (const auto& layer : j.at("layers")) {
      m.net.W.push_back(matrix_from_json(layer.at("W")));
      m.net.b.push_back(vector_from_json(layer.at("b")));
    }
    if (m.net.layer_sizes.size() != m.net.W.size() + 1) throw ParseError("layer count does not match layer_sizes");
    for (std::size_t l = 0; l < m.net.W.size(); ++l) {
      if (m.net.W[l].rows() != m.net.layer_sizes[l + 1] || m.net.W[l].cols() != m.net.layer_sizes[l] ||
          m.net.b[l].size() != m.net.layer_sizes[l + 1]) {
        throw ParseError("layer " + std::to_string(l + 1) + " has incompatible dimensions");
      }
    }
    m.input_mean = vector_from_json(j.at("input_mean"));
    m.input_scale = vector_from_json(j.at("input_scale"));
    m.input_min = vector_from_json(j.at("input_min"));
    m.input_max = vector_from_json(j.at("input_max"));
    m.threshold = j.at("threshold").get<double>();
    if ((m.input_scale.array() <= 0.0).any()) throw ParseError("input scale must be positive");
    const auto& red = j.at("reduction");
    m.reduction.num_rows = red.at("num_rows").get<std::size_t>();
    m.reduction.varying = red.at("varying").get<std::vector<std::size_t>>();
    for (const auto& c : red.at("constant")) {
      m.reduction.constant.emplace(c.at(0).get<std::size_t>(), c.at(1).get<std::uint8_t>());
    }
    if (static_cast<int>(m.reduction.varying.size()) != m.net.layer_sizes.back() ||
        m.input_mean.size() != m.net.layer_sizes.front()) {
      throw ParseError("model dimensions do not match its output reduction or inputs");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
}

void write_model(const BindingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write model " + path.string());
  out << model_to_json(model).dump() << '\n';
}

BindingModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model " + path.string());
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
}

}  // namespace loadshed
