#include "hmmvt/io.hpp"

#include <toml++/toml.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hmmvt {

namespace {

toml::table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return toml::parse(in, path);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "malformed TOML in '" << path << "': " << e.description() << " (line "
       << e.source().begin.line << ")";
    throw IoError(os.str());
  }
}

double number_at(const toml::node& node, const std::string& what) {
  if (auto v = node.value<double>()) return *v;
  throw IoError(what + " must be a number");
}

Matrix read_matrix(const toml::table& table, const std::string& key, const std::string& path) {
  const toml::array* rows = table[key].as_array();
  if (!rows) throw IoError("'" + path + "': missing array '" + key + "'");
  const auto n_rows = static_cast<Eigen::Index>(rows->size());
  Eigen::Index n_cols = -1;
  Matrix out;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const toml::array* row = (*rows)[static_cast<std::size_t>(i)].as_array();
    if (!row) throw IoError("'" + path + "': " + key + " must be an array of rows");
    if (n_cols < 0) {
      n_cols = static_cast<Eigen::Index>(row->size());
      out.resize(n_rows, n_cols);
    }
    if (static_cast<Eigen::Index>(row->size()) != n_cols) {
      throw IoError("'" + path + "': rows of " + key + " differ in length");
    }
    for (Eigen::Index j = 0; j < n_cols; ++j) {
      out(i, j) = number_at((*row)[static_cast<std::size_t>(j)], "'" + path + "': " + key + " entry");
    }
  }
  return out;
}

std::optional<double> optional_number(const toml::table& table, const std::string& key,
                                      const std::string& path) {
  const toml::node* node = table.get(key);
  if (!node) return std::nullopt;
  return number_at(*node, "'" + path + "': " + key);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

HmmModel read_model_toml(const std::string& path, MixingPolicy policy) {
  const toml::table table = parse_file(path);
  const Matrix transition = read_matrix(table, "transition", path);
  const Matrix emission = read_matrix(table, "emission", path);
  const auto l = table["L"].value<std::int64_t>();
  const auto m = table["M"].value<std::int64_t>();
  if (!l || !m) throw IoError("'" + path + "': integer keys L and M are required");
  if (transition.rows() != *l || transition.cols() != *l) {
    throw ModelError("transition must be L x L");
  }
  if (emission.rows() != *m || emission.cols() != *l) throw ModelError("emission must be M x L");
  return build_model(transition, emission, policy);
}

ScenarioConfig read_scenario_toml(const std::string& path) {
  const toml::table table = parse_file(path);
  ScenarioConfig config;
  const double epsilon = optional_number(table, "epsilon", path).value_or(0.0);
  if (table.contains("transition")) {
    const Matrix transition = read_matrix(table, "transition", path);
    if (auto l = table["L"].value<std::int64_t>(); l && *l != transition.rows()) {
      throw ModelError("transition must be L x L");
    }
    config.model = build_unambiguous(transition, epsilon);
    if (transition.rows() == 3 && epsilon == 0.0 && transition(1, 1) == 0.0 && transition(2, 2) == 0.0) {
      config.params = scenario_params_from(transition);
    }
    return config;
  }
  ScenarioParams params;
  double* fields[] = {&params.p1, &params.p2, &params.q1, &params.r1};
  const char* names[] = {"p1", "p2", "q1", "r1"};
  for (int i = 0; i < 4; ++i) {
    const auto v = optional_number(table, names[i], path);
    if (!v) throw IoError("'" + path + "': missing key '" + names[i] + "'");
    *fields[i] = *v;
  }
  if (epsilon != 0.0) throw ModelError("the four-parameter scenario has epsilon = 0");
  if (auto l = table["L"].value<std::int64_t>(); l && *l != 3) {
    throw ModelError("the four-parameter scenario has L = 3");
  }
  validate(params);
  config.params = params;
  config.model = scenario_unambiguous(params);
  return config;
}

std::vector<int> read_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<int> labels;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    int value = 0;
    const char* begin = line.data() + first;
    const char* end = line.data() + last + 1;
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc() || result.ptr != end || value < 1) {
      throw IoError("'" + path + "' line " + std::to_string(line_number) +
                    ": expected a positive integer label");
    }
    labels.push_back(value - 1);
  }
  return labels;
}

void write_sequence(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out = open_output(path);
  for (const int label : labels) out << label + 1 << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out = open_output(path);
  const std::size_t k = trace.empty() ? 0 : trace.front().params.size();
  out << "iteration,log_likelihood_per_symbol";
  for (std::size_t i = 1; i <= k; ++i) out << ",param_" << i;
  out << ",delta_Linf\n";
  for (const TraceRow& row : trace) {
    out << row.iteration << ',' << format_double(row.log_likelihood_per_symbol);
    for (const double p : row.params) out << ',' << format_double(p);
    out << ',' << format_double(row.delta_linf) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_orbit_csv(const std::string& path, const std::vector<OrbitDiagnostic>& rows) {
  std::ofstream out = open_output(path);
  out << "period,representative,lambda_true,lambda_trial,phi_n0,dphi_dn\n";
  for (const OrbitDiagnostic& row : rows) {
    out << row.period << ',';
    for (const int symbol : row.representative) out << symbol + 1;
    out << ',' << format_double(row.lambda_true) << ',' << format_double(row.lambda_trial) << ','
        << format_double(row.phi_n0) << ',' << format_double(row.dphi_dn) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

nlohmann::json to_json(const ScenarioParams& params) {
  return {{"p1", params.p1}, {"p2", params.p2}, {"q1", params.q1}, {"r1", params.r1}};
}

nlohmann::json to_json(const ScenarioStats& stats) {
  return {{"t0", stats.t0}, {"t1", stats.t1}, {"t2", stats.t2}, {"tau2", stats.tau2}, {"mu", stats.mu}};
}

nlohmann::json to_json(const VtFixedPoint& point) {
  return {{"nullified", to_string(point.nullified)},
          {"params", to_json(point.params)},
          {"f_inf", point.f_inf},
          {"f_1", point.f_1},
          {"stats_residual", point.stats_residual}};
}

nlohmann::json to_json(const Matrix& matrix) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) row.push_back(matrix(i, j));
    rows.push_back(row);
  }
  return rows;
}

void write_json(const std::string& path, const nlohmann::json& value) {
  std::ofstream out = open_output(path);
  out << value.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace hmmvt
