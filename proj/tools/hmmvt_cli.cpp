// Experiment driver: sampling, training, closed-form analysis and MAP
// quality reports. Exit codes: 0 success, 2 usage, 3 numeric check
// failure, 4 I/O.

#include "hmmvt/hmm.hpp"
#include "hmmvt/inference.hpp"
#include "hmmvt/io.hpp"
#include "hmmvt/scenario.hpp"
#include "hmmvt/unambiguous.hpp"
#include "hmmvt/version.hpp"
#include "hmmvt/zeta.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hmmvt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCheck = 3;
constexpr int kExitIo = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string model;
  std::string scenario;
  std::string trial;
  std::string data;
  std::string init;
  std::string out = ".";
  std::string method = "bw";
  std::string check;
  std::string beta_grid = "0.5,1,2,5,10,inf";
  std::string fixed = "r1";
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  double beta = 1.0;
  int kmax = 8;
  int trials = 0;
  int starts = 200;
  int max_iter = 500;
  double tol = 1e-8;
};

double parse_beta(const std::string& text) {
  if (text == "inf" || text == "infinity") return kInfiniteBeta;
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(value > 0.0)) throw UsageError("invalid beta '" + text + "'");
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::uint64_t require_seed(const Options& o, const std::string& what) {
  if (!o.seed) throw UsageError(what + " is stochastic: --seed is required");
  return *o.seed;
}

fs::path prepare_out(const Options& o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + o.out + "': " + ec.message());
  return dir;
}

json config_echo(const std::string& command, const Options& o) {
  json c = {{"command", command}, {"tool", "hmmvt"}, {"version", kVersion}};
  if (!o.model.empty()) c["model"] = o.model;
  if (!o.scenario.empty()) c["scenario"] = o.scenario;
  if (!o.trial.empty()) c["trial"] = o.trial;
  if (!o.data.empty()) c["data"] = o.data;
  if (!o.init.empty()) c["init"] = o.init;
  if (o.n > 0) c["n"] = o.n;
  if (o.seed) c["seed"] = *o.seed;
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  if (path.empty()) throw UsageError("--scenario is required");
  return read_scenario_toml(path);
}

ScenarioParams require_params(const ScenarioConfig& config) {
  if (!config.params) {
    throw UsageError("this analysis needs the three-state scenario (p1, p2, q1, r1)");
  }
  return *config.params;
}

HmmModel load_true_model(const Options& o) {
  if (o.model.empty() == o.scenario.empty()) {
    throw UsageError("give exactly one of --model or --scenario");
  }
  if (!o.model.empty()) return read_model_toml(o.model);
  return load_scenario(o.scenario).model.hmm();
}

std::string format_overlap_table(const MapQualityReport& report) {
  std::ostringstream os;
  os << "label,mean,std_error,ci_low,ci_high\n";
  const auto row = [&](const OverlapSummary& s) {
    os << s.label << ',' << format_double(s.mean) << ',' << format_double(s.std_error) << ','
       << format_double(s.ci_low) << ',' << format_double(s.ci_high) << '\n';
  };
  row(report.truth);
  for (const OverlapSummary& s : report.fixed_points) row(s);
  return os.str();
}

// ---------------------------------------------------------------- sample

int cmd_sample(const Options& o) {
  if (o.n == 0) throw UsageError("--n must be at least 1");
  const std::uint64_t seed = require_seed(o, "sample");
  const HmmModel model = load_true_model(o);
  const fs::path dir = prepare_out(o);
  const Sample s = sample(model, o.n, seed);

  write_sequence((dir / "states.txt").string(), s.states);
  write_sequence((dir / "observations.txt").string(), s.observations);

  std::vector<std::size_t> counts(static_cast<std::size_t>(model.num_observed()), 0);
  for (const int x : s.observations) ++counts[static_cast<std::size_t>(x)];
  json meta = config_echo("sample", o);
  meta["files"] = {{"states", "states.txt"}, {"observations", "observations.txt"}};
  meta["label_base"] = 1;
  meta["stationary"] = std::vector<double>(model.stationary().data(),
                                           model.stationary().data() + model.stationary().size());
  meta["symbol_counts"] = counts;
  write_json((dir / "sample.json").string(), meta);
  std::cout << "wrote " << o.n << " observations to " << dir.string() << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- train

Matrix random_columns(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::exponential_distribution<double> expo(1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = expo(rng);
    m.col(j) /= m.col(j).sum();
  }
  return m;
}

int cmd_train(const Options& o) {
  TrainOptions options;
  if (o.method == "bw") {
    options.method = TrainingMethod::baum_welch;
  } else if (o.method == "vt") {
    options.method = TrainingMethod::viterbi;
  } else {
    throw UsageError("--method must be bw or vt");
  }
  if (o.max_iter < 1) throw UsageError("--max-iter must be positive");
  options.max_iterations = o.max_iter;
  options.tolerance = o.tol;

  std::optional<ScenarioConfig> scenario;
  std::optional<HmmModel> truth;
  if (!o.scenario.empty()) {
    scenario = load_scenario(o.scenario);
    truth = scenario->model.hmm();
  } else if (!o.model.empty()) {
    truth = read_model_toml(o.model);
  }

  ObsSeq observations;
  if (!o.data.empty()) {
    observations = read_sequence(o.data);
  } else {
    if (!truth) throw UsageError("give --data, or --model/--scenario with --n and --seed to sample");
    if (o.n == 0) throw UsageError("--n must be at least 1 when sampling training data");
    observations = sample(*truth, o.n, require_seed(o, "sampling training data")).observations;
  }
  if (observations.empty()) throw UsageError("training data is empty");

  const bool scenario_shaped = scenario && scenario->params;
  HmmModel initial = truth ? *truth : build_model(Matrix::Identity(1, 1), Matrix::Ones(1, 1));
  if (!o.init.empty()) {
    initial = read_model_toml(o.init, MixingPolicy::flag);
  } else {
    std::mt19937_64 rng(require_seed(o, "random initialization") ^ 0x9e3779b97f4a7c15ULL);
    if (scenario_shaped) {
      initial = scenario_model(random_scenario(rng), MixingPolicy::flag);
    } else if (truth) {
      initial = build_model(random_columns(rng, truth->num_hidden(), truth->num_hidden()),
                            random_columns(rng, truth->num_observed(), truth->num_hidden()),
                            MixingPolicy::flag);
    } else {
      throw UsageError("give --init, or --model/--scenario to size a random initialization");
    }
  }
  check_observations(initial, observations);

  ParamView view = flatten_params;
  if (scenario_shaped) {
    view = [](const HmmModel& m) {
      const auto v = scenario_params_from(m.transition()).values();
      return std::vector<double>(v.begin(), v.end());
    };
  }

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(initial, observations, options, view);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir = prepare_out(o);
  write_trace_csv((dir / "trace.csv").string(), result.trace);

  json report = config_echo("train", o);
  report["method"] = o.method;
  report["max_iterations"] = o.max_iter;
  report["tolerance"] = o.tol;
  report["iterations"] = result.iterations;
  report["converged"] = result.converged;
  if (!result.converged) report["flag"] = "iteration cap reached before convergence";
  report["log_likelihood_per_symbol"] = result.trace.back().log_likelihood_per_symbol;
  report["transition"] = to_json(result.model.transition());
  report["emission"] = to_json(result.model.emission());
  if (scenario_shaped) {
    const ScenarioParams fitted = scenario_params_from(result.model.transition());
    const ScenarioStats truth_stats = scenario_stats(*scenario->params);
    report["params"] = to_json(fitted);
    report["stats"] = to_json(scenario_stats(fitted));
    report["stats_residual"] = {{"value", stats_residual(truth_stats, scenario_stats(fitted))},
                                {"oracle", "closed-form"}};
    double best = std::numeric_limits<double>::infinity();
    json nearest;
    for (const VtFixedPoint& p : vt_fixed_points(truth_stats)) {
      const auto a = p.params.values();
      const auto b = fitted.values();
      double d = 0.0;
      for (std::size_t i = 0; i < 4; ++i) d = std::max(d, std::abs(a[i] - b[i]));
      if (d < best) {
        best = d;
        nearest = to_json(p);
        nearest["distance_linf"] = d;
        nearest["fitted_value_of_nullified"] = b[static_cast<std::size_t>(p.nullified)];
      }
    }
    report["nearest_fixed_point"] = nearest;
    report["nearest_fixed_point"]["oracle"] = "closed-form";
  }
  write_json((dir / "result.json").string(), report);
  std::cerr << "train: " << result.iterations << " iterations, elapsed " << elapsed << " s\n";
  std::cout << (result.converged ? "converged" : "not converged (flagged)") << " after "
            << result.iterations << " iterations; ln P / N = "
            << format_double(result.trace.back().log_likelihood_per_symbol) << '\n';
  return kExitOk;
}

// --------------------------------------------------------------- analyze

struct CheckOutcome {
  double residual = 0.0;
  double tolerance = 0.0;
  std::string oracle;
  json details = json::object();
  bool passed() const { return residual <= tolerance; }
};

CheckOutcome check_constraint_identity(const Options& o, const fs::path& dir) {
  const int count = o.trials > 0 ? o.trials : 10000;
  std::mt19937_64 rng(require_seed(o, o.check));
  std::ostringstream csv;
  csv << "index,p1,p2,q1,r1,lhs,rhs,residual\n";
  CheckOutcome out{0.0, 1e-12, "closed-form", {}};
  for (int i = 0; i < count; ++i) {
    const ScenarioParams p = random_scenario(rng);
    const ScenarioStats s = scenario_stats(p);
    const double lhs = s.tau2 * (1.0 - s.t0);
    const double rhs = 1.0 - s.t0 - s.t1 - s.t2;
    const double r = std::abs(lhs - rhs);
    out.residual = std::max(out.residual, r);
    csv << i << ',' << format_double(p.p1) << ',' << format_double(p.p2) << ',' << format_double(p.q1)
        << ',' << format_double(p.r1) << ',' << format_double(lhs) << ',' << format_double(rhs) << ','
        << format_double(r) << '\n';
  }
  write_text((dir / "constraint_identity.csv").string(), csv.str());
  out.details["samples"] = count;
  return out;
}

CheckOutcome check_f_order(const Options& o, const fs::path& dir) {
  std::vector<double> betas;
  for (const std::string& b : split(o.beta_grid, ',')) betas.push_back(parse_beta(b));
  if (betas.empty()) throw UsageError("--beta-grid is empty");
  if (!std::is_sorted(betas.begin(), betas.end())) throw UsageError("--beta-grid must be increasing");
  const int count = o.trials > 0 ? o.trials : 1000;
  std::mt19937_64 rng(require_seed(o, "f-order"));
  std::ostringstream csv;
  csv << "pair";
  for (const double b : betas) csv << ",F_beta_" << (std::isinf(b) ? std::string("inf") : format_double(b));
  csv << ",max_violation\n";
  CheckOutcome out{0.0, 1e-10, "closed-form", {}};
  for (int i = 0; i < count; ++i) {
    const ScenarioStats truth = scenario_stats(random_scenario(rng));
    const ScenarioParams trial = random_scenario(rng);
    csv << i;
    double previous = -std::numeric_limits<double>::infinity();
    double violation = 0.0;
    for (const double b : betas) {
      const double f = fbeta_rate(truth, trial, b);
      violation = std::max(violation, previous - f);
      previous = f;
      csv << ',' << format_double(f);
    }
    csv << ',' << format_double(violation) << '\n';
    out.residual = std::max(out.residual, violation);
  }
  write_text((dir / "f_order.csv").string(), csv.str());
  out.details["pairs"] = count;
  out.details["beta_grid"] = o.beta_grid;
  return out;
}

CheckOutcome check_zeta_cross(const Options& o, const fs::path& dir) {
  const int k_max = o.kmax;
  if (k_max < 1 || k_max > 10) throw UsageError("zeta-cross needs 1 <= --kmax <= 10");
  const int count = o.trials > 0 ? o.trials : 100;
  std::mt19937_64 rng(require_seed(o, "zeta-cross"));
  std::ostringstream csv;
  csv << "pair,n,exact_vs_cycle,cycle_vs_cumulant\n";
  CheckOutcome out{0.0, 1e-10, "cross-expansion", {}};
  for (int i = 0; i < count; ++i) {
    const ScenarioParams tp = random_scenario(rng);
    const ScenarioParams hp = random_scenario(rng);
    const UnambiguousHmm true_u = scenario_unambiguous(tp);
    const UnambiguousHmm trial_u = scenario_unambiguous(hp);
    const HmmModel true_m = true_u.hmm(MixingPolicy::flag);
    const DeformedTransferSet trial_d = beta_deform(trial_u.hmm(MixingPolicy::flag), 1.0);
    for (const double n : {0.0, 0.5, 1.0}) {
      const ZetaSeries exact = exact_zeta_series(true_u, trial_u, n, k_max);
      const ZetaSeries cycle = zeta_series_cycle(true_m, trial_d, n, k_max);
      const ZetaSeries cumulant = zeta_series_cumulant(true_m, trial_d, n, k_max);
      double r1 = 0.0, r2 = 0.0;
      for (int k = 0; k <= k_max; ++k) {
        const auto j = static_cast<std::size_t>(k);
        r1 = std::max(r1, std::abs(exact.coefficients[j] - cycle.coefficients[j]));
        r2 = std::max(r2, std::abs(cycle.coefficients[j] - cumulant.coefficients[j]));
      }
      csv << i << ',' << format_double(n) << ',' << format_double(r1) << ',' << format_double(r2) << '\n';
      out.residual = std::max({out.residual, r1, r2});
    }
  }
  write_text((dir / "zeta_cross.csv").string(), csv.str());
  out.details["pairs"] = count;
  out.details["k_max"] = k_max;
  return out;
}

CheckOutcome check_fixed_points(const Options& o, const fs::path& dir) {
  const ScenarioParams truth = require_params(load_scenario(o.scenario));
  const ScenarioStats stats = scenario_stats(truth);
  const std::vector<VtFixedPoint> points = vt_fixed_points(stats);
  json array = json::array();
  CheckOutcome out{0.0, 1e-12, "closed-form", {}};
  const double f1 = f1_rate(stats, stats);
  for (const VtFixedPoint& p : points) {
    array.push_back(to_json(p));
    out.residual = std::max({out.residual, p.stats_residual, std::abs(p.f_inf - p.f_1),
                             std::abs(p.f_inf - f1)});
  }
  write_json((dir / "fixed_points.json").string(), array);
  out.details["f_1_truth"] = f1;
  out.details["count"] = points.size();
  return out;
}

CheckOutcome check_manifold(const Options& o, const fs::path& dir) {
  const ScenarioParams truth = require_params(load_scenario(o.scenario));
  const ScenarioStats stats = scenario_stats(truth);
  const int grid = o.trials > 0 ? o.trials : 1000;
  const double f1_truth = f1_rate(stats, stats);
  double finf_min = std::numeric_limits<double>::infinity();
  for (const VtFixedPoint& p : vt_fixed_points(stats)) finf_min = std::min(finf_min, p.f_inf);

  std::ostringstream csv;
  csv << "branch,p1,p2,q1,r1,f_1,f_inf\n";
  CheckOutcome out{0.0, 1e-10, "closed-form", {}};
  double grid_finf_min = std::numeric_limits<double>::infinity();
  int points = 0;
  for (int branch = 0; branch < 2; ++branch) {
    const auto [lo, hi] = ml_feasible_interval(stats, branch);
    if (std::isnan(lo)) continue;
    for (int i = 0; i <= grid; ++i) {
      const double a = lo + (hi - lo) * i / grid;
      ScenarioParams p;
      try {
        p = ml_manifold_point(stats, a, branch);
      } catch (const std::domain_error&) {
        continue;
      }
      const double f1 = f1_rate(stats, scenario_stats(p));
      const double finf = finf_rate(stats, p);
      out.residual = std::max(out.residual, std::abs(f1 - f1_truth));
      // F_inf on the manifold never drops below its value at the fixed points.
      out.residual = std::max(out.residual, finf_min - finf);
      grid_finf_min = std::min(grid_finf_min, finf);
      ++points;
      csv << branch << ',' << format_double(p.p1) << ',' << format_double(p.p2) << ','
          << format_double(p.q1) << ',' << format_double(p.r1) << ',' << format_double(f1) << ','
          << format_double(finf) << '\n';
    }
  }
  write_text((dir / "manifold.csv").string(), csv.str());
  out.details["points"] = points;
  out.details["f_1_truth"] = f1_truth;
  out.details["f_inf_fixed_points"] = finf_min;
  out.details["f_inf_grid_min"] = grid_finf_min;
  return out;
}

CheckOutcome check_partial(const Options& o, const fs::path& dir) {
  const ScenarioParams truth = require_params(load_scenario(o.scenario));
  const ScenarioStats stats = scenario_stats(truth);
  std::vector<std::pair<ScenarioParam, double>> fixed;
  const auto values = truth.values();
  for (const std::string& name : split(o.fixed, ',')) {
    const ScenarioParam p = scenario_param_from_string(name);
    fixed.emplace_back(p, values[static_cast<std::size_t>(p)]);
  }
  MultistartOptions options;
  options.starts = o.starts;
  options.seed = require_seed(o, "partial");
  const std::vector<FinfMinimum> minima = finf_local_minima(stats, fixed, options);

  std::ostringstream csv;
  csv << "rank,p1,p2,q1,r1,f_inf,t0,t1,t2,recovered_t0,recovered_t1,recovered_t2,hits\n";
  for (std::size_t i = 0; i < minima.size(); ++i) {
    const FinfMinimum& m = minima[i];
    csv << i + 1 << ',' << format_double(m.params.p1) << ',' << format_double(m.params.p2) << ','
        << format_double(m.params.q1) << ',' << format_double(m.params.r1) << ','
        << format_double(m.f_inf) << ',' << format_double(m.stats.t0) << ','
        << format_double(m.stats.t1) << ',' << format_double(m.stats.t2) << ',' << m.recovered[0]
        << ',' << m.recovered[1] << ',' << m.recovered[2] << ',' << m.hits << '\n';
  }
  write_text((dir / "partial.csv").string(), csv.str());
  CheckOutcome out{0.0, 0.0, "multistart", {}};
  out.details["fixed"] = o.fixed;
  out.details["starts"] = o.starts;
  out.details["minima"] = minima.size();
  out.details["cluster_radius"] = options.cluster_radius;
  return out;
}

CheckOutcome check_zeta_dump(const Options& o, const fs::path& dir) {
  const ScenarioConfig truth = load_scenario(o.scenario);
  const ScenarioConfig trial = o.trial.empty() ? truth : read_scenario_toml(o.trial);
  const HmmModel true_m = truth.model.hmm(MixingPolicy::flag);
  const DeformedTransferSet trial_d = beta_deform(trial.model.hmm(MixingPolicy::flag),
                                                  std::isinf(o.beta) ? 1.0 : o.beta);
  const std::vector<OrbitDiagnostic> rows = orbit_diagnostics(true_m, trial_d, o.kmax);
  write_orbit_csv((dir / "orbits.csv").string(), rows);
  CheckOutcome out{0.0, 0.0, "cycle-expansion", {}};
  out.details["orbits"] = rows.size();
  out.details["p_max"] = o.kmax;
  return out;
}

CheckOutcome check_likelihood(const Options& o, const fs::path& dir) {
  const ScenarioConfig truth = load_scenario(o.scenario);
  const ScenarioConfig trial = o.trial.empty() ? truth : read_scenario_toml(o.trial);
  const ExactRate exact = likelihood_rate_exact(truth.model, trial.model, 40);
  const int k_max = std::min(o.kmax, 12);
  const LikelihoodRate generic = likelihood_rate(truth.model.hmm(MixingPolicy::flag),
                                                 trial.model.hmm(MixingPolicy::flag), 1.0, k_max);
  CheckOutcome out{std::abs(exact.value - generic.value), 1e-8, "closed-form", {}};
  json d = {{"exact_rate", exact.value},
            {"offending_k", exact.offending_k},
            {"cycle_rate", generic.value},
            {"cycle_rate_finite_difference", generic.finite_difference},
            {"cycle_tail_used", generic.tail_used},
            {"k_max", k_max}};
  if (truth.params && trial.params) {
    const double f1 = f1_rate(scenario_stats(*truth.params), scenario_stats(*trial.params));
    d["f_1_closed_form"] = f1;
    out.residual = std::max(out.residual, std::abs(-f1 - exact.value));
  }
  if (std::isinf(exact.value) && std::isinf(generic.value)) out.residual = 0.0;
  out.details = d;
  write_json((dir / "likelihood.json").string(), d);
  return out;
}

CheckOutcome check_brute_force(const Options& o, const fs::path& dir) {
  const ScenarioConfig truth = load_scenario(o.scenario);
  const HmmModel m = truth.model.hmm(MixingPolicy::flag);
  const DeformedTransferSet d = beta_deform(m, 1.0);
  const int length = o.n > 0 ? static_cast<int>(o.n) : 10;
  std::ostringstream csv;
  csv << "n,zeta_root,brute_force,difference\n";
  CheckOutcome out{0.0, 1e-4, "brute-force", {}};
  for (const double n : {0.0, 1.0}) {
    const double root = zeta_root(zeta_series_cycle(m, d, n, std::min(o.kmax, 12)));
    const double brute = brute_force_lambda(m, d, n, length);
    out.residual = std::max(out.residual, std::abs(root - brute));
    csv << format_double(n) << ',' << format_double(root) << ',' << format_double(brute) << ','
        << format_double(root - brute) << '\n';
  }
  write_text((dir / "brute_force.csv").string(), csv.str());
  out.details["length"] = length;
  out.details["k_max"] = o.kmax;
  return out;
}

CheckOutcome check_free_energy(const Options& o, const fs::path& dir) {
  const ScenarioParams truth = require_params(load_scenario(o.scenario));
  const ScenarioParams trial =
      o.trial.empty() ? truth : require_params(read_scenario_toml(o.trial));
  const double closed = fbeta_rate(scenario_stats(truth), trial, o.beta);
  json d = {{"beta", std::isinf(o.beta) ? json("inf") : json(o.beta)}, {"closed_form", closed}};
  if (o.n > 0) {
    const FreeEnergyEstimate exact = gibbs_free_energy_exact(
        scenario_model(truth), scenario_model(trial, MixingPolicy::flag), o.beta, static_cast<int>(o.n));
    d["exact_enumeration"] = exact.value_per_symbol;
    d["enumeration_length"] = o.n;
  }
  write_json((dir / "free_energy.json").string(), d);
  CheckOutcome out{0.0, 0.0, "closed-form", d};
  return out;
}

int cmd_analyze(const Options& o) {
  using Check = CheckOutcome (*)(const Options&, const fs::path&);
  const std::vector<std::pair<std::string, Check>> checks = {
      {"katar", check_constraint_identity},      {"constraint-identity", check_constraint_identity},
      {"f-order", check_f_order},
      {"zeta-cross", check_zeta_cross}, {"fixed-points", check_fixed_points},
      {"manifold", check_manifold},     {"partial", check_partial},
      {"zeta-dump", check_zeta_dump},   {"likelihood", check_likelihood},
      {"brute-force", check_brute_force}, {"free-energy", check_free_energy},
  };
  const auto it = std::find_if(checks.begin(), checks.end(),
                               [&](const auto& c) { return c.first == o.check; });
  if (it == checks.end()) {
    std::string names;
    for (const auto& c : checks) names += (names.empty() ? "" : ", ") + c.first;
    throw UsageError("unknown --check '" + o.check + "' (one of " + names + ")");
  }
  const fs::path dir = prepare_out(o);
  const CheckOutcome outcome = it->second(o, dir);

  json report = config_echo("analyze", o);
  report["check"] = o.check;
  report["oracle"] = outcome.oracle;
  report["tolerance"] = outcome.tolerance;
  report["max_residual"] = outcome.residual;
  report["passed"] = outcome.passed();
  report["details"] = outcome.details;
  std::string stem = o.check;
  std::replace(stem.begin(), stem.end(), '-', '_');
  write_json((dir / (stem + "_report.json")).string(), report);
  std::cout << o.check << ": max residual " << format_double(outcome.residual) << " (tolerance "
            << format_double(outcome.tolerance) << ", oracle " << outcome.oracle << ") "
            << (outcome.passed() ? "PASS" : "FAIL") << '\n';
  return outcome.passed() ? kExitOk : kExitCheck;
}

// ----------------------------------------------------------- map-quality

int cmd_map_quality(const Options& o) {
  const ScenarioParams truth = require_params(load_scenario(o.scenario));
  const std::size_t n = o.n > 0 ? o.n : 100000;
  const int trials = o.trials > 0 ? o.trials : 20;
  const std::uint64_t seed = require_seed(o, "map-quality");
  const MapQualityReport report = map_quality_ranking(truth, n, seed, trials);

  const fs::path dir = prepare_out(o);
  write_text((dir / "overlaps.csv").string(), format_overlap_table(report));
  json out = config_echo("map-quality", o);
  out["n"] = n;
  out["trials"] = trials;
  out["oracle"] = "monte-carlo";
  out["confidence"] = "mean +/- 1.96 standard errors";
  out["conclusive"] = report.conclusive;
  out["winner"] = report.conclusive ? json(report.fixed_points[static_cast<std::size_t>(report.winner)].label)
                                    : json("inconclusive");
  out["spread"] = report.spread;
  out["pooled_std_error"] = report.pooled_std_error;
  write_json((dir / "map_quality.json").string(), out);
  std::cout << format_overlap_table(report)
            << (report.conclusive ? "strict maximizer: " + report.fixed_points[static_cast<std::size_t>(report.winner)].label
                                  : std::string("ranking inconclusive"))
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Baum-Welch vs. Viterbi training experiments"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  const auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { o.seed = s; }, "random seed");
  };

  CLI::App* sample_cmd = app.add_subcommand("sample", "draw hidden and observed sequences");
  sample_cmd->add_option("--model", o.model, "model TOML");
  sample_cmd->add_option("--scenario", o.scenario, "scenario TOML");
  sample_cmd->add_option("--n", o.n, "sequence length")->required();
  add_seed(sample_cmd);
  sample_cmd->add_option("--out", o.out, "output directory");

  CLI::App* train_cmd = app.add_subcommand("train", "Baum-Welch or Viterbi training");
  train_cmd->add_option("--model", o.model, "true model TOML (for sampling or sizing)");
  train_cmd->add_option("--scenario", o.scenario, "true scenario TOML");
  train_cmd->add_option("--data", o.data, "observation file, one 1-based label per line");
  train_cmd->add_option("--init", o.init, "initial model TOML");
  train_cmd->add_option("--method", o.method, "bw or vt");
  train_cmd->add_option("--n", o.n, "length of sampled training data");
  add_seed(train_cmd);
  train_cmd->add_option("--max-iter", o.max_iter, "iteration cap");
  train_cmd->add_option("--tol", o.tol, "L-inf parameter change for convergence");
  train_cmd->add_option("--out", o.out, "output directory");

  CLI::App* analyze_cmd = app.add_subcommand("analyze", "closed-form checks and oracle comparisons");
  analyze_cmd->add_option("--check", o.check,
                          "constraint-identity (alias katar), f-order, zeta-cross, fixed-points, manifold, partial, zeta-dump, "
                          "likelihood, brute-force or free-energy")
      ->required();
  analyze_cmd->add_option("--scenario", o.scenario, "scenario TOML");
  analyze_cmd->add_option("--trial", o.trial, "trial scenario TOML (defaults to the truth)");
  analyze_cmd->add_option("--kmax", o.kmax, "truncation order / maximal period");
  analyze_cmd->add_option("--n", o.n, "enumeration length for brute-force checks");
  analyze_cmd->add_option_function<std::string>(
      "--beta",
      [&](const std::string& b) {
        try {
          o.beta = parse_beta(b);
        } catch (const UsageError& e) {
          throw CLI::ValidationError("--beta", e.what());
        }
      },
      "inverse temperature (or inf)");
  analyze_cmd->add_option("--beta-grid", o.beta_grid, "comma-separated increasing betas");
  analyze_cmd->add_option("--trials", o.trials, "number of random cases / grid points");
  analyze_cmd->add_option("--fixed", o.fixed, "clamped parameters for --check partial, e.g. r1,q1");
  analyze_cmd->add_option("--starts", o.starts, "multistart count for --check partial");
  add_seed(analyze_cmd);
  analyze_cmd->add_option("--out", o.out, "output directory");

  CLI::App* map_cmd = app.add_subcommand("map-quality", "decode overlaps of the VT fixed points");
  map_cmd->add_option("--scenario", o.scenario, "scenario TOML")->required();
  map_cmd->add_option("--n", o.n, "sequence length");
  map_cmd->add_option("--trials", o.trials, "number of sampled sequences");
  add_seed(map_cmd);
  map_cmd->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sample_cmd) return cmd_sample(o);
    if (*train_cmd) return cmd_train(o);
    if (*analyze_cmd) return cmd_analyze(o);
    if (*map_cmd) return cmd_map_quality(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // includes ModelError
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitCheck;
  }
  return kExitUsage;
}
