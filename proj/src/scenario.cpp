#include "hmmvt/scenario.hpp"

#include "hmmvt/nelder_mead.hpp"
#include "hmmvt/numeric.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

namespace hmmvt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : -kInf; }

// ln(exp(a) + exp(b)) with -inf arguments allowed.
double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Weights of the four terms of -mu F / N: t1, t2, (1 - tau2) t0, (1 - t0) tau2.
struct TermWeights {
  double t1, t2, stay, loop;
};

TermWeights term_weights(const ScenarioStats& s) {
  return {s.t1, s.t2, (1.0 - s.tau2) * s.t0, (1.0 - s.t0) * s.tau2};
}

// -mu F / N given the logs of the four trial quantities; -inf on mismatch.
double weighted_log_sum(const TermWeights& w, double log_t1, double log_t2, double log_t0,
                        double log_tau2) {
  CompensatedSum sum;
  const auto add = [&](double weight, double log_value) {
    if (weight == 0.0) return;
    sum.add(weight * log_value);
  };
  add(w.t1, log_t1);
  add(w.t2, log_t2);
  add(w.stay, log_t0);
  add(w.loop, log_tau2);
  return sum.value();
}

double to_rate(double weighted, double mu, double beta) {
  if (std::isnan(weighted) || weighted == -kInf) return kInf;
  return -weighted / (mu * beta);
}

}  // namespace

std::string to_string(ScenarioParam param) {
  switch (param) {
    case ScenarioParam::p1: return "p1";
    case ScenarioParam::p2: return "p2";
    case ScenarioParam::q1: return "q1";
    case ScenarioParam::r1: return "r1";
  }
  return "?";
}

ScenarioParam scenario_param_from_string(const std::string& name) {
  if (name == "p1") return ScenarioParam::p1;
  if (name == "p2") return ScenarioParam::p2;
  if (name == "q1") return ScenarioParam::q1;
  if (name == "r1") return ScenarioParam::r1;
  throw std::invalid_argument("unknown scenario parameter '" + name + "' (expected p1, p2, q1 or r1)");
}

ScenarioParams random_scenario(std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double e0 = expo(rng), e1 = expo(rng), e2 = expo(rng);
  const double total = e0 + e1 + e2;
  ScenarioParams params;
  params.p1 = e1 / total;
  params.p2 = e2 / total;
  params.q1 = unit(rng);
  params.r1 = unit(rng);
  return params;
}

void validate(const ScenarioParams& params) {
  for (const double v : params.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ModelError("scenario parameters must lie in [0, 1]");
  }
  if (params.p1 + params.p2 > 1.0 + kStochasticTol) {
    throw ModelError("scenario parameters must satisfy p1 + p2 <= 1");
  }
}

ScenarioStats scenario_stats(const ScenarioParams& p) {
  ScenarioStats s;
  s.t0 = p.p0();
  s.t1 = p.p1 * p.q1 + p.p2 * p.r1;
  s.t2 = p.p1 * p.r1 * p.q2() + p.p2 * p.q1 * p.r2();
  s.tau2 = p.q2() * p.r2();
  s.mu = 1.0 - s.tau2 + s.t2 + (1.0 - s.t0) * (1.0 + s.tau2);
  return s;
}

double stats_residual(const ScenarioStats& a, const ScenarioStats& b) {
  return std::max({std::abs(a.t0 - b.t0), std::abs(a.t1 - b.t1), std::abs(a.t2 - b.t2)});
}

Matrix scenario_transition(const ScenarioParams& p) {
  validate(p);
  Matrix transition(3, 3);
  transition << p.p0(), p.q1, p.r1,
                p.p1, 0.0, p.r2(),
                p.p2, p.q2(), 0.0;
  return transition;
}

UnambiguousHmm scenario_unambiguous(const ScenarioParams& params) {
  return build_unambiguous(scenario_transition(params), 0.0);
}

HmmModel scenario_model(const ScenarioParams& params, MixingPolicy policy) {
  return scenario_unambiguous(params).hmm(policy);
}

ScenarioParams scenario_params_from(const Matrix& transition) {
  if (transition.rows() != 3 || transition.cols() != 3) {
    throw ModelError("scenario models have exactly three hidden states");
  }
  return {transition(1, 0), transition(2, 0), transition(0, 1), transition(0, 2)};
}

double f1_rate(const ScenarioStats& truth, const ScenarioStats& trial) {
  const double weighted = weighted_log_sum(term_weights(truth), safe_log(trial.t1), safe_log(trial.t2),
                                           safe_log(trial.t0), safe_log(trial.tau2));
  return to_rate(weighted, truth.mu, 1.0);
}

double fbeta_rate(const ScenarioStats& truth, const ScenarioParams& trial, double beta) {
  if (beta == kInfiniteBeta) return finf_rate(truth, trial);
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("fbeta_rate: beta must be positive");
  }
  const double lp1 = safe_log(trial.p1), lp2 = safe_log(trial.p2);
  const double lq1 = safe_log(trial.q1), lq2 = safe_log(trial.q2());
  const double lr1 = safe_log(trial.r1), lr2 = safe_log(trial.r2());
  const double log_t1 = log_add(beta * (lp1 + lq1), beta * (lp2 + lr1));
  const double log_t2 = log_add(beta * (lp1 + lr1 + lq2), beta * (lp2 + lq1 + lr2));
  const double weighted = weighted_log_sum(term_weights(truth), log_t1, log_t2,
                                           beta * safe_log(trial.p0()), beta * (lq2 + lr2));
  return to_rate(weighted, truth.mu, beta);
}

double finf_rate(const ScenarioStats& truth, const ScenarioParams& trial) {
  const double lp1 = safe_log(trial.p1), lp2 = safe_log(trial.p2);
  const double lq1 = safe_log(trial.q1), lq2 = safe_log(trial.q2());
  const double lr1 = safe_log(trial.r1), lr2 = safe_log(trial.r2());
  const double log_t1 = std::max(lp1 + lq1, lp2 + lr1);
  const double log_t2 = std::max(lp1 + lr1 + lq2, lp2 + lq1 + lr2);
  const double weighted = weighted_log_sum(term_weights(truth), log_t1, log_t2,
                                           safe_log(trial.p0()), lq2 + lr2);
  return to_rate(weighted, truth.mu, 1.0);
}

std::vector<VtFixedPoint> vt_fixed_points(const ScenarioStats& truth) {
  if (!(truth.t0 > 0.0 && truth.t0 < 1.0)) {
    throw std::domain_error("vt_fixed_points: requires 0 < t0 < 1");
  }
  const double s = 1.0 - truth.t0;
  const double t1 = truth.t1;
  const double t2 = truth.t2;
  const double t12 = t1 + t2;
  const auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };

  const std::vector<std::pair<ScenarioParam, ScenarioParams>> candidates = {
      {ScenarioParam::p1, {0.0, s, ratio(t2, s - t1), t1 / s}},
      {ScenarioParam::p2, {s, 0.0, t1 / s, ratio(t2, s - t1)}},
      {ScenarioParam::q1, {ratio(t2 * s, t12), ratio(t1 * s, t12), 0.0, t12 / s}},
      {ScenarioParam::r1, {ratio(t1 * s, t12), ratio(t2 * s, t12), t12 / s, 0.0}},
  };

  std::vector<VtFixedPoint> points;
  for (const auto& [nullified, params] : candidates) {
    const bool duplicate = std::any_of(points.begin(), points.end(), [&](const VtFixedPoint& p) {
      const auto a = p.params.values();
      const auto b = params.values();
      double d = 0.0;
      for (std::size_t i = 0; i < 4; ++i) d = std::max(d, std::abs(a[i] - b[i]));
      return d <= 1e-12;
    });
    if (duplicate) continue;
    VtFixedPoint point;
    point.nullified = nullified;
    point.params = params;
    point.f_inf = finf_rate(truth, params);
    point.f_1 = f1_rate(truth, scenario_stats(params));
    point.stats_residual = stats_residual(truth, scenario_stats(params));
    points.push_back(point);
  }
  return points;
}

VtStep vt_iterate(const ScenarioStats& truth, const ScenarioParams& trial, double beta) {
  VtStep step;
  const double a1 = safe_log(trial.p1) + safe_log(trial.q1);
  const double b1 = safe_log(trial.p2) + safe_log(trial.r1);
  const double a2 = safe_log(trial.p1) + safe_log(trial.r1) + safe_log(trial.q2());
  const double b2 = safe_log(trial.p2) + safe_log(trial.q1) + safe_log(trial.r2());
  const auto chi = [&](double a, double b) {
    if (beta == kInfiniteBeta) {
      if (a == b) {
        step.tie = true;
        return 0.0;
      }
      return a > b ? 1.0 : 0.0;
    }
    if (a == -kInf && b == -kInf) {
      step.tie = true;
      return 0.0;
    }
    // a^beta / (a^beta + b^beta)
    return 1.0 / (1.0 + std::exp(beta * (b - a)));
  };
  step.chi1 = chi(a1, b1);
  step.chi2 = chi(a2, b2);

  const double t0 = truth.t0, t1 = truth.t1, t2 = truth.t2, tau2 = truth.tau2;
  const double c1 = step.chi1, c2 = step.chi2;
  const double loop = (1.0 - t0) * tau2;
  const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  step.params.p1 = ratio(t1 * c1 + t2 * c2, t1 + t2 + t0 * (1.0 - tau2));
  step.params.p2 = 1.0 - t0 - step.params.p1;
  step.params.q1 = ratio(t1 * c1 + t2 * (1.0 - c2), t1 * c1 + t2 + loop);
  step.params.r1 = ratio(t1 * (1.0 - c1) + t2 * c2, t2 + t1 * (1.0 - c1) + loop);
  return step;
}

namespace {

// One manifold branch at p1hat = a; std::nullopt when not probability-valued.
std::optional<ScenarioParams> manifold_branch(const ScenarioStats& truth, double a, int branch) {
  const double s = 1.0 - truth.t0;
  const double t1 = truth.t1;
  const double t2 = truth.t2;
  const double b = s - a;
  if (a < 0.0 || b < -1e-15) return std::nullopt;

  // s a q^2 + s (b - a - t1) q + (a t1 - b t2) = 0
  const double qa = s * a;
  const double qb = s * (b - a - t1);
  const double qc = a * t1 - b * t2;
  // roots[0] is the smaller root. When the quadratic degenerates the
  // missing root has gone to -inf (qb > 0) or +inf (qb < 0).
  std::vector<double> roots(2, std::numeric_limits<double>::quiet_NaN());
  if (std::abs(qa) <= 1e-14 * std::max(1.0, std::abs(qb))) {
    if (qb != 0.0) roots[qb > 0.0 ? 1 : 0] = -qc / qb;
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    const double u = -0.5 * (qb + std::copysign(root, qb));
    double x1 = u / qa;
    double x2 = u != 0.0 ? qc / u : x1;
    if (x1 > x2) std::swap(x1, x2);
    roots = {x1, x2};
  }
  if (branch < 0 || branch > 1) return std::nullopt;

  double q = roots[static_cast<std::size_t>(branch)];
  if (std::isnan(q)) return std::nullopt;
  const double tol = 1e-9;
  if (q < -tol || q > 1.0 + tol) return std::nullopt;
  q = std::clamp(q, 0.0, 1.0);
  double r;
  if (b > 1e-12) {
    r = (t1 - a * q) / b;
  } else {
    if (a * (1.0 - q) <= 0.0) return std::nullopt;
    r = t2 / (a * (1.0 - q));
  }
  if (r < -tol || r > 1.0 + tol) return std::nullopt;
  r = std::clamp(r, 0.0, 1.0);

  // Newton polish of a q + b r = t1, a r (1 - q) + b q (1 - r) = t2.
  for (int it = 0; it < 20; ++it) {
    const double f1 = a * q + b * r - t1;
    const double f2 = a * r * (1.0 - q) + b * q * (1.0 - r) - t2;
    if (std::max(std::abs(f1), std::abs(f2)) <= 1e-15) break;
    const double j11 = a, j12 = b;
    const double j21 = -a * r + b * (1.0 - r);
    const double j22 = a * (1.0 - q) - b * q;
    const double det = j11 * j22 - j12 * j21;
    if (std::abs(det) < 1e-300) break;
    const double dq = (f1 * j22 - f2 * j12) / det;
    const double dr = (j11 * f2 - j21 * f1) / det;
    q = std::clamp(q - dq, 0.0, 1.0);
    r = std::clamp(r - dr, 0.0, 1.0);
  }
  ScenarioParams params{a, std::max(b, 0.0), q, r};
  if (stats_residual(truth, scenario_stats(params)) > 1e-12) return std::nullopt;
  return params;
}

}  // namespace

std::vector<ScenarioParams> ml_manifold_points(const ScenarioStats& truth, double p1hat) {
  std::vector<ScenarioParams> points;
  for (int branch = 0; branch < 2; ++branch) {
    if (auto p = manifold_branch(truth, p1hat, branch)) points.push_back(*p);
  }
  return points;
}

std::pair<double, double> ml_feasible_interval(const ScenarioStats& truth, int branch) {
  const double s = 1.0 - truth.t0;
  constexpr int kGrid = 2000;
  const auto feasible = [&](double a) { return manifold_branch(truth, a, branch).has_value(); };
  int first = -1, last = -1;
  for (int i = 0; i <= kGrid; ++i) {
    if (feasible(s * i / kGrid)) {
      if (first < 0) first = i;
      last = i;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (first < 0) return {nan, nan};
  const auto refine = [&](double inside, double outside) {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (inside + outside);
      (feasible(mid) ? inside : outside) = mid;
    }
    return inside;
  };
  double lo = s * first / kGrid;
  double hi = s * last / kGrid;
  if (first > 0) lo = refine(lo, s * (first - 1) / kGrid);
  if (last < kGrid) hi = refine(hi, s * (last + 1) / kGrid);
  return {lo, hi};
}

ScenarioParams ml_manifold_point(const ScenarioStats& truth, double p1hat, int branch) {
  if (auto p = manifold_branch(truth, p1hat, branch)) return *p;
  const auto [lo, hi] = ml_feasible_interval(truth, branch);
  std::ostringstream os;
  os << "ml_manifold_point: p1hat = " << p1hat << " is infeasible on branch " << branch;
  if (std::isnan(lo)) {
    os << " (branch is empty)";
  } else {
    os << "; feasible interval approximately [" << lo << ", " << hi << "]";
  }
  throw std::domain_error(os.str());
}

namespace {

// F_inf with the max terms fixed to one alternative is a sum of weighted
// logs of affine functions of x = (p1, p2, q1, r1).
struct LogTerm {
  double weight;
  double offset;
  std::array<double, 4> slope;
};

std::vector<LogTerm> branch_terms(const ScenarioStats& truth, int chi1, int chi2) {
  const TermWeights w = term_weights(truth);
  std::vector<LogTerm> terms;
  const auto add = [&](double weight, double offset, std::array<double, 4> slope) {
    if (weight > 0.0) terms.push_back({weight, offset, slope});
  };
  add(w.stay, 1.0, {-1, -1, 0, 0});
  add(w.loop, 1.0, {0, 0, -1, 0});
  add(w.loop, 1.0, {0, 0, 0, -1});
  if (chi1 == 1) {
    add(w.t1, 0.0, {1, 0, 0, 0});
    add(w.t1, 0.0, {0, 0, 1, 0});
  } else {
    add(w.t1, 0.0, {0, 1, 0, 0});
    add(w.t1, 0.0, {0, 0, 0, 1});
  }
  if (chi2 == 1) {
    add(w.t2, 0.0, {1, 0, 0, 0});
    add(w.t2, 0.0, {0, 0, 0, 1});
    add(w.t2, 1.0, {0, 0, -1, 0});
  } else {
    add(w.t2, 0.0, {0, 1, 0, 0});
    add(w.t2, 0.0, {0, 0, 1, 0});
    add(w.t2, 1.0, {0, 0, 0, -1});
  }
  return terms;
}

using Point = std::array<double, 4>;

bool in_domain(const Point& x) {
  for (const double v : x) {
    if (v < 0.0 || v > 1.0) return false;
  }
  return x[0] + x[1] <= 1.0;
}

double branch_value(const std::vector<LogTerm>& terms, double mu, const Point& x) {
  if (!in_domain(x)) return kInf;
  CompensatedSum g;
  for (const LogTerm& t : terms) {
    double arg = t.offset;
    for (std::size_t j = 0; j < 4; ++j) arg += t.slope[j] * x[j];
    if (!(arg > 0.0)) return kInf;
    g.add(t.weight * std::log(arg));
  }
  return -g.value() / mu;
}

// Projected Newton descent on one (convex) branch over the free coordinates.
Point polish_branch(const std::vector<LogTerm>& terms, double mu, Point x,
                    const std::array<bool, 4>& free) {
  double value = branch_value(terms, mu, x);
  if (!std::isfinite(value)) return x;
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::Vector4d grad = Eigen::Vector4d::Zero();
    Eigen::Matrix4d hess = Eigen::Matrix4d::Zero();
    for (const LogTerm& t : terms) {
      double arg = t.offset;
      for (std::size_t j = 0; j < 4; ++j) arg += t.slope[j] * x[j];
      const Eigen::Vector4d g(t.slope[0], t.slope[1], t.slope[2], t.slope[3]);
      grad -= t.weight * g / (arg * mu);
      hess += t.weight * g * g.transpose() / (arg * arg * mu);
    }
    std::vector<int> active;
    for (int j = 0; j < 4; ++j) {
      if (!free[static_cast<std::size_t>(j)]) continue;
      const double v = x[static_cast<std::size_t>(j)];
      if ((v <= 0.0 && grad(j) > 0.0) || (v >= 1.0 && grad(j) < 0.0)) continue;
      active.push_back(j);
    }
    if (active.empty()) break;
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd g(k);
    Eigen::MatrixXd h(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      g(a) = grad(active[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < k; ++b) {
        h(a, b) = hess(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
      }
    }
    if (g.cwiseAbs().maxCoeff() <= 1e-14) break;
    h.diagonal().array() += 1e-14;
    const Eigen::VectorXd d = -h.ldlt().solve(g);

    double alpha = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
      Point y = x;
      for (Eigen::Index a = 0; a < k; ++a) {
        auto& v = y[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])];
        v = std::clamp(v + alpha * d(a), 0.0, 1.0);
      }
      const double fy = branch_value(terms, mu, y);
      if (fy <= value) {
        moved = fy < value || y != x;
        x = y;
        value = fy;
        break;
      }
    }
    if (!moved) break;
  }
  return x;
}

double finf_at(const ScenarioStats& truth, const Point& x) {
  if (!in_domain(x)) return kInf;
  return finf_rate(truth, ScenarioParams::from_values(x));
}

bool is_local_minimum(const ScenarioStats& truth, const Point& x, const std::array<bool, 4>& free,
                      std::mt19937_64& rng) {
  const double f0 = finf_at(truth, x);
  if (!std::isfinite(f0)) return false;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double slack = 1e-12 * std::max(1.0, std::abs(f0));
  for (const double radius : {1e-3, 1e-5, 1e-7}) {
    for (int trial = 0; trial < 100; ++trial) {
      Point y = x;
      for (std::size_t j = 0; j < 4; ++j) {
        if (free[j]) y[j] = std::clamp(y[j] + radius * normal(rng), 0.0, 1.0);
      }
      if (!in_domain(y)) continue;
      if (finf_at(truth, y) < f0 - slack) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<FinfMinimum> finf_local_minima(const ScenarioStats& truth,
                                           const std::vector<std::pair<ScenarioParam, double>>& fixed,
                                           const MultistartOptions& options) {
  std::array<bool, 4> free = {true, true, true, true};
  Point base = {0.0, 0.0, 0.0, 0.0};
  for (const auto& [param, value] : fixed) {
    const auto j = static_cast<std::size_t>(param);
    free[j] = false;
    base[j] = value;
  }
  std::vector<std::size_t> free_index;
  for (std::size_t j = 0; j < 4; ++j) {
    if (free[j]) free_index.push_back(j);
  }

  const auto project = [&](Point x) {
    for (std::size_t j : free_index) x[j] = std::clamp(x[j], 0.0, 1.0);
    const double excess = x[0] + x[1] - 1.0;
    if (excess > 0.0) {
      if (free[0] && free[1]) {
        x[0] -= 0.5 * excess;
        x[1] -= 0.5 * excess;
        if (x[0] < 0.0) { x[1] += x[0]; x[0] = 0.0; }
        if (x[1] < 0.0) { x[0] += x[1]; x[1] = 0.0; }
      } else if (free[0]) {
        x[0] = std::max(0.0, 1.0 - x[1]);
      } else if (free[1]) {
        x[1] = std::max(0.0, 1.0 - x[0]);
      }
    }
    return x;
  };
  const auto embed = [&](const Vector& y) {
    Point x = base;
    for (std::size_t i = 0; i < free_index.size(); ++i) x[free_index[i]] = y(static_cast<Eigen::Index>(i));
    return x;
  };
  const auto objective = [&](const Vector& y) {
    const Point raw = embed(y);
    const Point x = project(raw);
    double penalty = 0.0;
    for (std::size_t j = 0; j < 4; ++j) penalty += (raw[j] - x[j]) * (raw[j] - x[j]);
    return finf_at(truth, x) + 1e3 * penalty;
  };

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  NelderMeadOptions nm;
  nm.tolerance = options.tolerance;

  struct Found {
    Point x;
    double value;
    int hits;
  };
  std::vector<Found> found;

  for (int start = 0; start < options.starts; ++start) {
    Point x0 = base;
    const double e0 = expo(rng), e1 = expo(rng), e2 = expo(rng);
    const double total = e0 + e1 + e2;
    if (free[0]) x0[0] = e1 / total;
    if (free[1]) x0[1] = free[0] ? e2 / total : unit(rng) * (1.0 - x0[0]);
    if (free[0] && !free[1]) x0[0] = unit(rng) * (1.0 - x0[1]);
    if (free[2]) x0[2] = unit(rng);
    if (free[3]) x0[3] = unit(rng);

    Vector y0(static_cast<Eigen::Index>(free_index.size()));
    for (std::size_t i = 0; i < free_index.size(); ++i) y0(static_cast<Eigen::Index>(i)) = x0[free_index[i]];
    const NelderMeadResult descent = nelder_mead(objective, y0, nm);
    const Point start_point = project(embed(descent.x));
    double best_value = finf_at(truth, start_point);
    Point best = start_point;

    for (int chi1 = 0; chi1 < 2; ++chi1) {
      for (int chi2 = 0; chi2 < 2; ++chi2) {
        const std::vector<LogTerm> terms = branch_terms(truth, chi1, chi2);
        const double here = branch_value(terms, truth.mu, start_point);
        Point seed_point = start_point;
        for (std::size_t j : free_index) {
          if (seed_point[j] < 1e-6) seed_point[j] = 0.0;
        }
        if (!std::isfinite(branch_value(terms, truth.mu, seed_point))) seed_point = start_point;
        if (!std::isfinite(here) || here > best_value + 1e-6) continue;
        const Point polished = polish_branch(terms, truth.mu, seed_point, free);
        const double value = finf_at(truth, polished);
        const bool active = std::abs(branch_value(terms, truth.mu, polished) - value) <= 1e-13;
        if (active && value <= best_value) {
          best = polished;
          best_value = value;
        }
      }
    }
    if (!is_local_minimum(truth, best, free, rng)) continue;

    bool merged = false;
    for (Found& f : found) {
      double d = 0.0;
      for (std::size_t j = 0; j < 4; ++j) d = std::max(d, std::abs(f.x[j] - best[j]));
      if (d <= options.cluster_radius) {
        ++f.hits;
        if (best_value < f.value) {
          f.x = best;
          f.value = best_value;
        }
        merged = true;
        break;
      }
    }
    if (!merged) found.push_back({best, best_value, 1});
  }

  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) { return a.value < b.value; });
  std::vector<FinfMinimum> minima;
  for (const Found& f : found) {
    FinfMinimum m;
    m.params = ScenarioParams::from_values(f.x);
    m.f_inf = f.value;
    m.stats = scenario_stats(m.params);
    m.recovered = {std::abs(m.stats.t0 - truth.t0) <= 1e-6, std::abs(m.stats.t1 - truth.t1) <= 1e-6,
                   std::abs(m.stats.t2 - truth.t2) <= 1e-6};
    m.hits = f.hits;
    minima.push_back(m);
  }
  return minima;
}

namespace {

OverlapSummary summarize(std::string label, std::vector<double> per_trial) {
  OverlapSummary s;
  s.label = std::move(label);
  const auto n = static_cast<double>(per_trial.size());
  CompensatedSum sum;
  for (const double v : per_trial) sum.add(v);
  s.mean = sum.value() / n;
  if (per_trial.size() > 1) {
    CompensatedSum sq;
    for (const double v : per_trial) sq.add((v - s.mean) * (v - s.mean));
    s.std_error = std::sqrt(sq.value() / (n - 1.0) / n);
  } else {
    s.std_error = kInf;
  }
  s.ci_low = s.mean - 1.96 * s.std_error;
  s.ci_high = s.mean + 1.96 * s.std_error;
  s.per_trial = std::move(per_trial);
  return s;
}

}  // namespace

MapQualityReport map_quality_ranking(const ScenarioParams& truth, std::size_t n, std::uint64_t seed,
                                     int trials) {
  if (trials < 1) throw std::invalid_argument("map_quality_ranking: trials must be positive");
  if (n < 1) throw std::invalid_argument("map_quality_ranking: n must be positive");
  const HmmModel true_model = scenario_model(truth);
  const std::vector<VtFixedPoint> points = vt_fixed_points(scenario_stats(truth));
  std::vector<HmmModel> decoders;
  for (const VtFixedPoint& p : points) decoders.push_back(scenario_model(p.params, MixingPolicy::flag));

  std::vector<double> truth_overlaps;
  std::vector<std::vector<double>> point_overlaps(points.size());
  for (int trial = 0; trial < trials; ++trial) {
    const Sample data = sample(true_model, n, seed + static_cast<std::uint64_t>(trial));
    truth_overlaps.push_back(decode_overlap(data.states, viterbi_decode(true_model, data.observations).path));
    for (std::size_t i = 0; i < points.size(); ++i) {
      point_overlaps[i].push_back(
          decode_overlap(data.states, viterbi_decode(decoders[i], data.observations).path));
    }
  }

  MapQualityReport report;
  report.truth = summarize("truth", truth_overlaps);
  CompensatedSum variance;
  for (std::size_t i = 0; i < points.size(); ++i) {
    report.fixed_points.push_back(
        summarize(to_string(points[i].nullified) + "=0", std::move(point_overlaps[i])));
    const double se = report.fixed_points.back().std_error;
    variance.add(se * se);
  }
  double lo = kInf, hi = -kInf;
  int best = 0;
  for (std::size_t i = 0; i < report.fixed_points.size(); ++i) {
    const double m = report.fixed_points[i].mean;
    lo = std::min(lo, m);
    if (m > hi) {
      hi = m;
      best = static_cast<int>(i);
    }
  }
  report.spread = hi - lo;
  report.pooled_std_error = std::sqrt(variance.value() / static_cast<double>(report.fixed_points.size()));
  report.conclusive = std::isfinite(report.fixed_points[0].std_error);
  for (std::size_t i = 0; i < report.fixed_points.size() && report.conclusive; ++i) {
    if (static_cast<int>(i) == best) continue;
    if (!(report.fixed_points[static_cast<std::size_t>(best)].ci_low > report.fixed_points[i].ci_high)) {
      report.conclusive = false;
    }
  }
  report.winner = report.conclusive ? best : -1;
  return report;
}

}  // namespace hmmvt
