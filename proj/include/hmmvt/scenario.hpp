#ifndef HMMVT_SCENARIO_HPP
#define HMMVT_SCENARIO_HPP

#include "hmmvt/hmm.hpp"
#include "hmmvt/inference.hpp"
#include "hmmvt/unambiguous.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace hmmvt {

/*!
 * Three-state unambiguous model with no self-loops on states 2 and 3 and
 * epsilon = 0. In the column convention
 *
 *   transition = [[p0, q1, r1],
 *                 [p1,  0, r2],
 *                 [p2, q2,  0]]
 *
 * with p0 = 1 - p1 - p2, q2 = 1 - q1, r2 = 1 - r1.
 */
struct ScenarioParams {
  double p1 = 0.0;
  double p2 = 0.0;
  double q1 = 0.0;
  double r1 = 0.0;

  double p0() const { return 1.0 - p1 - p2; }
  double q2() const { return 1.0 - q1; }
  double r2() const { return 1.0 - r1; }

  std::array<double, 4> values() const { return {p1, p2, q1, r1}; }
  static ScenarioParams from_values(const std::array<double, 4>& v) {
    return {v[0], v[1], v[2], v[3]};
  }
};

/// The four free parameters, in ScenarioParams::values() order.
enum class ScenarioParam { p1 = 0, p2 = 1, q1 = 2, r1 = 3 };

std::string to_string(ScenarioParam param);
ScenarioParam scenario_param_from_string(const std::string& name);

/// Interior point: (p0, p1, p2) uniform on the simplex, q1 and r1 uniform.
ScenarioParams random_scenario(std::mt19937_64& rng);

/// Throws ModelError unless every parameter lies in [0, 1] and p1 + p2 <= 1.
void validate(const ScenarioParams& params);

/// Effective parameters: return weights t0, t1, t2, the squared Perron
/// root tau2 of t2, and mu = 1 - tau2 + t2 + (1 - t0)(1 + tau2).
struct ScenarioStats {
  double t0 = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double tau2 = 0.0;
  double mu = 0.0;
};

ScenarioStats scenario_stats(const ScenarioParams& params);

/// max |t_i - that_i| over i = 0, 1, 2.
double stats_residual(const ScenarioStats& a, const ScenarioStats& b);

Matrix scenario_transition(const ScenarioParams& params);
UnambiguousHmm scenario_unambiguous(const ScenarioParams& params);
HmmModel scenario_model(const ScenarioParams& params, MixingPolicy policy = MixingPolicy::reject);

/// Reads (p1, p2, q1, r1) back from a three-state transition matrix.
ScenarioParams scenario_params_from(const Matrix& transition);

/// F_1 / N from the effective parameters alone; +inf on support mismatch.
double f1_rate(const ScenarioStats& truth, const ScenarioStats& trial);

/// F_beta / N of the trial parameters; beta = kInfiniteBeta gives finf_rate.
double fbeta_rate(const ScenarioStats& truth, const ScenarioParams& trial, double beta);

/// F_inf / N: the beta-deformed sums replaced by their largest term.
double finf_rate(const ScenarioStats& truth, const ScenarioParams& trial);

struct VtFixedPoint {
  ScenarioParam nullified = ScenarioParam::p1;
  ScenarioParams params;
  double f_inf = 0.0;
  double f_1 = 0.0;
  double stats_residual = 0.0;
};

/// The four parameter vectors with one of p1, p2, q1, r1 equal to zero
/// that reproduce (t0, t1, t2). Points that coincide because some t_i
/// vanishes are returned once. Requires 0 < t0 < 1.
std::vector<VtFixedPoint> vt_fixed_points(const ScenarioStats& truth);

struct VtStep {
  ScenarioParams params;
  double chi1 = 0.0;
  double chi2 = 0.0;
  /// beta = inf only: one of the two comparisons was an exact tie and was
  /// resolved toward chi = 0.
  bool tie = false;
};

/// One distribution-level Viterbi-training update at inverse temperature
/// beta (kInfiniteBeta for hard decoding).
VtStep vt_iterate(const ScenarioStats& truth, const ScenarioParams& trial, double beta);

/// Points with p1hat given that reproduce (t0, t1, t2). For fixed p1hat the
/// remaining unknowns solve a quadratic, so there are up to two branches:
/// branch 0 has the smaller q1hat. Each point is Newton-polished to 1e-12.
std::vector<ScenarioParams> ml_manifold_points(const ScenarioStats& truth, double p1hat);

/// One branch of ml_manifold_points. Throws std::domain_error naming the
/// feasible p1hat interval of the branch when p1hat lies outside it.
ScenarioParams ml_manifold_point(const ScenarioStats& truth, double p1hat, int branch = 0);

/// Feasible p1hat interval of a manifold branch, from a grid scan refined
/// by bisection. Returns {nan, nan} when the branch is empty.
std::pair<double, double> ml_feasible_interval(const ScenarioStats& truth, int branch);

struct MultistartOptions {
  int starts = 50;
  double tolerance = 1e-10;
  double cluster_radius = 1e-6;
  std::uint64_t seed = 1;
};

struct FinfMinimum {
  ScenarioParams params;
  double f_inf = 0.0;
  ScenarioStats stats;
  /// |that_i - t_i| <= 1e-6 for i = 0, 1, 2.
  std::array<bool, 3> recovered = {false, false, false};
  int hits = 0;  // starts that ended in this cluster
};

/// Multistart local minimization of finf_rate over the parameters not in
/// `fixed` (which are held at the given values). Each start runs a
/// projected Nelder-Mead descent and is then polished by constrained
/// Newton steps on the locally active branch of the max terms. Results
/// that fail a perturbation test for local minimality are dropped; the
/// rest are clustered at cluster_radius and returned by increasing F_inf.
std::vector<FinfMinimum> finf_local_minima(const ScenarioStats& truth,
                                           const std::vector<std::pair<ScenarioParam, double>>& fixed,
                                           const MultistartOptions& options = {});

struct OverlapSummary {
  std::string label;
  double mean = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;   // mean -/+ 1.96 standard errors
  double ci_high = 0.0;
  std::vector<double> per_trial;
};

struct MapQualityReport {
  OverlapSummary truth;                  // decoding under the generating parameters
  std::vector<OverlapSummary> fixed_points;  // vt_fixed_points order
  int winner = -1;        // index into fixed_points, -1 when inconclusive
  bool conclusive = false;
  double spread = 0.0;     // max - min of the fixed-point means
  double pooled_std_error = 0.0;
};

/// Samples `trials` sequences of length n (trial i uses seed + i), decodes
/// each under the truth and under every VT fixed point, and summarizes the
/// overlaps with the true hidden path. A winner is named only when its
/// confidence interval lies strictly above all others.
MapQualityReport map_quality_ranking(const ScenarioParams& truth, std::size_t n, std::uint64_t seed,
                                     int trials);

}  // namespace hmmvt

#endif  // HMMVT_SCENARIO_HPP
