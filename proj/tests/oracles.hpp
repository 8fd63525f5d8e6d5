#ifndef HMMVT_TESTS_ORACLES_HPP
#define HMMVT_TESTS_ORACLES_HPP

// Brute-force reference computations shared by the unit and acceptance
// tests. Everything here enumerates explicitly and avoids the library's
// recursions so it can serve as an independent check.

#include "hmmvt/hmm.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using hmmvt::Matrix;

/// Calls f(path) for all L^(length) label sequences.
inline void for_each_sequence(int alphabet, int length, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> seq(static_cast<std::size_t>(length), 0);
  while (true) {
    f(seq);
    int i = 0;
    while (i < length && ++seq[static_cast<std::size_t>(i)] == alphabet) {
      seq[static_cast<std::size_t>(i)] = 0;
      ++i;
    }
    if (i == length) return;
  }
}

/// P(s, x) as a plain product of model entries.
inline double joint_prob(const hmmvt::HmmModel& m, const std::vector<int>& s, const std::vector<int>& x) {
  double p = m.stationary()(s[0]);
  for (std::size_t i = 0; i < x.size(); ++i) {
    p *= m.transition()(s[i + 1], s[i]) * m.emission()(x[i], s[i + 1]);
  }
  return p;
}

/// P(x) summed over all L^(N+1) hidden paths.
inline double marginal_prob(const hmmvt::HmmModel& m, const std::vector<int>& x) {
  double total = 0.0;
  for_each_sequence(m.num_hidden(), static_cast<int>(x.size()) + 1,
                    [&](const std::vector<int>& s) { total += joint_prob(m, s, x); });
  return total;
}

/// max_s P(s, x) over all hidden paths.
inline double max_joint_prob(const hmmvt::HmmModel& m, const std::vector<int>& x) {
  double best = 0.0;
  for_each_sequence(m.num_hidden(), static_cast<int>(x.size()) + 1,
                    [&](const std::vector<int>& s) { best = std::max(best, joint_prob(m, s, x)); });
  return best;
}

/// Column-stochastic matrix with entries bounded away from zero.
inline Matrix random_stochastic(std::mt19937_64& rng, int rows, int cols, double floor = 0.05) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = u(rng);
    m.col(j) /= m.col(j).sum();
  }
  return m;
}

inline hmmvt::HmmModel random_model(std::mt19937_64& rng, int l, int m) {
  return hmmvt::build_model(random_stochastic(rng, l, l), random_stochastic(rng, m, l));
}

/// Spectral radius by plain power iteration on a strictly positive shift.
inline double power_radius(const Matrix& a) {
  const Matrix b = a + Matrix::Identity(a.rows(), a.cols());
  hmmvt::Vector v = hmmvt::Vector::Ones(a.rows());
  double lambda = 0.0;
  for (int it = 0; it < 20000; ++it) {
    hmmvt::Vector w = b * v;
    const double next = w.norm() / v.norm();
    v = w / w.norm();
    if (std::abs(next - lambda) < 1e-16) break;
    lambda = next;
  }
  return lambda - 1.0;
}

/// Closed-form scenario quantities written out from the path picture:
/// t0 = p0, t1 = p1 q1 + p2 r1, t2 = p1 r1 q2 + p2 q1 r2, tau^2 = q2 r2.
struct Effective {
  double t0, t1, t2, tau2;
};

inline Effective effective(double p1, double p2, double q1, double r1) {
  const double p0 = 1.0 - p1 - p2, q2 = 1.0 - q1, r2 = 1.0 - r1;
  return {p0, p1 * q1 + p2 * r1, p1 * r1 * q2 + p2 * q1 * r2, q2 * r2};
}

/// Expected per-symbol log-likelihood of the trial from the renewal
/// picture: sum_k t_k ln that_k / sum_k (k + 1) t_k with t_{k+2} = tau^2 t_k
/// summed in closed form.
inline double renewal_rate(const Effective& t, const Effective& h) {
  const double g = 1.0 - t.tau2;
  const double numerator = t.t0 * std::log(h.t0) +
                           t.t1 / g * std::log(h.t1) + t.t1 * t.tau2 / (g * g) * std::log(h.tau2) +
                           t.t2 / g * std::log(h.t2) + t.t2 * t.tau2 / (g * g) * std::log(h.tau2);
  // sum_j (2j + 2) t1 tau^2j + (2j + 3) t2 tau^2j
  const double denominator = t.t0 + t.t1 * (2.0 / g + 2.0 * t.tau2 / (g * g)) +
                             t.t2 * (3.0 / g + 2.0 * t.tau2 / (g * g));
  return numerator / denominator;
}

}  // namespace oracle

#endif  // HMMVT_TESTS_ORACLES_HPP
