#include "hmmvt/scenario.hpp"
#include "hmmvt/unambiguous.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hmmvt;

namespace {

const ScenarioParams kReference{0.3, 0.2, 0.4, 0.5};

/// t_k = <1| t1 t2^k |1> as a sum over the k intermediate states of every
/// path that leaves state 1 and is next seen emitting symbol 1 after k steps.
double t_weight_by_paths(const UnambiguousHmm& m, int k) {
  const int l = m.num_hidden;
  const double stay = 1.0 - m.epsilon;
  const auto silent = [&](int s) { return s == 0 ? m.epsilon : 1.0; };
  if (k == 0) return stay * m.transition(0, 0);
  double total = 0.0;
  oracle::for_each_sequence(l, k, [&](const std::vector<int>& inner) {
    double p = stay * m.transition(inner[0], 0) * silent(inner[0]);
    for (int i = 1; i < k; ++i) p *= m.transition(inner[i], inner[i - 1]) * silent(inner[i]);
    p *= m.transition(0, inner[k - 1]) * stay;
    total += p;
  });
  return total / stay;
}

Matrix random_transition(std::mt19937_64& rng, int l) {
  return oracle::random_stochastic(rng, l, l);
}

}  // namespace

TEST_CASE("construction of the unambiguous model") {
  const Matrix p = scenario_transition(kReference);
  const UnambiguousHmm m = build_unambiguous(p, 0.1);
  CHECK(m.num_hidden == 3);
  CHECK((m.t1 + m.t2 - p).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(m.t1.row(0).isApprox(0.9 * p.row(0)));
  CHECK(m.t1.bottomRows(2).isZero(0.0));
  const HmmModel h = m.hmm();
  CHECK(h.emission()(0, 0) == doctest::Approx(0.9));
  CHECK(h.emission()(1, 1) == 1.0);
  CHECK_THROWS_AS(build_unambiguous(p, 1.0), ModelError);
  CHECK_THROWS_AS(build_unambiguous(p, -0.1), ModelError);
  Matrix bad = p;
  bad(0, 0) += 0.1;
  CHECK_THROWS_AS(build_unambiguous(bad, 0.0), ModelError);
}

TEST_CASE("spectral identities on the scenario") {
  const UnambiguousHmm m = scenario_unambiguous(kReference);
  const SpectralData s = spectral_data(m);
  REQUIRE(s.available);
  const oracle::Effective t = oracle::effective(0.3, 0.2, 0.4, 0.5);
  const double tau = std::sqrt(t.tau2);
  CHECK(s.tau() == doctest::Approx(tau).epsilon(1e-12));
  CHECK((s.left * s.right - Eigen::MatrixXcd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
  // Eigenvalues are -tau, 0, tau; the weights satisfy the parity relations.
  CHECK(std::abs(s.eigenvalues(0) + tau) <= 1e-12);
  CHECK(std::abs(s.eigenvalues(1)) <= 1e-12);
  const double psi_minus = s.weights(0).real();
  const double psi_plus = s.weights(2).real();
  CHECK(psi_plus - psi_minus == doctest::Approx(t.t1 / tau).epsilon(1e-12));
  CHECK(psi_plus + psi_minus == doctest::Approx(t.t2 / t.tau2).epsilon(1e-12));
  CHECK(s.weights.sum().real() == doctest::Approx(t.t0).epsilon(1e-12));
}

TEST_CASE("t weights agree with excursion enumeration") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const UnambiguousHmm m = build_unambiguous(random_transition(rng, 3), 0.2 * trial);
    const std::vector<double> direct = t_weights(m, 9);
    const SpectralData s = spectral_data(m);
    const std::vector<double> spectral = t_weights_spectral(s, 9);
    for (int k = 0; k <= 9; ++k) {
      const double paths = t_weight_by_paths(m, k);
      CHECK(std::abs(direct[k] - paths) <= 1e-14);
      if (s.available) CHECK(std::abs(spectral[k] - paths) <= 1e-10);
    }
  }
}

TEST_CASE("scenario t weights follow the two-step recurrence") {
  const UnambiguousHmm m = scenario_unambiguous(kReference);
  const std::vector<double> t = t_weights(m, 20);
  const oracle::Effective e = oracle::effective(0.3, 0.2, 0.4, 0.5);
  CHECK(t[0] == doctest::Approx(e.t0).epsilon(1e-15));
  CHECK(t[1] == doctest::Approx(e.t1).epsilon(1e-15));
  CHECK(t[2] == doctest::Approx(e.t2).epsilon(1e-15));
  for (int k = 3; k <= 20; ++k) CHECK(t[k] == doctest::Approx(e.tau2 * t[k - 2]).epsilon(1e-12));
}

TEST_CASE("return weights are normalized when epsilon = 0") {
  std::mt19937_64 rng(2);
  for (int l = 2; l <= 5; ++l) {
    const UnambiguousHmm m = build_unambiguous(random_transition(rng, l), 0.0);
    CHECK(std::abs(t_total(m) - 1.0) <= 1e-10);
  }
  const UnambiguousHmm noisy = build_unambiguous(random_transition(rng, 3), 0.3);
  CHECK(t_total(noisy) < 1.0);
}

TEST_CASE("mean return time on the scenario") {
  const UnambiguousHmm m = scenario_unambiguous(kReference);
  CHECK(mean_return_time(m) == doctest::Approx(1.48 / 0.7).epsilon(1e-12));
  // Kac: the mean return time is the inverse stationary mass of state 1.
  CHECK(mean_return_time(m) == doctest::Approx(1.0 / m.hmm().stationary()(0)).epsilon(1e-10));
}

TEST_CASE("closed-form zeta identities") {
  const UnambiguousHmm truth = scenario_unambiguous(kReference);
  const UnambiguousHmm trial = scenario_unambiguous(ScenarioParams{0.25, 0.3, 0.6, 0.45});
  // At n = 0 the zeta function has its zero at z = 1.
  CHECK(std::abs(exact_zeta(truth, trial, 1.0, 0.0, 40)) <= 1e-12);
  CHECK(std::abs(exact_zeta_at_one(truth, trial, 0.0, 40)) <= 1e-12);
  for (const double n : {0.3, 1.0}) {
    CHECK(exact_zeta(truth, trial, 1.0, n, 40) ==
          doctest::Approx(exact_zeta_at_one(truth, trial, n, 40)).epsilon(1e-10));
  }
  CHECK(exact_zeta(truth, trial, 0.0, 1.0, 40) == 1.0);
  // Factorized form at an interior z, summed by hand from the t weights.
  const std::vector<double> t = t_weights(truth, 200);
  const std::vector<double> h = t_weights(trial, 200);
  const double z = 0.7, n = 0.5;
  double renewal = 0.0;
  for (int k = 0; k <= 200; ++k) renewal += t[k] * std::pow(h[k], n) * std::pow(z, k + 1);
  const double tau = spectral_data(truth).tau();
  const double tau_hat = spectral_data(trial).tau();
  const double expected = (1.0 - z * tau * std::pow(tau_hat, n)) * (1.0 - renewal);
  CHECK(exact_zeta(truth, trial, z, n, 40) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("exact likelihood rate") {
  const UnambiguousHmm truth = scenario_unambiguous(kReference);
  const ExactRate self = likelihood_rate_exact(truth, truth);
  CHECK(self.offending_k.empty());
  CHECK(self.value == doctest::Approx(-0.690225839684).epsilon(1e-10));
  const ScenarioParams p{0.25, 0.3, 0.6, 0.45};
  const ExactRate other = likelihood_rate_exact(truth, scenario_unambiguous(p));
  const oracle::Effective t = oracle::effective(0.3, 0.2, 0.4, 0.5);
  CHECK(other.value == doctest::Approx(oracle::renewal_rate(t, oracle::effective(p.p1, p.p2, p.q1, p.r1)))
                           .epsilon(1e-10));
  const UnambiguousHmm blind = scenario_unambiguous(ScenarioParams{0.3, 0.2, 0.0, 0.0});
  const ExactRate none = likelihood_rate_exact(truth, blind);
  CHECK_FALSE(none.offending_k.empty());
  CHECK(std::isinf(none.value));
}

TEST_CASE("effective-parameter Jacobian agrees with finite differences") {
  std::mt19937_64 rng(3);
  int tested = 0;
  while (tested < 5) {
    const Matrix p = random_transition(rng, 3);
    const double eps = 0.1;
    Matrix j;
    try {
      j = effective_parameter_jacobian(p, eps);
    } catch (const std::domain_error&) {
      continue;
    }
    REQUIRE(j.rows() == 6);
    REQUIRE(j.cols() == 7);
    const double h = 1e-6;
    int col = 0;
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < 3; ++r) {
        if (r == c) continue;
        Matrix plus = p, minus = p;
        plus(r, c) += h;
        plus(c, c) -= h;
        minus(r, c) -= h;
        minus(c, c) += h;
        const Vector fd = (effective_parameters(plus, eps) - effective_parameters(minus, eps)) / (2.0 * h);
        CHECK((j.col(col) - fd).cwiseAbs().maxCoeff() <= 1e-6);
        ++col;
      }
    }
    const Vector fd_eps = (effective_parameters(p, eps + h) - effective_parameters(p, eps - h)) / (2.0 * h);
    CHECK((j.col(6) - fd_eps).cwiseAbs().maxCoeff() <= 1e-6);
    ++tested;
  }
}

TEST_CASE("Jacobian rejects complex spectra") {
  Matrix p(3, 3);
  p << 0.1, 0.0, 0.9,
       0.9, 0.1, 0.0,
       0.0, 0.9, 0.1;
  CHECK_THROWS_AS(effective_parameter_jacobian(p, 0.0), std::domain_error);
}
