#include "hmmvt/hmm.hpp"
#include "hmmvt/scenario.hpp"
#include "hmmvt/unambiguous.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hmmvt;

namespace {

Matrix reference_transition() {
  Matrix p(3, 3);
  p << 0.5, 0.4, 0.5,
       0.3, 0.0, 0.5,
       0.2, 0.6, 0.0;
  return p;
}

Matrix scenario_emission() {
  Matrix e(2, 3);
  e << 1.0, 0.0, 0.0,
       0.0, 1.0, 1.0;
  return e;
}

}  // namespace

TEST_CASE("doubly stochastic chain has uniform stationary vector") {
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  Matrix e(2, 2);
  e << 0.9, 0.2, 0.1, 0.8;
  const HmmModel m = build_model(p, e);
  CHECK(m.stationary()(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(m.stationary()(1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("reference scenario transition is accepted") {
  const Matrix p = reference_transition();
  for (int j = 0; j < 3; ++j) CHECK(std::abs(p(0, j) + p(1, j) + p(2, j) - 1.0) < 1e-15);
  const HmmModel m = build_model(p, scenario_emission());
  CHECK(m.mixing());
  CHECK((m.transition() * m.stationary() - m.stationary()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(m.stationary().sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("column summing to 0.9 is rejected with its index") {
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.4, 0.5;
  Matrix e = Matrix::Constant(2, 2, 0.5);
  try {
    build_model(p, e);
    FAIL("expected ModelError");
  } catch (const ModelError& err) {
    const std::string what = err.what();
    CHECK(what.find("non-stochastic column") != std::string::npos);
  }
  CHECK_THROWS_AS(build_model(Matrix::Identity(2, 2), Matrix::Constant(2, 2, 0.4)), ModelError);
}

TEST_CASE("non-mixing chains are rejected or flagged") {
  Matrix flip(2, 2);
  flip << 0.0, 1.0, 1.0, 0.0;
  const Matrix e = Matrix::Constant(2, 2, 0.5);
  try {
    build_model(flip, e);
    FAIL("expected ModelError");
  } catch (const ModelError& err) {
    CHECK(std::string(err.what()).find("non-mixing") != std::string::npos);
  }
  const HmmModel flagged = build_model(flip, e, MixingPolicy::flag);
  CHECK_FALSE(flagged.mixing());
  CHECK(flagged.second_eigenvalue_modulus() == doctest::Approx(1.0));
}

TEST_CASE("transfer matrices of the unambiguous model") {
  const Matrix p = reference_transition();
  SUBCASE("epsilon = 0: only the first row of T(1) is nonzero") {
    const HmmModel m = build_unambiguous(p, 0.0).hmm();
    const TransferMatrix t = transfer_matrix(m, 0);
    CHECK(t.entries.row(0).isApprox(p.row(0), 0.0));
    CHECK(t.entries.bottomRows(2).isZero(0.0));
  }
  SUBCASE("epsilon = 0.25 scales that row by 0.75") {
    const HmmModel m = build_unambiguous(p, 0.25).hmm();
    const TransferMatrix t = transfer_matrix(m, 0);
    for (int j = 0; j < 3; ++j) CHECK(t.entries(0, j) == doctest::Approx(0.75 * p(0, j)).epsilon(1e-15));
    CHECK(t.entries.bottomRows(2).isZero(0.0));
  }
  SUBCASE("out-of-range symbol") {
    const HmmModel m = build_unambiguous(p, 0.0).hmm();
    CHECK_THROWS_AS(transfer_matrix(m, 2), std::out_of_range);
    CHECK_THROWS_AS(transfer_matrix(m, -1), std::out_of_range);
  }
}

TEST_CASE("transfer matrices sum to the transition matrix") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const HmmModel m = oracle::random_model(rng, 3, 4);
    Matrix total = Matrix::Zero(3, 3);
    for (const Matrix& t : transfer_matrices(m)) {
      CHECK(t.minCoeff() >= 0.0);
      total += t;
    }
    CHECK((total - m.transition()).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("deterministic chain produces its unique sequence") {
  Matrix cycle(3, 3);
  cycle << 0, 0, 1,
           1, 0, 0,
           0, 1, 0;
  Matrix e = Matrix::Zero(2, 3);
  e << 1, 0, 1,
       0, 1, 0;
  const HmmModel m = build_model(cycle, e, MixingPolicy::flag);
  const Sample s = sample(m, 30, 5);
  REQUIRE(s.states.size() == 31);
  for (std::size_t i = 1; i < s.states.size(); ++i) {
    CHECK(s.states[i] == (s.states[i - 1] + 1) % 3);
    CHECK(s.observations[i - 1] == (s.states[i] == 1 ? 1 : 0));
  }
}

TEST_CASE("sampling is reproducible from the seed") {
  const HmmModel m = build_model(reference_transition(), scenario_emission());
  const Sample a = sample(m, 1000, 42);
  const Sample b = sample(m, 1000, 42);
  const Sample c = sample(m, 1000, 43);
  CHECK(a.states == b.states);
  CHECK(a.observations == b.observations);
  CHECK(a.observations != c.observations);
}

TEST_CASE("symbol-1 frequency matches the stationary probability") {
  const HmmModel m = build_model(reference_transition(), scenario_emission());
  const std::size_t n = 1000000;
  const Sample s = sample(m, n, 2024);
  double ones = 0.0;
  for (const int x : s.observations) ones += (x == 0);
  const double p = m.stationary()(0);
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  CHECK(std::abs(ones / static_cast<double>(n) - p) <= 3.0 * se);
}

TEST_CASE("joint log probability") {
  const HmmModel m = build_model(reference_transition(), scenario_emission());
  SUBCASE("single step") {
    const double expected = std::log(1.0 * 0.3 * m.stationary()(0));
    CHECK(joint_log_prob(m, {0, 1}, {1}) == doctest::Approx(expected).epsilon(1e-15));
  }
  SUBCASE("forbidden transition gives the -inf sentinel") {
    CHECK(joint_log_prob(m, {1, 1}, {1}) == kLogZero);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(joint_log_prob(m, {0, 1}, {1, 1}), std::invalid_argument);
  }
}

TEST_CASE("path enumeration reproduces the marginal likelihood") {
  std::mt19937_64 rng(7);
  for (int l = 1; l <= 3; ++l) {
    for (int trial = 0; trial < 4; ++trial) {
      const HmmModel m = oracle::random_model(rng, l, 2);
      for (int n = 1; n <= 8; n += 3) {
        const Sample s = sample(m, static_cast<std::size_t>(n), rng());
        double from_joint = 0.0;
        oracle::for_each_sequence(l, n + 1, [&](const std::vector<int>& path) {
          const double lp = joint_log_prob(m, path, s.observations);
          if (lp != kLogZero) from_joint += std::exp(lp);
        });
        const double direct = std::exp(observed_log_prob(m, s.observations));
        CHECK(std::abs(direct - from_joint) <= 1e-10 * from_joint);
        CHECK(std::abs(direct - oracle::marginal_prob(m, s.observations)) <= 1e-10 * direct);
      }
    }
  }
}

TEST_CASE("observed log probability of a single symbol") {
  const HmmModel m = build_model(reference_transition(), scenario_emission());
  CHECK(std::exp(observed_log_prob(m, {0})) == doctest::Approx(m.stationary()(0)).epsilon(1e-14));
  CHECK(std::exp(observed_log_prob(m, {1})) == doctest::Approx(1.0 - m.stationary()(0)).epsilon(1e-14));
}

TEST_CASE("rescaling schedules agree") {
  std::mt19937_64 rng(3);
  const HmmModel m = oracle::random_model(rng, 3, 3);
  const Sample s = sample(m, 20000, 9);
  const double a = observed_log_prob(m, s.observations, Rescaling::max_entry);
  const double b = observed_log_prob(m, s.observations, Rescaling::sum);
  CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)) * 1e-0);

  // Unscaled product at small N.
  const Sample small = sample(m, 20, 10);
  Vector v = m.stationary();
  for (const int x : small.observations) {
    v = m.transition() * v;
    v.array() *= m.emission().row(x).transpose().array();
  }
  const double unscaled = std::log(v.sum());
  CHECK(std::abs(observed_log_prob(m, small.observations) - unscaled) <= 1e-12 * std::abs(unscaled));
}

TEST_CASE("observation probabilities sum to one") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    const HmmModel m = oracle::random_model(rng, 3, 2);
    for (const int n : {1, 4, 10}) {
      double total = 0.0;
      oracle::for_each_sequence(2, n, [&](const std::vector<int>& x) {
        total += std::exp(observed_log_prob(m, x));
      });
      CHECK(std::abs(total - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("impossible observations give the -inf sentinel") {
  Matrix e(2, 2);
  e << 1.0, 1.0, 0.0, 0.0;
  const HmmModel m = build_model(Matrix::Constant(2, 2, 0.5), e);
  CHECK(observed_log_prob(m, {0, 1, 0}) == kLogZero);
}

TEST_CASE("reference scenario log-likelihood rate from a long sample") {
  const HmmModel m = build_model(reference_transition(), scenario_emission());
  const std::size_t n = 100000;
  const Sample s = sample(m, n, 77);
  const std::vector<double> terms = conditional_log_probs(m, s.observations);
  REQUIRE(terms.size() == n);
  // Batch means for the standard error of the per-symbol average.
  const std::size_t batches = 100;
  const std::size_t size = n / batches;
  std::vector<double> means(batches, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    means[i / size] += terms[i] / static_cast<double>(size);
    total += terms[i];
  }
  double mean = 0.0;
  for (const double b : means) mean += b / static_cast<double>(batches);
  double var = 0.0;
  for (const double b : means) var += (b - mean) * (b - mean) / static_cast<double>(batches - 1);
  const double se = std::sqrt(var / static_cast<double>(batches));

  const oracle::Effective t = oracle::effective(0.3, 0.2, 0.4, 0.5);
  const double expected = oracle::renewal_rate(t, t);
  CHECK(expected == doctest::Approx(-0.690226).epsilon(1e-6));
  CHECK(std::abs(observed_log_prob(m, s.observations) / static_cast<double>(n) - total / static_cast<double>(n)) < 1e-9);
  CHECK(std::abs(total / static_cast<double>(n) - expected) <= 3.0 * se);
}

TEST_CASE("label validation") {
  const HmmModel m = build_model(reference_transition(), scenario_emission());
  CHECK_THROWS_AS(check_observations(m, {0, 2}), std::out_of_range);
  CHECK_THROWS_AS(check_states(m, {0, 3}), std::out_of_range);
  CHECK_NOTHROW(check_observations(m, {0, 1}));
}
