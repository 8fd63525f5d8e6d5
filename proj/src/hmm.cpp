#include "hmmvt/hmm.hpp"

#include "hmmvt/numeric.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace hmmvt {

namespace {

constexpr int kDirectSolveMaxStates = 50;

void check_finite_probabilities(const Matrix& m, const char* what) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream os;
        os << what << " entry (" << i + 1 << ", " << j + 1 << ") = " << v
           << " is not a probability";
        throw ModelError(os.str());
      }
    }
    const double deviation = m.col(j).sum() - 1.0;
    if (std::abs(deviation) > kStochasticTol) {
      std::ostringstream os;
      os << "non-stochastic column: " << what << " column " << j + 1
         << " deviates from 1 by " << deviation;
      throw ModelError(os.str());
    }
  }
}

double second_largest_modulus(const Matrix& transition) {
  if (transition.rows() < 2) return 0.0;
  Eigen::EigenSolver<Matrix> solver(transition, false);
  Eigen::VectorXd moduli = solver.eigenvalues().cwiseAbs();
  std::sort(moduli.data(), moduli.data() + moduli.size(), std::greater<>());
  return moduli(1);
}

Vector power_iteration_stationary(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  // Lazy chain (P + I) / 2 has the same stationary vectors and is aperiodic.
  const Matrix lazy = 0.5 * (transition + Matrix::Identity(n, n));
  Vector v = Vector::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 1000000; ++it) {
    Vector next = lazy * v;
    next /= next.sum();
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (delta < 1e-14) break;
  }
  return v;
}

}  // namespace

Vector stationary_distribution(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  if (n == 1) return Vector::Ones(1);
  if (n <= kDirectSolveMaxStates) {
    // (P - I) p = 0 with the last equation replaced by sum(p) = 1.
    Matrix a = transition - Matrix::Identity(n, n);
    a.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.isInvertible()) {
      Vector p = lu.solve(rhs);
      // Clip round-off negatives of exactly-zero entries.
      p = p.cwiseMax(0.0);
      p /= p.sum();
      if ((transition * p - p).cwiseAbs().maxCoeff() <= 1e-12) return p;
    }
  }
  return power_iteration_stationary(transition);
}

HmmModel build_model(const Matrix& transition, const Matrix& emission, MixingPolicy policy) {
  if (transition.rows() < 1 || transition.rows() != transition.cols()) {
    throw ModelError("transition matrix must be square and non-empty");
  }
  if (emission.rows() < 1 || emission.cols() != transition.cols()) {
    throw ModelError("emission matrix must be M x L with L matching the transition matrix");
  }
  check_finite_probabilities(transition, "transition");
  check_finite_probabilities(emission, "emission");

  HmmModel model;
  model.transition_ = transition;
  model.emission_ = emission;
  model.second_modulus_ = second_largest_modulus(transition);
  model.mixing_ = model.second_modulus_ < 1.0 - kMixingGap;
  if (!model.mixing_ && policy == MixingPolicy::reject) {
    std::ostringstream os;
    os << "non-mixing chain: second eigenvalue modulus " << model.second_modulus_;
    throw ModelError(os.str());
  }
  model.stationary_ = stationary_distribution(transition);
  return model;
}

void check_observations(const HmmModel& model, const ObsSeq& observations) {
  const int m = model.num_observed();
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (observations[i] < 0 || observations[i] >= m) {
      std::ostringstream os;
      os << "observation " << i + 1 << " has symbol " << observations[i] + 1
         << " outside 1.." << m;
      throw std::out_of_range(os.str());
    }
  }
}

void check_states(const HmmModel& model, const StateSeq& states) {
  const int l = model.num_hidden();
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] < 0 || states[i] >= l) {
      std::ostringstream os;
      os << "state " << i << " has label " << states[i] + 1 << " outside 1.." << l;
      throw std::out_of_range(os.str());
    }
  }
}

TransferMatrix transfer_matrix(const HmmModel& model, int symbol) {
  if (symbol < 0 || symbol >= model.num_observed()) {
    throw std::out_of_range("transfer_matrix: symbol " + std::to_string(symbol + 1) +
                            " out of range");
  }
  TransferMatrix t;
  t.symbol = symbol;
  t.entries = model.emission().row(symbol).transpose().asDiagonal() * model.transition();
  return t;
}

std::vector<Matrix> transfer_matrices(const HmmModel& model) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(model.num_observed()));
  for (int x = 0; x < model.num_observed(); ++x) out.push_back(transfer_matrix(model, x).entries);
  return out;
}

namespace {

int draw(const Eigen::Ref<const Vector>& probabilities, double u) {
  double cumulative = 0.0;
  const int last = static_cast<int>(probabilities.size()) - 1;
  for (int k = 0; k < last; ++k) {
    cumulative += probabilities(k);
    if (u < cumulative) return k;
  }
  // Round-off mass lands on the last state with positive probability.
  for (int k = last; k > 0; --k) {
    if (probabilities(k) > 0.0) return k;
  }
  return 0;
}

}  // namespace

Sample sample(const HmmModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample: length must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Sample out;
  out.states.resize(n + 1);
  out.observations.resize(n);
  out.states[0] = draw(model.stationary(), unit(rng));
  for (std::size_t i = 1; i <= n; ++i) {
    const int prev = out.states[i - 1];
    const int s = draw(model.transition().col(prev), unit(rng));
    out.states[i] = s;
    out.observations[i - 1] = draw(model.emission().col(s), unit(rng));
  }
  return out;
}

double joint_log_prob(const HmmModel& model, const StateSeq& states, const ObsSeq& observations) {
  if (states.size() != observations.size() + 1) {
    throw std::invalid_argument("joint_log_prob: need N + 1 states for N observations");
  }
  check_states(model, states);
  check_observations(model, observations);

  CompensatedSum total;
  const double p0 = model.stationary()(states[0]);
  if (p0 <= 0.0) return kLogZero;
  total.add(std::log(p0));
  for (std::size_t i = 1; i < states.size(); ++i) {
    const double factor = model.emission()(observations[i - 1], states[i]) *
                          model.transition()(states[i], states[i - 1]);
    if (factor <= 0.0) return kLogZero;
    total.add(std::log(factor));
  }
  return total.value();
}

namespace {

// Forward recursion v <- T(x) v with per-step normalization; calls
// on_step(ln scale) for every symbol and returns ln(sum of final vector).
template <typename OnStep>
double scaled_forward(const HmmModel& model, const ObsSeq& observations, Rescaling rescaling,
                      OnStep&& on_step) {
  check_observations(model, observations);
  Vector v = model.stationary();
  Vector next(v.size());
  for (const int x : observations) {
    next.noalias() = model.transition() * v;
    next.array() *= model.emission().row(x).transpose().array();
    const double scale = rescaling == Rescaling::max_entry ? next.maxCoeff() : next.sum();
    if (!(scale > 0.0)) return kLogZero;
    v = next / scale;
    on_step(std::log(scale));
  }
  return std::log(v.sum());
}

}  // namespace

double observed_log_prob(const HmmModel& model, const ObsSeq& observations, Rescaling rescaling) {
  CompensatedSum total;
  const double tail =
      scaled_forward(model, observations, rescaling, [&](double ls) { total.add(ls); });
  if (tail == kLogZero) return kLogZero;
  total.add(tail);
  return total.value();
}

std::vector<double> conditional_log_probs(const HmmModel& model, const ObsSeq& observations) {
  std::vector<double> out;
  out.reserve(observations.size());
  const double tail = scaled_forward(model, observations, Rescaling::sum,
                                     [&](double ls) { out.push_back(ls); });
  if (tail == kLogZero) {
    out.resize(observations.size(), kLogZero);
  }
  return out;
}

}  // namespace hmmvt
