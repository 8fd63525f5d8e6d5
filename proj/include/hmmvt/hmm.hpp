#ifndef HMMVT_HMM_HPP
#define HMMVT_HMM_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmmvt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Hidden-state labels s_0..s_N, zero-based internally (files use 1-based labels).
using StateSeq = std::vector<int>;
/// Observed-symbol labels x_1..x_N, zero-based internally.
using ObsSeq = std::vector<int>;

/// Log-domain value used for events of probability zero.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kMixingGap = 1e-9;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MixingPolicy {
  reject,  // throw ModelError for non-mixing chains
  flag,    // accept and record mixing() == false (used for trial models mid-training)
};

/*!
 * Discrete HMM with the column convention used throughout the library:
 *
 *   transition(s, s') = p(s | s')   (column s' is the previous state)
 *   emission(x, s)    = pi(x | s)
 *
 * so every column of both matrices is a probability vector, and the
 * transfer matrix T(x) has entries T(x)(s, s') = pi(x|s) p(s|s').
 * The initial hidden state is drawn from the stationary distribution.
 *
 * Instances are immutable; construct them with build_model().
 */
class HmmModel {
 public:
  int num_hidden() const { return static_cast<int>(transition_.rows()); }
  int num_observed() const { return static_cast<int>(emission_.rows()); }

  const Matrix& transition() const { return transition_; }
  const Matrix& emission() const { return emission_; }
  const Vector& stationary() const { return stationary_; }

  bool mixing() const { return mixing_; }
  /// Modulus of the second-largest eigenvalue of the transition matrix.
  double second_eigenvalue_modulus() const { return second_modulus_; }

 private:
  friend HmmModel build_model(const Matrix&, const Matrix&, MixingPolicy);

  Matrix transition_;
  Matrix emission_;
  Vector stationary_;
  bool mixing_ = true;
  double second_modulus_ = 0.0;
};

/// Validates the matrices and computes the stationary distribution.
/// Throws ModelError on non-stochastic columns (index and deviation in the
/// message) and, under MixingPolicy::reject, on non-mixing chains.
HmmModel build_model(const Matrix& transition, const Matrix& emission,
                     MixingPolicy policy = MixingPolicy::reject);

/// Stationary vector of a column-stochastic matrix: direct solve for small
/// L, power iteration to 1e-14 otherwise or when the solve is singular.
Vector stationary_distribution(const Matrix& transition);

struct TransferMatrix {
  int symbol = 0;
  Matrix entries;
};

TransferMatrix transfer_matrix(const HmmModel& model, int symbol);

/// All M transfer matrices, indexed by symbol.
std::vector<Matrix> transfer_matrices(const HmmModel& model);

struct Sample {
  StateSeq states;      // N + 1 entries, s_0 .. s_N
  ObsSeq observations;  // N entries, x_1 .. x_N
};

/// Draws a length-n realization. Fully determined by (model, n, seed).
Sample sample(const HmmModel& model, std::size_t n, std::uint64_t seed);

/// ln P(s, x). Requires states.size() == observations.size() + 1.
double joint_log_prob(const HmmModel& model, const StateSeq& states, const ObsSeq& observations);

enum class Rescaling {
  max_entry,  // divide the forward vector by its largest entry
  sum,        // divide by the sum of entries (the usual Baum-Welch scaling)
};

/// ln P(x) via the scaled transfer-matrix product. kLogZero for impossible x.
double observed_log_prob(const HmmModel& model, const ObsSeq& observations,
                         Rescaling rescaling = Rescaling::max_entry);

/// Per-symbol conditional log-probabilities ln P(x_i | x_1..x_{i-1}).
/// Their sum is observed_log_prob(); used for batch-means error bars.
std::vector<double> conditional_log_probs(const HmmModel& model, const ObsSeq& observations);

void check_observations(const HmmModel& model, const ObsSeq& observations);
void check_states(const HmmModel& model, const StateSeq& states);

}  // namespace hmmvt

#endif  // HMMVT_HMM_HPP
