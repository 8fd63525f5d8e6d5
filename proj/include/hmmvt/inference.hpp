#ifndef HMMVT_INFERENCE_HPP
#define HMMVT_INFERENCE_HPP

#include "hmmvt/hmm.hpp"

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmmvt {

inline constexpr double kInfiniteBeta = std::numeric_limits<double>::infinity();

class UnreachableSequence : public std::runtime_error {
 public:
  UnreachableSequence() : std::runtime_error("sequence unreachable under trial model") {}
};

struct ViterbiResult {
  StateSeq path;       // N + 1 states
  int tie_count = 0;   // backtrack positions with more than one optimal predecessor
  double log_score = kLogZero;  // ln P(path, x)
};

/// Max-product decoding in the log domain. Ties (within 1e-12 relative)
/// resolve toward the lowest state index and are counted.
ViterbiResult viterbi_decode(const HmmModel& model, const ObsSeq& observations);

/// E-step statistics of one sequence.
struct Posteriors {
  Matrix state;     // L x (N+1); column i is P(s_i | x)
  Matrix pairwise;  // (L*L) x N; column i-1, row s + L*s' is P(s_i = s, s_{i-1} = s' | x)
  double log_likelihood = kLogZero;

  double pair(Eigen::Index i, int s, int s_prev) const {
    return pairwise(s + state.rows() * s_prev, i - 1);
  }
};

Posteriors forward_backward(const HmmModel& model, const ObsSeq& observations);

struct EmUpdate {
  HmmModel model;
  double log_likelihood_before = kLogZero;
  double log_likelihood_after = kLogZero;
  /// Fraction of the full M-step that was applied (1 unless the
  /// monotonicity safeguard had to shorten the step).
  double step = 1.0;
};

/// One Baum-Welch iteration with its before/after log-likelihoods.
///
/// The M-step re-estimates transitions from expected pair counts and
/// emissions from expected occupancies; states with zero expected
/// occupancy keep their previous column. Because the initial state is
/// tied to the stationary distribution, the plain M-step is not
/// guaranteed to ascend, so the step is halved toward the current model
/// until ln P(x) does not decrease by more than 1e-9 per symbol.
EmUpdate baum_welch_update(const HmmModel& model, const ObsSeq& observations);

HmmModel baum_welch_step(const HmmModel& model, const ObsSeq& observations);

/// Segmental K-means step: decode, then count transitions and
/// (state, symbol) co-occurrences along the decoded path.
HmmModel viterbi_training_step(const HmmModel& model, const ObsSeq& observations);

/// Fraction of positions at which the two paths agree.
double decode_overlap(const StateSeq& truth, const StateSeq& decoded);

enum class TrainingMethod { baum_welch, viterbi };

struct TrainOptions {
  TrainingMethod method = TrainingMethod::baum_welch;
  int max_iterations = 500;
  double tolerance = 1e-8;  // L-inf change of the reported parameters
};

struct TraceRow {
  int iteration = 0;
  double log_likelihood_per_symbol = kLogZero;
  std::vector<double> params;
  double delta_linf = 0.0;
};

struct TrainResult {
  HmmModel model;
  std::vector<TraceRow> trace;
  int iterations = 0;
  bool converged = false;
};

/// Parameters written to traces and used for the convergence test.
using ParamView = std::function<std::vector<double>(const HmmModel&)>;

/// Transition entries (column-major) followed by emission entries.
std::vector<double> flatten_params(const HmmModel& model);

TrainResult train(const HmmModel& initial, const ObsSeq& observations, const TrainOptions& options,
                  const ParamView& view = flatten_params);

enum class FreeEnergyMethod { exact_enumeration, closed_form, monte_carlo };

struct FreeEnergyEstimate {
  double beta = 1.0;
  double value_per_symbol = 0.0;  // F_beta / N in nats
  FreeEnergyMethod method = FreeEnergyMethod::exact_enumeration;
  double std_error = 0.0;
};

/// Exact finite-N free energy
///   F_beta / N = -(1/(beta N)) sum_x P(x) ln sum_s Phat(s, x)^beta
/// by enumeration of all M^N observation sequences. beta = kInfiniteBeta
/// uses max_s ln Phat(s, x). Requires N <= 10 and M^N <= 3^10.
FreeEnergyEstimate gibbs_free_energy_exact(const HmmModel& true_model, const HmmModel& trial_model,
                                           double beta, int n);

std::string to_string(FreeEnergyMethod method);

}  // namespace hmmvt

#endif  // HMMVT_INFERENCE_HPP
