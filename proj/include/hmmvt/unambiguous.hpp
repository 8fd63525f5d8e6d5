#ifndef HMMVT_UNAMBIGUOUS_HPP
#define HMMVT_UNAMBIGUOUS_HPP

#include "hmmvt/hmm.hpp"
#include "hmmvt/zeta.hpp"

#include <vector>

namespace hmmvt {

/*!
 * HMM over two symbols in which hidden state 1 (index 0) emits symbol 1
 * with probability 1 - epsilon and symbol 2 otherwise, while every other
 * hidden state emits symbol 2. Observing symbol 1 therefore pins the
 * hidden state.
 *
 * t1 has a single nonzero row, (1 - epsilon) times the first row of the
 * transition matrix; t2 = transition - t1.
 */
struct UnambiguousHmm {
  int num_hidden = 0;
  double epsilon = 0.0;
  Matrix transition;
  Matrix t1;
  Matrix t2;

  HmmModel hmm(MixingPolicy policy = MixingPolicy::reject) const;
};

UnambiguousHmm build_unambiguous(const Matrix& transition, double epsilon);

/// Eigen-decomposition of t2 with biorthonormal left/right vectors.
struct SpectralData {
  Eigen::VectorXcd eigenvalues;  // ascending real part; the Perron root tau is last
  Eigen::MatrixXcd right;        // columns |R_a>
  Eigen::MatrixXcd left;         // rows <L_a|, left * right = I
  Eigen::VectorXcd weights;      // psi_a = <1|t1|R_a><L_a|1>
  double conditioning = 0.0;     // cond_2 of the right eigenvector matrix
  bool available = false;        // false when conditioning > 1e8

  double tau() const { return eigenvalues(eigenvalues.size() - 1).real(); }
};

SpectralData spectral_data(const UnambiguousHmm& model);

/// t_k = <1| t1 t2^k |1> for k = 0..k_max by direct products.
std::vector<double> t_weights(const UnambiguousHmm& model, int k_max);

/// sum_a tau_a^k psi_a for k = 0..k_max.
std::vector<double> t_weights_spectral(const SpectralData& spectral, int k_max);

/// sum_k t_k and sum_k (k + 1) t_k in closed form from the spectral data
/// (falls back to truncation plus a two-step geometric tail).
double t_total(const UnambiguousHmm& model);
double mean_return_time(const UnambiguousHmm& model);

/// Closed-form series
///   xi(z, n) = (1 - z tau tauhat^n) (1 - sum_k t_k thaat_k^n z^(k+1))
/// expanded to z^k_max, with its exact two-step geometric tail attached
/// when the t_k recurrence allows it.
ZetaSeries exact_zeta_series(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model,
                             double n, int k_max);

/// xi(z, n) for |z| <= 1.
double exact_zeta(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model, double z,
                  double n, int k_max);

/// Factorized value (1 - tauhat^n tau)(1 - sum_k thaat_k^n t_k) at z = 1.
double exact_zeta_at_one(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model,
                         double n, int k_max);

struct ExactRate {
  double value = 0.0;              // sum_k t_k ln thaat_k / sum_k (k + 1) t_k
  std::vector<int> offending_k;    // t_k > 0 = thaat_k; value is -inf when non-empty
};

ExactRate likelihood_rate_exact(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model,
                                int k_max = 40);

/// Jacobian of (tau_1..tau_L, psi_1..psi_L) with respect to the L(L-1) + 1
/// free parameters: the off-diagonal transition entries, column by column
/// (each diagonal entry absorbs its column's normalization), then epsilon.
/// Analytic, through the spectral projectors of t2. Requires real,
/// pairwise distinct eigenvalues of t2; throws std::domain_error otherwise.
Matrix effective_parameter_jacobian(const Matrix& transition, double epsilon);

/// (tau, psi) stacked as one real vector, same ordering as the Jacobian rows.
Vector effective_parameters(const Matrix& transition, double epsilon);

}  // namespace hmmvt

#endif  // HMMVT_UNAMBIGUOUS_HPP
