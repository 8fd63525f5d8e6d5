#ifndef HMMVT_ZETA_HPP
#define HMMVT_ZETA_HPP

#include "hmmvt/hmm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hmmvt {

/// Spectral radius of a nonnegative square matrix (0 for the zero matrix).
/// Closed form for L <= 2; Hessenberg QR plus Newton polishing on the
/// characteristic polynomial for L = 3; Hessenberg QR otherwise.
double perron_eigenvalue(const Eigen::Ref<const Matrix>& a);

using Word = std::vector<int>;

/// One cyclic equivalence class of aperiodic words: the lexicographically
/// least rotation (a Lyndon word) stands for the class.
struct OrbitClass {
  Word word;
  int period() const { return static_cast<int>(word.size()); }
};

/// Lyndon words over {0..m-1} of length 1..p_max, ordered by period and
/// then lexicographically. Guard: m <= 4, p_max <= 16.
std::vector<OrbitClass> orbit_classes(int m, int p_max);

/// Per-symbol matrices with entries pihat(x|s)^beta phat(s|s')^beta. Not
/// renormalized; at beta = 1 they are the trial transfer matrices.
struct DeformedTransferSet {
  double beta = 1.0;
  std::vector<Matrix> matrices;
};

DeformedTransferSet beta_deform(const HmmModel& trial_model, double beta);

/// T(w_p) ... T(w_2) T(w_1): the first symbol acts first.
Matrix word_product(const std::vector<Matrix>& transfer, const Word& word);

/// lambda[prod T] * lambda[prod That]^n, with 0^0 = 1.
double phi_weight(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                  const Word& word);

enum class Expansion { cycle, cumulant, closed_form };

std::string to_string(Expansion expansion);

/// Two-step geometric continuation of a coefficient sequence, applied
/// separately to even and odd k. For each parity the values continue as
/// c_{K+2j} = c_K rho^j and the n-derivatives as (a + b j) rho^j.
struct GeometricTail {
  int last_k[2] = {0, 0};
  double ratio[2] = {0.0, 0.0};
  double value[2] = {0.0, 0.0};
  double d_const[2] = {0.0, 0.0};
  double d_slope[2] = {0.0, 0.0};
};

/// Truncated power series of xi(z, n) in z at a fixed n, with the
/// coefficient-wise derivative d/dn at the same n.
struct ZetaSeries {
  Expansion source = Expansion::cycle;
  double n = 0.0;
  std::vector<double> coefficients;     // c[0] == 1
  std::vector<double> dn_coefficients;  // d c[k] / dn
  /// False when some cycle has lambda > 0 but lambdahat = 0 at n = 0: the
  /// trial model assigns probability zero to realizable sequences.
  bool dn_finite = true;
  std::optional<GeometricTail> tail;

  int k_max() const { return static_cast<int>(coefficients.size()) - 1; }

  /// xi(z, n), including the geometric tail when one was detected.
  double value(double z) const;
  double dz(double z) const;
  double dn(double z) const;
  /// Radius below which the tail continuation converges.
  double tail_radius() const;
};

/// Attaches a tail when both parity chains of the last three coefficients
/// are consistent with a common geometric ratio |rho| < 1 (relative
/// agreement 1e-6). Leaves series.tail empty otherwise.
void detect_geometric_tail(ZetaSeries& series);

/// prod over orbit classes of (1 - z^p phi), truncated at z^k_max, with a
/// geometric tail attached when detect_geometric_tail finds one.
/// Guard: k_max <= 12.
ZetaSeries zeta_series_cycle(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                             int k_max);

/// exp(-sum_m z^m Lambda^m(n, m) / m) truncated at z^k_max with Lambda^m
/// summed over all M^m words; tail handling as for zeta_series_cycle.
/// Guard: k_max <= 10.
ZetaSeries zeta_series_cumulant(const HmmModel& true_model, const DeformedTransferSet& trial,
                                double n, int k_max);

/// Lambda(n) = 1 / z*, z* the smallest positive zero of the series on
/// (1e-9, z_guard]. Throws std::runtime_error("truncation too short ...")
/// when no sign change is found.
double zeta_root(const ZetaSeries& series, double z_guard = 5.0);

/// (sum_x lambda[T(x)] lambda^n[That(x)])^(1/N) over all M^N words.
/// Guard: M^N <= 2^20 and N <= 12.
double brute_force_lambda(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                          int length);

/// The un-rooted sum Lambda^N(n, N).
double brute_force_sum(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                       int length);

struct LikelihoodRate {
  double value = 0.0;              // d_n xi(1,0) / d_z xi(1,0), nats per symbol
  double finite_difference = 0.0;  // same ratio with d_n by central difference, h = 1e-6
  bool zero_support = false;       // value is -inf: trial forbids a realizable cycle
  bool tail_used = false;
};

/// -beta F_beta / N from the cycle expansion of the beta-deformed zeta
/// function; at beta = 1 the expected per-symbol log-likelihood.
LikelihoodRate likelihood_rate(const HmmModel& true_model, const HmmModel& trial_model, double beta,
                               int k_max);

struct OrbitDiagnostic {
  int period = 0;
  Word representative;
  double lambda_true = 0.0;
  double lambda_trial = 0.0;
  double phi_n0 = 0.0;
  double dphi_dn = 0.0;
};

std::vector<OrbitDiagnostic> orbit_diagnostics(const HmmModel& true_model,
                                               const DeformedTransferSet& trial, int p_max);

}  // namespace hmmvt

#endif  // HMMVT_ZETA_HPP
