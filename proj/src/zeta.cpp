#include "hmmvt/zeta.hpp"

#include "hmmvt/numeric.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hmmvt {

namespace {

constexpr double kTailConsistency = 1e-6;
constexpr double kFiniteDifferenceStep = 1e-6;

double polish_cubic_root(const Eigen::Ref<const Matrix>& a, double root) {
  const double trace = a.trace();
  const double minors = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) -
                        a(0, 2) * a(2, 0) + a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  const double det = a.determinant();
  for (int it = 0; it < 3; ++it) {
    const double p = ((root - trace) * root + minors) * root - det;
    const double dp = (3.0 * root - 2.0 * trace) * root + minors;
    // Only polish simple roots; a tiny derivative means a multiple root,
    // where Newton would lose rather than gain accuracy.
    if (!(std::abs(dp) > 1e-6 * std::max(1.0, root * root))) break;
    const double step = p / dp;
    if (!(std::abs(step) < 1e-8 * std::max(root, 1e-300))) break;
    root -= step;
  }
  return root;
}

}  // namespace

double perron_eigenvalue(const Eigen::Ref<const Matrix>& a) {
  const Eigen::Index n = a.rows();
  if (n == 0) return 0.0;
  if (n == 1) return std::max(a(0, 0), 0.0);
  if (n == 2) {
    const double half_gap = 0.5 * (a(0, 0) - a(1, 1));
    return 0.5 * (a(0, 0) + a(1, 1)) + std::sqrt(half_gap * half_gap + a(0, 1) * a(1, 0));
  }
  if (a.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(a, false);
  double rho = solver.eigenvalues().cwiseAbs().maxCoeff();
  if (n == 3 && rho > 0.0) rho = polish_cubic_root(a, rho);
  return std::max(rho, 0.0);
}

std::vector<OrbitClass> orbit_classes(int m, int p_max) {
  if (m < 1 || m > 4 || p_max < 1 || p_max > 16) {
    throw std::invalid_argument("orbit_classes: guard requires 1 <= M <= 4 and 1 <= p_max <= 16");
  }
  // Duval's generation of Lyndon words in lexicographic order.
  std::vector<OrbitClass> out;
  Word w{-1};
  while (!w.empty()) {
    ++w.back();
    out.push_back({w});
    const std::size_t len = w.size();
    while (w.size() < static_cast<std::size_t>(p_max)) w.push_back(w[w.size() - len]);
    while (!w.empty() && w.back() == m - 1) w.pop_back();
  }
  std::stable_sort(out.begin(), out.end(), [](const OrbitClass& a, const OrbitClass& b) {
    if (a.period() != b.period()) return a.period() < b.period();
    return a.word < b.word;
  });
  return out;
}

DeformedTransferSet beta_deform(const HmmModel& trial_model, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("beta_deform: beta must be positive and finite");
  }
  DeformedTransferSet set;
  set.beta = beta;
  for (const Matrix& t : transfer_matrices(trial_model)) {
    if (beta == 1.0) {
      set.matrices.push_back(t);
    } else {
      set.matrices.push_back(t.unaryExpr([beta](double v) { return v > 0.0 ? std::pow(v, beta) : 0.0; }));
    }
  }
  return set;
}

Matrix word_product(const std::vector<Matrix>& transfer, const Word& word) {
  if (word.empty()) throw std::invalid_argument("word_product: empty word");
  Matrix product = transfer.at(static_cast<std::size_t>(word.front()));
  for (std::size_t k = 1; k < word.size(); ++k) {
    product = transfer.at(static_cast<std::size_t>(word[k])) * product;
  }
  return product;
}

namespace {

double weight(double lambda, double lambda_hat, double n) {
  if (lambda == 0.0) return 0.0;
  return lambda * pow0(lambda_hat, n);
}

// d/dn [lambda lambdahat^n]. Sets *infinite for lambda > 0 = lambdahat at n = 0.
double weight_dn(double lambda, double lambda_hat, double n, bool* infinite) {
  if (lambda == 0.0) return 0.0;
  if (lambda_hat == 0.0) {
    if (n <= 0.0) *infinite = true;
    return 0.0;
  }
  return lambda * std::pow(lambda_hat, n) * std::log(lambda_hat);
}

std::vector<double> truncated_product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; i + j < out.size() && j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

void check_alphabets(const HmmModel& true_model, const DeformedTransferSet& trial) {
  if (static_cast<int>(trial.matrices.size()) != true_model.num_observed() ||
      trial.matrices.front().rows() < 1) {
    throw std::invalid_argument("zeta: true and trial models must share the alphabet");
  }
}

}  // namespace

double phi_weight(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                  const Word& word) {
  check_alphabets(true_model, trial);
  const double lambda = perron_eigenvalue(word_product(transfer_matrices(true_model), word));
  const double lambda_hat = perron_eigenvalue(word_product(trial.matrices, word));
  return weight(lambda, lambda_hat, n);
}

std::string to_string(Expansion expansion) {
  switch (expansion) {
    case Expansion::cycle: return "cycle-expansion";
    case Expansion::cumulant: return "cumulant";
    case Expansion::closed_form: return "closed-form";
  }
  return "unknown";
}

double ZetaSeries::tail_radius() const {
  if (!tail) return std::numeric_limits<double>::infinity();
  const double rho = std::max(std::abs(tail->ratio[0]), std::abs(tail->ratio[1]));
  return rho > 0.0 ? 1.0 / std::sqrt(rho) : std::numeric_limits<double>::infinity();
}

double ZetaSeries::value(double z) const {
  double sum = 0.0;
  for (int k = k_max(); k >= 0; --k) sum = sum * z + coefficients[static_cast<std::size_t>(k)];
  if (tail) {
    for (int parity = 0; parity < 2; ++parity) {
      const double q = tail->ratio[parity] * z * z;
      sum += tail->value[parity] * std::pow(z, tail->last_k[parity]) * q / (1.0 - q);
    }
  }
  return sum;
}

double ZetaSeries::dz(double z) const {
  double sum = 0.0;
  for (int k = k_max(); k >= 1; --k) sum = sum * z + k * coefficients[static_cast<std::size_t>(k)];
  if (tail) {
    for (int parity = 0; parity < 2; ++parity) {
      const double q = tail->ratio[parity] * z * z;
      const int k = tail->last_k[parity];
      sum += tail->value[parity] * std::pow(z, k - 1) *
             (k * q / (1.0 - q) + 2.0 * q / ((1.0 - q) * (1.0 - q)));
    }
  }
  return sum;
}

double ZetaSeries::dn(double z) const {
  double sum = 0.0;
  for (int k = k_max(); k >= 0; --k) sum = sum * z + dn_coefficients[static_cast<std::size_t>(k)];
  if (tail) {
    for (int parity = 0; parity < 2; ++parity) {
      const double q = tail->ratio[parity] * z * z;
      sum += std::pow(z, tail->last_k[parity]) *
             (tail->d_const[parity] * q / (1.0 - q) +
              tail->d_slope[parity] * q / ((1.0 - q) * (1.0 - q)));
    }
  }
  return sum;
}

void detect_geometric_tail(ZetaSeries& series) {
  series.tail.reset();
  const int k_max = series.k_max();
  if (k_max < 7 || !series.dn_finite) return;
  const auto agree = [](double a, double b) {
    return std::abs(a - b) <= kTailConsistency * std::max({std::abs(a), std::abs(b), 1e-300});
  };
  GeometricTail tail;
  for (int parity = 0; parity < 2; ++parity) {
    const int k2 = (k_max % 2 == parity) ? k_max : k_max - 1;
    const int k1 = k2 - 2;
    const int k0 = k2 - 4;
    const double c2 = series.coefficients[static_cast<std::size_t>(k2)];
    const double c1 = series.coefficients[static_cast<std::size_t>(k1)];
    const double c0 = series.coefficients[static_cast<std::size_t>(k0)];
    const double d2 = series.dn_coefficients[static_cast<std::size_t>(k2)];
    const double d1 = series.dn_coefficients[static_cast<std::size_t>(k1)];
    const double d0 = series.dn_coefficients[static_cast<std::size_t>(k0)];
    tail.last_k[parity] = k2;
    if (c1 == 0.0 || c0 == 0.0) {
      if (c2 != 0.0 || c1 != 0.0 || d2 != 0.0 || d1 != 0.0) return;
      continue;  // identically zero chain
    }
    const double rho = c2 / c1;
    if (!agree(rho, c1 / c0) || !(std::abs(rho) < 1.0)) return;
    const double slope = d2 - rho * d1;
    if (!agree((d2 - 2.0 * slope) / (rho * rho), d0)) return;
    tail.ratio[parity] = rho;
    tail.value[parity] = c2;
    tail.d_const[parity] = d2;
    tail.d_slope[parity] = slope;
  }
  series.tail = tail;
}

ZetaSeries zeta_series_cycle(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                             int k_max) {
  if (k_max < 1 || k_max > 12) throw std::invalid_argument("zeta_series_cycle: guard 1 <= k_max <= 12");
  check_alphabets(true_model, trial);
  const std::vector<Matrix> transfer = transfer_matrices(true_model);
  const auto size = static_cast<std::size_t>(k_max) + 1;

  ZetaSeries series;
  series.source = Expansion::cycle;
  series.n = n;
  series.coefficients.assign(size, 0.0);
  series.coefficients[0] = 1.0;
  std::vector<double> log_derivative(size, 0.0);
  bool infinite = false;

  for (const OrbitClass& orbit : orbit_classes(true_model.num_observed(), k_max)) {
    const auto p = static_cast<std::size_t>(orbit.period());
    const double lambda = perron_eigenvalue(word_product(transfer, orbit.word));
    const double lambda_hat = perron_eigenvalue(word_product(trial.matrices, orbit.word));
    const double phi = weight(lambda, lambda_hat, n);
    const double dphi = weight_dn(lambda, lambda_hat, n, &infinite);
    for (std::size_t k = size - 1; k >= p; --k) series.coefficients[k] -= phi * series.coefficients[k - p];
    // d/dn ln(1 - z^p phi) = -dphi sum_j phi^j z^{p(j+1)}
    double power = 1.0;
    for (std::size_t k = p; k < size; k += p) {
      log_derivative[k] -= dphi * power;
      power *= phi;
    }
  }
  series.dn_finite = !infinite;
  series.dn_coefficients = truncated_product(series.coefficients, log_derivative);
  detect_geometric_tail(series);
  return series;
}

namespace {

// Depth-first walk over all words up to max_length; visit(length, lambda,
// lambda_hat) is called once per word with the Perron roots of the true and
// trial products.
void walk_words(const std::vector<Matrix>& transfer, const std::vector<Matrix>& trial,
                int max_length, bool leaves_only,
                const std::function<void(int, double, double)>& visit) {
  const int m = static_cast<int>(transfer.size());
  std::function<void(const Matrix&, const Matrix&, int)> recurse =
      [&](const Matrix& product, const Matrix& product_hat, int length) {
        if (!leaves_only || length == max_length) {
          visit(length, perron_eigenvalue(product), perron_eigenvalue(product_hat));
        }
        if (length == max_length) return;
        for (int x = 0; x < m; ++x) {
          recurse(transfer[static_cast<std::size_t>(x)] * product,
                  trial[static_cast<std::size_t>(x)] * product_hat, length + 1);
        }
      };
  for (int x = 0; x < m; ++x) {
    recurse(transfer[static_cast<std::size_t>(x)], trial[static_cast<std::size_t>(x)], 1);
  }
}

}  // namespace

ZetaSeries zeta_series_cumulant(const HmmModel& true_model, const DeformedTransferSet& trial,
                                double n, int k_max) {
  if (k_max < 1 || k_max > 10) throw std::invalid_argument("zeta_series_cumulant: guard 1 <= k_max <= 10");
  check_alphabets(true_model, trial);
  const auto size = static_cast<std::size_t>(k_max) + 1;
  std::vector<double> lambda_sum(size, 0.0);
  std::vector<double> lambda_sum_dn(size, 0.0);
  bool infinite = false;
  walk_words(transfer_matrices(true_model), trial.matrices, k_max, false,
             [&](int length, double lambda, double lambda_hat) {
               lambda_sum[static_cast<std::size_t>(length)] += weight(lambda, lambda_hat, n);
               lambda_sum_dn[static_cast<std::size_t>(length)] +=
                   weight_dn(lambda, lambda_hat, n, &infinite);
             });

  // xi = exp(a), a(z) = -sum_m z^m Lambda^m(n, m) / m.
  std::vector<double> a(size, 0.0);
  std::vector<double> da(size, 0.0);
  for (std::size_t m = 1; m < size; ++m) {
    a[m] = -lambda_sum[m] / static_cast<double>(m);
    da[m] = -lambda_sum_dn[m] / static_cast<double>(m);
  }
  ZetaSeries series;
  series.source = Expansion::cumulant;
  series.n = n;
  series.coefficients.assign(size, 0.0);
  series.coefficients[0] = 1.0;
  for (std::size_t k = 1; k < size; ++k) {
    double acc = 0.0;
    for (std::size_t j = 1; j <= k; ++j) acc += static_cast<double>(j) * a[j] * series.coefficients[k - j];
    series.coefficients[k] = acc / static_cast<double>(k);
  }
  series.dn_finite = !infinite;
  series.dn_coefficients = truncated_product(series.coefficients, da);
  detect_geometric_tail(series);
  return series;
}

double zeta_root(const ZetaSeries& series, double z_guard) {
  if (series.coefficients.empty() || series.coefficients[0] != 1.0) {
    throw std::invalid_argument("zeta_root: series must start with c[0] = 1");
  }
  constexpr double z_min = 1e-9;
  const double upper = std::min(z_guard, series.tail_radius() * (1.0 - 1e-9));
  constexpr int grid = 20000;
  double lo = z_min;
  double f_lo = series.value(lo);
  double hi = lo;
  bool bracketed = false;
  for (int i = 1; i <= grid; ++i) {
    hi = z_min + (upper - z_min) * static_cast<double>(i) / grid;
    const double f_hi = series.value(hi);
    if ((f_lo > 0.0) != (f_hi > 0.0) || f_hi == 0.0) {
      bracketed = true;
      break;
    }
    lo = hi;
    f_lo = f_hi;
  }
  if (!bracketed) {
    std::ostringstream os;
    os << "truncation too short: no sign change of xi(z, " << series.n << ") on (0, " << upper
       << "] at k_max = " << series.k_max();
    throw std::runtime_error(os.str());
  }
  while (hi - lo > 1e-13 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = series.value(mid);
    if ((f_mid > 0.0) == (f_lo > 0.0) && f_mid != 0.0) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 1.0 / (0.5 * (lo + hi));
}

double brute_force_sum(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                       int length) {
  check_alphabets(true_model, trial);
  const double words = std::pow(static_cast<double>(true_model.num_observed()), length);
  if (length < 1 || length > 12 || words > 1048576.0) {
    throw std::invalid_argument("brute_force_lambda: guard requires 1 <= N <= 12 and M^N <= 2^20");
  }
  CompensatedSum total;
  walk_words(transfer_matrices(true_model), trial.matrices, length, true,
             [&](int, double lambda, double lambda_hat) { total.add(weight(lambda, lambda_hat, n)); });
  return total.value();
}

double brute_force_lambda(const HmmModel& true_model, const DeformedTransferSet& trial, double n,
                          int length) {
  return std::pow(brute_force_sum(true_model, trial, n, length), 1.0 / length);
}

LikelihoodRate likelihood_rate(const HmmModel& true_model, const HmmModel& trial_model, double beta,
                               int k_max) {
  const DeformedTransferSet deformed = beta_deform(trial_model, beta);
  LikelihoodRate rate;
  ZetaSeries series = zeta_series_cycle(true_model, deformed, 0.0, k_max);
  if (!series.dn_finite) {
    rate.zero_support = true;
    rate.value = rate.finite_difference = -std::numeric_limits<double>::infinity();
    return rate;
  }
  rate.tail_used = series.tail.has_value();
  const double dz = series.dz(1.0);
  rate.value = series.dn(1.0) / dz;

  const double h = kFiniteDifferenceStep;
  ZetaSeries plus = zeta_series_cycle(true_model, deformed, h, k_max);
  ZetaSeries minus = zeta_series_cycle(true_model, deformed, -h, k_max);
  if (!rate.tail_used) {
    plus.tail.reset();
    minus.tail.reset();
  }
  rate.finite_difference = (plus.value(1.0) - minus.value(1.0)) / (2.0 * h) / dz;
  return rate;
}

std::vector<OrbitDiagnostic> orbit_diagnostics(const HmmModel& true_model,
                                               const DeformedTransferSet& trial, int p_max) {
  check_alphabets(true_model, trial);
  const std::vector<Matrix> transfer = transfer_matrices(true_model);
  std::vector<OrbitDiagnostic> rows;
  for (const OrbitClass& orbit : orbit_classes(true_model.num_observed(), p_max)) {
    OrbitDiagnostic row;
    row.period = orbit.period();
    row.representative = orbit.word;
    row.lambda_true = perron_eigenvalue(word_product(transfer, orbit.word));
    row.lambda_trial = perron_eigenvalue(word_product(trial.matrices, orbit.word));
    row.phi_n0 = weight(row.lambda_true, row.lambda_trial, 0.0);
    bool infinite = false;
    row.dphi_dn = weight_dn(row.lambda_true, row.lambda_trial, 0.0, &infinite);
    if (infinite) row.dphi_dn = -std::numeric_limits<double>::infinity();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hmmvt
