#include "hmmvt/unambiguous.hpp"

#include "hmmvt/numeric.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hmmvt {

namespace {

constexpr double kSpectralConditioningLimit = 1e8;

// Sum of a_0..a_K continued past K as (A + B j) rho^j on each parity
// chain, where rho is that chain's two-step ratio.
double sum_with_tail(const std::vector<double>& terms, const double rho[2]) {
  CompensatedSum total;
  for (const double a : terms) total.add(a);
  const int k_max = static_cast<int>(terms.size()) - 1;
  if (k_max < 3) return total.value();
  for (int parity = 0; parity < 2; ++parity) {
    const double q = rho[parity];
    if (q == 0.0) continue;
    const int k2 = (k_max % 2 == parity) ? k_max : k_max - 1;
    const double a2 = terms[static_cast<std::size_t>(k2)];
    const double a1 = terms[static_cast<std::size_t>(k2 - 2)];
    const double slope = a2 - q * a1;
    total.add(a2 * q / (1.0 - q) + slope * q / ((1.0 - q) * (1.0 - q)));
  }
  return total.value();
}

// Two-step ratios t_K / t_{K-2} for each parity (0 when undefined).
void chain_ratios(const std::vector<double>& t, double rho[2]) {
  const int k_max = static_cast<int>(t.size()) - 1;
  for (int parity = 0; parity < 2; ++parity) {
    rho[parity] = 0.0;
    const int k2 = (k_max % 2 == parity) ? k_max : k_max - 1;
    if (k2 < 3) continue;
    const double num = t[static_cast<std::size_t>(k2)];
    const double den = t[static_cast<std::size_t>(k2 - 2)];
    if (den > 0.0 && num / den < 1.0) rho[parity] = num / den;
  }
}

Matrix first_row_only(const Matrix& transition, double scale) {
  Matrix t1 = Matrix::Zero(transition.rows(), transition.cols());
  t1.row(0) = scale * transition.row(0);
  return t1;
}

}  // namespace

HmmModel UnambiguousHmm::hmm(MixingPolicy policy) const {
  Matrix emission = Matrix::Zero(2, num_hidden);
  emission(0, 0) = 1.0 - epsilon;
  emission(1, 0) = epsilon;
  for (int s = 1; s < num_hidden; ++s) emission(1, s) = 1.0;
  return build_model(transition, emission, policy);
}

UnambiguousHmm build_unambiguous(const Matrix& transition, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw ModelError("build_unambiguous: epsilon must lie in [0, 1)");
  }
  if (transition.rows() < 2 || transition.rows() != transition.cols()) {
    throw ModelError("build_unambiguous: transition must be square with L >= 2");
  }
  for (Eigen::Index j = 0; j < transition.cols(); ++j) {
    if ((transition.col(j).array() < 0.0).any() || (transition.col(j).array() > 1.0).any() ||
        std::abs(transition.col(j).sum() - 1.0) > kStochasticTol) {
      std::ostringstream os;
      os << "non-stochastic column: transition column " << j + 1;
      throw ModelError(os.str());
    }
  }
  UnambiguousHmm model;
  model.num_hidden = static_cast<int>(transition.rows());
  model.epsilon = epsilon;
  model.transition = transition;
  model.t1 = first_row_only(transition, 1.0 - epsilon);
  model.t2 = transition - model.t1;
  return model;
}

SpectralData spectral_data(const UnambiguousHmm& model) {
  Eigen::EigenSolver<Matrix> solver(model.t2, true);
  const Eigen::VectorXcd values = solver.eigenvalues();
  const Eigen::MatrixXcd vectors = solver.eigenvectors();
  const auto l = values.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(l));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (values(a).real() != values(b).real()) return values(a).real() < values(b).real();
    return values(a).imag() < values(b).imag();
  });

  SpectralData data;
  data.eigenvalues.resize(l);
  data.right.resize(l, l);
  for (Eigen::Index k = 0; k < l; ++k) {
    data.eigenvalues(k) = values(order[static_cast<std::size_t>(k)]);
    data.right.col(k) = vectors.col(order[static_cast<std::size_t>(k)]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(data.right);
  const auto& sv = svd.singularValues();
  data.conditioning = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                              : std::numeric_limits<double>::infinity();
  data.available = data.conditioning <= kSpectralConditioningLimit;
  data.weights = Eigen::VectorXcd::Zero(l);
  if (data.available) {
    data.left = data.right.inverse();
    const Eigen::RowVectorXcd first_row = model.t1.row(0).cast<std::complex<double>>();
    for (Eigen::Index a = 0; a < l; ++a) {
      data.weights(a) = (first_row * data.right.col(a))(0) * data.left(a, 0);
    }
  }
  return data;
}

std::vector<double> t_weights(const UnambiguousHmm& model, int k_max) {
  if (k_max < 0) throw std::invalid_argument("t_weights: k_max must be nonnegative");
  std::vector<double> t(static_cast<std::size_t>(k_max) + 1);
  Vector v = Vector::Unit(model.num_hidden, 0);
  for (int k = 0; k <= k_max; ++k) {
    t[static_cast<std::size_t>(k)] = model.t1.row(0).dot(v);
    v = model.t2 * v;
  }
  return t;
}

std::vector<double> t_weights_spectral(const SpectralData& spectral, int k_max) {
  if (!spectral.available) throw std::domain_error("t_weights_spectral: spectral form unavailable");
  std::vector<double> t(static_cast<std::size_t>(k_max) + 1);
  for (int k = 0; k <= k_max; ++k) {
    std::complex<double> sum = 0.0;
    for (Eigen::Index a = 0; a < spectral.eigenvalues.size(); ++a) {
      sum += std::pow(spectral.eigenvalues(a), k) * spectral.weights(a);
    }
    t[static_cast<std::size_t>(k)] = sum.real();
  }
  return t;
}

double t_total(const UnambiguousHmm& model) {
  const SpectralData spectral = spectral_data(model);
  if (spectral.available) {
    std::complex<double> sum = 0.0;
    for (Eigen::Index a = 0; a < spectral.eigenvalues.size(); ++a) {
      sum += spectral.weights(a) / (1.0 - spectral.eigenvalues(a));
    }
    return sum.real();
  }
  const std::vector<double> t = t_weights(model, 200);
  double rho[2];
  chain_ratios(t, rho);
  return sum_with_tail(t, rho);
}

double mean_return_time(const UnambiguousHmm& model) {
  const SpectralData spectral = spectral_data(model);
  if (spectral.available) {
    std::complex<double> sum = 0.0;
    for (Eigen::Index a = 0; a < spectral.eigenvalues.size(); ++a) {
      const std::complex<double> g = 1.0 - spectral.eigenvalues(a);
      sum += spectral.weights(a) / (g * g);
    }
    return sum.real();
  }
  const std::vector<double> t = t_weights(model, 200);
  std::vector<double> weighted(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) weighted[k] = static_cast<double>(k + 1) * t[k];
  double rho[2];
  chain_ratios(t, rho);
  return sum_with_tail(weighted, rho);
}

ZetaSeries exact_zeta_series(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model,
                             double n, int k_max) {
  if (k_max < 1) throw std::invalid_argument("exact_zeta_series: k_max must be positive");
  const std::vector<double> t = t_weights(true_model, k_max);
  const std::vector<double> th = t_weights(trial_model, k_max);
  const double tau = perron_eigenvalue(true_model.t2);
  const double tau_hat = perron_eigenvalue(trial_model.t2);

  bool infinite = false;
  // a_k = t_k thaat_k^n and its n-derivative.
  const auto term = [&](double a, double b) { return a == 0.0 ? 0.0 : a * pow0(b, n); };
  const auto term_dn = [&](double a, double b) {
    if (a == 0.0) return 0.0;
    if (b == 0.0) {
      if (n <= 0.0) infinite = true;
      return 0.0;
    }
    return a * std::pow(b, n) * std::log(b);
  };
  const double loop = term(tau, tau_hat);
  const double loop_dn = term_dn(tau, tau_hat);

  ZetaSeries series;
  series.source = Expansion::closed_form;
  series.n = n;
  series.coefficients.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
  series.dn_coefficients.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
  series.coefficients[0] = 1.0;
  series.coefficients[1] = -(term(t[0], th[0]) + loop);
  series.dn_coefficients[1] = -(term_dn(t[0], th[0]) + loop_dn);
  for (int k = 2; k <= k_max; ++k) {
    const auto i2 = static_cast<std::size_t>(k - 2);
    const auto i1 = static_cast<std::size_t>(k - 1);
    const double a2 = term(t[i2], th[i2]);
    series.coefficients[static_cast<std::size_t>(k)] = loop * a2 - term(t[i1], th[i1]);
    series.dn_coefficients[static_cast<std::size_t>(k)] =
        loop_dn * a2 + loop * term_dn(t[i2], th[i2]) - term_dn(t[i1], th[i1]);
  }
  series.dn_finite = !infinite;
  detect_geometric_tail(series);
  return series;
}

double exact_zeta(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model, double z,
                  double n, int k_max) {
  if (std::abs(z) > 1.0) throw std::invalid_argument("exact_zeta: |z| must not exceed 1");
  return exact_zeta_series(true_model, trial_model, n, k_max).value(z);
}

double exact_zeta_at_one(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model,
                         double n, int k_max) {
  const std::vector<double> t = t_weights(true_model, k_max);
  const std::vector<double> th = t_weights(trial_model, k_max);
  std::vector<double> terms(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) terms[k] = t[k] == 0.0 ? 0.0 : t[k] * pow0(th[k], n);
  double rho[2];
  chain_ratios(terms, rho);
  // Pure geometric chains: the slope term vanishes when a2 = rho a1.
  const double sum = sum_with_tail(terms, rho);
  const double tau = perron_eigenvalue(true_model.t2);
  const double tau_hat = perron_eigenvalue(trial_model.t2);
  return (1.0 - pow0(tau_hat, n) * tau) * (1.0 - sum);
}

ExactRate likelihood_rate_exact(const UnambiguousHmm& true_model, const UnambiguousHmm& trial_model,
                                int k_max) {
  if (k_max < 4) throw std::invalid_argument("likelihood_rate_exact: k_max must be at least 4");
  const std::vector<double> t = t_weights(true_model, k_max);
  const std::vector<double> th = t_weights(trial_model, k_max);
  ExactRate rate;
  std::vector<double> numerator(t.size());
  std::vector<double> denominator(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] > 0.0 && !(th[k] > 0.0)) rate.offending_k.push_back(static_cast<int>(k));
    numerator[k] = xlogy(t[k], th[k]);
    denominator[k] = static_cast<double>(k + 1) * t[k];
  }
  if (!rate.offending_k.empty()) {
    rate.value = -std::numeric_limits<double>::infinity();
    return rate;
  }
  double rho[2];
  chain_ratios(t, rho);
  rate.value = sum_with_tail(numerator, rho) / sum_with_tail(denominator, rho);
  return rate;
}

namespace {

struct RealSpectrum {
  Vector values;
  Matrix right;
  Matrix left;
};

RealSpectrum real_spectrum(const Matrix& t2) {
  Eigen::EigenSolver<Matrix> solver(t2, true);
  const auto l = t2.rows();
  const double scale = std::max(1.0, t2.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < l; ++k) {
    if (std::abs(solver.eigenvalues()(k).imag()) > 1e-12 * scale) {
      throw std::domain_error("effective parameters: t2 has complex eigenvalues");
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(l));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return solver.eigenvalues()(a).real() < solver.eigenvalues()(b).real();
  });
  RealSpectrum s;
  s.values.resize(l);
  s.right.resize(l, l);
  for (Eigen::Index k = 0; k < l; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    s.values(k) = solver.eigenvalues()(src).real();
    s.right.col(k) = solver.eigenvectors().col(src).real();
  }
  for (Eigen::Index k = 1; k < l; ++k) {
    if (s.values(k) - s.values(k - 1) < 1e-9 * scale) {
      throw std::domain_error("effective parameters: t2 has (nearly) repeated eigenvalues");
    }
  }
  s.left = s.right.inverse();
  return s;
}

}  // namespace

Vector effective_parameters(const Matrix& transition, double epsilon) {
  const Eigen::Index l = transition.rows();
  const Matrix t1 = first_row_only(transition, 1.0 - epsilon);
  const RealSpectrum s = real_spectrum(transition - t1);
  Vector out(2 * l);
  for (Eigen::Index a = 0; a < l; ++a) {
    out(a) = s.values(a);
    out(l + a) = t1.row(0).dot(s.right.col(a)) * s.left(a, 0);
  }
  return out;
}

Matrix effective_parameter_jacobian(const Matrix& transition, double epsilon) {
  const Eigen::Index l = transition.rows();
  const Matrix t1 = first_row_only(transition, 1.0 - epsilon);
  const RealSpectrum s = real_spectrum(transition - t1);

  std::vector<Matrix> projector(static_cast<std::size_t>(l));
  for (Eigen::Index a = 0; a < l; ++a) {
    projector[static_cast<std::size_t>(a)] = s.right.col(a) * s.left.row(a);
  }

  const Eigen::Index num_params = l * (l - 1) + 1;
  Matrix jacobian(2 * l, num_params);
  Eigen::Index column = 0;
  const auto fill = [&](const Matrix& d_t1, const Matrix& d_t2) {
    for (Eigen::Index a = 0; a < l; ++a) {
      const Matrix& pa = projector[static_cast<std::size_t>(a)];
      jacobian(a, column) = s.left.row(a) * d_t2 * s.right.col(a);
      Matrix d_projector = Matrix::Zero(l, l);
      for (Eigen::Index b = 0; b < l; ++b) {
        if (b == a) continue;
        const Matrix& pb = projector[static_cast<std::size_t>(b)];
        d_projector += (pb * d_t2 * pa + pa * d_t2 * pb) / (s.values(a) - s.values(b));
      }
      jacobian(l + a, column) = (d_t1 * pa)(0, 0) + (t1 * d_projector)(0, 0);
    }
    ++column;
  };

  for (Eigen::Index j = 0; j < l; ++j) {
    for (Eigen::Index i = 0; i < l; ++i) {
      if (i == j) continue;
      Matrix d_p = Matrix::Zero(l, l);
      d_p(i, j) = 1.0;
      d_p(j, j) = -1.0;
      const Matrix d_t1 = first_row_only(d_p, 1.0 - epsilon);
      fill(d_t1, d_p - d_t1);
    }
  }
  const Matrix d_t1 = first_row_only(transition, -1.0);
  fill(d_t1, -d_t1);
  return jacobian;
}

}  // namespace hmmvt
