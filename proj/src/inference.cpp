#include "hmmvt/inference.hpp"

#include "hmmvt/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hmmvt {

namespace {

constexpr double kTieTol = 1e-12;
constexpr double kAscentSlackPerSymbol = 1e-9;

bool near_tie(double a, double b) {
  return std::abs(a - b) <= kTieTol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

Matrix log_of(const Matrix& m) {
  return m.unaryExpr([](double v) { return v > 0.0 ? std::log(v) : kLogZero; });
}

HmmModel blend(const HmmModel& from, const HmmModel& to, double t) {
  Matrix transition = (1.0 - t) * from.transition() + t * to.transition();
  Matrix emission = (1.0 - t) * from.emission() + t * to.emission();
  for (Eigen::Index j = 0; j < transition.cols(); ++j) transition.col(j) /= transition.col(j).sum();
  for (Eigen::Index j = 0; j < emission.cols(); ++j) emission.col(j) /= emission.col(j).sum();
  return build_model(transition, emission, MixingPolicy::flag);
}

// Normalizes count columns; columns with zero total keep the previous values.
Matrix normalize_counts(const Matrix& counts, const Matrix& previous) {
  Matrix out = previous;
  for (Eigen::Index j = 0; j < counts.cols(); ++j) {
    const double total = counts.col(j).sum();
    if (total > 0.0) out.col(j) = counts.col(j) / total;
  }
  return out;
}

}  // namespace

ViterbiResult viterbi_decode(const HmmModel& model, const ObsSeq& observations) {
  check_observations(model, observations);
  const int l = model.num_hidden();
  const std::size_t n = observations.size();
  const Matrix log_transition = log_of(model.transition());
  const Matrix log_emission = log_of(model.emission());

  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(l, static_cast<Eigen::Index>(n));
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> tied(l, static_cast<Eigen::Index>(n));
  Vector delta = log_of(model.stationary());
  Vector next(l);

  for (std::size_t i = 0; i < n; ++i) {
    const int x = observations[i];
    for (int s = 0; s < l; ++s) {
      double best = kLogZero;
      for (int sp = 0; sp < l; ++sp) best = std::max(best, delta(sp) + log_transition(s, sp));
      int arg = 0;
      int hits = 0;
      if (best != kLogZero) {
        arg = -1;
        for (int sp = 0; sp < l; ++sp) {
          const double score = delta(sp) + log_transition(s, sp);
          if (score != kLogZero && near_tie(score, best)) {
            if (arg < 0) arg = sp;
            ++hits;
          }
        }
      }
      back(s, static_cast<Eigen::Index>(i)) = arg;
      tied(s, static_cast<Eigen::Index>(i)) = hits > 1;
      next(s) = best + log_emission(x, s);
    }
    delta.swap(next);
  }

  ViterbiResult result;
  const double best = delta.maxCoeff();
  if (best == kLogZero) throw UnreachableSequence();
  int state = -1;
  int hits = 0;
  for (int s = 0; s < l; ++s) {
    if (delta(s) != kLogZero && near_tie(delta(s), best)) {
      if (state < 0) state = s;
      ++hits;
    }
  }
  if (hits > 1) ++result.tie_count;
  result.log_score = delta(state);
  result.path.resize(n + 1);
  result.path[n] = state;
  for (std::size_t i = n; i > 0; --i) {
    const auto col = static_cast<Eigen::Index>(i - 1);
    if (tied(state, col)) ++result.tie_count;
    state = back(state, col);
    result.path[i - 1] = state;
  }
  return result;
}

Posteriors forward_backward(const HmmModel& model, const ObsSeq& observations) {
  check_observations(model, observations);
  const Eigen::Index l = model.num_hidden();
  const auto n = static_cast<Eigen::Index>(observations.size());
  const Matrix& p = model.transition();
  const Matrix& pi = model.emission();

  Matrix alpha(l, n + 1);
  Vector scale(n + 1);
  alpha.col(0) = model.stationary();
  scale(0) = 1.0;
  CompensatedSum log_likelihood;
  for (Eigen::Index i = 1; i <= n; ++i) {
    const int x = observations[static_cast<std::size_t>(i - 1)];
    alpha.col(i).noalias() = p * alpha.col(i - 1);
    alpha.col(i).array() *= pi.row(x).transpose().array();
    const double c = alpha.col(i).sum();
    if (!(c > 0.0)) throw UnreachableSequence();
    alpha.col(i) /= c;
    scale(i) = c;
    log_likelihood.add(std::log(c));
  }

  Posteriors post;
  post.log_likelihood = log_likelihood.value();
  post.state.resize(l, n + 1);
  post.pairwise.resize(l * l, n);

  Vector beta = Vector::Ones(l);
  Vector weighted(l);
  post.state.col(n) = alpha.col(n);
  for (Eigen::Index i = n; i >= 1; --i) {
    const int x = observations[static_cast<std::size_t>(i - 1)];
    weighted = pi.row(x).transpose().cwiseProduct(beta) / scale(i);
    // xi(s, s') = weighted(s) p(s|s') alpha_{i-1}(s')
    for (Eigen::Index sp = 0; sp < l; ++sp) {
      for (Eigen::Index s = 0; s < l; ++s) {
        post.pairwise(s + l * sp, i - 1) = weighted(s) * p(s, sp) * alpha(sp, i - 1);
      }
    }
    beta.noalias() = p.transpose() * weighted;
    post.state.col(i - 1) = alpha.col(i - 1).cwiseProduct(beta);
  }
  return post;
}

EmUpdate baum_welch_update(const HmmModel& model, const ObsSeq& observations) {
  const Posteriors post = forward_backward(model, observations);
  const Eigen::Index l = model.num_hidden();
  const Eigen::Index m = model.num_observed();
  const auto n = static_cast<Eigen::Index>(observations.size());

  Matrix pair_counts = Matrix::Zero(l, l);
  Matrix emission_counts = Matrix::Zero(m, l);
  for (Eigen::Index i = 1; i <= n; ++i) {
    pair_counts += post.pairwise.col(i - 1).reshaped(l, l);
    emission_counts.row(observations[static_cast<std::size_t>(i - 1)]) +=
        post.state.col(i).transpose();
  }
  const HmmModel full = build_model(normalize_counts(pair_counts, model.transition()),
                                    normalize_counts(emission_counts, model.emission()),
                                    MixingPolicy::flag);

  EmUpdate update{full, post.log_likelihood, kLogZero, 1.0};
  const double slack = kAscentSlackPerSymbol * static_cast<double>(std::max<Eigen::Index>(n, 1));
  for (int halving = 0; halving < 40; ++halving) {
    update.log_likelihood_after = observed_log_prob(update.model, observations, Rescaling::sum);
    if (update.log_likelihood_after >= post.log_likelihood - slack) return update;
    update.step *= 0.5;
    update.model = blend(model, full, update.step);
  }
  update.model = model;
  update.step = 0.0;
  update.log_likelihood_after = post.log_likelihood;
  return update;
}

HmmModel baum_welch_step(const HmmModel& model, const ObsSeq& observations) {
  return baum_welch_update(model, observations).model;
}

HmmModel viterbi_training_step(const HmmModel& model, const ObsSeq& observations) {
  const ViterbiResult decoded = viterbi_decode(model, observations);
  const Eigen::Index l = model.num_hidden();
  Matrix pair_counts = Matrix::Zero(l, l);
  Matrix emission_counts = Matrix::Zero(model.num_observed(), l);
  for (std::size_t i = 1; i < decoded.path.size(); ++i) {
    pair_counts(decoded.path[i], decoded.path[i - 1]) += 1.0;
    emission_counts(observations[i - 1], decoded.path[i]) += 1.0;
  }
  return build_model(normalize_counts(pair_counts, model.transition()),
                     normalize_counts(emission_counts, model.emission()), MixingPolicy::flag);
}

double decode_overlap(const StateSeq& truth, const StateSeq& decoded) {
  if (truth.size() != decoded.size()) {
    throw std::invalid_argument("decode_overlap: sequences differ in length");
  }
  if (truth.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) same += truth[i] == decoded[i] ? 1U : 0U;
  return static_cast<double>(same) / static_cast<double>(truth.size());
}

std::vector<double> flatten_params(const HmmModel& model) {
  std::vector<double> out(model.transition().data(),
                          model.transition().data() + model.transition().size());
  out.insert(out.end(), model.emission().data(), model.emission().data() + model.emission().size());
  return out;
}

TrainResult train(const HmmModel& initial, const ObsSeq& observations, const TrainOptions& options,
                  const ParamView& view) {
  const double n = static_cast<double>(std::max<std::size_t>(observations.size(), 1));
  TrainResult result{initial, {}, 0, false};
  std::vector<double> params = view(initial);
  result.trace.push_back(
      {0, observed_log_prob(initial, observations, Rescaling::sum) / n, params, 0.0});

  for (int it = 1; it <= options.max_iterations; ++it) {
    double log_likelihood = kLogZero;
    if (options.method == TrainingMethod::baum_welch) {
      EmUpdate update = baum_welch_update(result.model, observations);
      result.model = std::move(update.model);
      log_likelihood = update.log_likelihood_after;
    } else {
      result.model = viterbi_training_step(result.model, observations);
      log_likelihood = observed_log_prob(result.model, observations, Rescaling::sum);
    }
    std::vector<double> next = view(result.model);
    double delta = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) delta = std::max(delta, std::abs(next[k] - params[k]));
    params = std::move(next);
    result.trace.push_back({it, log_likelihood / n, params, delta});
    result.iterations = it;
    if (delta <= options.tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

namespace {

// ln sum_s Phat^beta(s, x) (finite beta) or max_s ln Phat(s, x) (beta = inf)
// for one observation sequence, via deformed transfer-matrix products.
double trial_log_partition(const Matrix& transition_beta, const Matrix& emission_beta,
                           const Vector& initial_beta, const ObsSeq& x) {
  Vector v = initial_beta;
  CompensatedSum total;
  for (const int symbol : x) {
    Vector next = transition_beta * v;
    next.array() *= emission_beta.row(symbol).transpose().array();
    const double s = next.maxCoeff();
    if (!(s > 0.0)) return kLogZero;
    v = next / s;
    total.add(std::log(s));
  }
  total.add(std::log(v.sum()));
  return total.value();
}

double trial_log_max(const Matrix& log_transition, const Matrix& log_emission,
                     const Vector& log_initial, const ObsSeq& x) {
  Vector delta = log_initial;
  Vector next(delta.size());
  for (const int symbol : x) {
    for (Eigen::Index s = 0; s < delta.size(); ++s) {
      double best = kLogZero;
      for (Eigen::Index sp = 0; sp < delta.size(); ++sp) {
        best = std::max(best, delta(sp) + log_transition(s, sp));
      }
      next(s) = best + log_emission(symbol, s);
    }
    delta.swap(next);
  }
  return delta.maxCoeff();
}

}  // namespace

FreeEnergyEstimate gibbs_free_energy_exact(const HmmModel& true_model, const HmmModel& trial_model,
                                           double beta, int n) {
  if (!(beta > 0.0)) throw std::invalid_argument("gibbs_free_energy_exact: beta must be positive");
  if (true_model.num_observed() != trial_model.num_observed()) {
    throw std::invalid_argument("gibbs_free_energy_exact: alphabet sizes differ");
  }
  const int m = true_model.num_observed();
  double words = 1.0;
  for (int k = 0; k < n; ++k) words *= m;
  if (n < 1 || n > 10 || words > 59049.0) {
    throw std::invalid_argument("gibbs_free_energy_exact: enumeration guard (N <= 10, M^N <= 3^10)");
  }

  const bool zero_temperature = std::isinf(beta);
  const auto power = [beta](double v) { return v > 0.0 ? std::pow(v, beta) : 0.0; };
  const Matrix transition_beta = trial_model.transition().unaryExpr(power);
  const Matrix emission_beta = trial_model.emission().unaryExpr(power);
  const Vector initial_beta = trial_model.stationary().unaryExpr(power);
  const Matrix log_transition = log_of(trial_model.transition());
  const Matrix log_emission = log_of(trial_model.emission());
  const Vector log_initial = log_of(trial_model.stationary());

  CompensatedSum total;
  ObsSeq x(static_cast<std::size_t>(n), 0);
  bool infinite = false;
  for (;;) {
    const double log_p = observed_log_prob(true_model, x);
    if (log_p != kLogZero) {
      const double inner =
          zero_temperature ? trial_log_max(log_transition, log_emission, log_initial, x)
                           : trial_log_partition(transition_beta, emission_beta, initial_beta, x) / beta;
      if (inner == kLogZero) {
        infinite = true;
        break;
      }
      total.add(std::exp(log_p) * inner);
    }
    // Odometer increment over M^N words.
    std::size_t k = 0;
    while (k < x.size() && ++x[k] == m) x[k++] = 0;
    if (k == x.size()) break;
  }

  FreeEnergyEstimate estimate;
  estimate.beta = beta;
  estimate.method = FreeEnergyMethod::exact_enumeration;
  estimate.value_per_symbol = infinite ? std::numeric_limits<double>::infinity()
                                       : -total.value() / static_cast<double>(n);
  return estimate;
}

std::string to_string(FreeEnergyMethod method) {
  switch (method) {
    case FreeEnergyMethod::exact_enumeration: return "exact-enumeration";
    case FreeEnergyMethod::closed_form: return "closed-form";
    case FreeEnergyMethod::monte_carlo: return "monte-carlo";
  }
  return "unknown";
}

}  // namespace hmmvt
