#include "hmmvt/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace hmmvt {

namespace {

double sanitize(double v) {
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const NelderMeadOptions& options) {
  const Eigen::Index dim = x0.size();
  NelderMeadResult result;
  if (dim == 0) {
    result.x = x0;
    result.value = sanitize(f(x0));
    result.evaluations = 1;
    result.converged = true;
    return result;
  }

  std::vector<Vector> simplex(static_cast<std::size_t>(dim) + 1, x0);
  std::vector<double> values(simplex.size());
  for (Eigen::Index i = 0; i < dim; ++i) {
    Vector& v = simplex[static_cast<std::size_t>(i) + 1];
    v(i) += (x0(i) + options.initial_step <= 1.0) ? options.initial_step : -options.initial_step;
  }
  int evaluations = 0;
  const auto eval = [&](const Vector& x) {
    ++evaluations;
    return sanitize(f(x));
  };
  for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(simplex.size());
  while (evaluations < options.max_evaluations) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    double diameter = 0.0;
    for (const Vector& v : simplex) {
      diameter = std::max(diameter, (v - simplex[best]).cwiseAbs().maxCoeff());
    }
    if (std::isfinite(values[worst]) && values[worst] - values[best] <= options.tolerance &&
        diameter <= std::sqrt(options.tolerance)) {
      result.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(dim);
    for (std::size_t i : order) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(dim);

    const Vector reflected = centroid + (centroid - simplex[worst]);
    const double f_reflected = eval(reflected);
    if (f_reflected < values[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const Vector contracted = outside ? Vector(centroid + 0.5 * (reflected - centroid))
                                      : Vector(centroid + 0.5 * (simplex[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < std::min(f_reflected, values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = eval(simplex[i]);
    }
  }

  const auto best = static_cast<std::size_t>(
      std::min_element(values.begin(), values.end()) - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  result.evaluations = evaluations;
  return result;
}

}  // namespace hmmvt
