#ifndef HMMVT_NELDER_MEAD_HPP
#define HMMVT_NELDER_MEAD_HPP

#include "hmmvt/hmm.hpp"

#include <functional>

namespace hmmvt {

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double tolerance = 1e-10;   // spread of function values over the simplex
  double initial_step = 0.05;
};

struct NelderMeadResult {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex minimization. Non-finite values are treated as worse
/// than every finite one.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const NelderMeadOptions& options = {});

}  // namespace hmmvt

#endif  // HMMVT_NELDER_MEAD_HPP
