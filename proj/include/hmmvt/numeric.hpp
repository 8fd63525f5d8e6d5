#ifndef HMMVT_NUMERIC_HPP
#define HMMVT_NUMERIC_HPP

#include <cmath>
#include <limits>

namespace hmmvt {

/// Neumaier-compensated running sum. Long log-likelihood sums (N ~ 1e5
/// terms) need this to compare successive EM iterates at the 1e-9 level.
class CompensatedSum {
 public:
  void add(double value) {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      compensation_ += (sum_ - t) + value;
    } else {
      compensation_ += (value - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// x * ln(y) with 0 * ln(0) = 0 and x > 0, y = 0 giving -inf.
inline double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  if (y <= 0.0) return -std::numeric_limits<double>::infinity();
  return x * std::log(y);
}

/// y^n with the 0^0 = 1 convention.
inline double pow0(double y, double n) {
  if (n == 0.0) return 1.0;
  return std::pow(y, n);
}

}  // namespace hmmvt

#endif  // HMMVT_NUMERIC_HPP
