#include "morphfit/special_functions.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace morphfit {

double digamma(double x) { return boost::math::digamma(x); }

double trigamma(double x) { return boost::math::trigamma(x); }

double inverse_digamma(double y) {
  if (!std::isfinite(y)) {
    throw std::invalid_argument("inverse_digamma: argument must be finite");
  }
  // digamma(x) ~ log(x - 1/2) for large x; ~ -1/x - gamma for small x.
  constexpr double kEulerGamma = 0.57721566490153286061;
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + kEulerGamma);

  // digamma is increasing, so any x gives a valid bracket side.
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    const double f = digamma(x) - y;
    if (std::abs(f) < 1e-12) break;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    double next = x - f / trigamma(x);
    if (!(next > lo && next < hi)) {
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * x;
    }
    if (next == x) break;
    x = next;
  }
  return x;
}

}  // namespace morphfit
