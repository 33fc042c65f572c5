#pragma once

namespace morphfit {

double digamma(double x);
double trigamma(double x);

/// Solves digamma(x) = y for x > 0 by safeguarded Newton iteration, to
/// |digamma(x) - y| < 1e-12 (or machine precision for very large x).
double inverse_digamma(double y);

}  // namespace morphfit
