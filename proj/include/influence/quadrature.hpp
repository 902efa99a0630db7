#pragma once

#include <functional>

namespace influence {

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  int intervals = 0;
  bool converged = false;
};

/// Adaptive Gauss-Kronrod 15(7) integration of f over (a, b); either endpoint
/// may be infinite. Splits the interval with the largest error estimate until
/// the total estimated error drops below max(tol, tol*|value|) or the interval
/// cap is hit.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double tol = 1e-10, int max_intervals = 4000);

/// Like integrate() but throws NormalizerDivergence when the integral fails
/// to converge or is non-finite.
double integrate_or_fail(const std::function<double(double)>& f, double a, double b,
                         double tol = 1e-10, int max_intervals = 4000);

}  // namespace influence
