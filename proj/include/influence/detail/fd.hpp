#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace influence::detail {

// Central-difference steps: eps^{1/3} scaling for first derivatives,
// eps^{1/4} for second.
inline double grad_step(double w) {
  static const double e = std::cbrt(std::numeric_limits<double>::epsilon());
  return e * std::max(1.0, std::abs(w));
}

inline double hess_step(double w) {
  static const double e = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return e * std::max(1.0, std::abs(w));
}

using ScalarField = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd fd_gradient(const ScalarField& f, const Eigen::VectorXd& x) {
  const int p = static_cast<int>(x.size());
  Eigen::VectorXd g(p), w = x;
  for (int i = 0; i < p; ++i) {
    const double h = grad_step(x[i]);
    w[i] = x[i] + h;
    const double fp = f(w);
    w[i] = x[i] - h;
    const double fm = f(w);
    w[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const ScalarField& f, const Eigen::VectorXd& x) {
  const int p = static_cast<int>(x.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd w = x;
  const double f0 = f(x);
  for (int i = 0; i < p; ++i) {
    const double hi = hess_step(x[i]);
    w[i] = x[i] + hi;
    const double fp = f(w);
    w[i] = x[i] - hi;
    const double fm = f(w);
    w[i] = x[i];
    h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
  }
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double hi = hess_step(x[i]);
      const double hj = hess_step(x[j]);
      w[i] = x[i] + hi;
      w[j] = x[j] + hj;
      const double fpp = f(w);
      w[j] = x[j] - hj;
      const double fpm = f(w);
      w[i] = x[i] - hi;
      const double fmm = f(w);
      w[j] = x[j] + hj;
      const double fmp = f(w);
      w[i] = x[i];
      w[j] = x[j];
      h(i, j) = h(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  return h;
}

}  // namespace influence::detail
