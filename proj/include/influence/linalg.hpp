#pragma once

#include <Eigen/Dense>

#include "influence/errors.hpp"

namespace influence {

struct SymEig {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

inline SymEig sym_eig(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) fail(ErrorKind::non_finite_value, "eigendecomposition failed");
  return SymEig{es.eigenvalues(), es.eigenvectors()};
}

/// Spectral (symmetric) square root; requires positive definiteness relative
/// to the given floor on the smallest eigenvalue.
inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& a, double min_eig_floor) {
  SymEig e = sym_eig(a);
  if (e.values.minCoeff() <= min_eig_floor)
    fail(ErrorKind::singular_metric, "matrix is not positive definite (min eigenvalue " +
                                         std::to_string(e.values.minCoeff()) + ")");
  Eigen::VectorXd s = e.values.array().sqrt();
  return e.vectors * s.asDiagonal() * e.vectors.transpose();
}

inline Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& a, double min_eig_floor) {
  SymEig e = sym_eig(a);
  if (e.values.minCoeff() <= min_eig_floor)
    fail(ErrorKind::singular_metric, "matrix is not positive definite (min eigenvalue " +
                                         std::to_string(e.values.minCoeff()) + ")");
  Eigen::VectorXd s = e.values.array().rsqrt();
  return e.vectors * s.asDiagonal() * e.vectors.transpose();
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

/// Default positive-definiteness floor: 1e-12 * trace/p, zero-safe.
inline double pd_floor(const Eigen::MatrixXd& g) {
  double scale = g.trace() / static_cast<double>(g.rows());
  return 1e-12 * std::max(scale, 0.0);
}

}  // namespace influence
