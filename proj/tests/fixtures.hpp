#pragma once

#include <string>
#include <vector>

#include "influence/models.hpp"
#include "influence/rng.hpp"

namespace fixtures {

using influence::Cluster;
using influence::ClusteredDataset;
using influence::DrawRng;
using influence::MatrixXd;
using influence::VectorXd;

/// Singleton-cluster dataset from stacked y and X.
inline ClusteredDataset rows_dataset(const VectorXd& y, const MatrixXd& x) {
  ClusteredDataset data;
  for (int i = 0; i < y.size(); ++i) {
    Cluster c;
    c.id = "r" + std::to_string(i + 1);
    c.y = VectorXd::Constant(1, y[i]);
    c.x = x.row(i);
    data.clusters.push_back(std::move(c));
  }
  return data;
}

/// The fixed 10x3 regression fixture used throughout the suites.
inline ClusteredDataset regression_fixture() {
  DrawRng rng(1234, 0);
  MatrixXd x(10, 3);
  VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = -1.0 + 0.2 * i;
    x(i, 2) = rng.next_normal();
    y[i] = 2.0 + 0.7 * x(i, 1) - 0.4 * x(i, 2) + 0.8 * rng.next_normal();
  }
  return rows_dataset(y, x);
}

/// iid standard-normal-style sample whose MLE is exactly (mu=0, sigma2=1).
inline ClusteredDataset iid_unit_gaussian_fixture(int n) {
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = (i % 2 == 0) ? 1.0 : -1.0;
  MatrixXd x = MatrixXd::Ones(n, 1);
  return rows_dataset(y, x);
}

/// Three-cluster mixed-model fixture with sizes (4, 5, 10). The default seed
/// gives an interior compound-symmetry optimum.
inline ClusteredDataset lmm_fixture(std::uint64_t seed = 5) {
  const int sizes[3] = {4, 5, 10};
  ClusteredDataset data;
  DrawRng rng(seed, 0);
  for (int i = 0; i < 3; ++i) {
    Cluster c;
    c.id = "g" + std::to_string(i + 1);
    const int m = sizes[i];
    c.x = MatrixXd(m, 2);
    c.y = VectorXd(m);
    const double shared = 0.5 * rng.next_normal();
    for (int j = 0; j < m; ++j) {
      c.x(j, 0) = 1.0;
      c.x(j, 1) = 0.25 * j;
      c.y[j] = 1.0 + 0.5 * c.x(j, 1) + shared + 0.7 * rng.next_normal();
    }
    data.clusters.push_back(std::move(c));
  }
  return data;
}

/// Compound-symmetry clustered data with known parameters, for recovery tests.
inline ClusteredDataset cs_lmm_dataset(int n, int m, double sigma2, double rho,
                                       std::uint64_t seed) {
  ClusteredDataset data;
  const double b0 = 1.0, b1 = -0.5;
  for (int i = 0; i < n; ++i) {
    DrawRng rng(seed, static_cast<std::uint64_t>(i) + 1);
    Cluster c;
    c.id = "k" + std::to_string(i + 1);
    c.x = MatrixXd(m, 2);
    c.y = VectorXd(m);
    // CS draw: shared + idiosyncratic split of the covariance
    const double shared = std::sqrt(sigma2 * rho) * rng.next_normal();
    for (int j = 0; j < m; ++j) {
      c.x(j, 0) = 1.0;
      c.x(j, 1) = 0.3 * j - 0.5;
      c.y[j] = b0 + b1 * c.x(j, 1) + shared + std::sqrt(sigma2 * (1.0 - rho)) * rng.next_normal();
    }
    data.clusters.push_back(std::move(c));
  }
  return data;
}

inline std::vector<VectorXd> random_unit_directions(int count, int p, std::uint64_t seed) {
  std::vector<VectorXd> out;
  for (int k = 0; k < count; ++k) {
    DrawRng rng(seed, static_cast<std::uint64_t>(k) + 1);
    VectorXd h(p);
    for (int i = 0; i < p; ++i) h[i] = rng.next_normal();
    out.push_back(h / h.norm());
  }
  return out;
}

inline MatrixXd random_spd(int p, std::uint64_t seed, double ridge = 0.5) {
  DrawRng rng(seed, 0);
  MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
  return a * a.transpose() / p + ridge * MatrixXd::Identity(p, p);
}

inline MatrixXd random_symmetric(int p, std::uint64_t seed) {
  DrawRng rng(seed, 1);
  MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
  return 0.5 * (a + a.transpose());
}

}  // namespace fixtures
