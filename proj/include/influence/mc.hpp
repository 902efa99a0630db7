#pragma once

#include <cstdint>

#include "influence/types.hpp"

namespace influence {

/// Options for the Monte Carlo geometry estimators. Draws are split into
/// fixed blocks whose partial sums are reduced in block order, so results do
/// not depend on the number of OpenMP workers.
struct McOptions {
  std::uint64_t seed = 20240201;
  int draws = 200000;
  bool parallel = true;  // false selects the serial reference loop
  bool want_tensors = false;
};

struct McMetric {
  MatrixXd G;
  MatrixXd stderr_;  // standard error of each entry
  int draws = 0;
};

struct McGeometry {
  GeometryCore core;
  MatrixXd metric_stderr;
  int draws = 0;
};

/// Definition-level metric estimate: entrywise sample mean of the score
/// products d_i l * d_j l under p(Y|theta, omega), scores by central finite
/// differences.
McMetric mc_metric_estimate(const PerturbedModel& model, const VectorXd& omega,
                            const McOptions& opt);

/// Centered estimates of (G, T, Gamma0): covariances and central moments of
/// the per-draw score, plus E[dd l * dl] for the connection. The tensor pass
/// also differences a per-draw Hessian, so keep p small on this path.
McGeometry mc_geometry_estimate(const PerturbedModel& model, const VectorXd& omega,
                                const McOptions& opt);

}  // namespace influence
