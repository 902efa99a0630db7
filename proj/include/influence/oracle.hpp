#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "influence/mc.hpp"
#include "influence/measures.hpp"
#include "influence/types.hpp"

namespace influence::oracle {

/// Configuration of the verification stack. The seed is mandatory: oracle
/// outputs are bit-reproducible given (seed, worker count, config).
struct OracleConfig {
  std::uint64_t seed;
  int mc_draws = 200000;
  double fd_rel_step = 1.0;      // multiplier on the default central-difference steps
  double quadrature_tol = 1e-10;
  int ode_steps_per_unit = 1000;

  explicit OracleConfig(std::uint64_t seed_) : seed(seed_) {}
};

/// Definition-level Monte Carlo estimate of the metric with standard errors.
McMetric mc_metric(const PerturbedModel& model, const VectorXd& omega, const OracleConfig& cfg,
                   bool parallel = true);

/// Central-difference gradient and Hessian of a scalar field; the Hessian is
/// symmetrized. Throws NonFiniteValue when the stencil hits a non-finite
/// value.
ObjectiveProbe fd_probe(const std::function<double(const VectorXd&)>& f, const VectorXd& omega0,
                        const OracleConfig& cfg);

/// Max interior residual of the alpha-geodesic equation along a sampled path,
/// with path derivatives by (possibly non-uniform) central differences.
double geodesic_residual(const PerturbedModel& model, const PathSample& path, double alpha);

/// Componentwise diffeomorphism
///   phi_i(w) = w0_i + a_i (w_i - w0_i) + q_i (w_i - w0_i)^2 + b_i (w_i - w0_i)^3,
/// strictly monotone (a_i > 0; for b_i > 0 additionally q_i^2 < 3 a_i b_i).
struct DiffeoSpec {
  VectorXd a;
  VectorXd q;
  VectorXd b;

  static DiffeoSpec identity(int p);
  void validate() const;
};

struct InvarianceRecord {
  double max_rel_dev_fi = 0.0;
  double max_rel_dev_si = 0.0;
  double max_rel_dev_ssi = 0.0;
  double max_rel_dev() const;
};

/// Recompute FI/SI/SSI after transforming gradient, Hessian, metric, skewness
/// and connection by the tensor rules of the coordinate change, pushing each
/// direction through the Jacobian; reports the worst relative deviation.
InvarianceRecord invariance_harness(const ObjectiveProbe& probe, const GeometryAtPoint& geom,
                                    const DiffeoSpec& diffeo,
                                    const std::vector<VectorXd>& directions);

}  // namespace influence::oracle
