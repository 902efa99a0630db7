#pragma once

#include "influence/mc.hpp"
#include "influence/types.hpp"

namespace influence {

/// Evaluate metric, skewness tensor and the alpha-connection of the scheme at
/// omega. Uses the scheme's closed form when present, otherwise a Monte Carlo
/// estimate from the sampler; the result records which path was used.
GeometryAtPoint geometry_at(const PerturbedModel& model, const VectorXd& omega, double alpha,
                            const McOptions& mc = McOptions{});

/// Squared length h' G h of a tangent vector.
double tangent_length(const GeometryAtPoint& geom, const VectorXd& h);

/// Arc length of a sampled curve under the scheme's metric, by the composite
/// midpoint rule over the supplied grid.
double path_distance(const PerturbedModel& model, const PathSample& curve,
                     double alpha_for_geometry = 0.0);

/// Integrate the alpha-geodesic equation from (omega0, h) with a fixed-step
/// classical Runge-Kutta scheme; `steps` integration steps over [0, t_end].
PathSample geodesic_trace(const PerturbedModel& model, double alpha, const VectorXd& h,
                          double t_end, int steps);

/// Conditions (a)/(b): positive definiteness and isotropy of G relative to
/// c_hat = trace(G)/p. Never throws; a degenerate metric yields a negative
/// verdict.
AppropriatenessVerdict appropriateness_report(const GeometryAtPoint& geom,
                                              double pd_tolerance = 1e-10,
                                              double iso_tolerance = 1e-8);

/// New scheme in coordinates w~ = w0 + c^{-1/2} G(w0)^{1/2} (w - w0), using
/// the symmetric square root, so that the metric at the null point becomes
/// c * I (verified to 1e-8).
PerturbedModel rescale_perturbation(const PerturbedModel& model,
                                    const GeometryAtPoint& geom_at_omega0, double c);

}  // namespace influence
