#include "influence/geometry.hpp"

#include <cmath>

#include "influence/linalg.hpp"

namespace influence {
namespace {

GeometryCore core_at(const PerturbedModel& model, const VectorXd& omega, const McOptions& mc,
                     GeometrySource* source = nullptr) {
  if (model.geometry) {
    if (source) *source = GeometrySource::closed_form;
    return (*model.geometry)(omega);
  }
  if (model.sampler) {
    if (source) *source = GeometrySource::monte_carlo;
    return mc_geometry_estimate(model, omega, mc).core;
  }
  fail(ErrorKind::geometry_unavailable,
       "scheme '" + model.name + "' has neither a closed-form geometry nor a sampler");
}

MatrixXd metric_only(const PerturbedModel& model, const VectorXd& omega, const McOptions& mc) {
  model.check_in_domain(omega);
  if (model.geometry) return (*model.geometry)(omega).G;
  if (model.sampler) return mc_metric_estimate(model, omega, mc).G;
  fail(ErrorKind::geometry_unavailable,
       "scheme '" + model.name + "' has neither a closed-form geometry nor a sampler");
}

}  // namespace

GeometryAtPoint geometry_at(const PerturbedModel& model, const VectorXd& omega, double alpha,
                            const McOptions& mc) {
  model.check_in_domain(omega);
  GeometryAtPoint out;
  out.omega = omega;
  out.alpha = alpha;
  GeometryCore core = core_at(model, omega, mc, &out.source);
  out.G = symmetrize(core.G);
  out.T = core.T;
  out.Gamma0 = core.Gamma0;
  out.GammaAlpha = Tensor3::combine(1.0, core.Gamma0, -0.5 * alpha, core.T);

  SymEig e = sym_eig(out.G);
  out.min_eigenvalue = e.values.minCoeff();
  if (out.min_eigenvalue > pd_floor(out.G)) {
    VectorXd inv = e.values.array().inverse();
    out.Ginv = e.vectors * inv.asDiagonal() * e.vectors.transpose();
  }
  return out;
}

double tangent_length(const GeometryAtPoint& geom, const VectorXd& h) {
  if (h.size() != geom.G.rows())
    fail(ErrorKind::dimension_mismatch, "tangent vector has length " + std::to_string(h.size()) +
                                            ", metric dimension is " + std::to_string(geom.G.rows()));
  return h.dot(geom.G * h);
}

double path_distance(const PerturbedModel& model, const PathSample& curve,
                     double alpha_for_geometry) {
  (void)alpha_for_geometry;  // length depends on G only
  if (curve.omega.size() < 2 || curve.t.size() < 2)
    fail(ErrorKind::degenerate_curve, "need at least 2 curve points");
  if (static_cast<std::size_t>(curve.t.size()) != curve.omega.size())
    fail(ErrorKind::dimension_mismatch, "grid and sample counts differ");
  for (int j = 1; j < curve.t.size(); ++j)
    if (!(curve.t[j] > curve.t[j - 1]))
      fail(ErrorKind::degenerate_curve, "parameter grid must be strictly increasing");
  for (const auto& w : curve.omega) model.check_in_domain(w);

  McOptions mc;
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < curve.omega.size(); ++j) {
    const double dt = curve.t[static_cast<int>(j) + 1] - curve.t[static_cast<int>(j)];
    const VectorXd mid = 0.5 * (curve.omega[j] + curve.omega[j + 1]);
    const VectorXd v = (curve.omega[j + 1] - curve.omega[j]) / dt;
    const MatrixXd g = metric_only(model, mid, mc);
    total += std::sqrt(std::max(0.0, v.dot(g * v))) * dt;
  }
  return total;
}

PathSample geodesic_trace(const PerturbedModel& model, double alpha, const VectorXd& h,
                          double t_end, int steps) {
  if (steps < 1) fail(ErrorKind::dimension_mismatch, "steps must be >= 1");
  if (h.size() != model.p) fail(ErrorKind::dimension_mismatch, "initial velocity has wrong length");
  if (h.norm() == 0.0) fail(ErrorKind::degenerate_direction, "initial velocity is zero");

  McOptions mc;
  // acceleration a_i = -sum_s g^{is} sum_{jk} Gamma^alpha_{jks} v_j v_k
  auto accel = [&](const VectorXd& w, const VectorXd& v) -> VectorXd {
    model.check_in_domain(w);
    GeometryCore core = core_at(model, w, mc);
    const MatrixXd g = symmetrize(core.G);
    SymEig e = sym_eig(g);
    const double lmin = e.values.minCoeff();
    const double lmax = e.values.maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
      fail(ErrorKind::singular_metric, "metric condition number exceeds 1e12 along the geodesic");
    Tensor3 gamma = Tensor3::combine(1.0, core.Gamma0, -0.5 * alpha, core.T);
    if (gamma.is_zero_kind()) return VectorXd::Zero(model.p);
    const VectorXd c = gamma.contract_first_two(v);
    VectorXd inv = e.values.array().inverse();
    return -(e.vectors * inv.asDiagonal() * e.vectors.transpose()) * c;
  };

  PathSample path;
  path.t = VectorXd(steps + 1);
  path.omega.resize(static_cast<std::size_t>(steps) + 1);
  const double dt = t_end / static_cast<double>(steps);
  VectorXd w = model.omega0;
  VectorXd v = h;
  path.t[0] = 0.0;
  path.omega[0] = w;
  for (int s = 0; s < steps; ++s) {
    const VectorXd k1w = v, k1v = accel(w, v);
    const VectorXd k2w = v + 0.5 * dt * k1v, k2v = accel(w + 0.5 * dt * k1w, v + 0.5 * dt * k1v);
    const VectorXd k3w = v + 0.5 * dt * k2v, k3v = accel(w + 0.5 * dt * k2w, v + 0.5 * dt * k2v);
    const VectorXd k4w = v + dt * k3v, k4v = accel(w + dt * k3w, v + dt * k3v);
    w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    model.check_in_domain(w);
    path.t[s + 1] = dt * static_cast<double>(s + 1);
    path.omega[static_cast<std::size_t>(s) + 1] = w;
  }
  return path;
}

AppropriatenessVerdict appropriateness_report(const GeometryAtPoint& geom, double pd_tolerance,
                                              double iso_tolerance) {
  const MatrixXd& g = geom.G;
  const int p = static_cast<int>(g.rows());
  AppropriatenessVerdict v;
  v.c_hat = std::max(0.0, g.trace() / static_cast<double>(p));
  v.min_eigenvalue = sym_eig(g).values.minCoeff();

  v.correlation = MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double d = g(i, i) * g(j, j);
      v.correlation(i, j) = d > 0.0 ? g(i, j) / std::sqrt(d) : 0.0;
    }
  v.max_offdiag_abs_corr = 0.0;
  v.max_iso_deviation = 0.0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double iso = std::abs(g(i, j) - (i == j ? v.c_hat : 0.0));
      v.max_iso_deviation = std::max(v.max_iso_deviation, iso);
      if (i != j) v.max_offdiag_abs_corr = std::max(v.max_offdiag_abs_corr, std::abs(v.correlation(i, j)));
    }

  v.is_appropriate = v.c_hat > 0.0 && v.min_eigenvalue > pd_tolerance * v.c_hat &&
                     v.max_iso_deviation <= iso_tolerance * v.c_hat;
  return v;
}

PerturbedModel rescale_perturbation(const PerturbedModel& model,
                                    const GeometryAtPoint& geom_at_omega0, double c) {
  const MatrixXd g0 = symmetrize(geom_at_omega0.G);
  const MatrixXd j = std::sqrt(c) * sym_inv_sqrt(g0, pd_floor(g0));  // d(omega)/d(omega~)

  AffineMap to_local{model.omega0, j};

  PerturbedModel out;
  out.p = model.p;
  out.omega0 = model.omega0;
  out.name = model.name + "/rescaled";
  out.labels = model.labels;

  out.domain.box = model.domain.box;
  out.domain.to_base = model.domain.to_base ? to_local.then(*model.domain.to_base) : to_local;

  const LogLik base_ll = model.loglik;
  out.loglik = [base_ll, to_local](const VectorXd& wt, const VectorXd& y) {
    return base_ll(to_local(wt), y);
  };
  if (model.geometry) {
    const GeometryProvider base_geom = *model.geometry;
    out.geometry = [base_geom, to_local, j](const VectorXd& wt) {
      GeometryCore core = base_geom(to_local(wt));
      GeometryCore res;
      res.G = j.transpose() * core.G * j;
      res.T = core.T.transform(j);
      res.Gamma0 = core.Gamma0.transform(j);  // affine map: no inhomogeneous term
      return res;
    };
  }
  if (model.sampler) {
    const Sampler base_sampler = *model.sampler;
    out.sampler = [base_sampler, to_local](const VectorXd& wt, DrawRng& rng) {
      VectorXd w = to_local(wt);
      return base_sampler(w, rng);
    };
  }
  if (model.loglik_theta) {
    const ThetaLogLik base_lt = *model.loglik_theta;
    out.loglik_theta = [base_lt, to_local](const VectorXd& theta, const VectorXd& wt) {
      return base_lt(theta, to_local(wt));
    };
  }
  if (model.refit) {
    const Refit base_refit = *model.refit;
    out.refit = [base_refit, to_local](const VectorXd& wt) { return base_refit(to_local(wt)); };
  }
  if (model.delta) out.delta = (*model.delta) * j;

  // Eq-level guarantee: the rescaled metric at the null point is c * I.
  if (out.geometry) {
    const MatrixXd gt = (*out.geometry)(out.omega0).G;
    const double dev = (gt - c * MatrixXd::Identity(out.p, out.p)).cwiseAbs().maxCoeff();
    if (dev > 1e-8 * std::max(1.0, c))
      fail(ErrorKind::singular_metric,
           "rescaled metric deviates from c*I by " + std::to_string(dev));
  }
  return out;
}

}  // namespace influence
