#include "influence/oracle.hpp"

#include <cmath>

#include "influence/detail/fd.hpp"
#include "influence/geometry.hpp"
#include "influence/linalg.hpp"

namespace influence::oracle {

McMetric mc_metric(const PerturbedModel& model, const VectorXd& omega, const OracleConfig& cfg,
                   bool parallel) {
  McOptions opt;
  opt.seed = cfg.seed;
  opt.draws = cfg.mc_draws;
  opt.parallel = parallel;
  return mc_metric_estimate(model, omega, opt);
}

ObjectiveProbe fd_probe(const std::function<double(const VectorXd&)>& f, const VectorXd& omega0,
                        const OracleConfig& cfg) {
  const double mult = cfg.fd_rel_step;
  auto guarded = [&f](const VectorXd& w) {
    const double v = f(w);
    if (!std::isfinite(v)) fail(ErrorKind::non_finite_value, "objective is not finite at a stencil point");
    return v;
  };
  const int p = static_cast<int>(omega0.size());
  VectorXd grad(p);
  VectorXd w = omega0;
  for (int i = 0; i < p; ++i) {
    const double h = mult * detail::grad_step(omega0[i]);
    w[i] = omega0[i] + h;
    const double fp = guarded(w);
    w[i] = omega0[i] - h;
    const double fm = guarded(w);
    w[i] = omega0[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  MatrixXd hess = MatrixXd::Zero(p, p);
  const double f0 = guarded(omega0);
  for (int i = 0; i < p; ++i) {
    const double hi = mult * detail::hess_step(omega0[i]);
    w[i] = omega0[i] + hi;
    const double fp = guarded(w);
    w[i] = omega0[i] - hi;
    const double fm = guarded(w);
    w[i] = omega0[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
  }
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double hi = mult * detail::hess_step(omega0[i]);
      const double hj = mult * detail::hess_step(omega0[j]);
      w[i] = omega0[i] + hi;
      w[j] = omega0[j] + hj;
      const double fpp = guarded(w);
      w[j] = omega0[j] - hj;
      const double fpm = guarded(w);
      w[i] = omega0[i] - hi;
      const double fmm = guarded(w);
      w[j] = omega0[j] + hj;
      const double fmp = guarded(w);
      w[i] = omega0[i];
      w[j] = omega0[j];
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  return ObjectiveProbe::make(f0, grad, hess, ProbeProvenance::finite_difference);
}

double geodesic_residual(const PerturbedModel& model, const PathSample& path, double alpha) {
  const int npts = static_cast<int>(path.omega.size());
  if (npts < 3) fail(ErrorKind::degenerate_curve, "need at least 3 path points");
  for (const auto& w : path.omega) model.check_in_domain(w);

  double worst = 0.0;
  for (int j = 1; j + 1 < npts; ++j) {
    const double h1 = path.t[j] - path.t[j - 1];
    const double h2 = path.t[j + 1] - path.t[j];
    const VectorXd& wm = path.omega[static_cast<std::size_t>(j) - 1];
    const VectorXd& wc = path.omega[static_cast<std::size_t>(j)];
    const VectorXd& wp = path.omega[static_cast<std::size_t>(j) + 1];
    // second-order formulas on a possibly non-uniform grid
    const VectorXd vel = (h1 * h1 * wp - h2 * h2 * wm + (h2 * h2 - h1 * h1) * wc) /
                         (h1 * h2 * (h1 + h2));
    const VectorXd acc = 2.0 * (h1 * wp + h2 * wm - (h1 + h2) * wc) / (h1 * h2 * (h1 + h2));

    GeometryAtPoint geom = geometry_at(model, wc, alpha);
    if (!geom.Ginv) fail(ErrorKind::singular_metric, "metric singular along the path");
    const VectorXd c = geom.GammaAlpha.contract_first_two(vel);
    const VectorXd residual = acc + (*geom.Ginv) * c;
    worst = std::max(worst, residual.norm());
  }
  return worst;
}

DiffeoSpec DiffeoSpec::identity(int p) {
  DiffeoSpec d;
  d.a = VectorXd::Ones(p);
  d.q = VectorXd::Zero(p);
  d.b = VectorXd::Zero(p);
  return d;
}

void DiffeoSpec::validate() const {
  if (a.size() != q.size() || a.size() != b.size())
    fail(ErrorKind::dimension_mismatch, "diffeo coefficient lengths differ");
  for (int i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0))
      fail(ErrorKind::non_monotone_diffeo, "linear coefficient must be positive");
    if (b[i] < 0.0 || (b[i] > 0.0 && q[i] * q[i] >= 3.0 * a[i] * b[i]))
      fail(ErrorKind::non_monotone_diffeo, "derivative of the diffeo vanishes somewhere");
    if (b[i] == 0.0 && q[i] != 0.0)
      fail(ErrorKind::non_monotone_diffeo, "purely quadratic map is not monotone on the line");
  }
}

InvarianceRecord invariance_harness(const ObjectiveProbe& probe, const GeometryAtPoint& geom,
                                    const DiffeoSpec& diffeo,
                                    const std::vector<VectorXd>& directions) {
  diffeo.validate();
  const int p = probe.dim();
  if (diffeo.a.size() != p) fail(ErrorKind::dimension_mismatch, "diffeo dimension mismatch");

  // At the fixed point the Jacobian of phi is diag(a); the inverse map has
  // second derivative -2q/a^3 there.
  MatrixXd psi = MatrixXd::Zero(p, p);  // d omega / d phi
  VectorXd omega_dd(p);
  for (int i = 0; i < p; ++i) {
    psi(i, i) = 1.0 / diffeo.a[i];
    omega_dd[i] = -2.0 * diffeo.q[i] / std::pow(diffeo.a[i], 3);
  }

  const VectorXd grad_phi = psi.transpose() * probe.grad;
  MatrixXd hess_phi = psi.transpose() * probe.hess * psi;
  for (int i = 0; i < p; ++i) hess_phi(i, i) += probe.grad[i] * omega_dd[i];

  const MatrixXd g_phi = psi.transpose() * geom.G * psi;
  Tensor3 t_phi = geom.T.transform(psi);
  Tensor3 gamma_phi = geom.Gamma0.transform(psi);
  if (!omega_dd.isZero(0.0)) {
    // inhomogeneous term sum_ij g_ij B^i_c dB^j_ab of the connection rule
    Tensor3 extra = Tensor3::dense_zero(p);
    for (int abi = 0; abi < p; ++abi)
      for (int cc = 0; cc < p; ++cc)
        extra.dense_at(abi, abi, cc) = omega_dd[abi] * geom.G(cc, abi) / diffeo.a[cc];
    gamma_phi = Tensor3::combine(1.0, gamma_phi, 1.0, extra);
  }

  GeometryAtPoint geom_phi;
  geom_phi.omega = geom.omega;
  geom_phi.alpha = 0.0;
  geom_phi.G = symmetrize(g_phi);
  geom_phi.T = t_phi;
  geom_phi.Gamma0 = gamma_phi;
  geom_phi.GammaAlpha = gamma_phi;
  {
    SymEig e = sym_eig(geom_phi.G);
    geom_phi.min_eigenvalue = e.values.minCoeff();
    VectorXd inv = e.values.array().inverse();
    geom_phi.Ginv = e.vectors * inv.asDiagonal() * e.vectors.transpose();
  }
  const ObjectiveProbe probe_phi =
      ObjectiveProbe::make(probe.f0, grad_phi, hess_phi, probe.provenance);

  const MatrixXd ht_omega = covariant_hessian(probe, geom);
  const MatrixXd ht_phi = covariant_hessian(probe_phi, geom_phi);
  const double norm_omega = eigen_influence(ht_omega, geom.G).m_norm;
  const double norm_phi = eigen_influence(ht_phi, geom_phi.G).m_norm;

  InvarianceRecord rec;
  for (const auto& h : directions) {
    VectorXd h_phi(p);
    for (int i = 0; i < p; ++i) h_phi[i] = diffeo.a[i] * h[i];

    const double fi_o = first_order_influence(probe, geom.G, h);
    const double fi_p = first_order_influence(probe_phi, geom_phi.G, h_phi);
    const double si_o = second_order_influence(ht_omega, geom.G, h);
    const double si_p = second_order_influence(ht_phi, geom_phi.G, h_phi);

    auto rel = [](double x, double y) { return std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}); };
    rec.max_rel_dev_fi = std::max(rec.max_rel_dev_fi, rel(fi_o, fi_p));
    rec.max_rel_dev_si = std::max(rec.max_rel_dev_si, rel(si_o, si_p));
    if (norm_omega > 0.0 && norm_phi > 0.0)
      rec.max_rel_dev_ssi = std::max(rec.max_rel_dev_ssi, rel(si_o / norm_omega, si_p / norm_phi));
  }
  return rec;
}

double InvarianceRecord::max_rel_dev() const {
  return std::max({max_rel_dev_fi, max_rel_dev_si, max_rel_dev_ssi});
}

}  // namespace influence::oracle
