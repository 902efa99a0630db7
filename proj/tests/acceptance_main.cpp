// Acceptance suite: one check per numbered criterion, each printing a single
// PASS/FAIL line with the observed figure and its tolerance. Run with no
// arguments for all criteria or with a list of criterion numbers.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "influence/cli.hpp"
#include "influence/geometry.hpp"
#include "influence/linalg.hpp"
#include "influence/measures.hpp"
#include "influence/models.hpp"
#include "influence/oracle.hpp"

using namespace influence;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

ClusteredDataset iid_gaussian_data(int n, std::uint64_t seed) {
  VectorXd y(n);
  DrawRng rng(seed, 0);
  for (int i = 0; i < n; ++i) y[i] = rng.next_normal();
  return fixtures::rows_dataset(y, MatrixXd::Ones(n, 1));
}

double max_sigma_score(const MatrixXd& est, const MatrixXd& truth, const MatrixXd& se) {
  double worst = 0.0;
  for (int i = 0; i < est.rows(); ++i)
    for (int j = 0; j < est.cols(); ++j)
      worst = std::max(worst, std::abs(est(i, j) - truth(i, j)) / std::max(se(i, j), 1e-14));
  return worst;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome out;
  const std::uint64_t seed = 101;

  {  // case-weight gaussian, n = 20
    ClusteredDataset data = iid_gaussian_data(20, 7);
    ModelFit fit = fit_model(data, ModelKind::iid_parametric);
    PerturbedModel scheme = case_weight_scheme(fit);
    GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
    oracle::OracleConfig cfg(seed);
    McMetric mc = oracle::mc_metric(scheme, scheme.omega0, cfg);
    const double z = max_sigma_score(mc.G, geom.G, mc.stderr_);
    out.require(z <= 3.0, "case-weight metric off by " + num(z) + " sigma");
  }
  {  // error-variance scheme, n = 10
    ClusteredDataset data = fixtures::regression_fixture();
    ModelFit fit = fit_model(data, ModelKind::linear_regression);
    PerturbedModel scheme = regression_variance_scheme(fit);
    GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
    oracle::OracleConfig cfg(seed + 1);
    McMetric mc = oracle::mc_metric(scheme, scheme.omega0, cfg);
    const double z = max_sigma_score(mc.G, geom.G, mc.stderr_);
    out.require(z <= 3.0, "error-variance metric off by " + num(z) + " sigma");
  }
  {  // mixed-model covariance scheme, m = (4, 5, 10)
    ClusteredDataset data = fixtures::lmm_fixture();
    ModelFit fit = fit_model(data, ModelKind::linear_mixed,
                             CovarianceStructure(CovarianceStructure::Tag::compound_symmetry));
    LmmSchemes s = lmm_covariance_scheme(fit);
    GeometryAtPoint geom = geometry_at(s.raw, s.raw.omega0, 0.0);
    out.require(geom.G(0, 0) == 2.0 && geom.G(1, 1) == 2.5 && geom.G(2, 2) == 5.0 &&
                    geom.G(0, 1) == 0.0,
                "mixed-model metric is not exactly diag(0.5 m_i)");
    oracle::OracleConfig cfg(seed + 2);
    McMetric mc = oracle::mc_metric(s.raw, s.raw.omega0, cfg);
    const double z = max_sigma_score(mc.G, geom.G, mc.stderr_);
    out.require(z <= 3.0, "mixed-model metric off by " + num(z) + " sigma");
  }
  if (out.pass) out.detail = "three schemes within 3 Monte Carlo standard errors at 2e5 draws";
  return out;
}

Outcome criterion2() {
  Outcome out;
  double worst_dev = 0.0;
  int flipped = 0, total = 0;

  auto check = [&](const PerturbedModel& raw) {
    GeometryAtPoint graw = geometry_at(raw, raw.omega0, 0.0);
    AppropriatenessVerdict vraw = appropriateness_report(graw);
    out.require(!vraw.is_appropriate, raw.name + " is unexpectedly appropriate already");
    PerturbedModel tilde = rescale_perturbation(raw, graw, 1.0);
    GeometryAtPoint gt = geometry_at(tilde, tilde.omega0, 0.0);
    const double dev =
        (gt.G - MatrixXd::Identity(tilde.p, tilde.p)).cwiseAbs().maxCoeff();
    worst_dev = std::max(worst_dev, dev);
    out.require(dev <= 1e-10, raw.name + " rescaled metric off identity by " + num(dev));
    AppropriatenessVerdict vt = appropriateness_report(gt);
    out.require(vt.is_appropriate, raw.name + " verdict did not flip");
    if (vt.is_appropriate) ++flipped;
    ++total;
  };

  ClusteredDataset data = fixtures::lmm_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_mixed,
                           CovarianceStructure(CovarianceStructure::Tag::compound_symmetry));
  check(lmm_covariance_scheme(fit).raw);
  check(lmm_cluster_shift_scheme(fit).raw);
  check(lmm_mean_shift_scheme(fit).raw);

  ClusteredDataset rdata = fixtures::regression_fixture();
  ModelFit rfit = fit_model(rdata, ModelKind::linear_regression);
  check(regression_variance_scheme_k0(rfit, 2.0));

  ClusteredDataset idata = fixtures::iid_unit_gaussian_fixture(8);
  ModelFit ifit = fit_model(idata, ModelKind::iid_parametric);
  check(loglinear_scheme(ifit, gaussian_hermite_basis(ifit, 2)).raw);

  {  // heterogeneous case weights
    std::vector<CaseWeightComponent> comps;
    comps.push_back(gaussian_case_weight_component(0.0, 1.0));
    comps.push_back(exponential_case_weight_component(2.0));
    comps.push_back(exponential_case_weight_component(0.5));
    std::vector<IndexLabel> labels(3);
    check(case_weight_from_components(comps, labels, "mixed_case_weight"));
  }

  if (out.pass)
    out.detail = std::to_string(flipped) + "/" + std::to_string(total) +
                 " schemes flipped to appropriate, max |G~ - I| = " + num(worst_dev);
  return out;
}

Outcome criterion3() {
  Outcome out;
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel scheme = regression_variance_scheme(fit);
  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
  ObjectiveProbe probe = rss_probe(fit);
  const auto dirs = fixtures::random_unit_directions(20, 10, 303);

  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    DrawRng rng(909, static_cast<std::uint64_t>(rep) + 1);
    oracle::DiffeoSpec d = oracle::DiffeoSpec::identity(10);
    for (int i = 0; i < 10; ++i) {
      d.a[i] = 0.5 + 1.5 * rng.next_unit();
      d.b[i] = rng.next_unit();
    }
    worst = std::max(worst, oracle::invariance_harness(probe, geom, d, dirs).max_rel_dev());
  }
  out.require(worst < 1e-6, "FI/SI/SSI deviate by " + num(worst));

  // non-invariance of the normal curvature under f -> 10 f
  double cdev = 0.0;
  ObjectiveProbe scaled =
      ObjectiveProbe::make(10.0 * probe.f0, 10.0 * probe.grad, 10.0 * probe.hess, probe.provenance);
  for (const auto& h : dirs) {
    const double c1 = classical_curvatures(probe, h).c;
    const double c10 = classical_curvatures(scaled, h).c;
    cdev = std::max(cdev, std::abs(c10 - c1) / std::max(1e-300, std::abs(c1)));
  }
  out.require(cdev > 0.10, "normal curvature moved only " + num(100.0 * cdev) + "% under 10x");
  if (out.pass)
    out.detail = "100 cubic reparametrizations: max deviation " + num(worst) +
                 "; normal curvature moved " + num(100.0 * cdev) + "% under 10x scale";
  return out;
}

Outcome criterion4() {
  Outcome out;
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel scheme = regression_variance_scheme(fit);
  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
  ObjectiveProbe probe = rss_probe(fit);
  const MatrixXd ht = covariant_hessian(probe, geom);
  const double norm = eigen_influence(ht, geom.G).m_norm;
  const auto dirs = fixtures::random_unit_directions(25, 10, 404);

  double worst_fi = 0.0, worst_si = 0.0, worst_ssi = 0.0;
  for (double k : {-3.0, 0.5, 10.0}) {
    ObjectiveProbe scaled =
        ObjectiveProbe::make(k * probe.f0, k * probe.grad, k * probe.hess, probe.provenance);
    const MatrixXd ht_k = covariant_hessian(scaled, geom);
    const double norm_k = eigen_influence(ht_k, geom.G).m_norm;
    for (const auto& h : dirs) {
      const double fi = first_order_influence(probe, geom.G, h);
      const double si = second_order_influence(ht, geom.G, h);
      const double fi_k = first_order_influence(scaled, geom.G, h);
      const double si_k = second_order_influence(ht_k, geom.G, h);
      worst_fi = std::max(worst_fi, std::abs(fi_k - k * k * fi) / std::abs(k * k * fi));
      worst_si = std::max(worst_si, std::abs(si_k - k * si) / std::abs(k * si));
      // asserted as stated: the standardized measure should be unchanged
      worst_ssi = std::max(worst_ssi,
                           std::abs(si_k / norm_k - si / norm) / std::abs(si / norm));
    }
  }
  out.require(worst_fi <= 1e-12, "FI scaling law off by " + num(worst_fi));
  out.require(worst_si <= 1e-12, "SI scaling law off by " + num(worst_si));
  out.require(worst_ssi <= 1e-12,
              "SSI invariance off by " + num(worst_ssi) +
                  " -- the standardized measure is odd under a sign change of the objective "
                  "(SSI_{kf} = sign(k) SSI_f), so exact invariance cannot hold at k = -3; "
                  "it holds to 1e-12 for k in {0.5, 10}");
  if (out.pass) out.detail = "scaling laws exact to 1e-12";
  return out;
}

Outcome criterion5() {
  Outcome out;
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::location_scale);
  const auto dirs = fixtures::random_unit_directions(50, 10, 505);

  double worst = 0.0;
  for (auto which : {LocationScaleScheme::case_weight, LocationScaleScheme::variance,
                     LocationScaleScheme::response}) {
    PerturbedModel scheme = location_scale_schemes(fit, which);
    GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
    AppropriatenessVerdict v = appropriateness_report(geom);
    out.require(v.is_appropriate, scheme.name + " not appropriate");
    const double dev_iso =
        (geom.G - v.c_hat * MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff();
    out.require(dev_iso <= 1e-12, scheme.name + " metric is not c*I");
    ObjectiveProbe probe = ld_probe(fit, scheme);
    const MatrixXd ht = covariant_hessian(probe, geom);
    for (const auto& h : dirs) {
      const double ch = classical_curvatures(probe, h).c;
      const double si = second_order_influence(ht, geom.G, h);
      worst = std::max(worst, std::abs(ch - v.c_hat * si));
    }
  }
  out.require(worst <= 1e-8, "C_h vs c*SI deviates by " + num(worst));
  if (out.pass) out.detail = "three schemes, 50 directions: max |C_h - c SI| = " + num(worst);
  return out;
}

Outcome criterion6() {
  Outcome out;
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel scheme = regression_variance_scheme(fit);
  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);

  // closed-form pieces
  const MatrixXd x = data.stacked_x();
  const MatrixXd px = x * (x.transpose() * x).ldlt().solve(x.transpose());
  VectorXd r(10);
  {
    int at = 0;
    for (const auto& e : fit.residuals) {
      r.segment(at, e.size()) = e;
      at += static_cast<int>(e.size());
    }
  }
  const MatrixXd ht_closed =
      MatrixXd(2.0 * r.asDiagonal() * px * r.asDiagonal()) -
      MatrixXd(VectorXd(r.array().square()).asDiagonal());

  // generic pipeline: finite differences + connection correction
  oracle::OracleConfig cfg(606);
  ObjectiveProbe fd = oracle::fd_probe(neg_rss_function(fit), scheme.omega0, cfg);
  const MatrixXd ht_fd = covariant_hessian(fd, geom);
  const double dev_h = (ht_fd - ht_closed).cwiseAbs().maxCoeff() /
                       std::max(1.0, ht_closed.cwiseAbs().maxCoeff());
  out.require(dev_h <= 1e-5, "covariant Hessian off by " + num(dev_h));

  // per-direction second-order values against the arbitrated closed form
  ObjectiveProbe probe = rss_probe(fit);
  const MatrixXd ht = covariant_hessian(probe, geom);
  double dev_si = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double si = ht(i, i) / geom.G(i, i);
    const double closed = 2.0 * r[i] * r[i] * (2.0 * px(i, i) - 1.0);
    dev_si = std::max(dev_si, std::abs(si - closed));
  }
  out.require(dev_si <= 1e-8, "SI closed form off by " + num(dev_si));

  FiMax fm = fi_maximizer(probe, geom.G);
  VectorXd r2 = r.array().square();
  r2 /= r2.norm();
  const double dev_h_max = (fm.h_max - r2).cwiseAbs().maxCoeff();
  out.require(dev_h_max <= 1e-10, "h_max is not proportional to r_i^2");
  if (out.pass)
    out.detail = "covariant Hessian dev " + num(dev_h) + ", SI dev " + num(dev_si) +
                 ", h_max ~ r^2";
  return out;
}

Outcome criterion7() {
  Outcome out;
  // known theta = (0, 1); psi = (z, z^2 - 1)
  ClusteredDataset data = iid_gaussian_data(200, 707);
  ModelFit fit;
  fit.kind = ModelKind::iid_parametric;
  fit.family = Family::gaussian;
  fit.data = data;
  fit.beta = VectorXd::Zero(1);
  fit.sigma2 = 1.0;
  for (const auto& c : data.clusters) fit.residuals.push_back(c.y);
  fit.neg_hessian = MatrixXd::Identity(2, 2);

  LogLinearSchemes ll = loglinear_scheme(fit, gaussian_hermite_basis(fit, 2));
  GeometryAtPoint geom = geometry_at(ll.standardized, ll.standardized.omega0, 0.0);
  FiMax fm = fi_maximizer(ll.standardized_lr_probe, geom.G);

  // independently coded score statistic with exact gaussian moments
  const VectorXd y = data.stacked_y();
  const double p1 = y.mean();
  const double p2 = (y.array().square() - 1.0).mean();
  const double stat = 200.0 * (p1 * p1 / 1.0 + p2 * p2 / 2.0);
  const double dev = std::abs(fm.fi_max - stat) / std::abs(stat);
  out.require(dev <= 1e-10, "score statistic off by relative " + num(dev));
  if (out.pass)
    out.detail = "FI max " + num(fm.fi_max) + " vs score statistic " + num(stat) +
                 " (rel dev " + num(dev) + ")";
  return out;
}

Outcome criterion8() {
  Outcome out;
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);

  {  // variance-scheme 0-geodesic vs exp(h t) at t = 0.5, step 1e-3
    PerturbedModel vars = regression_variance_scheme(fit);
    VectorXd h(10);
    for (int i = 0; i < 10; ++i) h[i] = -0.6 + 0.17 * i;
    PathSample path = geodesic_trace(vars, 0.0, h, 0.5, 500);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i)
      worst = std::max(worst, std::abs(path.omega.back()[i] - std::exp(0.5 * h[i])));
    out.require(worst <= 1e-6, "exp geodesic off by " + num(worst));
  }
  {  // flat schemes: straight lines solve the geodesic equation
    ModelFit lfit = fit_model(data, ModelKind::location_scale);
    PerturbedModel resp = location_scale_schemes(lfit, LocationScaleScheme::response);
    VectorXd h = fixtures::random_unit_directions(1, 10, 808)[0];
    PathSample line;
    line.t = VectorXd::LinSpaced(101, 0.0, 1.0);
    for (int j = 0; j <= 100; ++j) line.omega.push_back(resp.omega0 + line.t[j] * h);
    const double res = oracle::geodesic_residual(resp, line, 0.0);
    out.require(res <= 1e-8, "flat-scheme residual " + num(res));

    ClusteredDataset ldata = fixtures::lmm_fixture();
    ModelFit mfit = fit_model(ldata, ModelKind::linear_mixed,
                              CovarianceStructure(CovarianceStructure::Tag::compound_symmetry));
    LmmSchemes shift = lmm_cluster_shift_scheme(mfit);
    PathSample line2;
    line2.t = VectorXd::LinSpaced(101, 0.0, 1.0);
    VectorXd h2 = fixtures::random_unit_directions(1, 3, 809)[0];
    for (int j = 0; j <= 100; ++j) line2.omega.push_back(shift.raw.omega0 + line2.t[j] * h2);
    const double res2 = oracle::geodesic_residual(shift.raw, line2, 0.7);
    out.require(res2 <= 1e-8, "cluster-shift residual " + num(res2));
  }
  {  // case-weight straight line is a 1-geodesic
    ClusteredDataset idata = iid_gaussian_data(6, 811);
    ModelFit ifit = fit_model(idata, ModelKind::iid_parametric);
    PerturbedModel cw = case_weight_scheme(ifit);
    VectorXd h = VectorXd::Constant(6, 0.3);
    PathSample line;
    line.t = VectorXd::LinSpaced(101, 0.0, 1.0);
    for (int j = 0; j <= 100; ++j) line.omega.push_back(cw.omega0 + line.t[j] * h);
    const double res = oracle::geodesic_residual(cw, line, 1.0);
    out.require(res <= 1e-8, "case-weight 1-geodesic residual " + num(res));
  }
  if (out.pass) out.detail = "exp geodesic within 1e-6; straight-line residuals below 1e-8";
  return out;
}

Outcome criterion9() {
  Outcome out;
  const int p = 6;
  double worst_bound = 0.0, worst_eig = 0.0, worst_res = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(rep);
    MatrixXd h = fixtures::random_symmetric(p, seed);
    MatrixXd g = fixtures::random_spd(p, seed + 70000);
    EigenInfluence eig = eigen_influence(h, g);
    const double hnorm = std::max(1e-30, h.cwiseAbs().maxCoeff());
    for (int i = 0; i < p; ++i) {
      const VectorXd u = eig.eigenvectors.col(i);
      worst_res = std::max(worst_res,
                           (h * u - eig.eigenvalues[i] * (g * u)).norm() / hnorm);
      const double ssi_u = standardized_si(h, g, u);
      worst_eig = std::max(worst_eig, std::abs(ssi_u - eig.normalized_eigenvalues[i]));
    }
    for (const auto& dir : fixtures::random_unit_directions(100, p, seed + 140000)) {
      const double ssi = standardized_si(h, g, dir);
      worst_bound = std::max(worst_bound, std::abs(ssi));
    }
  }
  out.require(worst_bound <= 1.0 + 1e-12, "|SSI| exceeded 1: " + num(worst_bound));
  out.require(worst_eig <= 1e-10, "SSI at eigenvectors off by " + num(worst_eig));
  out.require(worst_res <= 1e-8, "eigen residual " + num(worst_res));
  if (out.pass)
    out.detail = "1000 pairs x 100 directions: max |SSI| = " + num(worst_bound) +
                 ", eigen residual " + num(worst_res);
  return out;
}

Outcome criterion10() {
  Outcome out;
  ClusteredDataset data = fixtures::lmm_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_mixed,
                           CovarianceStructure(CovarianceStructure::Tag::scaled_identity));
  LmmSchemes s = lmm_covariance_scheme(fit);
  auto ld = ld_function(fit, s.appropriate);
  oracle::OracleConfig cfg(10);
  ObjectiveProbe fd = oracle::fd_probe(ld, s.appropriate.omega0, cfg);
  out.require(fd.grad.norm() <= 1e-5, "LD gradient norm " + num(fd.grad.norm()));

  ObjectiveProbe probe = ld_probe(fit, s.appropriate);
  const double dev = (fd.hess - probe.hess).cwiseAbs().maxCoeff() /
                     std::max(1.0, probe.hess.cwiseAbs().maxCoeff());
  out.require(dev <= 1e-3, "H_LD off the finite-difference Hessian by " + num(dev));
  if (out.pass)
    out.detail =
        "grad norm " + num(fd.grad.norm()) + ", Hessian relative deviation " + num(dev);
  return out;
}

Outcome criterion11() {
  Outcome out;
  int detected = 0, converged = 0;
  for (int rep = 0; rep < 100; ++rep) {
    cli::SimulateConfig sim;
    sim.clusters = 30;
    sim.min_m = 3;
    sim.max_m = 12;
    sim.outlier_cluster = (rep % 30) + 1;
    sim.inflate = 5.0;
    sim.seed = 4200 + static_cast<std::uint64_t>(rep);
    ClusteredDataset data = cli::simulate(sim);
    try {
      FitOptions opts;
      ModelFit fit = fit_model(data, ModelKind::linear_mixed,
                               CovarianceStructure(CovarianceStructure::Tag::compound_symmetry),
                               Family::gaussian, opts);
      ++converged;
      LmmSchemes s = lmm_covariance_scheme(fit);
      GeometryAtPoint geom = geometry_at(s.appropriate, s.appropriate.omega0, 0.0);
      ObjectiveProbe probe = ld_probe(fit, s.appropriate);
      InfluenceReport rep_out = influence_report(s.appropriate, probe, geom);
      int argmax = 0;
      for (int i = 1; i < 30; ++i)
        if (std::abs(rep_out.basis_si[i]) > std::abs(rep_out.basis_si[argmax])) argmax = i;
      if (argmax == sim.outlier_cluster - 1) ++detected;
    } catch (const Error&) {
      // a non-convergent replication counts as a miss
    }
  }
  out.require(detected >= 95, "planted cluster ranked first in only " +
                                  std::to_string(detected) + "/100 replications");
  if (out.pass)
    out.detail = "planted cluster ranked first in " + std::to_string(detected) +
                 "/100 replications (" + std::to_string(converged) + " fits converged)";
  return out;
}

Outcome criterion12() {
  Outcome out;
  // q1 = 2, n = 5 regression; full explanatory perturbation
  MatrixXd x(5, 2);
  x << 1, 0.1, 1, -0.4, 1, 0.9, 1, 0.3, 1, -0.8;
  VectorXd y(5);
  y << 0.2, -0.5, 1.4, 0.3, -1.1;
  ClusteredDataset data = fixtures::rows_dataset(y, x);
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel full = explanatory_scheme(fit, ExplanatoryScheme::full_matrix, VectorXd::Ones(2));
  GeometryAtPoint geom = geometry_at(full, full.omega0, 0.0);
  SymEig eig = sym_eig(geom.G);
  int rank = 0;
  for (int i = 0; i < full.p; ++i)
    if (eig.values[i] > 1e-10 * eig.values.maxCoeff()) ++rank;
  out.require(rank == 5, "metric rank " + std::to_string(rank) + " instead of 5");
  out.require(!appropriateness_report(geom).is_appropriate, "singular metric marked appropriate");

  // end-to-end: the CLI must exit with code 3 and suggest the diagonal scheme
  const std::string dir = "/tmp/influence_acceptance_c12";
  std::system(("mkdir -p " + dir).c_str());
  cli::write_dataset_csv(data, dir + "/data.csv");
  {
    std::FILE* f = std::fopen((dir + "/run.cfg").c_str(), "w");
    std::fputs("model = linear_regression\nscheme = explanatory_full\nobjective = ld_full\n", f);
    std::fclose(f);
  }
  const std::string cmd = std::string(INFLUENCE_CLI_PATH) + " analyze --data " + dir +
                          "/data.csv --config " + dir + "/run.cfg --out " + dir + " > " + dir +
                          "/stdout.txt 2> " + dir + "/stderr.txt";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  out.require(code == 3, "CLI exit code " + std::to_string(code) + " instead of 3");
  {
    std::FILE* f = std::fopen((dir + "/stderr.txt").c_str(), "r");
    std::string text;
    char buf[512];
    while (f && std::fgets(buf, sizeof(buf), f)) text += buf;
    if (f) std::fclose(f);
    out.require(text.find("explanatory_diag") != std::string::npos,
                "remediation message does not mention explanatory_diag");
  }
  if (out.pass) out.detail = "rank-5 metric, inappropriate, CLI exit code 3 with remediation";
  return out;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "metric correctness against Monte Carlo", criterion1},
      {2, "rescaling yields c*I and flips the verdict", criterion2},
      {3, "reparametrization invariance; curvature non-invariance", criterion3},
      {4, "scaling laws of FI/SI/SSI", criterion4},
      {5, "location-scale schemes: G = cI and C_h = c SI", criterion5},
      {6, "closed forms of the -RSS analysis", criterion6},
      {7, "score-test identity of the log-linear scheme", criterion7},
      {8, "geodesics: exponential curves and straight lines", criterion8},
      {9, "eigen properties and the SSI bound", criterion9},
      {10, "likelihood displacement structure", criterion10},
      {11, "planted-outlier detection over 100 replications", criterion11},
      {12, "singular-metric handling and CLI exit code", criterion12},
  };

  std::vector<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.push_back(std::atoi(argv[a]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] C%02d %s: %s\n", out.pass ? "PASS" : "FAIL", c.id, c.title,
                out.detail.c_str());
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
