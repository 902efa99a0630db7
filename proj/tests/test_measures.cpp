#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "influence/geometry.hpp"
#include "influence/linalg.hpp"
#include "influence/measures.hpp"
#include "influence/models.hpp"
#include "influence/oracle.hpp"

using namespace influence;
using doctest::Approx;

namespace {

GeometryAtPoint flat_geom(const MatrixXd& g) {
  GeometryAtPoint geom;
  geom.omega = VectorXd::Zero(g.rows());
  geom.G = g;
  geom.T = Tensor3::zero(static_cast<int>(g.rows()));
  geom.Gamma0 = geom.T;
  geom.GammaAlpha = geom.T;
  SymEig e = sym_eig(g);
  geom.min_eigenvalue = e.values.minCoeff();
  VectorXd inv = e.values.array().inverse();
  geom.Ginv = e.vectors * inv.asDiagonal() * e.vectors.transpose();
  return geom;
}

ObjectiveProbe probe_of(const VectorXd& grad, const MatrixXd& hess) {
  return ObjectiveProbe::make(0.0, grad, hess, ProbeProvenance::closed_form);
}

VectorXd stacked_residuals(const ModelFit& fit) {
  VectorXd r(fit.data.total_obs());
  int at = 0;
  for (const auto& e : fit.residuals) {
    r.segment(at, e.size()) = e;
    at += static_cast<int>(e.size());
  }
  return r;
}

}  // namespace

TEST_CASE("first-order influence") {
  const MatrixXd id = MatrixXd::Identity(2, 2);
  CHECK(first_order_influence(probe_of(VectorXd::Zero(2), id), id, VectorXd::Ones(2)) ==
        Approx(0.0));

  VectorXd grad(2);
  grad << 1.0, 2.0;
  CHECK(first_order_influence(probe_of(grad, id), id, VectorXd::Unit(2, 0)) == Approx(1.0));

  // h = G^{-1} grad attains the maximum grad' G^{-1} grad
  MatrixXd g = fixtures::random_spd(2, 42);
  const VectorXd hmax = g.ldlt().solve(grad);
  const double fimax = grad.dot(hmax);
  CHECK(first_order_influence(probe_of(grad, id), g, hmax) == Approx(fimax).epsilon(1e-12));
  for (const auto& h : fixtures::random_unit_directions(64, 2, 9))
    CHECK(first_order_influence(probe_of(grad, id), g, h) <= fimax * (1.0 + 1e-12));

  CHECK_THROWS_AS(first_order_influence(probe_of(grad, id), MatrixXd::Zero(2, 2), grad), Error);
}

TEST_CASE("fi_maximizer") {
  SUBCASE("critical point: zero maximum, undefined direction") {
    FiMax fm = fi_maximizer(probe_of(VectorXd::Zero(3), MatrixXd::Identity(3, 3)),
                            MatrixXd::Identity(3, 3));
    CHECK(fm.fi_max == Approx(0.0));
    CHECK_FALSE(fm.direction_defined);
    CHECK(fm.h_max.norm() == Approx(0.0));
  }
  SUBCASE("-RSS gradient under the half-identity metric: 2 sum r^4") {
    ClusteredDataset data = fixtures::regression_fixture();
    ModelFit fit = fit_model(data, ModelKind::linear_regression);
    const VectorXd r = stacked_residuals(fit);
    const VectorXd grad = -r.array().square();
    const MatrixXd g = 0.5 * MatrixXd::Identity(10, 10);
    FiMax fm = fi_maximizer(probe_of(grad, MatrixXd::Zero(10, 10)), g);
    CHECK(fm.fi_max == Approx(2.0 * r.array().pow(4).sum()).epsilon(1e-12));
    // grid-search oracle over random unit directions stays below the maximum
    double best = 0.0;
    for (const auto& h : fixtures::random_unit_directions(400, 10, 3))
      best = std::max(best, first_order_influence(probe_of(grad, MatrixXd::Zero(10, 10)), g, h));
    CHECK(best <= fm.fi_max * (1.0 + 1e-12));
    CHECK(best > 0.3 * fm.fi_max);
    // reported direction is proportional to (r_i^2), largest entry positive
    VectorXd expected = r.array().square();
    expected /= expected.norm();
    CHECK((fm.h_max - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fm.h_max.norm() == Approx(1.0));
  }
}

TEST_CASE("covariant Hessian") {
  SUBCASE("flat connection reduces to the plain Hessian") {
    MatrixXd h = fixtures::random_symmetric(4, 8);
    GeometryAtPoint geom = flat_geom(fixtures::random_spd(4, 8));
    VectorXd grad(4);
    grad << 1.0, -2.0, 0.5, 0.0;
    CHECK((covariant_hessian(probe_of(grad, h), geom) - h).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("one-dimensional variance geometry, f = omega^2") {
    // g = 0.5, Gamma0_111 = -0.5 at omega = 1; correction = g^{11} Gamma contract
    GeometryAtPoint geom;
    geom.omega = VectorXd::Ones(1);
    geom.G = MatrixXd::Constant(1, 1, 0.5);
    geom.T = Tensor3::diagonal(VectorXd::Constant(1, -1.0));
    geom.Gamma0 = Tensor3::diagonal(VectorXd::Constant(1, -0.5));
    geom.GammaAlpha = geom.Gamma0;
    geom.Ginv = MatrixXd::Constant(1, 1, 2.0);
    geom.min_eigenvalue = 0.5;
    ObjectiveProbe probe = probe_of(VectorXd::Constant(1, 2.0), MatrixXd::Constant(1, 1, 2.0));
    const MatrixXd ht = covariant_hessian(probe, geom);
    CHECK(ht(0, 0) == Approx(4.0));
  }
  SUBCASE("singular metric is rejected") {
    GeometryAtPoint geom = flat_geom(MatrixXd::Identity(2, 2));
    geom.Ginv.reset();
    CHECK_THROWS_AS(covariant_hessian(probe_of(VectorXd::Ones(2), MatrixXd::Identity(2, 2)), geom),
                    Error);
  }
}

TEST_CASE("second-order influence and its standardized form") {
  MatrixXd ht = ((VectorXd(2) << 4.0, 0.0).finished()).asDiagonal();
  const MatrixXd id = MatrixXd::Identity(2, 2);
  CHECK(second_order_influence(ht, id, VectorXd::Ones(2)) == Approx(2.0));

  SUBCASE("eigenvector directions give eigenvalues and normalized eigenvalues") {
    MatrixXd h = fixtures::random_symmetric(5, 21);
    MatrixXd g = fixtures::random_spd(5, 22);
    EigenInfluence eig = eigen_influence(h, g);
    for (int i = 0; i < 5; ++i) {
      const VectorXd u = eig.eigenvectors.col(i);
      CHECK(second_order_influence(h, g, u) == Approx(eig.eigenvalues[i]).epsilon(1e-10));
      CHECK(standardized_si(h, g, u) == Approx(eig.normalized_eigenvalues[i]).epsilon(1e-10));
    }
  }
  SUBCASE("ssi on a diagonal pair") {
    MatrixXd h = ((VectorXd(2) << 3.0, 4.0).finished()).asDiagonal();
    CHECK(standardized_si(h, id, VectorXd::Unit(2, 1)) == Approx(0.8));
  }
  SUBCASE("identically zero Hessian leaves SSI undefined") {
    CHECK_THROWS_AS(standardized_si(MatrixXd::Zero(2, 2), id, VectorXd::Ones(2)), Error);
  }
}

TEST_CASE("scaling laws are exact") {
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel scheme = regression_variance_scheme(fit);
  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
  ObjectiveProbe probe = rss_probe(fit);
  const MatrixXd ht = covariant_hessian(probe, geom);
  const double norm = eigen_influence(ht, geom.G).m_norm;

  for (double k : {-3.0, 0.5, 10.0}) {
    ObjectiveProbe scaled = ObjectiveProbe::make(k * probe.f0, k * probe.grad, k * probe.hess,
                                                 ProbeProvenance::closed_form);
    const MatrixXd ht_k = covariant_hessian(scaled, geom);
    const double norm_k = eigen_influence(ht_k, geom.G).m_norm;
    for (const auto& h : fixtures::random_unit_directions(20, 10, 77)) {
      const double fi = first_order_influence(probe, geom.G, h);
      const double si = second_order_influence(ht, geom.G, h);
      CHECK(first_order_influence(scaled, geom.G, h) == Approx(k * k * fi).epsilon(1e-12));
      CHECK(second_order_influence(ht_k, geom.G, h) == Approx(k * si).epsilon(1e-12));
      // the M-norm absorbs |k| only, so the standardized measure keeps the
      // sign of k: invariant for positive scale, flipped for negative
      const double sign = k > 0.0 ? 1.0 : -1.0;
      CHECK(second_order_influence(ht_k, geom.G, h) / norm_k ==
            Approx(sign * si / norm).epsilon(1e-12));
    }
  }
}

TEST_CASE("classical curvatures") {
  SUBCASE("critical point reduces to the Rayleigh quotient of H") {
    MatrixXd h = fixtures::random_symmetric(3, 4);
    VectorXd dir = fixtures::random_unit_directions(1, 3, 5)[0];
    Curvatures c = classical_curvatures(probe_of(VectorXd::Zero(3), h), dir);
    CHECK(c.c == Approx(dir.dot(h * dir) / dir.squaredNorm()).epsilon(1e-14));
    REQUIRE(c.b.has_value());
    CHECK(*c.b == Approx(c.c / std::sqrt((h * h).trace())).epsilon(1e-12));
  }
  SUBCASE("no conformal curvature for a vanishing Hessian") {
    Curvatures c = classical_curvatures(probe_of(VectorXd::Ones(2), MatrixXd::Zero(2, 2)),
                                        VectorXd::Unit(2, 0));
    CHECK_FALSE(c.b.has_value());
  }
  SUBCASE("scale non-invariance with a nonzero gradient") {
    VectorXd grad(2);
    grad << 0.8, -0.4;
    MatrixXd h = fixtures::random_symmetric(2, 6);
    VectorXd dir(2);
    dir << 1.0, 0.5;
    const double c1 = classical_curvatures(probe_of(grad, h), dir).c;
    const double c2 = classical_curvatures(probe_of(2.0 * grad, 2.0 * h), dir).c;
    CHECK(std::abs(c1 - c2) > 1e-3 * std::abs(c1));
  }
}

TEST_CASE("generalized eigen-influence") {
  SUBCASE("zero Hessian: all eigenvalues zero and normalization flagged") {
    EigenInfluence eig = eigen_influence(MatrixXd::Zero(3, 3), MatrixXd::Identity(3, 3));
    CHECK(eig.eigenvalues.cwiseAbs().maxCoeff() == Approx(0.0));
    CHECK_FALSE(eig.normalized_defined);
  }
  SUBCASE("identity metric reduces to the ordinary symmetric problem") {
    MatrixXd h = fixtures::random_symmetric(5, 31);
    EigenInfluence eig = eigen_influence(h, MatrixXd::Identity(5, 5));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    VectorXd sorted_ours = eig.eigenvalues;
    VectorXd sorted_ref = es.eigenvalues();
    std::sort(sorted_ours.begin(), sorted_ours.end());
    std::sort(sorted_ref.begin(), sorted_ref.end());
    CHECK((sorted_ours - sorted_ref).cwiseAbs().maxCoeff() < 1e-12);
    // ordering by |lambda| descending
    for (int i = 1; i < 5; ++i)
      CHECK(std::abs(eig.eigenvalues[i - 1]) >= std::abs(eig.eigenvalues[i]) - 1e-14);
  }
  SUBCASE("diagonal pair with the documented values") {
    MatrixXd h = ((VectorXd(2) << 1.0, -2.0).finished()).asDiagonal();
    MatrixXd g = ((VectorXd(2) << 1.0, 4.0).finished()).asDiagonal();
    EigenInfluence eig = eigen_influence(h, g);
    CHECK(eig.eigenvalues[0] == Approx(1.0));
    CHECK(eig.eigenvalues[1] == Approx(-0.5));
    const double norm = std::sqrt(1.25);
    CHECK(eig.normalized_eigenvalues[0] == Approx(1.0 / norm));
    CHECK(eig.normalized_eigenvalues[1] == Approx(-0.5 / norm));
  }
  SUBCASE("random pairs: residuals, G-orthonormality, Cholesky cross-check, SSI bound") {
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
      const int p = 6;
      MatrixXd h = fixtures::random_symmetric(p, seed);
      MatrixXd g = fixtures::random_spd(p, seed + 1000);
      EigenInfluence eig = eigen_influence(h, g);

      const double hnorm = std::max(1e-30, h.cwiseAbs().maxCoeff());
      for (int i = 0; i < p; ++i) {
        const VectorXd u = eig.eigenvectors.col(i);
        CHECK((h * u - eig.eigenvalues[i] * (g * u)).norm() < 1e-8 * hnorm);
        for (int j = 0; j < p; ++j)
          CHECK(u.dot(g * eig.eigenvectors.col(j)) ==
                Approx(i == j ? 1.0 : 0.0).epsilon(1e-8).scale(1.0));
      }
      if (eig.normalized_defined)
        CHECK(eig.normalized_eigenvalues.squaredNorm() == Approx(1.0).epsilon(1e-10));

      // independent route: whiten with the Cholesky factor instead
      Eigen::LLT<MatrixXd> llt(g);
      const MatrixXd l = llt.matrixL();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(
          l.triangularView<Eigen::Lower>().solve(
              MatrixXd(l.triangularView<Eigen::Lower>().solve(h).transpose())));
      VectorXd ref = es.eigenvalues();
      VectorXd ours = eig.eigenvalues;
      std::sort(ref.begin(), ref.end());
      std::sort(ours.begin(), ours.end());
      CHECK((ref - ours).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, hnorm));

      for (const auto& dir : fixtures::random_unit_directions(50, p, seed + 5)) {
        const double ssi = standardized_si(h, g, dir);
        CHECK(std::abs(ssi) <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("influence report") {
  SUBCASE("identity metric: SI equals C elementwise") {
    ClusteredDataset data = fixtures::lmm_fixture();
    ModelFit fit = fit_model(data, ModelKind::linear_mixed,
                             CovarianceStructure(CovarianceStructure::Tag::compound_symmetry));
    LmmSchemes schemes = lmm_covariance_scheme(fit);
    GeometryAtPoint geom = geometry_at(schemes.appropriate, schemes.appropriate.omega0, 0.0);
    ObjectiveProbe probe = ld_probe(fit, schemes.appropriate);
    InfluenceReport rep = influence_report(schemes.appropriate, probe, geom);
    CHECK(rep.verdict.is_appropriate);
    CHECK((rep.basis_si - rep.basis_c).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(rep.labels.size() == 3);
  }
  SUBCASE("-RSS on the regression fixture reproduces 2 r^2 (2 p_ii - 1)") {
    ClusteredDataset data = fixtures::regression_fixture();
    ModelFit fit = fit_model(data, ModelKind::linear_regression);
    PerturbedModel scheme = regression_variance_scheme(fit);
    GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
    ObjectiveProbe probe = rss_probe(fit);
    InfluenceReport rep = influence_report(scheme, probe, geom);

    const MatrixXd x = data.stacked_x();
    const MatrixXd px = x * (x.transpose() * x).ldlt().solve(x.transpose());
    const VectorXd r = stacked_residuals(fit);
    for (int i = 0; i < 10; ++i) {
      const double expected = 2.0 * r[i] * r[i] * (2.0 * px(i, i) - 1.0);
      CHECK(rep.basis_si[i] == Approx(expected).epsilon(1e-10));
      CHECK(rep.basis_fi[i] == Approx(2.0 * std::pow(r[i], 4)).epsilon(1e-10));
    }
    CHECK(rep.fi_max == Approx(2.0 * r.array().pow(4).sum()).epsilon(1e-12));
    CHECK_FALSE(rep.verdict.is_appropriate == false);  // G = 0.5 I is appropriate
  }
  SUBCASE("zero probe: all measures zero, SSI and B flagged undefined") {
    ClusteredDataset data = fixtures::iid_unit_gaussian_fixture(4);
    ModelFit fit = fit_model(data, ModelKind::iid_parametric);
    PerturbedModel scheme = case_weight_scheme(fit);
    GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
    ObjectiveProbe probe = probe_of(VectorXd::Zero(4), MatrixXd::Zero(4, 4));
    InfluenceReport rep = influence_report(scheme, probe, geom);
    CHECK(rep.basis_fi.cwiseAbs().maxCoeff() == Approx(0.0));
    CHECK(rep.basis_si.cwiseAbs().maxCoeff() == Approx(0.0));
    CHECK_FALSE(rep.ssi_defined);
    CHECK_FALSE(rep.b_defined);
    CHECK_FALSE(rep.h_max_defined);
  }
}

TEST_CASE("reparametrization invariance of FI/SI/SSI") {
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel scheme = regression_variance_scheme(fit);
  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);
  ObjectiveProbe probe = rss_probe(fit);
  const auto dirs = fixtures::random_unit_directions(16, 10, 13);

  SUBCASE("identity map: zero deviation") {
    oracle::InvarianceRecord rec =
        oracle::invariance_harness(probe, geom, oracle::DiffeoSpec::identity(10), dirs);
    CHECK(rec.max_rel_dev() < 1e-14);
  }
  SUBCASE("componentwise affine maps are exact to rounding") {
    oracle::DiffeoSpec d = oracle::DiffeoSpec::identity(10);
    DrawRng rng(404, 0);
    for (int i = 0; i < 10; ++i) d.a[i] = 0.5 + 1.5 * rng.next_unit();
    oracle::InvarianceRecord rec = oracle::invariance_harness(probe, geom, d, dirs);
    CHECK(rec.max_rel_dev() < 1e-8);
  }
  SUBCASE("cubic maps") {
    oracle::DiffeoSpec d = oracle::DiffeoSpec::identity(10);
    DrawRng rng(405, 0);
    for (int i = 0; i < 10; ++i) {
      d.a[i] = 0.5 + 1.5 * rng.next_unit();
      d.b[i] = rng.next_unit();
    }
    oracle::InvarianceRecord rec = oracle::invariance_harness(probe, geom, d, dirs);
    CHECK(rec.max_rel_dev() < 1e-6);
  }
  SUBCASE("maps with curvature at the null point exercise the connection rule") {
    oracle::DiffeoSpec d = oracle::DiffeoSpec::identity(10);
    DrawRng rng(406, 0);
    for (int i = 0; i < 10; ++i) {
      d.a[i] = 0.8 + 0.8 * rng.next_unit();
      d.b[i] = 0.5 + 0.5 * rng.next_unit();
      // keep q^2 < 3ab for monotonicity
      d.q[i] = 0.9 * std::sqrt(3.0 * d.a[i] * d.b[i]) * (rng.next_unit() - 0.5);
    }
    oracle::InvarianceRecord rec = oracle::invariance_harness(probe, geom, d, dirs);
    CHECK(rec.max_rel_dev() < 1e-6);
  }
}

TEST_CASE("limit identities along 0-geodesics") {
  ClusteredDataset data = fixtures::regression_fixture();
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  PerturbedModel scheme = regression_variance_scheme(fit);
  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, 0.0);

  // analytic quadratic objective around omega0
  DrawRng rng(515, 0);
  VectorXd a(10);
  for (int i = 0; i < 10; ++i) a[i] = rng.next_normal();
  MatrixXd b = fixtures::random_symmetric(10, 516);
  auto f = [&](const VectorXd& w) {
    const VectorXd d = w - VectorXd::Ones(10);
    return a.dot(d) + 0.5 * d.dot(b * d);
  };
  ObjectiveProbe probe = probe_of(a, b);
  const MatrixXd ht = covariant_hessian(probe, geom);

  VectorXd h = fixtures::random_unit_directions(1, 10, 20)[0];
  const double fi = first_order_influence(probe, geom.G, h);
  const double si = second_order_influence(ht, geom.G, h);

  auto quotients = [&](double t) {
    const int steps = 400;
    PathSample fwd = geodesic_trace(scheme, 0.0, h, t, steps);
    PathSample bwd = geodesic_trace(scheme, 0.0, -h, t, steps);
    const double s = path_distance(scheme, fwd);
    const double fp = f(fwd.omega.back());
    const double fm = f(bwd.omega.back());
    // symmetric realizations of the Taylor-limit quotients
    const double fi_q = std::pow(0.5 * (fp - fm), 2) / (s * s);
    const double si_q = (fp + fm - 2.0 * f(VectorXd::Ones(10))) / (s * s);
    return std::make_pair(fi_q, si_q);
  };

  const auto [fi2, si2] = quotients(1e-2);
  const auto [fi3, si3] = quotients(1e-3);
  const double efi2 = std::abs(fi2 - fi), efi3 = std::abs(fi3 - fi);
  const double esi2 = std::abs(si2 - si), esi3 = std::abs(si3 - si);
  CHECK(efi3 < 1e-5 * std::max(1.0, std::abs(fi)));
  CHECK(esi3 < 1e-4 * std::max(1.0, std::abs(si)));
  // second-order convergence: shrinking t tenfold gains ~100x
  CHECK(efi3 < efi2 / 25.0);
  CHECK(esi3 < esi2 / 25.0);
}
