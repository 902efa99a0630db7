#include "influence/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "influence/geometry.hpp"
#include "influence/linalg.hpp"

namespace influence {
namespace {

void require_same_dim(int a, int b, const char* what) {
  if (a != b) fail(ErrorKind::dimension_mismatch, what);
}

/// Sign convention: flip so the entry of largest magnitude is positive.
void fix_sign(Eigen::Ref<VectorXd> v) {
  int arg = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best) {
      best = std::abs(v[i]);
      arg = i;
    }
  if (v[arg] < 0.0) v = -v;
}

int largest_coord_index(const VectorXd& v) {
  int arg = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best) {
      best = std::abs(v[i]);
      arg = i;
    }
  return arg;
}

}  // namespace

ObjectiveProbe ObjectiveProbe::make(double f0, VectorXd grad, const MatrixXd& hess,
                                    ProbeProvenance provenance) {
  ObjectiveProbe p;
  p.f0 = f0;
  p.grad = std::move(grad);
  p.hess = symmetrize(hess);
  p.provenance = provenance;
  require_same_dim(static_cast<int>(p.grad.size()), static_cast<int>(p.hess.rows()),
                   "gradient and Hessian dimensions differ");
  return p;
}

double first_order_influence(const ObjectiveProbe& probe, const MatrixXd& G, const VectorXd& h) {
  require_same_dim(probe.dim(), static_cast<int>(G.rows()), "probe/metric dimensions differ");
  require_same_dim(probe.dim(), static_cast<int>(h.size()), "direction has wrong length");
  const double denom = h.dot(G * h);
  if (!(denom > 0.0))
    fail(ErrorKind::degenerate_direction, "h'Gh must be positive, got " + std::to_string(denom));
  const double num = h.dot(probe.grad);
  return num * num / denom;
}

FiMax fi_maximizer(const ObjectiveProbe& probe, const MatrixXd& G) {
  require_same_dim(probe.dim(), static_cast<int>(G.rows()), "probe/metric dimensions differ");
  FiMax out;
  const MatrixXd w = sym_inv_sqrt(G, pd_floor(G));
  if (probe.grad.norm() == 0.0) {
    out.h_max = VectorXd::Zero(probe.dim());
    return out;
  }
  const VectorXd wg = w * probe.grad;
  out.fi_max = wg.squaredNorm();  // = grad' G^{-1} grad
  out.h_max = wg / wg.norm();
  fix_sign(out.h_max);
  out.direction_defined = true;
  return out;
}

MatrixXd covariant_hessian(const ObjectiveProbe& probe, const GeometryAtPoint& geom) {
  require_same_dim(probe.dim(), static_cast<int>(geom.G.rows()), "probe/geometry dimensions differ");
  if (!geom.Ginv) fail(ErrorKind::singular_metric, "metric is singular; covariant Hessian undefined");
  // correction_ij = sum_s Gamma0_ijs * (G^{-1} grad)_s
  const VectorXd w = (*geom.Ginv) * probe.grad;
  return symmetrize(probe.hess - geom.Gamma0.contract_last(w));
}

double second_order_influence(const MatrixXd& Htilde, const MatrixXd& G, const VectorXd& h) {
  require_same_dim(static_cast<int>(Htilde.rows()), static_cast<int>(G.rows()),
                   "Hessian/metric dimensions differ");
  require_same_dim(static_cast<int>(G.rows()), static_cast<int>(h.size()),
                   "direction has wrong length");
  const double denom = h.dot(G * h);
  if (!(denom > 0.0))
    fail(ErrorKind::degenerate_direction, "h'Gh must be positive, got " + std::to_string(denom));
  return h.dot(Htilde * h) / denom;
}

double standardized_si(const MatrixXd& Htilde, const MatrixXd& G, const VectorXd& h) {
  const EigenInfluence e = eigen_influence(Htilde, G);
  if (e.m_norm == 0.0)
    fail(ErrorKind::zero_hessian, "||G^{-1} H~||_M = 0; SSI undefined");
  return second_order_influence(Htilde, G, h) / e.m_norm;
}

Curvatures classical_curvatures(const ObjectiveProbe& probe, const VectorXd& h) {
  require_same_dim(probe.dim(), static_cast<int>(h.size()), "direction has wrong length");
  if (h.norm() == 0.0) fail(ErrorKind::degenerate_direction, "direction is zero");
  const double g2 = probe.grad.squaredNorm();
  const double hg = h.dot(probe.grad);
  const double denom = h.squaredNorm() + hg * hg;  // h'(I + grad grad')h
  const double quad = h.dot(probe.hess * h);
  Curvatures out;
  out.c = quad / (std::sqrt(1.0 + g2) * denom);
  const double m_norm = std::sqrt(std::max(0.0, (probe.hess * probe.hess).trace()));
  if (m_norm > 0.0) out.b = quad / (m_norm * denom);
  return out;
}

EigenInfluence eigen_influence(const MatrixXd& Htilde, const MatrixXd& G) {
  require_same_dim(static_cast<int>(Htilde.rows()), static_cast<int>(G.rows()),
                   "Hessian/metric dimensions differ");
  const int p = static_cast<int>(G.rows());
  const MatrixXd w = sym_inv_sqrt(G, pd_floor(G));
  const SymEig es = sym_eig(symmetrize(w * Htilde * w));

  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  MatrixXd raw_vectors = w * es.vectors;  // G-orthonormal columns
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double la = std::abs(es.values[a]), lb = std::abs(es.values[b]);
    if (la != lb) return la > lb;
    return largest_coord_index(raw_vectors.col(a)) < largest_coord_index(raw_vectors.col(b));
  });

  EigenInfluence out;
  out.eigenvalues = VectorXd(p);
  out.eigenvectors = MatrixXd(p, p);
  for (int i = 0; i < p; ++i) {
    out.eigenvalues[i] = es.values[order[static_cast<std::size_t>(i)]];
    out.eigenvectors.col(i) = raw_vectors.col(order[static_cast<std::size_t>(i)]);
    fix_sign(out.eigenvectors.col(i));
  }
  out.m_norm = out.eigenvalues.norm();
  if (out.m_norm > 0.0) {
    out.normalized_eigenvalues = out.eigenvalues / out.m_norm;
    out.normalized_defined = true;
  } else {
    out.normalized_eigenvalues = VectorXd::Zero(p);
  }
  return out;
}

InfluenceReport influence_report(const PerturbedModel& model, const ObjectiveProbe& probe,
                                 const GeometryAtPoint& geom) {
  require_same_dim(model.p, probe.dim(), "model/probe dimensions differ");
  require_same_dim(model.p, static_cast<int>(geom.G.rows()), "model/geometry dimensions differ");
  const int p = model.p;

  InfluenceReport rep;
  rep.labels = model.labels;
  rep.verdict = appropriateness_report(geom);

  const MatrixXd htilde = covariant_hessian(probe, geom);
  const EigenInfluence eig = eigen_influence(htilde, geom.G);
  rep.eigenvalues = eig.eigenvalues;
  rep.normalized_eigenvalues = eig.normalized_eigenvalues;
  rep.normalized_defined = eig.normalized_defined;
  rep.eigenvectors = eig.eigenvectors;
  rep.ssi_defined = eig.m_norm > 0.0;

  const double hess_m_norm = std::sqrt(std::max(0.0, (probe.hess * probe.hess).trace()));
  rep.b_defined = hess_m_norm > 0.0;

  rep.basis_fi = VectorXd::Zero(p);
  rep.basis_si = VectorXd::Zero(p);
  rep.basis_ssi = VectorXd::Zero(p);
  rep.basis_c = VectorXd::Zero(p);
  rep.basis_b = VectorXd::Zero(p);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < p; ++i) {
    VectorXd e = VectorXd::Zero(p);
    e[i] = 1.0;
    rep.basis_fi[i] = first_order_influence(probe, geom.G, e);
    rep.basis_si[i] = second_order_influence(htilde, geom.G, e);
    if (rep.ssi_defined) rep.basis_ssi[i] = rep.basis_si[i] / eig.m_norm;
    const Curvatures cur = classical_curvatures(probe, e);
    rep.basis_c[i] = cur.c;
    if (cur.b) rep.basis_b[i] = *cur.b;
  }

  const FiMax fm = fi_maximizer(probe, geom.G);
  rep.fi_max = fm.fi_max;
  rep.h_max = fm.h_max;
  rep.h_max_defined = fm.direction_defined;
  return rep;
}

}  // namespace influence
