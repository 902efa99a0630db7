#pragma once

#include <optional>

#include "influence/types.hpp"

namespace influence {

enum class ProbeProvenance { closed_form, finite_difference };

/// Value, gradient and Hessian of an objective function at the null
/// perturbation. The Hessian is symmetrized on construction.
struct ObjectiveProbe {
  double f0 = 0.0;
  VectorXd grad;
  MatrixXd hess;
  ProbeProvenance provenance = ProbeProvenance::closed_form;

  static ObjectiveProbe make(double f0, VectorXd grad, const MatrixXd& hess,
                             ProbeProvenance provenance);
  int dim() const { return static_cast<int>(grad.size()); }
};

/// FI_{f,h} = (h' grad)^2 / (h' G h).
double first_order_influence(const ObjectiveProbe& probe, const MatrixXd& G, const VectorXd& h);

struct FiMax {
  double fi_max = 0.0;
  VectorXd h_max;               // unit Euclidean length in rescaled coordinates
  bool direction_defined = false;  // false when grad = 0
};

/// Maximum of FI over directions: grad' G^{-1} grad, attained along
/// G^{-1/2} grad in the rescaled coordinates.
FiMax fi_maximizer(const ObjectiveProbe& probe, const MatrixXd& G);

/// Covariant Hessian H~_ij = d_i d_j f - sum_{s,r} g^{sr} Gamma0_{ijs} d_r f.
MatrixXd covariant_hessian(const ObjectiveProbe& probe, const GeometryAtPoint& geom);

/// SI_{f,h} = h' H~ h / (h' G h).
double second_order_influence(const MatrixXd& Htilde, const MatrixXd& G, const VectorXd& h);

/// SSI_{f,h} = SI_{f,h} / ||G^{-1} H~||_M with ||A||_M = sqrt(tr A^2),
/// evaluated as sqrt(sum lambda_i^2) over the generalized eigenvalues.
/// Throws ZeroHessian when the norm vanishes (SSI undefined).
double standardized_si(const MatrixXd& Htilde, const MatrixXd& G, const VectorXd& h);

struct Curvatures {
  double c = 0.0;
  std::optional<double> b;  // absent when ||H_f||_M = 0
};

/// Cook's normal curvature C_h and the conformal curvature B_h, both in the
/// raw Euclidean geometry I_p + grad grad'.
Curvatures classical_curvatures(const ObjectiveProbe& probe, const VectorXd& h);

struct EigenInfluence {
  VectorXd eigenvalues;             // ordered by |lambda| descending
  VectorXd normalized_eigenvalues;  // lambda / sqrt(sum lambda^2); zeros when undefined
  bool normalized_defined = false;
  MatrixXd eigenvectors;  // columns, G-orthonormal
  double m_norm = 0.0;    // sqrt(sum lambda^2)
};

/// Generalized symmetric-definite eigenpairs of H~ u = lambda G u, solved by
/// whitening with the symmetric square root of G.
EigenInfluence eigen_influence(const MatrixXd& Htilde, const MatrixXd& G);

struct InfluenceReport {
  VectorXd basis_fi;
  VectorXd basis_si;
  VectorXd basis_ssi;  // zeros when !ssi_defined
  bool ssi_defined = false;
  VectorXd basis_c;
  VectorXd basis_b;  // zeros when !b_defined
  bool b_defined = false;
  VectorXd eigenvalues;
  VectorXd normalized_eigenvalues;
  bool normalized_defined = false;
  MatrixXd eigenvectors;
  double fi_max = 0.0;
  VectorXd h_max;
  bool h_max_defined = false;
  AppropriatenessVerdict verdict;
  std::vector<IndexLabel> labels;
};

/// All per-direction measures over the standard basis, the eigen profile and
/// the appropriateness verdict, assembled into one report.
InfluenceReport influence_report(const PerturbedModel& model, const ObjectiveProbe& probe,
                                 const GeometryAtPoint& geom);

}  // namespace influence
