#pragma once

#include <functional>
#include <string>
#include <vector>

#include "influence/measures.hpp"
#include "influence/types.hpp"

namespace influence {

enum class ModelKind { iid_parametric, location_scale, linear_regression, linear_mixed };
enum class Family { gaussian, logistic, exponential };

const char* model_kind_name(ModelKind k);
const char* family_name(Family f);

struct Cluster {
  std::string id;
  VectorXd y;
  MatrixXd x;   // m x q1
  VectorXd d;   // per-observation covariate for variance functions; may be empty
  int m() const { return static_cast<int>(y.size()); }
};

/// Responses and design matrices grouped into clusters.
struct ClusteredDataset {
  std::vector<Cluster> clusters;

  int n() const { return static_cast<int>(clusters.size()); }
  int total_obs() const;
  int q1() const { return clusters.empty() ? 0 : static_cast<int>(clusters.front().x.cols()); }
  VectorXd stacked_y() const;
  MatrixXd stacked_x() const;
  bool has_d() const;
  void validate() const;
};

/// Within-cluster covariance structure Sigma_i(xi) with analytic derivatives.
class CovarianceStructure {
 public:
  enum class Tag { scaled_identity, compound_symmetry, variance_function_autocorr };

  explicit CovarianceStructure(Tag tag = Tag::scaled_identity) : tag_(tag) {}
  static CovarianceStructure from_name(const std::string& name);
  const char* name() const;

  Tag tag() const { return tag_; }
  int q2() const;
  VectorXd default_init() const;

  MatrixXd build(const VectorXd& xi, const Cluster& c) const;
  std::vector<MatrixXd> derivs(const VectorXd& xi, const Cluster& c) const;
  /// q2 x m^2 matrix of row-major vec'd derivatives d vec(Sigma)/d xi.
  MatrixXd d_vec(const VectorXd& xi, const Cluster& c) const;
  /// Parameter-domain check (positivity, correlation bounds for the lags
  /// present in the data). Positive definiteness is checked separately where
  /// Sigma_i is factorized.
  bool xi_in_domain(const VectorXd& xi, const ClusteredDataset& data) const;

 private:
  Tag tag_;
};

struct ModelFit {
  ModelKind kind = ModelKind::linear_regression;
  Family family = Family::gaussian;
  ClusteredDataset data;
  VectorXd beta;
  double sigma2 = 0.0;  // dispersion for gaussian-type fits
  double rate = 0.0;    // iid exponential
  VectorXd xi;          // covariance parameters for linear_mixed
  CovarianceStructure cov{CovarianceStructure::Tag::scaled_identity};
  double loglik_at_fit = 0.0;
  std::vector<VectorXd> residuals;  // per cluster, y_i - x_i beta
  MatrixXd neg_hessian;             // q x q at theta_hat

  int q1() const { return static_cast<int>(beta.size()); }
  int q2() const;
  int q() const { return q1() + q2(); }
  /// theta = (beta, dispersion block).
  VectorXd theta() const;
  double sigma() const { return std::sqrt(sigma2); }
};

struct FitOptions {
  VectorXd xi_init;  // empty selects the structure default
  int max_iter = 500;
  double tol = 1e-8;
};

ModelFit fit_model(const ClusteredDataset& data, ModelKind kind,
                   const CovarianceStructure& cov = CovarianceStructure{},
                   Family family = Family::gaussian, const FitOptions& options = {});

/// Unperturbed log-likelihood L(theta) of the fitted model class.
double base_loglik(const ModelFit& fit, const VectorXd& theta);

// ---------------------------------------------------------------------------
// Perturbation schemes
// ---------------------------------------------------------------------------

/// Per-observation ingredients of the case-weight manifold: the component
/// log-likelihood, its normalizer, and moments of l(y_i) under the tilted
/// density exp(w * l)/c_i(w).
struct CaseWeightComponent {
  std::function<double(double)> loglik;
  std::function<double(double)> log_normalizer;
  std::function<double(double)> tilted_var;
  std::function<double(double)> tilted_m3;
  std::function<double(double, DrawRng&)> sample;  // may be empty
};

CaseWeightComponent gaussian_case_weight_component(double mu, double sigma2);
CaseWeightComponent exponential_case_weight_component(double rate);
CaseWeightComponent logistic_case_weight_component(double mu, double sigma);

PerturbedModel case_weight_from_components(std::vector<CaseWeightComponent> components,
                                           std::vector<IndexLabel> labels, std::string name);

/// Case-weight perturbation with exponential-family normalizers c_i(omega).
PerturbedModel case_weight_scheme(const ModelFit& fit);

enum class LocationScaleScheme { case_weight, variance, response };
PerturbedModel location_scale_schemes(const ModelFit& fit, LocationScaleScheme which);

/// Error-variance perturbation Var(eps_i) = sigma^2 / omega_i.
PerturbedModel regression_variance_scheme(const ModelFit& fit);
/// The k0 variant used to demonstrate inappropriateness; k0 = 1 reduces to
/// the plain error-variance scheme.
PerturbedModel regression_variance_scheme_k0(const ModelFit& fit, double k0);

enum class ExplanatoryScheme { full_matrix, diagonal };
PerturbedModel explanatory_scheme(const ModelFit& fit, ExplanatoryScheme which,
                                  const VectorXd& scale);

struct LogLinearSchemes {
  PerturbedModel raw;           // omega0 = 0, G(0) = n diag(E0 psi_j^2)
  PerturbedModel standardized;  // rescaled so G(0) = I
  ObjectiveProbe raw_lr_probe;          // log-likelihood ratio objective
  ObjectiveProbe standardized_lr_probe;
  VectorXd e0_psi_sq;
  VectorXd psi_bar;
};

/// Log-linear expansion perturbation around the fitted density. Basis
/// functions must be centered and mutually orthogonal under p0 (verified
/// numerically); leave domain_box empty for the default box.
LogLinearSchemes loglinear_scheme(const ModelFit& fit,
                                  const std::vector<std::function<double(double)>>& psi,
                                  std::vector<Interval> domain_box = {});

/// Hermite-style centered orthogonal basis in standardized coordinates for a
/// gaussian fit, m <= 4 functions.
std::vector<std::function<double(double)>> gaussian_hermite_basis(const ModelFit& fit, int m);

struct LmmSchemes {
  PerturbedModel raw;
  PerturbedModel appropriate;
  MatrixXd delta;  // q x p cross-derivative of the appropriate scheme
};

LmmSchemes lmm_covariance_scheme(const ModelFit& fit);
LmmSchemes lmm_cluster_shift_scheme(const ModelFit& fit);
LmmSchemes lmm_mean_shift_scheme(const ModelFit& fit);

// ---------------------------------------------------------------------------
// Objective probes
// ---------------------------------------------------------------------------

/// f(omega) = -sum_j omega_j r_j(omega)^2 under the error-variance scheme:
/// closed-form gradient (-r_i^2) and Hessian 2 D(r) P_X D(r).
ObjectiveProbe rss_probe(const ModelFit& fit);

/// The same objective as a callable, re-solving the weighted least squares
/// problem at each omega; used for finite-difference cross-checks.
std::function<double(const VectorXd&)> neg_rss_function(const ModelFit& fit);

enum class ParameterInterest { full_theta, beta_only, dispersion_only };

/// Likelihood-displacement probe at omega0: zero gradient and Hessian
/// 2 Delta' (-Ldd)^{-1} Delta, with the standard partitioned form when a
/// parameter subset is of interest.
ObjectiveProbe ld_probe(const ModelFit& fit, const PerturbedModel& scheme,
                        ParameterInterest interest = ParameterInterest::full_theta);

/// LD(omega) = 2[L(theta_hat) - L(theta_hat_omega)] as a callable with inner
/// refits, for finite-difference verification.
std::function<double(const VectorXd&)> ld_function(const ModelFit& fit,
                                                   const PerturbedModel& scheme,
                                                   ParameterInterest interest =
                                                       ParameterInterest::full_theta);

/// Log-likelihood ratio objective f(omega) = l(omega|Y) - l(omega0|Y) for the
/// observed data, as a callable on any scheme.
std::function<double(const VectorXd&)> loglik_ratio_function(const ModelFit& fit,
                                                             const PerturbedModel& scheme);

/// Cross-derivative matrix d^2 L / d theta d omega at (theta_hat, omega0) by
/// nested central differences on the scheme's loglik_theta.
MatrixXd fd_delta_matrix(const ModelFit& fit, const PerturbedModel& scheme);

}  // namespace influence
