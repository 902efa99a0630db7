#include "influence/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "influence/detail/fd.hpp"
#include "influence/linalg.hpp"
#include "models_detail.hpp"

namespace influence {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::iid_parametric: return "iid_parametric";
    case ModelKind::location_scale: return "location_scale";
    case ModelKind::linear_regression: return "linear_regression";
    case ModelKind::linear_mixed: return "linear_mixed";
  }
  return "?";
}

const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::logistic: return "logistic";
    case Family::exponential: return "exponential";
  }
  return "?";
}

int ClusteredDataset::total_obs() const {
  int m = 0;
  for (const auto& c : clusters) m += c.m();
  return m;
}

VectorXd ClusteredDataset::stacked_y() const {
  VectorXd y(total_obs());
  int at = 0;
  for (const auto& c : clusters) {
    y.segment(at, c.m()) = c.y;
    at += c.m();
  }
  return y;
}

MatrixXd ClusteredDataset::stacked_x() const {
  MatrixXd x(total_obs(), q1());
  int at = 0;
  for (const auto& c : clusters) {
    x.middleRows(at, c.m()) = c.x;
    at += c.m();
  }
  return x;
}

bool ClusteredDataset::has_d() const {
  for (const auto& c : clusters)
    if (c.d.size() != c.m()) return false;
  return !clusters.empty();
}

void ClusteredDataset::validate() const {
  if (clusters.empty()) fail(ErrorKind::empty_cluster, "dataset has no clusters");
  const int q = q1();
  for (const auto& c : clusters) {
    if (c.m() < 1) fail(ErrorKind::empty_cluster, "cluster '" + c.id + "' is empty");
    if (c.x.rows() != c.m() || c.x.cols() != q)
      fail(ErrorKind::dimension_mismatch, "design matrix shape mismatch in cluster '" + c.id + "'");
    if (c.d.size() != 0 && c.d.size() != c.m())
      fail(ErrorKind::dimension_mismatch, "covariate d length mismatch in cluster '" + c.id + "'");
  }
}

// ---------------------------------------------------------------------------
// Covariance structures
// ---------------------------------------------------------------------------

CovarianceStructure CovarianceStructure::from_name(const std::string& name) {
  if (name == "scaled_identity") return CovarianceStructure(Tag::scaled_identity);
  if (name == "compound_symmetry") return CovarianceStructure(Tag::compound_symmetry);
  if (name == "variance_function_autocorr")
    return CovarianceStructure(Tag::variance_function_autocorr);
  fail(ErrorKind::incompatible_config, "unknown covariance structure '" + name + "'");
}

const char* CovarianceStructure::name() const {
  switch (tag_) {
    case Tag::scaled_identity: return "scaled_identity";
    case Tag::compound_symmetry: return "compound_symmetry";
    case Tag::variance_function_autocorr: return "variance_function_autocorr";
  }
  return "?";
}

int CovarianceStructure::q2() const {
  switch (tag_) {
    case Tag::scaled_identity: return 1;
    case Tag::compound_symmetry: return 2;
    case Tag::variance_function_autocorr: return 6;
  }
  return 0;
}

VectorXd CovarianceStructure::default_init() const {
  switch (tag_) {
    case Tag::scaled_identity: return VectorXd::Constant(1, 1.0);
    case Tag::compound_symmetry: {
      VectorXd xi(2);
      xi << 1.0, 0.2;
      return xi;
    }
    case Tag::variance_function_autocorr: {
      VectorXd xi(6);
      xi << 0.0, 0.0, 0.0, 0.0, 0.2, 0.0;
      return xi;
    }
  }
  return VectorXd();
}

MatrixXd CovarianceStructure::build(const VectorXd& xi, const Cluster& c) const {
  const int m = c.m();
  switch (tag_) {
    case Tag::scaled_identity:
      return xi[0] * MatrixXd::Identity(m, m);
    case Tag::compound_symmetry: {
      const double s2 = xi[0], rho = xi[1];
      return s2 * ((1.0 - rho) * MatrixXd::Identity(m, m) + rho * MatrixXd::Ones(m, m));
    }
    case Tag::variance_function_autocorr: {
      if (c.d.size() != m)
        fail(ErrorKind::incompatible_config,
             "variance_function_autocorr needs the d covariate in every cluster");
      VectorXd v(m);
      for (int j = 0; j < m; ++j) {
        const double d = c.d[j];
        v[j] = std::exp(xi[0] + xi[1] * d + xi[2] * d * d + xi[3] * d * d * d);
      }
      MatrixXd s(m, m);
      for (int j = 0; j < m; ++j) {
        s(j, j) = v[j];
        for (int k = j + 1; k < m; ++k) {
          const double lag = std::abs(c.d[j] - c.d[k]);
          const double rho = xi[4] + xi[5] * lag;
          s(j, k) = s(k, j) = std::sqrt(v[j] * v[k]) * rho;
        }
      }
      return s;
    }
  }
  return MatrixXd();
}

std::vector<MatrixXd> CovarianceStructure::derivs(const VectorXd& xi, const Cluster& c) const {
  const int m = c.m();
  std::vector<MatrixXd> out;
  switch (tag_) {
    case Tag::scaled_identity:
      out.push_back(MatrixXd::Identity(m, m));
      break;
    case Tag::compound_symmetry: {
      const double s2 = xi[0], rho = xi[1];
      out.push_back((1.0 - rho) * MatrixXd::Identity(m, m) + rho * MatrixXd::Ones(m, m));
      out.push_back(s2 * (MatrixXd::Ones(m, m) - MatrixXd::Identity(m, m)));
      break;
    }
    case Tag::variance_function_autocorr: {
      const MatrixXd s = build(xi, c);
      // d/dxi_r of sqrt(V_j V_k) rho = 0.5 (d_j^r + d_k^r) Sigma_jk, r = 0..3
      for (int r = 0; r < 4; ++r) {
        MatrixXd ds(m, m);
        for (int j = 0; j < m; ++j)
          for (int k = 0; k < m; ++k) {
            const double pj = std::pow(c.d[j], r);
            const double pk = std::pow(c.d[k], r);
            ds(j, k) = 0.5 * (pj + pk) * s(j, k);
          }
        out.push_back(ds);
      }
      VectorXd v(m);
      for (int j = 0; j < m; ++j)
        v[j] = std::exp(xi[0] + xi[1] * c.d[j] + xi[2] * c.d[j] * c.d[j] +
                        xi[3] * c.d[j] * c.d[j] * c.d[j]);
      MatrixXd d4 = MatrixXd::Zero(m, m), d5 = MatrixXd::Zero(m, m);
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
          if (j == k) continue;
          const double root = std::sqrt(v[j] * v[k]);
          d4(j, k) = root;
          d5(j, k) = root * std::abs(c.d[j] - c.d[k]);
        }
      out.push_back(d4);
      out.push_back(d5);
      break;
    }
  }
  return out;
}

MatrixXd CovarianceStructure::d_vec(const VectorXd& xi, const Cluster& c) const {
  const int m = c.m();
  const auto ds = derivs(xi, c);
  MatrixXd out(static_cast<int>(ds.size()), m * m);
  for (std::size_t a = 0; a < ds.size(); ++a)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) out(static_cast<int>(a), j * m + k) = ds[a](j, k);
  return out;
}

bool CovarianceStructure::xi_in_domain(const VectorXd& xi, const ClusteredDataset& data) const {
  switch (tag_) {
    case Tag::scaled_identity:
      return xi[0] > 0.0;
    case Tag::compound_symmetry: {
      int mmax = 1;
      for (const auto& c : data.clusters) mmax = std::max(mmax, c.m());
      const double lo = mmax > 1 ? -1.0 / static_cast<double>(mmax - 1) : -1.0;
      return xi[0] > 0.0 && xi[1] > lo && xi[1] < 1.0;
    }
    case Tag::variance_function_autocorr: {
      for (const auto& c : data.clusters)
        for (int j = 0; j < c.m(); ++j)
          for (int k = j + 1; k < c.m(); ++k) {
            const double rho = xi[4] + xi[5] * std::abs(c.d[j] - c.d[k]);
            if (rho <= -1.0 || rho >= 1.0) return false;
          }
      return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

int ModelFit::q2() const {
  if (kind == ModelKind::linear_mixed) return static_cast<int>(xi.size());
  return 1;
}

VectorXd ModelFit::theta() const {
  if (kind == ModelKind::linear_mixed) {
    VectorXd t(q1() + xi.size());
    t.head(q1()) = beta;
    t.tail(xi.size()) = xi;
    return t;
  }
  if (kind == ModelKind::iid_parametric && family == Family::exponential) {
    return VectorXd::Constant(1, rate);
  }
  VectorXd t(q1() + 1);
  t.head(q1()) = beta;
  t[q1()] = sigma2;
  return t;
}

namespace {

double log_p0_logistic(double x) {
  // standard logistic standardized to unit variance
  static const double k = 3.1415926535897932384626433832795 / std::sqrt(3.0);
  const double z = k * x;
  return std::log(k) - std::abs(z) - 2.0 * std::log1p(std::exp(-std::abs(z)));
}

double score_p0_logistic(double x) {
  static const double k = 3.1415926535897932384626433832795 / std::sqrt(3.0);
  return -k * std::tanh(0.5 * k * x);
}

struct LmmState {
  VectorXd beta;
  VectorXd xi;
  double loglik = 0.0;
};

struct LmmWorkspace {
  std::vector<Eigen::LLT<MatrixXd>> chol;
  bool factorize(const ClusteredDataset& data, const CovarianceStructure& cov,
                 const VectorXd& xi) {
    chol.resize(data.clusters.size());
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
      chol[i].compute(cov.build(xi, data.clusters[i]));
      if (chol[i].info() != Eigen::Success) return false;
    }
    return true;
  }
};

double lmm_loglik(const ClusteredDataset& data, const LmmWorkspace& ws, const VectorXd& beta,
                  const std::vector<VectorXd>* shifts, const VectorXd* weights) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    VectorXd e = c.y - c.x * beta;
    if (shifts) e += (*shifts)[i];
    const double w = weights ? (*weights)[static_cast<int>(i)] : 1.0;
    const auto& l = ws.chol[i].matrixL();
    double logdet = 0.0;
    for (int j = 0; j < c.m(); ++j) logdet += std::log(l(j, j));
    const VectorXd solved = ws.chol[i].solve(e);
    ll += -0.5 * c.m() * kLog2Pi - logdet + 0.5 * c.m() * std::log(w) - 0.5 * w * e.dot(solved);
  }
  return ll;
}

VectorXd lmm_gls_beta(const ClusteredDataset& data, const LmmWorkspace& ws,
                      const std::vector<VectorXd>* shifts, const VectorXd* weights) {
  const int q1 = data.q1();
  MatrixXd a = MatrixXd::Zero(q1, q1);
  VectorXd b = VectorXd::Zero(q1);
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    const double w = weights ? (*weights)[static_cast<int>(i)] : 1.0;
    VectorXd yy = c.y;
    if (shifts) yy += (*shifts)[i];
    const MatrixXd xs = ws.chol[i].solve(c.x);
    a += w * c.x.transpose() * xs;
    b += w * xs.transpose() * yy;
  }
  Eigen::LDLT<MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail(ErrorKind::rank_deficient_design, "GLS normal equations are singular");
  return ldlt.solve(b);
}

/// ML fit of the Gaussian linear mixed model by alternating GLS for beta with
/// Fisher-scoring steps for xi. Supports per-cluster weights and response
/// shifts so perturbed refits reuse the same loop.
LmmState lmm_ml_fit(const ClusteredDataset& data, const CovarianceStructure& cov,
                    const VectorXd& xi_init, const std::vector<VectorXd>* shifts,
                    const VectorXd* weights, const FitOptions& options) {
  const int q2 = cov.q2();
  LmmState st;
  st.xi = xi_init.size() == q2 ? xi_init : cov.default_init();
  if (!cov.xi_in_domain(st.xi, data))
    fail(ErrorKind::incompatible_config, "initial covariance parameters outside their domain");
  LmmWorkspace ws;
  if (!ws.factorize(data, cov, st.xi))
    fail(ErrorKind::non_convergence, "initial covariance is not positive definite");

  st.beta = lmm_gls_beta(data, ws, shifts, weights);
  st.loglik = lmm_loglik(data, ws, st.beta, shifts, weights);

  for (int iter = 0; iter < options.max_iter; ++iter) {
    // score and Fisher information in xi at the current (beta, xi)
    VectorXd score = VectorXd::Zero(q2);
    MatrixXd info = MatrixXd::Zero(q2, q2);
    VectorXd beta_score = VectorXd::Zero(data.q1());
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
      const auto& c = data.clusters[i];
      const double w = weights ? (*weights)[static_cast<int>(i)] : 1.0;
      VectorXd e = c.y - c.x * st.beta;
      if (shifts) e += (*shifts)[i];
      const VectorXd se = ws.chol[i].solve(e);
      beta_score += w * c.x.transpose() * se;
      const auto ds = cov.derivs(st.xi, c);
      std::vector<MatrixXd> sd(ds.size());
      for (std::size_t a = 0; a < ds.size(); ++a) sd[a] = ws.chol[i].solve(ds[a]);
      for (int a = 0; a < q2; ++a) {
        score[a] += -0.5 * sd[static_cast<std::size_t>(a)].trace() +
                    0.5 * w * se.dot(ds[static_cast<std::size_t>(a)] * se);
        for (int b = a; b < q2; ++b) {
          const double tr = (sd[static_cast<std::size_t>(a)] * sd[static_cast<std::size_t>(b)]).trace();
          info(a, b) += 0.5 * tr;
          if (b != a) info(b, a) += 0.5 * tr;
        }
      }
    }

    const double scale = 1.0 + std::abs(st.loglik);
    if (std::sqrt(score.squaredNorm() + beta_score.squaredNorm()) <= options.tol * scale) return st;

    Eigen::LDLT<MatrixXd> ldlt(info);
    VectorXd step = ldlt.info() == Eigen::Success && ldlt.isPositive()
                        ? VectorXd(ldlt.solve(score))
                        : VectorXd(score / std::max(1.0, info.norm()));
    double stepsize = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      VectorXd cand = st.xi + stepsize * step;
      LmmWorkspace wcand;
      if (cov.xi_in_domain(cand, data) && wcand.factorize(data, cov, cand)) {
        try {
          const VectorXd bcand = lmm_gls_beta(data, wcand, shifts, weights);
          const double ll = lmm_loglik(data, wcand, bcand, shifts, weights);
          if (std::isfinite(ll) && ll >= st.loglik - 1e-12 * scale) {
            st.xi = cand;
            st.beta = bcand;
            st.loglik = ll;
            ws = wcand;
            accepted = true;
            break;
          }
        } catch (const Error&) {
          // ill-conditioned candidate; shrink the step
        }
      }
      stepsize *= 0.5;
    }
    if (!accepted)
      fail(ErrorKind::non_convergence, "no admissible Fisher-scoring step keeps Sigma_i positive definite");
  }
  fail(ErrorKind::non_convergence, "linear mixed model fit did not converge within the iteration cap");
}

MatrixXd lmm_neg_hessian(const ClusteredDataset& data, const CovarianceStructure& cov,
                         const VectorXd& beta, const VectorXd& xi) {
  const int q1 = data.q1(), q2 = cov.q2();
  MatrixXd h = MatrixXd::Zero(q1 + q2, q1 + q2);
  for (const auto& c : data.clusters) {
    Eigen::LLT<MatrixXd> chol(cov.build(xi, c));
    h.topLeftCorner(q1, q1) += c.x.transpose() * chol.solve(c.x);
    const auto ds = cov.derivs(xi, c);
    std::vector<MatrixXd> sd(ds.size());
    for (std::size_t a = 0; a < ds.size(); ++a) sd[a] = chol.solve(ds[a]);
    for (int a = 0; a < q2; ++a)
      for (int b = a; b < q2; ++b) {
        const double tr =
            0.5 * (sd[static_cast<std::size_t>(a)] * sd[static_cast<std::size_t>(b)]).trace();
        h(q1 + a, q1 + b) += tr;
        if (b != a) h(q1 + b, q1 + a) += tr;
      }
  }
  (void)beta;
  return h;
}

ModelFit fit_gaussian_regression(const ClusteredDataset& data, ModelKind kind) {
  const MatrixXd x = data.stacked_x();
  const VectorXd y = data.stacked_y();
  const int mtot = static_cast<int>(y.size()), q1 = static_cast<int>(x.cols());
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < q1)
    fail(ErrorKind::rank_deficient_design,
         "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(q1));
  ModelFit fit;
  fit.kind = kind;
  fit.family = Family::gaussian;
  fit.data = data;
  fit.beta = qr.solve(y);
  const VectorXd r = y - x * fit.beta;
  fit.sigma2 = r.squaredNorm() / static_cast<double>(mtot);
  fit.loglik_at_fit = -0.5 * mtot * (kLog2Pi + std::log(fit.sigma2) + 1.0);
  int at = 0;
  for (const auto& c : data.clusters) {
    fit.residuals.push_back(r.segment(at, c.m()));
    at += c.m();
  }
  fit.neg_hessian = MatrixXd::Zero(q1 + 1, q1 + 1);
  fit.neg_hessian.topLeftCorner(q1, q1) = x.transpose() * x / fit.sigma2;
  fit.neg_hessian(q1, q1) = 0.5 * mtot / (fit.sigma2 * fit.sigma2);
  return fit;
}

ModelFit fit_logistic_location_scale(const ClusteredDataset& data, const FitOptions& options) {
  const MatrixXd x = data.stacked_x();
  const VectorXd y = data.stacked_y();
  const int mtot = static_cast<int>(y.size()), q1 = static_cast<int>(x.cols());

  // Newton iteration on (beta, log sigma) with the analytic gradient.
  auto loglik = [&](const VectorXd& beta, double logs) {
    const double s = std::exp(logs);
    double ll = -mtot * logs;
    for (int i = 0; i < mtot; ++i) ll += log_p0_logistic((y[i] - x.row(i).dot(beta)) / s);
    return ll;
  };
  auto gradient = [&](const VectorXd& beta, double logs) {
    const double s = std::exp(logs);
    VectorXd g = VectorXd::Zero(q1 + 1);
    for (int i = 0; i < mtot; ++i) {
      const double e = (y[i] - x.row(i).dot(beta)) / s;
      const double u = score_p0_logistic(e);
      g.head(q1) += -u / s * x.row(i).transpose();
      g[q1] += -u * e - 1.0;
    }
    return g;
  };

  ModelFit ols = fit_gaussian_regression(data, ModelKind::location_scale);
  VectorXd beta = ols.beta;
  double logs = 0.5 * std::log(ols.sigma2);
  double ll = loglik(beta, logs);
  bool converged = false;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    VectorXd g = gradient(beta, logs);
    if (g.norm() <= options.tol * (1.0 + std::abs(ll))) {
      converged = true;
      break;
    }
    detail::ScalarField f = [&](const VectorXd& t) { return loglik(t.head(q1), t[q1]); };
    VectorXd t(q1 + 1);
    t.head(q1) = beta;
    t[q1] = logs;
    MatrixXd h = detail::fd_hessian(f, t);
    Eigen::LDLT<MatrixXd> ldlt(-h);
    VectorXd step = ldlt.info() == Eigen::Success && ldlt.isPositive()
                        ? VectorXd(ldlt.solve(g))
                        : VectorXd(g / std::max(1.0, h.norm()));
    double size = 1.0;
    for (int half = 0; half < 40; ++half) {
      const VectorXd bc = beta + size * step.head(q1);
      const double lc = logs + size * step[q1];
      const double cand = loglik(bc, lc);
      if (cand >= ll - 1e-12 * (1.0 + std::abs(ll))) {
        beta = bc;
        logs = lc;
        ll = cand;
        break;
      }
      size *= 0.5;
    }
  }
  if (!converged && gradient(beta, logs).norm() > options.tol * (1.0 + std::abs(ll)) * 10.0)
    fail(ErrorKind::non_convergence, "logistic location-scale fit did not converge");

  ModelFit fit;
  fit.kind = ModelKind::location_scale;
  fit.family = Family::logistic;
  fit.data = data;
  fit.beta = beta;
  fit.sigma2 = std::exp(2.0 * logs);
  fit.loglik_at_fit = ll;
  const VectorXd r = y - x * beta;
  int at = 0;
  for (const auto& c : data.clusters) {
    fit.residuals.push_back(r.segment(at, c.m()));
    at += c.m();
  }
  detail::ScalarField base = [&fit](const VectorXd& theta) { return base_loglik(fit, theta); };
  fit.neg_hessian = symmetrize(-detail::fd_hessian(base, fit.theta()));
  return fit;
}

}  // namespace

ModelFit fit_model(const ClusteredDataset& data, ModelKind kind, const CovarianceStructure& cov,
                   Family family, const FitOptions& options) {
  data.validate();
  switch (kind) {
    case ModelKind::linear_regression:
      if (family != Family::gaussian)
        fail(ErrorKind::unsupported_family, "linear regression assumes gaussian errors");
      return fit_gaussian_regression(data, kind);
    case ModelKind::location_scale:
      if (family == Family::gaussian) return fit_gaussian_regression(data, kind);
      if (family == Family::logistic) return fit_logistic_location_scale(data, options);
      fail(ErrorKind::unsupported_family, "location-scale families: gaussian, logistic");
    case ModelKind::iid_parametric: {
      const VectorXd y = data.stacked_y();
      const int mtot = static_cast<int>(y.size());
      ModelFit fit;
      fit.kind = kind;
      fit.family = family;
      fit.data = data;
      if (family == Family::gaussian) {
        const double mu = y.mean();
        fit.beta = VectorXd::Constant(1, mu);
        fit.sigma2 = (y.array() - mu).square().sum() / mtot;
        fit.loglik_at_fit = -0.5 * mtot * (kLog2Pi + std::log(fit.sigma2) + 1.0);
        fit.neg_hessian = MatrixXd::Zero(2, 2);
        fit.neg_hessian(0, 0) = mtot / fit.sigma2;
        fit.neg_hessian(1, 1) = 0.5 * mtot / (fit.sigma2 * fit.sigma2);
      } else if (family == Family::exponential) {
        if (y.minCoeff() <= 0.0)
          fail(ErrorKind::unsupported_family, "exponential family needs positive responses");
        fit.rate = 1.0 / y.mean();
        fit.loglik_at_fit = mtot * std::log(fit.rate) - fit.rate * y.sum();
        fit.neg_hessian = MatrixXd::Constant(1, 1, mtot / (fit.rate * fit.rate));
      } else {
        fail(ErrorKind::unsupported_family, "iid families: gaussian, exponential");
      }
      int at = 0;
      for (const auto& c : data.clusters) {
        if (family == Family::gaussian)
          fit.residuals.push_back(c.y.array() - fit.beta[0]);
        else
          fit.residuals.push_back(c.y);
        at += c.m();
      }
      return fit;
    }
    case ModelKind::linear_mixed: {
      if (family != Family::gaussian)
        fail(ErrorKind::unsupported_family, "linear mixed models are gaussian here");
      if (cov.tag() == CovarianceStructure::Tag::variance_function_autocorr && !data.has_d())
        fail(ErrorKind::incompatible_config, "variance function structure needs the d column");
      LmmState st = lmm_ml_fit(data, cov, options.xi_init, nullptr, nullptr, options);
      ModelFit fit;
      fit.kind = kind;
      fit.family = Family::gaussian;
      fit.data = data;
      fit.cov = cov;
      fit.beta = st.beta;
      fit.xi = st.xi;
      fit.loglik_at_fit = st.loglik;
      for (const auto& c : data.clusters) fit.residuals.push_back(c.y - c.x * st.beta);
      fit.neg_hessian = lmm_neg_hessian(data, cov, st.beta, st.xi);
      return fit;
    }
  }
  fail(ErrorKind::incompatible_config, "unknown model kind");
}

double base_loglik(const ModelFit& fit, const VectorXd& theta) {
  switch (fit.kind) {
    case ModelKind::linear_mixed: {
      const int q1 = fit.q1();
      const VectorXd beta = theta.head(q1);
      const VectorXd xi = theta.tail(theta.size() - q1);
      double ll = 0.0;
      for (const auto& c : fit.data.clusters) {
        Eigen::LLT<MatrixXd> chol(fit.cov.build(xi, c));
        if (chol.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
        const VectorXd e = c.y - c.x * beta;
        double logdet = 0.0;
        for (int j = 0; j < c.m(); ++j) logdet += std::log(chol.matrixL()(j, j));
        ll += -0.5 * c.m() * kLog2Pi - logdet - 0.5 * e.dot(chol.solve(e));
      }
      return ll;
    }
    case ModelKind::iid_parametric:
      if (fit.family == Family::exponential) {
        const double lambda = theta[0];
        if (lambda <= 0.0) return -std::numeric_limits<double>::infinity();
        const VectorXd y = fit.data.stacked_y();
        return y.size() * std::log(lambda) - lambda * y.sum();
      }
      [[fallthrough]];
    case ModelKind::linear_regression:
    case ModelKind::location_scale: {
      const int q1 = fit.q1();
      const VectorXd beta = theta.head(q1);
      const double s2 = theta[q1];
      if (s2 <= 0.0) return -std::numeric_limits<double>::infinity();
      const MatrixXd x = fit.data.stacked_x();
      const VectorXd y = fit.data.stacked_y();
      const VectorXd e = y - x * beta;
      if (fit.family == Family::logistic) {
        const double s = std::sqrt(s2);
        double ll = -0.5 * y.size() * std::log(s2);
        for (int i = 0; i < e.size(); ++i) ll += log_p0_logistic(e[i] / s);
        return ll;
      }
      return -0.5 * y.size() * (kLog2Pi + std::log(s2)) - e.squaredNorm() / (2.0 * s2);
    }
  }
  return 0.0;
}

namespace detail_models {

// shared with schemes.cpp
double logistic_log_p0(double x) { return log_p0_logistic(x); }
double logistic_score_p0(double x) { return score_p0_logistic(x); }

LmmRefitFn make_lmm_refit(const ModelFit& fit) {
  return [fit](const std::vector<VectorXd>* shifts, const VectorXd* weights) {
    FitOptions opts;
    opts.xi_init = fit.xi;
    opts.tol = 1e-10;
    opts.max_iter = 200;
    LmmState st = lmm_ml_fit(fit.data, fit.cov, fit.xi, shifts, weights, opts);
    VectorXd theta(fit.q());
    theta.head(fit.q1()) = st.beta;
    theta.tail(fit.q2()) = st.xi;
    return theta;
  };
}

VectorXd lmm_profile_xi(const ModelFit& fit, const VectorXd& beta_fixed, const VectorXd& xi_start) {
  // maximize the base log-likelihood over xi with beta held fixed
  const int q2 = fit.q2();
  VectorXd xi = xi_start;
  for (int iter = 0; iter < 200; ++iter) {
    VectorXd score = VectorXd::Zero(q2);
    MatrixXd info = MatrixXd::Zero(q2, q2);
    double ll = 0.0;
    for (const auto& c : fit.data.clusters) {
      Eigen::LLT<MatrixXd> chol(fit.cov.build(xi, c));
      if (chol.info() != Eigen::Success)
        fail(ErrorKind::non_convergence, "profile covariance not positive definite");
      const VectorXd e = c.y - c.x * beta_fixed;
      const VectorXd se = chol.solve(e);
      double logdet = 0.0;
      for (int j = 0; j < c.m(); ++j) logdet += std::log(chol.matrixL()(j, j));
      ll += -0.5 * c.m() * kLog2Pi - logdet - 0.5 * e.dot(se);
      const auto ds = fit.cov.derivs(xi, c);
      std::vector<MatrixXd> sd(ds.size());
      for (std::size_t a = 0; a < ds.size(); ++a) sd[a] = chol.solve(ds[a]);
      for (int a = 0; a < q2; ++a) {
        score[a] += -0.5 * sd[static_cast<std::size_t>(a)].trace() +
                    0.5 * se.dot(ds[static_cast<std::size_t>(a)] * se);
        for (int b = a; b < q2; ++b) {
          const double tr =
              0.5 * (sd[static_cast<std::size_t>(a)] * sd[static_cast<std::size_t>(b)]).trace();
          info(a, b) += tr;
          if (b != a) info(b, a) += tr;
        }
      }
    }
    if (score.norm() <= 1e-10 * (1.0 + std::abs(ll))) return xi;
    Eigen::LDLT<MatrixXd> ldlt(info);
    VectorXd step = ldlt.solve(score);
    double size = 1.0;
    for (int half = 0; half < 40; ++half) {
      VectorXd cand = xi + size * step;
      if (fit.cov.xi_in_domain(cand, fit.data)) {
        bool pd = true;
        double llc = 0.0;
        for (const auto& c : fit.data.clusters) {
          Eigen::LLT<MatrixXd> chol(fit.cov.build(cand, c));
          if (chol.info() != Eigen::Success) {
            pd = false;
            break;
          }
          const VectorXd e = c.y - c.x * beta_fixed;
          double logdet = 0.0;
          for (int j = 0; j < c.m(); ++j) logdet += std::log(chol.matrixL()(j, j));
          llc += -0.5 * c.m() * kLog2Pi - logdet - 0.5 * e.dot(chol.solve(e));
        }
        if (pd && llc >= ll - 1e-13 * (1.0 + std::abs(ll))) {
          xi = cand;
          break;
        }
      }
      size *= 0.5;
      if (half == 39) return xi;
    }
  }
  return xi;
}

}  // namespace detail_models

}  // namespace influence
