#include <cmath>
#include <memory>

#include "influence/detail/fd.hpp"
#include "influence/geometry.hpp"
#include "influence/linalg.hpp"
#include "influence/models.hpp"
#include "influence/quadrature.hpp"
#include "models_detail.hpp"

namespace influence {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<IndexLabel> cluster_labels(const ClusteredDataset& data) {
  std::vector<IndexLabel> out;
  out.reserve(static_cast<std::size_t>(data.n()));
  for (const auto& c : data.clusters) out.push_back(IndexLabel{c.id, -1});
  return out;
}

std::vector<IndexLabel> observation_labels(const ClusteredDataset& data) {
  std::vector<IndexLabel> out;
  for (const auto& c : data.clusters)
    for (int l = 0; l < c.m(); ++l) out.push_back(IndexLabel{c.id, l});
  return out;
}

void require_singleton_clusters(const ModelFit& fit, const char* scheme) {
  for (const auto& c : fit.data.clusters)
    if (c.m() != 1)
      fail(ErrorKind::incompatible_config,
           std::string(scheme) + " needs independent observations (m_i = 1), cluster '" + c.id +
               "' has " + std::to_string(c.m()));
}

}  // namespace

PerturbedModel case_weight_from_components(std::vector<CaseWeightComponent> comps,
                                           std::vector<IndexLabel> labels, std::string name) {
  const int n = static_cast<int>(comps.size());
  auto shared = std::make_shared<std::vector<CaseWeightComponent>>(std::move(comps));

  PerturbedModel model;
  model.p = n;
  model.omega0 = VectorXd::Ones(n);
  model.domain = Domain::all_positive(n);
  model.name = std::move(name);
  model.labels = std::move(labels);

  model.loglik = [shared](const VectorXd& w, const VectorXd& y) {
    double ll = 0.0;
    for (int i = 0; i < w.size(); ++i) {
      const auto& c = (*shared)[static_cast<std::size_t>(i)];
      ll += w[i] * c.loglik(y[i]) - c.log_normalizer(w[i]);
    }
    return ll;
  };
  model.geometry = [shared, n](const VectorXd& w) {
    VectorXd g(n), t(n);
    for (int i = 0; i < n; ++i) {
      const auto& c = (*shared)[static_cast<std::size_t>(i)];
      g[i] = c.tilted_var(w[i]);
      t[i] = c.tilted_m3(w[i]);
    }
    GeometryCore core;
    core.G = g.asDiagonal();
    core.T = Tensor3::diagonal(t);
    core.Gamma0 = Tensor3::diagonal(0.5 * t);  // Gamma^a = 0.5 (1 - a) T
    return core;
  };
  bool all_sample = true;
  for (const auto& c : *shared)
    if (!c.sample) all_sample = false;
  if (all_sample) {
    model.sampler = [shared, n](const VectorXd& w, DrawRng& rng) {
      VectorXd y(n);
      for (int i = 0; i < n; ++i) y[i] = (*shared)[static_cast<std::size_t>(i)].sample(w[i], rng);
      return y;
    };
  }
  return model;
}

CaseWeightComponent gaussian_case_weight_component(double mu, double sigma2) {
  CaseWeightComponent c;
  const double s = std::sqrt(sigma2);
  c.loglik = [mu, sigma2](double y) {
    return -0.5 * (kLog2Pi + std::log(sigma2)) - (y - mu) * (y - mu) / (2.0 * sigma2);
  };
  c.log_normalizer = [sigma2](double w) {
    return 0.5 * (1.0 - w) * (kLog2Pi + std::log(sigma2)) - 0.5 * std::log(w);
  };
  c.tilted_var = [](double w) { return 0.5 / (w * w); };
  c.tilted_m3 = [](double w) { return -1.0 / (w * w * w); };
  c.sample = [mu, s](double w, DrawRng& rng) { return mu + s * rng.next_normal() / std::sqrt(w); };
  return c;
}

CaseWeightComponent exponential_case_weight_component(double rate) {
  CaseWeightComponent c;
  c.loglik = [rate](double y) { return std::log(rate) - rate * y; };
  c.log_normalizer = [rate](double w) { return (w - 1.0) * std::log(rate) - std::log(w); };
  c.tilted_var = [](double w) { return 1.0 / (w * w); };
  c.tilted_m3 = [](double w) { return -2.0 / (w * w * w); };
  c.sample = [rate](double w, DrawRng& rng) { return rng.next_exponential(w * rate); };
  return c;
}

CaseWeightComponent logistic_case_weight_component(double mu, double sigma) {
  CaseWeightComponent c;
  c.loglik = [mu, sigma](double y) {
    return detail_models::logistic_log_p0((y - mu) / sigma) - std::log(sigma);
  };
  // c(w) = sigma^{1-w} * int p0(e)^w de; central moments of l are those of
  // log p0(e) under the tilted density.
  auto tilted = [](double w, int moment) {
    auto dens = [w](double e) { return std::exp(w * detail_models::logistic_log_p0(e)); };
    const double z = integrate_or_fail(dens, -kInf, kInf, 1e-11);
    auto mean_f = [&](double e) { return detail_models::logistic_log_p0(e) * dens(e); };
    const double mean = integrate_or_fail(mean_f, -kInf, kInf, 1e-11) / z;
    auto ctr = [&](double e) {
      const double dev = detail_models::logistic_log_p0(e) - mean;
      return std::pow(dev, moment) * dens(e);
    };
    return integrate_or_fail(ctr, -kInf, kInf, 1e-11) / z;
  };
  c.log_normalizer = [sigma](double w) {
    auto dens = [w](double e) { return std::exp(w * detail_models::logistic_log_p0(e)); };
    return (1.0 - w) * std::log(sigma) + std::log(integrate_or_fail(dens, -kInf, kInf, 1e-11));
  };
  c.tilted_var = [tilted](double w) { return tilted(w, 2); };
  c.tilted_m3 = [tilted](double w) { return tilted(w, 3); };
  return c;
}

namespace {

// E0 moments driving the location-scale variance/response geometries.
struct LsMoments {
  double e2_var;    // E0[(x u(x) + 1)^2]
  double e3_var;    // E0[(x u(x) + 1)^3]
  double e2_score;  // E0[u(x)^2]
  double e3_score;  // E0[u(x)^3]
};

LsMoments ls_moments(Family family) {
  if (family == Family::gaussian) return LsMoments{2.0, -8.0, 1.0, 0.0};
  if (family == Family::logistic) {
    static const LsMoments cached = [] {
      auto p0 = [](double x) { return std::exp(detail_models::logistic_log_p0(x)); };
      auto u = [](double x) { return detail_models::logistic_score_p0(x); };
      auto mom = [&](auto integrand) {
        return integrate_or_fail([&](double x) { return integrand(x) * p0(x); }, -kInf, kInf, 1e-12);
      };
      LsMoments m;
      m.e2_var = mom([&](double x) { return std::pow(x * u(x) + 1.0, 2); });
      m.e3_var = mom([&](double x) { return std::pow(x * u(x) + 1.0, 3); });
      m.e2_score = mom([&](double x) { return u(x) * u(x); });
      m.e3_score = mom([&](double x) { return std::pow(u(x), 3); });
      return m;
    }();
    return cached;
  }
  fail(ErrorKind::unsupported_family, "location-scale moments: gaussian or logistic");
}

double standardized_logistic_quantile(double u) {
  static const double k = 3.1415926535897932384626433832795 / std::sqrt(3.0);
  return std::log(u / (1.0 - u)) / k;
}

// Gaussian closed forms for likelihood-displacement support of a regression
// scheme; attaches loglik_theta, delta and a weighted-least-squares refit.
struct GaussianLdHooks {
  ThetaLogLik loglik_theta;
  MatrixXd delta;
  Refit refit;
};

enum class GaussRegScheme { case_weight, variance_inv_omega, ls_variance, response };

GaussianLdHooks gaussian_ld_hooks(const ModelFit& fit, GaussRegScheme which) {
  const MatrixXd x = fit.data.stacked_x();
  const VectorXd y = fit.data.stacked_y();
  const int n = static_cast<int>(y.size());
  const int q1 = fit.q1();
  const double s2 = fit.sigma2, s4 = s2 * s2;
  VectorXd r(n);
  {
    int at = 0;
    for (const auto& e : fit.residuals) {
      r.segment(at, e.size()) = e;
      at += static_cast<int>(e.size());
    }
  }

  GaussianLdHooks hooks;
  hooks.delta = MatrixXd(q1 + 1, n);
  for (int i = 0; i < n; ++i) {
    switch (which) {
      case GaussRegScheme::case_weight:
      case GaussRegScheme::variance_inv_omega:
        hooks.delta.col(i).head(q1) = x.row(i).transpose() * r[i] / s2;
        hooks.delta(q1, i) = r[i] * r[i] / (2.0 * s4);
        break;
      case GaussRegScheme::ls_variance:
        hooks.delta.col(i).head(q1) = 2.0 * x.row(i).transpose() * r[i] / s2;
        hooks.delta(q1, i) = r[i] * r[i] / s4;
        break;
      case GaussRegScheme::response:
        hooks.delta.col(i).head(q1) = x.row(i).transpose() / s2;
        hooks.delta(q1, i) = r[i] / s4;
        break;
    }
  }

  hooks.loglik_theta = [x, y, n, q1, which](const VectorXd& theta, const VectorXd& w) {
    const VectorXd beta = theta.head(q1);
    const double sig2 = theta[q1];
    if (sig2 <= 0.0) return -kInf;
    const VectorXd e = y - x * beta;
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      switch (which) {
        case GaussRegScheme::case_weight:
          // weighted component minus the theta-dependent part of log c_i
          ll += w[i] * (-0.5 * (kLog2Pi + std::log(sig2)) - e[i] * e[i] / (2.0 * sig2)) -
                (0.5 * (1.0 - w[i]) * (kLog2Pi + std::log(sig2)) - 0.5 * std::log(w[i]));
          break;
        case GaussRegScheme::variance_inv_omega:
          ll += 0.5 * std::log(w[i]) - 0.5 * (kLog2Pi + std::log(sig2)) -
                w[i] * e[i] * e[i] / (2.0 * sig2);
          break;
        case GaussRegScheme::ls_variance:
          ll += std::log(w[i]) - 0.5 * (kLog2Pi + std::log(sig2)) -
                w[i] * w[i] * e[i] * e[i] / (2.0 * sig2);
          break;
        case GaussRegScheme::response:
          ll += -0.5 * (kLog2Pi + std::log(sig2)) - (e[i] + w[i]) * (e[i] + w[i]) / (2.0 * sig2);
          break;
      }
    }
    return ll;
  };

  hooks.refit = [x, y, n, q1, which](const VectorXd& w) {
    VectorXd theta(q1 + 1);
    if (which == GaussRegScheme::response) {
      const VectorXd ys = y + w;
      Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
      theta.head(q1) = qr.solve(ys);
      theta[q1] = (ys - x * theta.head(q1)).squaredNorm() / n;
      return theta;
    }
    VectorXd weights =
        which == GaussRegScheme::ls_variance ? VectorXd(w.array().square()) : w;
    MatrixXd a = x.transpose() * weights.asDiagonal() * x;
    VectorXd b = x.transpose() * (weights.asDiagonal() * y);
    Eigen::LDLT<MatrixXd> ldlt(a);
    theta.head(q1) = ldlt.solve(b);
    const VectorXd e = y - x * theta.head(q1);
    theta[q1] = (weights.array() * e.array().square()).sum() / n;
    return theta;
  };
  return hooks;
}

}  // namespace

// ---------------------------------------------------------------------------
// Case-weight perturbation
// ---------------------------------------------------------------------------

PerturbedModel case_weight_scheme(const ModelFit& fit) {
  if (fit.kind == ModelKind::linear_mixed)
    fail(ErrorKind::incompatible_config, "case-weight perturbation needs independent observations");
  require_singleton_clusters(fit, "case_weight");
  const int n = fit.data.n();

  std::vector<CaseWeightComponent> comps;
  comps.reserve(static_cast<std::size_t>(n));
  bool gaussian_like = false;
  if (fit.family == Family::gaussian) {
    gaussian_like = true;
    const MatrixXd x = fit.data.stacked_x();
    for (int i = 0; i < n; ++i) {
      const double mu = fit.kind == ModelKind::iid_parametric ? fit.beta[0]
                                                              : x.row(i).dot(fit.beta);
      comps.push_back(gaussian_case_weight_component(mu, fit.sigma2));
    }
  } else if (fit.family == Family::exponential) {
    for (int i = 0; i < n; ++i) comps.push_back(exponential_case_weight_component(fit.rate));
  } else if (fit.family == Family::logistic) {
    const MatrixXd x = fit.data.stacked_x();
    for (int i = 0; i < n; ++i)
      comps.push_back(logistic_case_weight_component(x.row(i).dot(fit.beta), fit.sigma()));
  } else {
    fail(ErrorKind::unsupported_family, "case-weight normalizers: gaussian, exponential, logistic");
  }

  PerturbedModel model =
      case_weight_from_components(std::move(comps), cluster_labels(fit.data), "case_weight");
  if (gaussian_like && fit.kind != ModelKind::iid_parametric) {
    GaussianLdHooks hooks = gaussian_ld_hooks(fit, GaussRegScheme::case_weight);
    model.loglik_theta = hooks.loglik_theta;
    model.delta = hooks.delta;
    model.refit = hooks.refit;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Location-scale family, three schemes
// ---------------------------------------------------------------------------

PerturbedModel location_scale_schemes(const ModelFit& fit, LocationScaleScheme which) {
  if (fit.kind != ModelKind::location_scale)
    fail(ErrorKind::incompatible_config, "location-scale schemes need a location_scale fit");
  require_singleton_clusters(fit, "location_scale scheme");
  if (which == LocationScaleScheme::case_weight) return case_weight_scheme(fit);

  const int n = fit.data.n();
  const MatrixXd x = fit.data.stacked_x();
  const VectorXd y = fit.data.stacked_y();
  const VectorXd mu = x * fit.beta;
  const double sigma = fit.sigma();
  const double s2 = fit.sigma2;
  const Family family = fit.family;
  const LsMoments mom = ls_moments(family);

  auto log_p0 = [family](double e) {
    return family == Family::gaussian ? -0.5 * kLog2Pi - 0.5 * e * e
                                      : detail_models::logistic_log_p0(e);
  };
  auto draw_p0 = [family](DrawRng& rng) {
    return family == Family::gaussian ? rng.next_normal()
                                      : standardized_logistic_quantile(rng.next_unit());
  };

  PerturbedModel model;
  model.labels = cluster_labels(fit.data);

  if (which == LocationScaleScheme::variance) {
    model.p = n;
    model.omega0 = VectorXd::Ones(n);
    model.domain = Domain::all_positive(n);
    model.name = "ls_variance";
    model.loglik = [mu, sigma, n, log_p0](const VectorXd& w, const VectorXd& yy) {
      double ll = 0.0;
      for (int i = 0; i < n; ++i)
        ll += std::log(w[i]) - std::log(sigma) + log_p0(w[i] * (yy[i] - mu[i]) / sigma);
      return ll;
    };
    model.geometry = [n, mom](const VectorXd& w) {
      VectorXd g(n), t(n), c(n);
      for (int i = 0; i < n; ++i) {
        const double w3 = w[i] * w[i] * w[i];
        g[i] = mom.e2_var / (w[i] * w[i]);
        t[i] = mom.e3_var / w3;
        c[i] = -mom.e2_var / w3;  // Levi-Civita: 0.5 d/dw of g_ii
      }
      GeometryCore core;
      core.G = g.asDiagonal();
      core.T = Tensor3::diagonal(t);
      core.Gamma0 = Tensor3::diagonal(c);
      return core;
    };
    model.sampler = [mu, sigma, n, draw_p0](const VectorXd& w, DrawRng& rng) {
      VectorXd yy(n);
      for (int i = 0; i < n; ++i) yy[i] = mu[i] + sigma * draw_p0(rng) / w[i];
      return yy;
    };
    if (family == Family::gaussian) {
      GaussianLdHooks hooks = gaussian_ld_hooks(fit, GaussRegScheme::ls_variance);
      model.loglik_theta = hooks.loglik_theta;
      model.delta = hooks.delta;
      model.refit = hooks.refit;
    }
    return model;
  }

  // response perturbation: y_i + omega_i
  model.p = n;
  model.omega0 = VectorXd::Zero(n);
  model.domain = Domain::unconstrained(n);
  model.name = "ls_response";
  model.loglik = [mu, sigma, n, log_p0](const VectorXd& w, const VectorXd& yy) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) ll += -std::log(sigma) + log_p0((yy[i] + w[i] - mu[i]) / sigma);
    return ll;
  };
  // The printed skewness for this scheme reuses the variance-scheme
  // integrand; the definition-level expectation is E0[u^3] (zero for the
  // symmetric built-ins), and that is what an oracle reproduces.
  model.geometry = [n, mom, s2, sigma](const VectorXd&) {
    GeometryCore core;
    core.G = (mom.e2_score / s2) * MatrixXd::Identity(n, n);
    const double t3 = mom.e3_score / (s2 * sigma);
    core.T = t3 == 0.0 ? Tensor3::zero(n) : Tensor3::diagonal(VectorXd::Constant(n, t3));
    core.Gamma0 = Tensor3::zero(n);
    return core;
  };
  model.sampler = [mu, sigma, n, draw_p0](const VectorXd& w, DrawRng& rng) {
    VectorXd yy(n);
    for (int i = 0; i < n; ++i) yy[i] = mu[i] - w[i] + sigma * draw_p0(rng);
    return yy;
  };
  if (family == Family::gaussian) {
    GaussianLdHooks hooks = gaussian_ld_hooks(fit, GaussRegScheme::response);
    model.loglik_theta = hooks.loglik_theta;
    model.delta = hooks.delta;
    model.refit = hooks.refit;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Linear regression: error-variance perturbations
// ---------------------------------------------------------------------------

PerturbedModel regression_variance_scheme(const ModelFit& fit) {
  if (fit.kind != ModelKind::linear_regression && fit.kind != ModelKind::location_scale)
    fail(ErrorKind::incompatible_config, "error-variance scheme needs a regression fit");
  if (fit.family != Family::gaussian)
    fail(ErrorKind::unsupported_family, "error-variance scheme assumes gaussian errors");
  require_singleton_clusters(fit, "reg_variance");

  const int n = fit.data.n();
  const MatrixXd x = fit.data.stacked_x();
  const VectorXd mu = x * fit.beta;
  const double s2 = fit.sigma2;
  const double sigma = fit.sigma();

  PerturbedModel model;
  model.p = n;
  model.omega0 = VectorXd::Ones(n);
  model.domain = Domain::all_positive(n);
  model.name = "reg_variance";
  model.labels = cluster_labels(fit.data);
  model.loglik = [mu, s2, n](const VectorXd& w, const VectorXd& yy) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = yy[i] - mu[i];
      ll += 0.5 * std::log(w[i]) - 0.5 * (kLog2Pi + std::log(s2)) - w[i] * e * e / (2.0 * s2);
    }
    return ll;
  };
  model.geometry = [n](const VectorXd& w) {
    VectorXd g(n), t(n);
    for (int i = 0; i < n; ++i) {
      g[i] = 0.5 / (w[i] * w[i]);
      t[i] = -1.0 / (w[i] * w[i] * w[i]);
    }
    GeometryCore core;
    core.G = g.asDiagonal();
    core.T = Tensor3::diagonal(t);
    core.Gamma0 = Tensor3::diagonal(0.5 * t);
    return core;
  };
  model.sampler = [mu, sigma, n](const VectorXd& w, DrawRng& rng) {
    VectorXd yy(n);
    for (int i = 0; i < n; ++i) yy[i] = mu[i] + sigma * rng.next_normal() / std::sqrt(w[i]);
    return yy;
  };
  GaussianLdHooks hooks = gaussian_ld_hooks(fit, GaussRegScheme::variance_inv_omega);
  model.loglik_theta = hooks.loglik_theta;
  model.delta = hooks.delta;
  model.refit = hooks.refit;
  return model;
}

PerturbedModel regression_variance_scheme_k0(const ModelFit& fit, double k0) {
  if (k0 <= 0.0) fail(ErrorKind::incompatible_config, "k0 must be positive");
  PerturbedModel base = regression_variance_scheme(fit);
  const int n = base.p;

  // phi -> omega: omega_1 = (k0 - 1 + phi_1)/k0, other coordinates identity.
  auto to_omega = [k0, n](const VectorXd& phi) {
    VectorXd w = phi;
    w[0] = (k0 - 1.0 + phi[0]) / k0;
    return w;
  };

  PerturbedModel model;
  model.p = n;
  model.omega0 = VectorXd::Ones(n);
  model.domain = Domain::all_positive(n);
  model.domain.box[0] = Interval{1.0 - k0, kInf};
  model.name = "reg_variance_k0";
  model.labels = base.labels;
  const LogLik base_ll = base.loglik;
  model.loglik = [base_ll, to_omega](const VectorXd& phi, const VectorXd& yy) {
    return base_ll(to_omega(phi), yy);
  };
  model.geometry = [n, k0](const VectorXd& phi) {
    VectorXd g(n), t(n);
    for (int i = 0; i < n; ++i) {
      const double u = i == 0 ? k0 - 1.0 + phi[0] : phi[i];
      g[i] = 0.5 / (u * u);
      t[i] = -1.0 / (u * u * u);
    }
    GeometryCore core;
    core.G = g.asDiagonal();
    core.T = Tensor3::diagonal(t);
    core.Gamma0 = Tensor3::diagonal(0.5 * t);
    return core;
  };
  const Sampler base_sampler = *base.sampler;
  model.sampler = [base_sampler, to_omega](const VectorXd& phi, DrawRng& rng) {
    VectorXd w = to_omega(phi);
    return base_sampler(w, rng);
  };
  const ThetaLogLik base_lt = *base.loglik_theta;
  model.loglik_theta = [base_lt, to_omega](const VectorXd& theta, const VectorXd& phi) {
    return base_lt(theta, to_omega(phi));
  };
  MatrixXd delta = *base.delta;
  delta.col(0) /= k0;
  model.delta = delta;
  const Refit base_refit = *base.refit;
  model.refit = [base_refit, to_omega](const VectorXd& phi) { return base_refit(to_omega(phi)); };
  return model;
}

// ---------------------------------------------------------------------------
// Explanatory-vector perturbations
// ---------------------------------------------------------------------------

PerturbedModel explanatory_scheme(const ModelFit& fit, ExplanatoryScheme which,
                                  const VectorXd& scale) {
  if (fit.kind != ModelKind::linear_regression)
    fail(ErrorKind::incompatible_config, "explanatory schemes need a linear regression fit");
  require_singleton_clusters(fit, "explanatory scheme");
  const int q1 = fit.q1();
  if (scale.size() != q1) fail(ErrorKind::dimension_mismatch, "scale vector must have length q1");
  for (int k = 0; k < q1; ++k)
    if (scale[k] == 0.0) fail(ErrorKind::incompatible_config, "scale entries must be nonzero");

  const int n = fit.data.n();
  const MatrixXd x = fit.data.stacked_x();
  const VectorXd y = fit.data.stacked_y();
  const VectorXd mu = x * fit.beta;
  const double s2 = fit.sigma2;
  const double sigma = fit.sigma();
  const VectorXd sb = scale.asDiagonal() * fit.beta;  // (s_k beta_k)

  if (which == ExplanatoryScheme::diagonal) {
    const double drift = sb.sum();  // sum_k s_k beta_k
    if (std::abs(drift) <= 1e-10 * (1.0 + scale.norm() * fit.beta.norm()))
      fail(ErrorKind::zero_direction, "sum s_k beta_k = 0 makes the metric identically zero");
    PerturbedModel model;
    model.p = n;
    model.omega0 = VectorXd::Zero(n);
    model.domain = Domain::unconstrained(n);
    model.name = "explanatory_diag";
    model.labels = cluster_labels(fit.data);
    model.loglik = [mu, s2, drift, n](const VectorXd& w, const VectorXd& yy) {
      double ll = 0.0;
      for (int i = 0; i < n; ++i) {
        const double e = yy[i] - mu[i] - w[i] * drift;
        ll += -0.5 * (kLog2Pi + std::log(s2)) - e * e / (2.0 * s2);
      }
      return ll;
    };
    model.geometry = [n, drift, s2](const VectorXd&) {
      GeometryCore core;
      core.G = (drift * drift / s2) * MatrixXd::Identity(n, n);
      core.T = Tensor3::zero(n);
      core.Gamma0 = Tensor3::zero(n);
      return core;
    };
    model.sampler = [mu, sigma, drift, n](const VectorXd& w, DrawRng& rng) {
      VectorXd yy(n);
      for (int i = 0; i < n; ++i) yy[i] = mu[i] + w[i] * drift + sigma * rng.next_normal();
      return yy;
    };
    // LD hooks: the perturbed design row is x_i + w_i s.
    const int q = q1 + 1;
    MatrixXd delta(q, n);
    VectorXd r(n);
    for (int i = 0; i < n; ++i) r[i] = y[i] - mu[i];
    for (int i = 0; i < n; ++i) {
      delta.col(i).head(q1) = (scale * r[i] - drift * x.row(i).transpose()) / s2;
      delta(q1, i) = -r[i] * drift / (s2 * s2);
    }
    model.delta = delta;
    model.loglik_theta = [x, y, scale, n, q1](const VectorXd& theta, const VectorXd& w) {
      const VectorXd beta = theta.head(q1);
      const double sig2 = theta[q1];
      if (sig2 <= 0.0) return -kInf;
      const double db = scale.dot(beta);
      double ll = 0.0;
      for (int i = 0; i < n; ++i) {
        const double e = y[i] - x.row(i).dot(beta) - w[i] * db;
        ll += -0.5 * (kLog2Pi + std::log(sig2)) - e * e / (2.0 * sig2);
      }
      return ll;
    };
    model.refit = [x, y, scale, n, q1](const VectorXd& w) {
      MatrixXd xw = x + w * scale.transpose();
      Eigen::ColPivHouseholderQR<MatrixXd> qr(xw);
      VectorXd beta = qr.solve(y);
      VectorXd theta(q1 + 1);
      theta.head(q1) = beta;
      theta[q1] = (y - xw * beta).squaredNorm() / n;
      return theta;
    };
    return model;
  }

  // full matrix: p = n*q1, coordinate (i,k) stored at k*n + i so that
  // G = (S beta beta' S) (x) I_n / sigma^2.
  PerturbedModel model;
  model.p = n * q1;
  model.omega0 = VectorXd::Zero(n * q1);
  model.domain = Domain::unconstrained(n * q1);
  model.name = "explanatory_full";
  model.labels.reserve(static_cast<std::size_t>(n) * q1);
  for (int k = 0; k < q1; ++k)
    for (int i = 0; i < n; ++i)
      model.labels.push_back(IndexLabel{fit.data.clusters[static_cast<std::size_t>(i)].id, k});
  model.loglik = [mu, s2, sb, n, q1](const VectorXd& w, const VectorXd& yy) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      double shift = 0.0;
      for (int k = 0; k < q1; ++k) shift += w[k * n + i] * sb[k];
      const double e = yy[i] - mu[i] - shift;
      ll += -0.5 * (kLog2Pi + std::log(s2)) - e * e / (2.0 * s2);
    }
    return ll;
  };
  model.geometry = [n, q1, sb, s2](const VectorXd&) {
    GeometryCore core;
    MatrixXd outer = sb * sb.transpose() / s2;
    core.G = MatrixXd::Zero(n * q1, n * q1);
    for (int k = 0; k < q1; ++k)
      for (int l = 0; l < q1; ++l)
        for (int i = 0; i < n; ++i) core.G(k * n + i, l * n + i) = outer(k, l);
    core.T = Tensor3::zero(n * q1);
    core.Gamma0 = Tensor3::zero(n * q1);
    return core;
  };
  model.sampler = [mu, sigma, sb, n, q1](const VectorXd& w, DrawRng& rng) {
    VectorXd yy(n);
    for (int i = 0; i < n; ++i) {
      double shift = 0.0;
      for (int k = 0; k < q1; ++k) shift += w[k * n + i] * sb[k];
      yy[i] = mu[i] + shift + sigma * rng.next_normal();
    }
    return yy;
  };
  return model;
}

// ---------------------------------------------------------------------------
// Log-linear expansion perturbation
// ---------------------------------------------------------------------------

namespace {

struct Density1d {
  std::function<double(double)> pdf;
  double lo, hi;
};

Density1d fitted_density(const ModelFit& fit) {
  if (fit.kind != ModelKind::iid_parametric)
    fail(ErrorKind::incompatible_config, "log-linear expansion needs an iid parametric fit");
  if (fit.family == Family::gaussian) {
    const double mu = fit.beta[0], s2 = fit.sigma2;
    return Density1d{[mu, s2](double yy) {
                       return std::exp(-0.5 * (kLog2Pi + std::log(s2)) -
                                       (yy - mu) * (yy - mu) / (2.0 * s2));
                     },
                     -kInf, kInf};
  }
  if (fit.family == Family::exponential) {
    const double rate = fit.rate;
    return Density1d{[rate](double yy) { return yy > 0.0 ? rate * std::exp(-rate * yy) : 0.0; },
                     0.0, kInf};
  }
  fail(ErrorKind::unsupported_family, "log-linear expansion: gaussian or exponential base");
}

}  // namespace

std::vector<std::function<double(double)>> gaussian_hermite_basis(const ModelFit& fit, int m) {
  if (fit.family != Family::gaussian)
    fail(ErrorKind::unsupported_family, "hermite basis is for gaussian fits");
  if (m < 1 || m > 4) fail(ErrorKind::incompatible_config, "hermite basis supports m in 1..4");
  const double mu = fit.beta[0];
  const double s = fit.sigma();
  std::vector<std::function<double(double)>> psi;
  auto z = [mu, s](double yy) { return (yy - mu) / s; };
  psi.push_back([z](double yy) { return z(yy); });
  if (m >= 2) psi.push_back([z](double yy) { const double t = z(yy); return t * t - 1.0; });
  if (m >= 3) psi.push_back([z](double yy) { const double t = z(yy); return t * t * t - 3.0 * t; });
  if (m >= 4)
    psi.push_back([z](double yy) {
      const double t = z(yy);
      return t * t * t * t - 6.0 * t * t + 3.0;
    });
  psi.resize(static_cast<std::size_t>(m));
  return psi;
}

LogLinearSchemes loglinear_scheme(const ModelFit& fit,
                                  const std::vector<std::function<double(double)>>& psi,
                                  std::vector<Interval> domain_box) {
  const Density1d p0 = fitted_density(fit);
  const int m = static_cast<int>(psi.size());
  if (m < 1) fail(ErrorKind::incompatible_config, "need at least one basis function");
  const int nobs = fit.data.total_obs();

  // Orthogonality of the basis under p0, checked numerically.
  VectorXd first(m);
  MatrixXd second(m, m);
  for (int j = 0; j < m; ++j) {
    first[j] = integrate_or_fail([&](double yy) { return psi[static_cast<std::size_t>(j)](yy) * p0.pdf(yy); },
                                 p0.lo, p0.hi, 1e-12);
    for (int k = j; k < m; ++k) {
      second(j, k) = second(k, j) = integrate_or_fail(
          [&](double yy) {
            return psi[static_cast<std::size_t>(j)](yy) * psi[static_cast<std::size_t>(k)](yy) * p0.pdf(yy);
          },
          p0.lo, p0.hi, 1e-12);
    }
  }
  for (int j = 0; j < m; ++j) {
    if (second(j, j) <= 0.0)
      fail(ErrorKind::orthogonality_violation, "E0[psi_j^2] must be positive");
    const double scale = std::sqrt(second(j, j));
    if (std::abs(first[j]) > 1e-6 * std::max(1.0, scale))
      fail(ErrorKind::orthogonality_violation,
           "psi_" + std::to_string(j + 1) + " is not centered under p0");
    for (int k = j + 1; k < m; ++k)
      if (std::abs(second(j, k)) > 1e-6 * std::sqrt(second(j, j) * second(k, k)))
        fail(ErrorKind::orthogonality_violation,
             "psi_" + std::to_string(j + 1) + " and psi_" + std::to_string(k + 1) +
                 " are not orthogonal under p0");
  }

  // Gaussian fits with basis functions of degree <= 2 keep the tilted density
  // gaussian, which gives a closed normalizer and an exact sampler.
  const bool gaussian_quadratic =
      fit.family == Family::gaussian && m <= 2;
  const double mu0 = fit.kind == ModelKind::iid_parametric && fit.family == Family::gaussian
                         ? fit.beta[0]
                         : 0.0;
  const double sig0 = fit.family == Family::gaussian ? fit.sigma() : 1.0;

  if (domain_box.empty()) {
    domain_box.assign(static_cast<std::size_t>(m), Interval{-0.25, 0.25});
    if (gaussian_quadratic) {
      domain_box[0] = whole_line();
      if (m == 2) domain_box[1] = Interval{-kInf, 0.499};
    }
  }

  auto log_c = std::make_shared<std::function<double(const VectorXd&)>>();
  if (gaussian_quadratic) {
    *log_c = [](const VectorXd& w) {
      // E[exp(a z + b (z^2-1))] for standard normal z
      const double a = w[0];
      const double b = w.size() > 1 ? w[1] : 0.0;
      const double den = 1.0 - 2.0 * b;
      return -b - 0.5 * std::log(den) + a * a / (2.0 * den);
    };
  } else {
    auto psi_copy = psi;
    const Density1d p0c = p0;
    *log_c = [psi_copy, p0c](const VectorXd& w) {
      auto tilt = [&](double yy) {
        double ex = 0.0;
        for (int j = 0; j < w.size(); ++j) ex += w[j] * psi_copy[static_cast<std::size_t>(j)](yy);
        return p0c.pdf(yy) * std::exp(ex);
      };
      return std::log(integrate_or_fail(tilt, p0c.lo, p0c.hi, 1e-11));
    };
  }

  LogLinearSchemes out;
  PerturbedModel& raw = out.raw;
  raw.p = m;
  raw.omega0 = VectorXd::Zero(m);
  raw.domain.box = std::move(domain_box);
  raw.name = "loglinear";
  raw.labels.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) raw.labels.push_back(IndexLabel{"psi" + std::to_string(j + 1), -1});

  {
    auto psi_copy = psi;
    const Density1d p0c = p0;
    raw.loglik = [psi_copy, p0c, log_c, nobs](const VectorXd& w, const VectorXd& yy) {
      double ll = -nobs * (*log_c)(w);
      for (int i = 0; i < yy.size(); ++i) {
        ll += std::log(p0c.pdf(yy[i]));
        for (int j = 0; j < w.size(); ++j) ll += w[j] * psi_copy[static_cast<std::size_t>(j)](yy[i]);
      }
      return ll;
    };
  }
  {
    auto psi_copy = psi;
    const Density1d p0c = p0;
    raw.geometry = [psi_copy, p0c, nobs, m](const VectorXd& w) {
      auto tilt = [&](double yy) {
        double ex = 0.0;
        for (int j = 0; j < m; ++j) ex += w[j] * psi_copy[static_cast<std::size_t>(j)](yy);
        return p0c.pdf(yy) * std::exp(ex);
      };
      const double z = integrate_or_fail(tilt, p0c.lo, p0c.hi, 1e-11);
      VectorXd mean(m);
      for (int j = 0; j < m; ++j)
        mean[j] = integrate_or_fail(
                      [&](double yy) { return psi_copy[static_cast<std::size_t>(j)](yy) * tilt(yy); },
                      p0c.lo, p0c.hi, 1e-11) /
                  z;
      MatrixXd cov(m, m);
      for (int j = 0; j < m; ++j)
        for (int k = j; k < m; ++k) {
          const double v =
              integrate_or_fail(
                  [&](double yy) {
                    return (psi_copy[static_cast<std::size_t>(j)](yy) - mean[j]) *
                           (psi_copy[static_cast<std::size_t>(k)](yy) - mean[k]) * tilt(yy);
                  },
                  p0c.lo, p0c.hi, 1e-11) /
              z;
          cov(j, k) = cov(k, j) = v;
        }
      Tensor3 t3 = Tensor3::dense_zero(m);
      for (int j = 0; j < m; ++j)
        for (int k = j; k < m; ++k)
          for (int l = k; l < m; ++l) {
            const double v =
                integrate_or_fail(
                    [&](double yy) {
                      return (psi_copy[static_cast<std::size_t>(j)](yy) - mean[j]) *
                             (psi_copy[static_cast<std::size_t>(k)](yy) - mean[k]) *
                             (psi_copy[static_cast<std::size_t>(l)](yy) - mean[l]) * tilt(yy);
                    },
                    p0c.lo, p0c.hi, 1e-11) /
                z;
            const int idx[3] = {j, k, l};
            int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
            for (auto& pm : perms)
              t3.dense_at(idx[pm[0]], idx[pm[1]], idx[pm[2]]) = nobs * v;
          }
      GeometryCore core;
      core.G = nobs * cov;
      core.T = t3;
      core.Gamma0 = t3.scaled(0.5);
      return core;
    };
  }
  if (gaussian_quadratic) {
    raw.sampler = [mu0, sig0, nobs, m](const VectorXd& w, DrawRng& rng) {
      const double b = m > 1 ? w[1] : 0.0;
      const double var = 1.0 / (1.0 - 2.0 * b);
      const double mean = w[0] * var;
      VectorXd yy(nobs);
      for (int i = 0; i < nobs; ++i)
        yy[i] = mu0 + sig0 * (mean + std::sqrt(var) * rng.next_normal());
      return yy;
    };
  }

  // Moments and observed basis means.
  out.e0_psi_sq = second.diagonal();
  out.psi_bar = VectorXd::Zero(m);
  const VectorXd yobs = fit.data.stacked_y();
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < nobs; ++i) out.psi_bar[j] += psi[static_cast<std::size_t>(j)](yobs[i]);
    out.psi_bar[j] /= static_cast<double>(nobs);
  }

  // Standardized scheme and the likelihood-ratio probes.
  GeometryAtPoint geom0 = geometry_at(raw, raw.omega0, 0.0);
  out.standardized = rescale_perturbation(raw, geom0, 1.0);
  out.standardized.name = "loglinear_standardized";

  const VectorXd grad_raw = static_cast<double>(nobs) * out.psi_bar;
  const MatrixXd hess_raw = -geom0.G;
  out.raw_lr_probe = ObjectiveProbe::make(0.0, grad_raw, hess_raw, ProbeProvenance::closed_form);
  const MatrixXd j = sym_inv_sqrt(symmetrize(geom0.G), pd_floor(geom0.G));
  out.standardized_lr_probe = ObjectiveProbe::make(0.0, j.transpose() * grad_raw,
                                                   j.transpose() * hess_raw * j,
                                                   ProbeProvenance::closed_form);
  return out;
}

// ---------------------------------------------------------------------------
// Linear mixed model schemes
// ---------------------------------------------------------------------------

namespace {

struct LmmContext {
  std::vector<MatrixXd> sigma;          // Sigma_i at the fitted xi
  std::vector<Eigen::LLT<MatrixXd>> chol;
  std::vector<MatrixXd> chol_l;         // lower factors for sampling
  std::vector<VectorXd> resid;          // e_i
  std::vector<double> logdet;
  std::vector<std::vector<MatrixXd>> dsigma;  // derivatives at fitted xi
};

LmmContext lmm_context(const ModelFit& fit) {
  if (fit.kind != ModelKind::linear_mixed)
    fail(ErrorKind::incompatible_config, "scheme needs a linear_mixed fit");
  LmmContext ctx;
  for (std::size_t i = 0; i < fit.data.clusters.size(); ++i) {
    const auto& c = fit.data.clusters[i];
    MatrixXd s = fit.cov.build(fit.xi, c);
    Eigen::LLT<MatrixXd> ch(s);
    if (ch.info() != Eigen::Success)
      fail(ErrorKind::non_convergence, "fitted Sigma_i is not positive definite");
    double ld = 0.0;
    for (int j = 0; j < c.m(); ++j) ld += std::log(ch.matrixL()(j, j));
    ctx.sigma.push_back(std::move(s));
    ctx.chol_l.push_back(ch.matrixL());
    ctx.chol.push_back(std::move(ch));
    ctx.resid.push_back(fit.residuals[i]);
    ctx.logdet.push_back(ld);
    ctx.dsigma.push_back(fit.cov.derivs(fit.xi, c));
  }
  return ctx;
}

/// theta-and-omega log-likelihood shared by the three LMM schemes. mode 0:
/// covariance weight omega_i; mode 1: cluster shift omega_i * 1; mode 2:
/// per-observation shift.
ThetaLogLik lmm_loglik_theta(const ModelFit& fit, int mode) {
  const ModelFit f = fit;
  return [f, mode](const VectorXd& theta, const VectorXd& w) {
    const int q1 = f.q1();
    const VectorXd beta = theta.head(q1);
    const VectorXd xi = theta.tail(theta.size() - q1);
    double ll = 0.0;
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      Eigen::LLT<MatrixXd> chol(f.cov.build(xi, c));
      if (chol.info() != Eigen::Success) return -kInf;
      VectorXd e = c.y - c.x * beta;
      double weight = 1.0;
      if (mode == 0) {
        weight = w[static_cast<int>(i)];
        if (weight <= 0.0) return -kInf;
      } else if (mode == 1) {
        e.array() += w[static_cast<int>(i)];
      } else {
        e += w.segment(at, c.m());
        at += c.m();
      }
      double logdet = 0.0;
      for (int j = 0; j < c.m(); ++j) logdet += std::log(chol.matrixL()(j, j));
      ll += -0.5 * c.m() * kLog2Pi - logdet + (mode == 0 ? 0.5 * c.m() * std::log(weight) : 0.0) -
            0.5 * weight * e.dot(chol.solve(e));
    }
    return ll;
  };
}

}  // namespace

LmmSchemes lmm_covariance_scheme(const ModelFit& fit) {
  auto ctx = std::make_shared<LmmContext>(lmm_context(fit));
  const int n = fit.data.n();
  const int q1 = fit.q1(), q2 = fit.q2();

  PerturbedModel raw;
  raw.p = n;
  raw.omega0 = VectorXd::Ones(n);
  raw.domain = Domain::all_positive(n);
  raw.name = "lmm_cov";
  raw.labels = cluster_labels(fit.data);

  const ModelFit f = fit;
  raw.loglik = [f, ctx](const VectorXd& w, const VectorXd& yy) {
    double ll = 0.0;
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      const VectorXd e = yy.segment(at, c.m()) - c.x * f.beta;
      at += c.m();
      ll += -0.5 * c.m() * kLog2Pi - ctx->logdet[i] + 0.5 * c.m() * std::log(w[static_cast<int>(i)]) -
            0.5 * w[static_cast<int>(i)] * e.dot(ctx->chol[i].solve(e));
    }
    return ll;
  };
  {
    VectorXd ms(n);
    for (int i = 0; i < n; ++i) ms[i] = static_cast<double>(f.data.clusters[static_cast<std::size_t>(i)].m());
    raw.geometry = [ms, n](const VectorXd& w) {
      VectorXd g(n), t(n);
      for (int i = 0; i < n; ++i) {
        g[i] = 0.5 * ms[i] / (w[i] * w[i]);
        t[i] = -ms[i] / (w[i] * w[i] * w[i]);
      }
      GeometryCore core;
      core.G = g.asDiagonal();
      core.T = Tensor3::diagonal(t);
      core.Gamma0 = Tensor3::diagonal(0.5 * t);
      return core;
    };
  }
  raw.sampler = [f, ctx](const VectorXd& w, DrawRng& rng) {
    VectorXd yy(f.data.total_obs());
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      VectorXd z(c.m());
      for (int j = 0; j < c.m(); ++j) z[j] = rng.next_normal();
      yy.segment(at, c.m()) =
          c.x * f.beta + ctx->chol_l[i] * z / std::sqrt(w[static_cast<int>(i)]);
      at += c.m();
    }
    return yy;
  };
  raw.loglik_theta = lmm_loglik_theta(fit, 0);
  {
    MatrixXd delta(q1 + q2, n);
    for (int i = 0; i < n; ++i) {
      const auto& c = fit.data.clusters[static_cast<std::size_t>(i)];
      const VectorXd se = ctx->chol[static_cast<std::size_t>(i)].solve(ctx->resid[static_cast<std::size_t>(i)]);
      delta.col(i).head(q1) = c.x.transpose() * se;
      for (int a = 0; a < q2; ++a)
        delta(q1 + a, i) = 0.5 * se.dot(ctx->dsigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] * se);
    }
    raw.delta = delta;
  }
  {
    auto refit = detail_models::make_lmm_refit(fit);
    raw.refit = [refit](const VectorXd& w) { return refit(nullptr, &w); };
  }

  LmmSchemes out;
  out.appropriate = rescale_perturbation(raw, geometry_at(raw, raw.omega0, 0.0), 1.0);
  out.appropriate.name = "lmm_cov_appropriate";
  out.delta = *out.appropriate.delta;
  out.raw = std::move(raw);
  return out;
}

LmmSchemes lmm_cluster_shift_scheme(const ModelFit& fit) {
  auto ctx = std::make_shared<LmmContext>(lmm_context(fit));
  const int n = fit.data.n();
  const int q1 = fit.q1(), q2 = fit.q2();

  PerturbedModel raw;
  raw.p = n;
  raw.omega0 = VectorXd::Zero(n);
  raw.domain = Domain::unconstrained(n);
  raw.name = "lmm_cluster_shift";
  raw.labels = cluster_labels(fit.data);

  const ModelFit f = fit;
  raw.loglik = [f, ctx](const VectorXd& w, const VectorXd& yy) {
    double ll = 0.0;
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      VectorXd e = yy.segment(at, c.m()) - c.x * f.beta;
      e.array() += w[static_cast<int>(i)];
      at += c.m();
      ll += -0.5 * c.m() * kLog2Pi - ctx->logdet[i] - 0.5 * e.dot(ctx->chol[i].solve(e));
    }
    return ll;
  };
  {
    VectorXd quad(n);
    for (int i = 0; i < n; ++i) {
      const auto& c = fit.data.clusters[static_cast<std::size_t>(i)];
      quad[i] = VectorXd::Ones(c.m()).dot(ctx->chol[static_cast<std::size_t>(i)].solve(VectorXd::Ones(c.m())));
    }
    raw.geometry = [quad, n](const VectorXd&) {
      GeometryCore core;
      core.G = quad.asDiagonal();
      core.T = Tensor3::zero(n);
      core.Gamma0 = Tensor3::zero(n);
      return core;
    };
  }
  raw.sampler = [f, ctx](const VectorXd& w, DrawRng& rng) {
    VectorXd yy(f.data.total_obs());
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      VectorXd z(c.m());
      for (int j = 0; j < c.m(); ++j) z[j] = rng.next_normal();
      yy.segment(at, c.m()) = c.x * f.beta + ctx->chol_l[i] * z;
      yy.segment(at, c.m()).array() -= w[static_cast<int>(i)];
      at += c.m();
    }
    return yy;
  };
  raw.loglik_theta = lmm_loglik_theta(fit, 1);
  {
    MatrixXd delta(q1 + q2, n);
    for (int i = 0; i < n; ++i) {
      const auto& c = fit.data.clusters[static_cast<std::size_t>(i)];
      const VectorXd ones = VectorXd::Ones(c.m());
      const VectorXd s1 = ctx->chol[static_cast<std::size_t>(i)].solve(ones);
      const VectorXd se = ctx->chol[static_cast<std::size_t>(i)].solve(ctx->resid[static_cast<std::size_t>(i)]);
      delta.col(i).head(q1) = c.x.transpose() * s1;
      for (int a = 0; a < q2; ++a)
        delta(q1 + a, i) = s1.dot(ctx->dsigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] * se);
    }
    raw.delta = delta;
  }
  {
    auto refit = detail_models::make_lmm_refit(fit);
    const ModelFit fc = fit;
    raw.refit = [refit, fc](const VectorXd& w) {
      std::vector<VectorXd> shifts;
      for (std::size_t i = 0; i < fc.data.clusters.size(); ++i)
        shifts.push_back(VectorXd::Constant(fc.data.clusters[i].m(), w[static_cast<int>(i)]));
      return refit(&shifts, nullptr);
    };
  }

  LmmSchemes out;
  out.appropriate = rescale_perturbation(raw, geometry_at(raw, raw.omega0, 0.0), 1.0);
  out.appropriate.name = "lmm_cluster_shift_appropriate";
  out.delta = *out.appropriate.delta;
  out.raw = std::move(raw);
  return out;
}

LmmSchemes lmm_mean_shift_scheme(const ModelFit& fit) {
  auto ctx = std::make_shared<LmmContext>(lmm_context(fit));
  const int n = fit.data.n();
  const int q1 = fit.q1(), q2 = fit.q2();
  const int mtot = fit.data.total_obs();

  PerturbedModel raw;
  raw.p = mtot;
  raw.omega0 = VectorXd::Zero(mtot);
  raw.domain = Domain::unconstrained(mtot);
  raw.name = "lmm_mean_shift";
  raw.labels = observation_labels(fit.data);

  const ModelFit f = fit;
  raw.loglik = [f, ctx](const VectorXd& w, const VectorXd& yy) {
    double ll = 0.0;
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      VectorXd e = yy.segment(at, c.m()) - c.x * f.beta + w.segment(at, c.m());
      at += c.m();
      ll += -0.5 * c.m() * kLog2Pi - ctx->logdet[i] - 0.5 * e.dot(ctx->chol[i].solve(e));
    }
    return ll;
  };
  raw.geometry = [f, ctx, mtot](const VectorXd&) {
    GeometryCore core;
    core.G = MatrixXd::Zero(mtot, mtot);
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const int m = f.data.clusters[i].m();
      core.G.block(at, at, m, m) = ctx->chol[i].solve(MatrixXd::Identity(m, m));
      at += m;
    }
    core.T = Tensor3::zero(mtot);
    core.Gamma0 = Tensor3::zero(mtot);
    return core;
  };
  raw.sampler = [f, ctx](const VectorXd& w, DrawRng& rng) {
    VectorXd yy(f.data.total_obs());
    int at = 0;
    for (std::size_t i = 0; i < f.data.clusters.size(); ++i) {
      const auto& c = f.data.clusters[i];
      VectorXd z(c.m());
      for (int j = 0; j < c.m(); ++j) z[j] = rng.next_normal();
      yy.segment(at, c.m()) = c.x * f.beta + ctx->chol_l[i] * z - w.segment(at, c.m());
      at += c.m();
    }
    return yy;
  };
  raw.loglik_theta = lmm_loglik_theta(fit, 2);
  {
    MatrixXd delta(q1 + q2, mtot);
    int at = 0;
    for (std::size_t i = 0; i < fit.data.clusters.size(); ++i) {
      const auto& c = fit.data.clusters[i];
      const int m = c.m();
      const MatrixXd sx = ctx->chol[i].solve(c.x);  // Sigma^{-1} x_i
      delta.block(0, at, q1, m) = sx.transpose();
      const VectorXd se = ctx->chol[i].solve(ctx->resid[i]);
      for (int a = 0; a < q2; ++a)
        delta.block(q1 + a, at, 1, m) =
            ctx->chol[i].solve(ctx->dsigma[i][static_cast<std::size_t>(a)] * se).transpose();
      at += m;
    }
    raw.delta = delta;
  }
  {
    auto refit = detail_models::make_lmm_refit(fit);
    const ModelFit fc = fit;
    raw.refit = [refit, fc](const VectorXd& w) {
      std::vector<VectorXd> shifts;
      int at = 0;
      for (std::size_t i = 0; i < fc.data.clusters.size(); ++i) {
        shifts.push_back(w.segment(at, fc.data.clusters[i].m()));
        at += fc.data.clusters[i].m();
      }
      return refit(&shifts, nullptr);
    };
  }

  LmmSchemes out;
  out.appropriate = rescale_perturbation(raw, geometry_at(raw, raw.omega0, 0.0), 1.0);
  out.appropriate.name = "lmm_mean_shift_appropriate";
  out.delta = *out.appropriate.delta;
  out.raw = std::move(raw);
  return out;
}

// ---------------------------------------------------------------------------
// Objective probes
// ---------------------------------------------------------------------------

ObjectiveProbe rss_probe(const ModelFit& fit) {
  if (fit.kind != ModelKind::linear_regression && fit.kind != ModelKind::location_scale)
    fail(ErrorKind::incompatible_config, "-RSS probe needs a regression fit");
  require_singleton_clusters(fit, "rss_probe");
  const MatrixXd x = fit.data.stacked_x();
  const int n = static_cast<int>(x.rows());
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) fail(ErrorKind::rank_deficient_design, "design not full rank");
  const MatrixXd px = x * qr.solve(MatrixXd::Identity(n, n));  // X (X'X)^{-1} X'
  VectorXd r(n);
  int at = 0;
  for (const auto& e : fit.residuals) {
    r.segment(at, e.size()) = e;
    at += static_cast<int>(e.size());
  }
  const VectorXd grad = -r.array().square();
  const MatrixXd hess = 2.0 * r.asDiagonal() * px * r.asDiagonal();
  return ObjectiveProbe::make(-r.squaredNorm(), grad, hess, ProbeProvenance::closed_form);
}

std::function<double(const VectorXd&)> neg_rss_function(const ModelFit& fit) {
  const MatrixXd x = fit.data.stacked_x();
  const VectorXd y = fit.data.stacked_y();
  return [x, y](const VectorXd& w) {
    MatrixXd a = x.transpose() * w.asDiagonal() * x;
    VectorXd b = x.transpose() * (w.asDiagonal() * y);
    Eigen::LDLT<MatrixXd> ldlt(a);
    const VectorXd beta = ldlt.solve(b);
    const VectorXd r = y - x * beta;
    return -(w.array() * r.array().square()).sum();
  };
}

ObjectiveProbe ld_probe(const ModelFit& fit, const PerturbedModel& scheme,
                        ParameterInterest interest) {
  MatrixXd delta;
  ProbeProvenance prov = ProbeProvenance::closed_form;
  if (scheme.delta) {
    delta = *scheme.delta;
  } else {
    delta = fd_delta_matrix(fit, scheme);
    prov = ProbeProvenance::finite_difference;
  }
  const int q = static_cast<int>(fit.neg_hessian.rows());
  if (delta.rows() != q)
    fail(ErrorKind::dimension_mismatch, "Delta rows do not match the parameter dimension");

  SymEig es = sym_eig(symmetrize(fit.neg_hessian));
  if (es.values.minCoeff() <= pd_floor(fit.neg_hessian))
    fail(ErrorKind::singular_hessian, "-L'' is not positive definite");
  VectorXd inv = es.values.array().inverse();
  MatrixXd minv = es.vectors * inv.asDiagonal() * es.vectors.transpose();

  if (interest != ParameterInterest::full_theta) {
    const int q1 = fit.q1();
    // Cook's partitioned form: subtract the nuisance-block inverse.
    MatrixXd b22 = MatrixXd::Zero(q, q);
    if (interest == ParameterInterest::beta_only) {
      const MatrixXd nn = fit.neg_hessian.bottomRightCorner(q - q1, q - q1);
      b22.bottomRightCorner(q - q1, q - q1) = symmetrize(nn).inverse();
    } else {
      const MatrixXd nn = fit.neg_hessian.topLeftCorner(q1, q1);
      b22.topLeftCorner(q1, q1) = symmetrize(nn).inverse();
    }
    minv -= b22;
  }

  const MatrixXd hess = 2.0 * delta.transpose() * minv * delta;
  return ObjectiveProbe::make(0.0, VectorXd::Zero(scheme.p), hess, prov);
}

std::function<double(const VectorXd&)> ld_function(const ModelFit& fit,
                                                   const PerturbedModel& scheme,
                                                   ParameterInterest interest) {
  if (!scheme.refit)
    fail(ErrorKind::incompatible_config,
         "scheme '" + scheme.name + "' has no inner refit; LD unavailable");
  const Refit refit = *scheme.refit;
  const ModelFit f = fit;
  const double lhat = base_loglik(fit, fit.theta());
  return [f, refit, lhat, interest](const VectorXd& w) {
    const VectorXd theta_w = refit(w);
    if (interest == ParameterInterest::full_theta)
      return 2.0 * (lhat - base_loglik(f, theta_w));
    const int q1 = f.q1();
    VectorXd theta = f.theta();
    if (interest == ParameterInterest::beta_only) {
      theta.head(q1) = theta_w.head(q1);
      if (f.kind == ModelKind::linear_mixed) {
        theta.tail(f.q2()) = detail_models::lmm_profile_xi(f, theta.head(q1), f.xi);
      } else {
        const MatrixXd x = f.data.stacked_x();
        const VectorXd y = f.data.stacked_y();
        theta[q1] = (y - x * theta.head(q1)).squaredNorm() / y.size();
      }
    } else {
      theta.tail(theta.size() - q1) = theta_w.tail(theta_w.size() - q1);
      if (f.kind == ModelKind::linear_mixed) {
        // profile beta by GLS at the perturbed xi
        const VectorXd xi = theta.tail(f.q2());
        MatrixXd a = MatrixXd::Zero(q1, q1);
        VectorXd b = VectorXd::Zero(q1);
        for (const auto& c : f.data.clusters) {
          Eigen::LLT<MatrixXd> chol(f.cov.build(xi, c));
          const MatrixXd sx = chol.solve(c.x);
          a += c.x.transpose() * sx;
          b += sx.transpose() * c.y;
        }
        theta.head(q1) = Eigen::LDLT<MatrixXd>(a).solve(b);
      }
      // gaussian regression: beta-hat does not depend on sigma^2
    }
    return 2.0 * (lhat - base_loglik(f, theta));
  };
}

std::function<double(const VectorXd&)> loglik_ratio_function(const ModelFit& fit,
                                                             const PerturbedModel& scheme) {
  const VectorXd yobs = fit.data.stacked_y();
  const LogLik ll = scheme.loglik;
  const double at_null = ll(scheme.omega0, yobs);
  return [ll, yobs, at_null](const VectorXd& w) { return ll(w, yobs) - at_null; };
}

MatrixXd fd_delta_matrix(const ModelFit& fit, const PerturbedModel& scheme) {
  if (!scheme.loglik_theta)
    fail(ErrorKind::incompatible_config,
         "scheme '" + scheme.name + "' has no theta-dependent log-likelihood");
  const ThetaLogLik lt = *scheme.loglik_theta;
  const VectorXd theta0 = fit.theta();
  const VectorXd w0 = scheme.omega0;
  const int q = static_cast<int>(theta0.size());
  MatrixXd delta(q, scheme.p);
  VectorXd theta = theta0, w = w0;
  // four-point mixed stencil with second-derivative step sizes
  for (int jcol = 0; jcol < scheme.p; ++jcol) {
    const double hw = detail::hess_step(w0[jcol]);
    for (int a = 0; a < q; ++a) {
      const double ht = detail::hess_step(theta0[a]);
      theta[a] = theta0[a] + ht;
      w[jcol] = w0[jcol] + hw;
      const double fpp = lt(theta, w);
      w[jcol] = w0[jcol] - hw;
      const double fpm = lt(theta, w);
      theta[a] = theta0[a] - ht;
      const double fmm = lt(theta, w);
      w[jcol] = w0[jcol] + hw;
      const double fmp = lt(theta, w);
      theta[a] = theta0[a];
      w[jcol] = w0[jcol];
      delta(a, jcol) = (fpp - fpm - fmp + fmm) / (4.0 * ht * hw);
    }
  }
  return delta;
}

}  // namespace influence
