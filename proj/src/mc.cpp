#include "influence/mc.hpp"

#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace influence {
namespace {

constexpr int kBlock = 4096;

double grad_step(double w) {
  static const double eps3 = std::cbrt(std::numeric_limits<double>::epsilon());
  return eps3 * std::max(1.0, std::abs(w));
}

double hess_step(double w) {
  static const double eps4 = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return eps4 * std::max(1.0, std::abs(w));
}

/// Central-difference score of the perturbed log-likelihood at omega for one
/// data replicate.
VectorXd fd_score(const PerturbedModel& model, const VectorXd& omega, const VectorXd& y) {
  const int p = model.p;
  VectorXd s(p);
  VectorXd w = omega;
  for (int i = 0; i < p; ++i) {
    const double h = grad_step(omega[i]);
    w[i] = omega[i] + h;
    const double fp = model.loglik(w, y);
    w[i] = omega[i] - h;
    const double fm = model.loglik(w, y);
    w[i] = omega[i];
    s[i] = (fp - fm) / (2.0 * h);
  }
  return s;
}

MatrixXd fd_hessian(const PerturbedModel& model, const VectorXd& omega, const VectorXd& y) {
  const int p = model.p;
  MatrixXd h = MatrixXd::Zero(p, p);
  VectorXd w = omega;
  const double f0 = model.loglik(omega, y);
  for (int i = 0; i < p; ++i) {
    const double hi = hess_step(omega[i]);
    w[i] = omega[i] + hi;
    const double fp = model.loglik(w, y);
    w[i] = omega[i] - hi;
    const double fm = model.loglik(w, y);
    w[i] = omega[i];
    h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
  }
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double hi = hess_step(omega[i]);
      const double hj = hess_step(omega[j]);
      w[i] = omega[i] + hi;
      w[j] = omega[j] + hj;
      const double fpp = model.loglik(w, y);
      w[j] = omega[j] - hj;
      const double fpm = model.loglik(w, y);
      w[i] = omega[i] - hi;
      const double fmm = model.loglik(w, y);
      w[j] = omega[j] + hj;
      const double fmp = model.loglik(w, y);
      w[i] = omega[i];
      w[j] = omega[j];
      h(i, j) = h(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  return h;
}

struct BlockSums {
  VectorXd s;         // sum of scores
  MatrixXd ss;        // sum of score outer products
  MatrixXd ss2;       // sum of squared products, for standard errors
  std::vector<double> sss;  // sum of triple products (dense p^3)
  MatrixXd h;               // sum of per-draw Hessians
  std::vector<double> hs;   // sum of h_ij * s_k (dense p^3)

  void init(int p, bool tensors) {
    s = VectorXd::Zero(p);
    ss = MatrixXd::Zero(p, p);
    ss2 = MatrixXd::Zero(p, p);
    if (tensors) {
      sss.assign(static_cast<std::size_t>(p) * p * p, 0.0);
      h = MatrixXd::Zero(p, p);
      hs.assign(static_cast<std::size_t>(p) * p * p, 0.0);
    }
  }
};

void accumulate_block(const PerturbedModel& model, const VectorXd& omega, const McOptions& opt,
                      int begin, int end, BlockSums& acc) {
  const int p = model.p;
  acc.init(p, opt.want_tensors);
  for (int d = begin; d < end; ++d) {
    DrawRng rng(opt.seed, static_cast<std::uint64_t>(d));
    VectorXd y = (*model.sampler)(omega, rng);
    VectorXd sc = fd_score(model, omega, y);
    acc.s += sc;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        const double prod = sc[i] * sc[j];
        acc.ss(i, j) += prod;
        acc.ss2(i, j) += prod * prod;
      }
    if (opt.want_tensors) {
      MatrixXd hd = fd_hessian(model, omega, y);
      acc.h += hd;
      std::size_t idx = 0;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          for (int k = 0; k < p; ++k, ++idx) {
            acc.sss[idx] += sc[i] * sc[j] * sc[k];
            acc.hs[idx] += hd(i, j) * sc[k];
          }
    }
  }
}

std::vector<BlockSums> run_blocks(const PerturbedModel& model, const VectorXd& omega,
                                  const McOptions& opt) {
  if (!model.sampler) fail(ErrorKind::no_sampler, "scheme '" + model.name + "' has no sampler");
  model.check_in_domain(omega);
  const int nblocks = (opt.draws + kBlock - 1) / kBlock;
  std::vector<BlockSums> blocks(static_cast<std::size_t>(nblocks));
  if (opt.parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < nblocks; ++b) {
      accumulate_block(model, omega, opt, b * kBlock, std::min(opt.draws, (b + 1) * kBlock),
                       blocks[static_cast<std::size_t>(b)]);
    }
  } else {
    for (int b = 0; b < nblocks; ++b) {
      accumulate_block(model, omega, opt, b * kBlock, std::min(opt.draws, (b + 1) * kBlock),
                       blocks[static_cast<std::size_t>(b)]);
    }
  }
  return blocks;
}

}  // namespace

McMetric mc_metric_estimate(const PerturbedModel& model, const VectorXd& omega,
                            const McOptions& opt) {
  McOptions o = opt;
  o.want_tensors = false;
  const auto blocks = run_blocks(model, omega, o);
  const int p = model.p;
  const double n = static_cast<double>(opt.draws);
  MatrixXd ss = MatrixXd::Zero(p, p), ss2 = MatrixXd::Zero(p, p);
  for (const auto& b : blocks) {
    ss += b.ss;
    ss2 += b.ss2;
  }
  McMetric out;
  out.draws = opt.draws;
  out.G = ss / n;
  out.stderr_ = MatrixXd(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double var = std::max(0.0, (ss2(i, j) / n - out.G(i, j) * out.G(i, j)) * n / (n - 1.0));
      out.stderr_(i, j) = std::sqrt(var / n);
    }
  return out;
}

McGeometry mc_geometry_estimate(const PerturbedModel& model, const VectorXd& omega,
                                const McOptions& opt) {
  McOptions o = opt;
  o.want_tensors = true;
  const auto blocks = run_blocks(model, omega, o);
  const int p = model.p;
  const double n = static_cast<double>(opt.draws);
  VectorXd s = VectorXd::Zero(p);
  MatrixXd ss = MatrixXd::Zero(p, p), ss2 = MatrixXd::Zero(p, p), h = MatrixXd::Zero(p, p);
  std::vector<double> sss(static_cast<std::size_t>(p) * p * p, 0.0);
  std::vector<double> hs(static_cast<std::size_t>(p) * p * p, 0.0);
  for (const auto& b : blocks) {
    s += b.s;
    ss += b.ss;
    ss2 += b.ss2;
    h += b.h;
    for (std::size_t i = 0; i < sss.size(); ++i) {
      sss[i] += b.sss[i];
      hs[i] += b.hs[i];
    }
  }
  const VectorXd mean = s / n;
  const MatrixXd m2 = ss / n;
  const MatrixXd hbar = h / n;

  McGeometry out;
  out.draws = opt.draws;
  // Sample covariance of the scores (regularity makes the mean ~0).
  out.core.G = (m2 - mean * mean.transpose()) * (n / (n - 1.0));
  out.metric_stderr = MatrixXd(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double raw = m2(i, j);
      const double var = std::max(0.0, ss2(i, j) / n - raw * raw);
      out.metric_stderr(i, j) = std::sqrt(var / n);
    }

  Tensor3 t = Tensor3::dense_zero(p);
  Tensor3 g0 = Tensor3::dense_zero(p);
  std::size_t idx = 0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < p; ++k, ++idx) {
        const double m3 = sss[idx] / n;
        const double central = m3 - mean[i] * m2(j, k) - mean[j] * m2(i, k) -
                               mean[k] * m2(i, j) + 2.0 * mean[i] * mean[j] * mean[k];
        t.dense_at(i, j, k) = central;
        g0.dense_at(i, j, k) = hs[idx] / n - hbar(i, j) * mean[k] + 0.5 * central;
      }
  out.core.T = t;
  out.core.Gamma0 = g0;
  return out;
}

}  // namespace influence
