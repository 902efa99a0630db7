#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "influence/errors.hpp"
#include "influence/rng.hpp"

namespace influence {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Open interval (lo, hi); infinite endpoints allowed.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double x) const { return x > lo && x < hi; }
};

inline Interval positive_half_line() { return Interval{0.0, std::numeric_limits<double>::infinity()}; }
inline Interval whole_line() { return Interval{}; }

/// x |-> origin + scale * (x - origin). Used to pull rescaled coordinates
/// back to the coordinates a scheme was originally defined in.
struct AffineMap {
  VectorXd origin;
  MatrixXd scale;

  VectorXd operator()(const VectorXd& x) const { return origin + scale * (x - origin); }

  /// Map for "first apply *this, then apply outer".
  AffineMap then(const AffineMap& outer) const {
    AffineMap out;
    out.origin = outer.origin;
    out.scale = outer.scale * scale;
    return out;
  }
};

/// Per-coordinate open box, optionally preceded by an affine pull-back.
struct Domain {
  std::vector<Interval> box;
  std::optional<AffineMap> to_base;

  bool contains(const VectorXd& omega) const {
    VectorXd w = to_base ? (*to_base)(omega) : omega;
    if (static_cast<std::size_t>(w.size()) != box.size()) return false;
    for (int i = 0; i < w.size(); ++i)
      if (!box[static_cast<std::size_t>(i)].contains(w[i])) return false;
    return true;
  }

  static Domain unconstrained(int p) { return Domain{std::vector<Interval>(static_cast<std::size_t>(p)), {}}; }
  static Domain all_positive(int p) {
    return Domain{std::vector<Interval>(static_cast<std::size_t>(p), positive_half_line()), {}};
  }
};

/// Rank-3 array with structure tags so large flat schemes never materialize
/// p^3 zeros. Diagonal means only T_iii may be nonzero.
class Tensor3 {
 public:
  enum class Kind { zero, diagonal, dense };

  Tensor3() = default;

  static Tensor3 zero(int p) {
    Tensor3 t;
    t.p_ = p;
    t.kind_ = Kind::zero;
    return t;
  }

  static Tensor3 diagonal(VectorXd d) {
    Tensor3 t;
    t.p_ = static_cast<int>(d.size());
    t.kind_ = Kind::diagonal;
    t.diag_ = std::move(d);
    return t;
  }

  static Tensor3 dense_zero(int p) {
    Tensor3 t;
    t.p_ = p;
    t.kind_ = Kind::dense;
    t.data_.assign(static_cast<std::size_t>(p) * p * p, 0.0);
    return t;
  }

  int dim() const { return p_; }
  Kind kind() const { return kind_; }
  bool is_zero_kind() const { return kind_ == Kind::zero; }

  double operator()(int i, int j, int k) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::diagonal: return (i == j && j == k) ? diag_[i] : 0.0;
      case Kind::dense: return data_[idx(i, j, k)];
    }
    return 0.0;
  }

  double& dense_at(int i, int j, int k) {
    if (kind_ != Kind::dense) fail(ErrorKind::dimension_mismatch, "dense_at on structured tensor");
    return data_[idx(i, j, k)];
  }

  const VectorXd& diag() const { return diag_; }

  /// M_ij = sum_s T_ijs w_s.
  MatrixXd contract_last(const VectorXd& w) const {
    MatrixXd m = MatrixXd::Zero(p_, p_);
    if (kind_ == Kind::diagonal) {
      for (int i = 0; i < p_; ++i) m(i, i) = diag_[i] * w[i];
    } else if (kind_ == Kind::dense) {
      for (int i = 0; i < p_; ++i)
        for (int j = 0; j < p_; ++j) {
          double acc = 0.0;
          for (int s = 0; s < p_; ++s) acc += data_[idx(i, j, s)] * w[s];
          m(i, j) = acc;
        }
    }
    return m;
  }

  /// c_s = sum_{j,k} T_jks v_j v_k (first two slots contracted).
  VectorXd contract_first_two(const VectorXd& v) const {
    VectorXd c = VectorXd::Zero(p_);
    if (kind_ == Kind::diagonal) {
      for (int s = 0; s < p_; ++s) c[s] = diag_[s] * v[s] * v[s];
    } else if (kind_ == Kind::dense) {
      for (int s = 0; s < p_; ++s) {
        double acc = 0.0;
        for (int j = 0; j < p_; ++j)
          for (int k = 0; k < p_; ++k) acc += data_[idx(j, k, s)] * v[j] * v[k];
        c[s] = acc;
      }
    }
    return c;
  }

  /// T'_abc = sum_{ijk} B_ia B_jb B_kc T_ijk, i.e. a covariant 3-tensor under
  /// the coordinate change with B = d(old)/d(new).
  Tensor3 transform(const MatrixXd& B) const {
    if (kind_ == Kind::zero) return zero(p_);
    bool bdiag = is_diagonal_matrix(B);
    if (kind_ == Kind::diagonal && bdiag) {
      VectorXd d(p_);
      for (int i = 0; i < p_; ++i) d[i] = diag_[i] * B(i, i) * B(i, i) * B(i, i);
      return diagonal(std::move(d));
    }
    // Three successive one-slot contractions keep this O(p^4).
    Tensor3 a = dense_zero(p_), b = dense_zero(p_), out = dense_zero(p_);
    for (int j = 0; j < p_; ++j)
      for (int k = 0; k < p_; ++k)
        for (int aa = 0; aa < p_; ++aa) {
          double acc = 0.0;
          for (int i = 0; i < p_; ++i) acc += B(i, aa) * (*this)(i, j, k);
          a.data_[idx(aa, j, k)] = acc;
        }
    for (int aa = 0; aa < p_; ++aa)
      for (int k = 0; k < p_; ++k)
        for (int bb = 0; bb < p_; ++bb) {
          double acc = 0.0;
          for (int j = 0; j < p_; ++j) acc += B(j, bb) * a.data_[idx(aa, j, k)];
          b.data_[idx(aa, bb, k)] = acc;
        }
    for (int aa = 0; aa < p_; ++aa)
      for (int bb = 0; bb < p_; ++bb)
        for (int cc = 0; cc < p_; ++cc) {
          double acc = 0.0;
          for (int k = 0; k < p_; ++k) acc += B(k, cc) * b.data_[idx(aa, bb, k)];
          out.data_[idx(aa, bb, cc)] = acc;
        }
    return out;
  }

  Tensor3 scaled(double a) const {
    Tensor3 t = *this;
    if (kind_ == Kind::diagonal) t.diag_ *= a;
    if (kind_ == Kind::dense)
      for (auto& v : t.data_) v *= a;
    return t;
  }

  /// a*X + b*Y, preserving structure when both operands share it.
  static Tensor3 combine(double a, const Tensor3& x, double b, const Tensor3& y) {
    int p = x.p_;
    if (x.kind_ == Kind::zero) return y.scaled(b);
    if (y.kind_ == Kind::zero) return x.scaled(a);
    if (x.kind_ == Kind::diagonal && y.kind_ == Kind::diagonal)
      return diagonal(a * x.diag_ + b * y.diag_);
    Tensor3 out = dense_zero(p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        for (int k = 0; k < p; ++k) out.data_[out.idx(i, j, k)] = a * x(i, j, k) + b * y(i, j, k);
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    if (kind_ == Kind::diagonal)
      for (int i = 0; i < p_; ++i) m = std::max(m, std::abs(diag_[i]));
    if (kind_ == Kind::dense)
      for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double max_abs_diff(const Tensor3& other) const {
    double m = 0.0;
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j)
        for (int k = 0; k < p_; ++k) m = std::max(m, std::abs((*this)(i, j, k) - other(i, j, k)));
    return m;
  }

 private:
  static bool is_diagonal_matrix(const MatrixXd& b) {
    for (int i = 0; i < b.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j)
        if (i != j && b(i, j) != 0.0) return false;
    return true;
  }

  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * p_ + j) * p_ + k;
  }

  int p_ = 0;
  Kind kind_ = Kind::zero;
  VectorXd diag_;
  std::vector<double> data_;
};

/// Closed-form geometric data of a scheme at one point: the metric, the
/// skewness tensor and the Levi-Civita connection (all lower indices).
struct GeometryCore {
  MatrixXd G;
  Tensor3 T;
  Tensor3 Gamma0;
};

using GeometryProvider = std::function<GeometryCore(const VectorXd& omega)>;
using LogLik = std::function<double(const VectorXd& omega, const VectorXd& yrep)>;
using Sampler = std::function<VectorXd(const VectorXd& omega, DrawRng& rng)>;
using ThetaLogLik = std::function<double(const VectorXd& theta, const VectorXd& omega)>;
using Refit = std::function<VectorXd(const VectorXd& omega)>;

/// Label of one perturbation coordinate for reports: cluster id and, for
/// per-observation schemes, the observation index inside the cluster.
struct IndexLabel {
  std::string cluster;
  int obs = -1;  // -1 for per-cluster coordinates

  std::string text() const {
    return obs < 0 ? cluster : cluster + ":" + std::to_string(obs + 1);
  }
};

/// A perturbation scheme: dimension, null point, domain, the perturbed
/// log-likelihood as a function of omega for a data replicate, and whatever
/// closed forms the scheme can offer. theta is bound at construction.
struct PerturbedModel {
  int p = 0;
  VectorXd omega0;
  Domain domain;
  std::string name;

  LogLik loglik;
  std::optional<GeometryProvider> geometry;
  std::optional<Sampler> sampler;

  // For likelihood-displacement objectives: perturbed log-likelihood of the
  // observed data as a function of theta, the cross-derivative matrix at
  // (theta_hat, omega0), and an inner refit omega -> theta_hat(omega).
  std::optional<ThetaLogLik> loglik_theta;
  std::optional<MatrixXd> delta;
  std::optional<Refit> refit;

  std::vector<IndexLabel> labels;

  void check_in_domain(const VectorXd& omega) const {
    if (omega.size() != p) fail(ErrorKind::dimension_mismatch, "omega has length " + std::to_string(omega.size()) + ", scheme dimension is " + std::to_string(p));
    if (!domain.contains(omega)) fail(ErrorKind::domain_violation, "omega outside the domain of scheme '" + name + "'");
  }
};

enum class GeometrySource { closed_form, monte_carlo };

/// Metric, skewness and connections evaluated at one omega.
struct GeometryAtPoint {
  VectorXd omega;
  double alpha = 0.0;
  MatrixXd G;
  Tensor3 T;
  Tensor3 Gamma0;
  Tensor3 GammaAlpha;
  std::optional<MatrixXd> Ginv;  // absent when G is numerically singular
  double min_eigenvalue = 0.0;
  GeometrySource source = GeometrySource::closed_form;
};

/// Result of the appropriateness check, conditions (a) and (b).
struct AppropriatenessVerdict {
  bool is_appropriate = false;
  double c_hat = 0.0;
  MatrixXd correlation;
  double min_eigenvalue = 0.0;
  double max_offdiag_abs_corr = 0.0;
  double max_iso_deviation = 0.0;  // max |G_ij - c_hat * delta_ij|
};

struct PathSample {
  VectorXd t;                   // strictly increasing parameter grid
  std::vector<VectorXd> omega;  // one point per grid entry
};

}  // namespace influence
