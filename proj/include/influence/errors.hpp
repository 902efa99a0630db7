#pragma once

#include <stdexcept>
#include <string>

namespace influence {

/// Error category, used by the CLI to map failures onto exit codes:
/// validation problems exit with 2, numerical failures with 3.
enum class ErrorKind {
  // validation
  domain_violation,
  dimension_mismatch,
  degenerate_curve,
  degenerate_direction,
  geometry_unavailable,
  no_sampler,
  unsupported_family,
  zero_direction,
  non_monotone_diffeo,
  orthogonality_violation,
  missing_column,
  non_numeric_cell,
  empty_cluster,
  incompatible_config,
  // numerical
  singular_metric,
  singular_hessian,
  zero_hessian,
  rank_deficient_design,
  non_convergence,
  normalizer_divergence,
  non_finite_value,
};

inline bool is_validation_error(ErrorKind k) {
  switch (k) {
    case ErrorKind::singular_metric:
    case ErrorKind::singular_hessian:
    case ErrorKind::zero_hessian:
    case ErrorKind::rank_deficient_design:
    case ErrorKind::non_convergence:
    case ErrorKind::normalizer_divergence:
    case ErrorKind::non_finite_value:
      return false;
    default:
      return true;
  }
}

inline const char* error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::domain_violation: return "DomainViolation";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::degenerate_curve: return "DegenerateCurve";
    case ErrorKind::degenerate_direction: return "DegenerateDirection";
    case ErrorKind::geometry_unavailable: return "GeometryUnavailable";
    case ErrorKind::no_sampler: return "NoSampler";
    case ErrorKind::unsupported_family: return "UnsupportedFamily";
    case ErrorKind::zero_direction: return "ZeroDirection";
    case ErrorKind::non_monotone_diffeo: return "NonMonotoneDiffeo";
    case ErrorKind::orthogonality_violation: return "OrthogonalityViolation";
    case ErrorKind::missing_column: return "MissingColumn";
    case ErrorKind::non_numeric_cell: return "NonNumericCell";
    case ErrorKind::empty_cluster: return "EmptyCluster";
    case ErrorKind::incompatible_config: return "IncompatibleConfig";
    case ErrorKind::singular_metric: return "SingularMetric";
    case ErrorKind::singular_hessian: return "SingularHessian";
    case ErrorKind::zero_hessian: return "ZeroHessian";
    case ErrorKind::rank_deficient_design: return "RankDeficientDesign";
    case ErrorKind::non_convergence: return "NonConvergence";
    case ErrorKind::normalizer_divergence: return "NormalizerDivergence";
    case ErrorKind::non_finite_value: return "NonFiniteValue";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return is_validation_error(kind_) ? 2 : 3; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace influence
