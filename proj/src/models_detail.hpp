#pragma once

#include <functional>
#include <vector>

#include "influence/models.hpp"

// Internals shared between the fitting and scheme translation units.
namespace influence::detail_models {

double logistic_log_p0(double x);
double logistic_score_p0(double x);

/// Refit of the mixed model under optional per-cluster response shifts and
/// quadratic-form weights; returns theta = (beta, xi), warm-started at the
/// base fit.
using LmmRefitFn =
    std::function<VectorXd(const std::vector<VectorXd>* shifts, const VectorXd* weights)>;
LmmRefitFn make_lmm_refit(const ModelFit& fit);

/// Maximize the unperturbed log-likelihood over xi with beta held fixed.
VectorXd lmm_profile_xi(const ModelFit& fit, const VectorXd& beta_fixed, const VectorXd& xi_start);

}  // namespace influence::detail_models
