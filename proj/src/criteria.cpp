#include "poismix/criteria.hpp"

#include <cmath>
#include <stdexcept>

#include "poismix/parallel.hpp"

namespace poismix {

FitProcedure glmm_fitter(const ModelSpec& spec) {
  spec.validate();
  return FitProcedure{
      "glmm-laplace",
      [spec](const ClusteredCounts& data, const FitResult* warm) {
        return fit_glmm(data, spec, warm);
      }};
}

FitProcedure glmm_fixed_theta_fitter(const ModelSpec& spec, const Parameters& at) {
  spec.validate();
  at.validate();
  return FitProcedure{
      "glmm-laplace-fixed-theta",
      [spec, at](const ClusteredCounts& data, const FitResult*) {
        const JointModeResult mode = profile_modes(data, at, spec.solver);
        FitResult fit;
        fit.kind = ModelKind::MixedDiagonal;
        fit.beta_hat = at.beta;
        fit.log_sigma_hat = at.log_sigma;
        fit.b_hat = mode.b;
        fit.y_hat = fitted_means(data, at.beta, mode.b);
        fit.cond_loglik = conditional_log_lik(data.stacked_y(), fit.y_hat);
        fit.marg_loglik = laplace_marginal_loglik(data, at, spec.solver);
        fit.converged = mode.converged;
        fit.outer_iterations = 0;
        fit.inner_iterations = mode.iterations;
        fit.grad_norm = mode.grad_norm;
        return fit;
      }};
}

FitProcedure fixed_glm_fitter(const SolverControls& controls) {
  controls.validate();
  return FitProcedure{
      "fixed-glm",
      [controls](const ClusteredCounts& data, const FitResult* warm) {
        if (warm != nullptr && warm->beta_hat.size() == data.p()) {
          Parameters start;
          start.beta = warm->beta_hat;
          start.log_sigma = Vec();
          return fit_fixed_glm(data, controls, &start);
        }
        return fit_fixed_glm(data, controls);
      }};
}

FitProcedure constant_fitter(double level) {
  if (!(level > 0.0)) {
    throw std::invalid_argument("constant_fitter: level must be positive");
  }
  return FitProcedure{
      "constant", [level](const ClusteredCounts& data, const FitResult*) {
        FitResult fit;
        fit.kind = ModelKind::FixedOnly;
        fit.y_hat = Vec::Constant(data.total_obs(), level);
        fit.cond_loglik = conditional_log_lik(data.stacked_y(), fit.y_hat);
        fit.converged = true;
        fit.grad_norm = 0.0;
        return fit;
      }};
}

FitProcedure grand_mean_fitter() {
  return FitProcedure{
      "grand-mean", [](const ClusteredCounts& data, const FitResult*) {
        const Vec y = data.stacked_y();
        const double mean = y.mean();
        if (!(mean > 0.0)) {
          throw std::domain_error("grand_mean_fitter: all counts are zero");
        }
        FitResult fit;
        fit.kind = ModelKind::FixedOnly;
        fit.y_hat = Vec::Constant(data.total_obs(), mean);
        fit.cond_loglik = conditional_log_lik(y, fit.y_hat);
        fit.converged = true;
        fit.grad_norm = 0.0;
        return fit;
      }};
}

PenaltyResult compute_penalty_K(const ClusteredCounts& data,
                                const FitProcedure& fitter,
                                const FitResult& full_fit, int threads) {
  const int n = data.total_obs();
  if (full_fit.y_hat.size() != n) {
    throw std::invalid_argument("compute_penalty_K: full_fit does not match data");
  }
  const Vec y = data.stacked_y();

  PenaltyResult result;
  result.per_observation = Vec::Zero(n);
  std::vector<int> refit_indices;
  for (int i = 0; i < n; ++i) {
    if (y(i) > 0.0) refit_indices.push_back(i);
  }
  if (refit_indices.empty()) return result;  // all-zero data: K = 0, no refits

  std::vector<char> failed(refit_indices.size(), 0);
  parallel_for(static_cast<int>(refit_indices.size()), threads, [&](int k) {
    const int i = refit_indices[static_cast<size_t>(k)];
    const ClusteredCounts perturbed = data.with_decremented(i);
    const FitResult refit = fitter.run(perturbed, &full_fit);
    if (!refit.converged) failed[static_cast<size_t>(k)] = 1;
    result.per_observation(i) =
        y(i) * (std::log(full_fit.y_hat(i)) - std::log(refit.y_hat(i)));
  });

  bool all_failed = true;
  for (size_t k = 0; k < refit_indices.size(); ++k) {
    if (failed[k]) {
      result.refit_failures.push_back(refit_indices[k]);
    } else {
      all_failed = false;
    }
  }
  if (all_failed) {
    throw std::runtime_error("compute_penalty_K: every perturbed refit failed");
  }
  // fixed-order sum, so K is identical for any thread count
  double K = 0.0;
  for (int i = 0; i < n; ++i) K += result.per_observation(i);
  result.penalty_K = K;
  return result;
}

double caic(const FitResult& full_fit, double penalty_K) {
  return -2.0 * full_fit.cond_loglik + 2.0 * penalty_K;
}

double maic(const FitResult& full_fit, int dim_theta) {
  if (!full_fit.marg_loglik.has_value()) {
    throw std::invalid_argument("maic: fit has no marginal log-likelihood");
  }
  return -2.0 * *full_fit.marg_loglik + 2.0 * static_cast<double>(dim_theta);
}

double classical_aic(const FitResult& fit, int p) {
  return -2.0 * fit.cond_loglik + 2.0 * static_cast<double>(p);
}

CriteriaReport score_models(const ClusteredCounts& data, const ModelSpec& mixed_spec,
                            int threads, bool fixed_theta_refits) {
  mixed_spec.validate();
  CriteriaReport report;
  report.fixed_fit = fit_fixed_glm(data, mixed_spec.solver);
  report.aic = classical_aic(report.fixed_fit, data.p());

  report.mixed_fit = fit_glmm(data, mixed_spec);
  report.maic = maic(report.mixed_fit, data.p() + data.q());

  FitProcedure refitter;
  if (fixed_theta_refits) {
    Parameters at;
    at.beta = report.mixed_fit.beta_hat;
    at.log_sigma = report.mixed_fit.log_sigma_hat;
    refitter = glmm_fixed_theta_fitter(mixed_spec, at);
  } else {
    refitter = glmm_fitter(mixed_spec);
  }
  const PenaltyResult penalty =
      compute_penalty_K(data, refitter, report.mixed_fit, threads);
  report.penalty_K = penalty.penalty_K;
  report.per_observation_K = penalty.per_observation;
  report.refit_failures = penalty.refit_failures;
  report.caic = caic(report.mixed_fit, penalty.penalty_K);
  report.fixed_theta_refits = fixed_theta_refits;
  return report;
}

}  // namespace poismix
