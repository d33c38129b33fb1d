#ifndef POISMIX_CRITERIA_HPP
#define POISMIX_CRITERIA_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "poismix/estimation.hpp"

namespace poismix {

/// A named fitting procedure. The criteria operations treat it as a black
/// box: any deterministic map from data to a FitResult works, including
/// estimators that ignore the model entirely. `warm` may be null.
struct FitProcedure {
  std::string name;
  std::function<FitResult(const ClusteredCounts&, const FitResult* warm)> run;
};

/// Full mixed-model refits: beta, sigma and b are all re-estimated.
FitProcedure glmm_fitter(const ModelSpec& spec);

/// Refits that hold (beta, log sigma) fixed at `at` and re-profile only the
/// random-effect modes. A different estimator than glmm_fitter, offered for
/// cheaper exploration.
FitProcedure glmm_fixed_theta_fitter(const ModelSpec& spec, const Parameters& at);

FitProcedure fixed_glm_fitter(const SolverControls& controls = {});

/// Toy estimators used to validate the penalty machinery.
FitProcedure constant_fitter(double level);
FitProcedure grand_mean_fitter();

struct PenaltyResult {
  double penalty_K = 0.0;
  Vec per_observation;             // exactly 0 wherever y_i = 0
  std::vector<int> refit_failures; // observation indices, ascending
};

/// The perturb-and-refit penalty: for each observation with y_i > 0, refit
/// on the dataset with y_i decremented by one (warm-started at full_fit) and
/// accumulate y_i * (log yhat_i(y) - log yhat_i(perturbed)). Observations
/// with y_i = 0 contribute exactly zero and trigger no refit. Refits are
/// independent and fan out over `threads`; accumulation is in observation
/// order, so results are identical for any thread count. A refit that does
/// not converge is recorded and its best iterate used; if every refit fails,
/// throws std::runtime_error.
PenaltyResult compute_penalty_K(const ClusteredCounts& data,
                                const FitProcedure& fitter,
                                const FitResult& full_fit, int threads = 1);

/// -2 * cond_loglik + 2 * penalty_K.
double caic(const FitResult& full_fit, double penalty_K);

/// -2 * marg_loglik + 2 * dim_theta. Throws if the fit has no marginal
/// log-likelihood.
double maic(const FitResult& full_fit, int dim_theta);

/// -2 * cond_loglik + 2 * p, for fixed-effects fits.
double classical_aic(const FitResult& fit, int p);

struct CriteriaReport {
  std::optional<double> aic;   // fixed-effects model
  std::optional<double> maic;  // mixed model, Laplace marginal
  std::optional<double> caic;  // mixed model, conditional
  double penalty_K = 0.0;
  Vec per_observation_K;
  std::vector<int> refit_failures;
  FitResult fixed_fit;
  FitResult mixed_fit;
  bool fixed_theta_refits = false;
};

/// Fits the fixed-effects and mixed candidates on the same data and scores
/// them with AIC, mAIC and cAIC; the cAIC penalty uses full refits unless
/// fixed_theta_refits is set.
CriteriaReport score_models(const ClusteredCounts& data, const ModelSpec& mixed_spec,
                            int threads = 1, bool fixed_theta_refits = false);

}  // namespace poismix

#endif  // POISMIX_CRITERIA_HPP
