#ifndef POISMIX_ESTIMATION_HPP
#define POISMIX_ESTIMATION_HPP

#include <limits>
#include <optional>
#include <vector>

#include "poismix/model.hpp"
#include "poismix/types.hpp"

namespace poismix {

/// Estimates and diagnostics from a single model fit. For mixed fits y_hat
/// is evaluated at (beta_hat, b_hat) and cond_loglik at y_hat; marg_loglik
/// is the Laplace-approximated marginal log-likelihood (absent for
/// fixed-only fits, where the marginal equals the conditional).
struct FitResult {
  ModelKind kind = ModelKind::FixedOnly;
  Vec beta_hat;
  Vec log_sigma_hat;       // empty for FixedOnly
  std::vector<Vec> b_hat;  // empty for FixedOnly
  Vec y_hat;
  double cond_loglik = 0.0;
  std::optional<double> marg_loglik;
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double grad_norm = std::numeric_limits<double>::infinity();
  bool sigma_at_floor = false;

  Vec sigma_hat() const { return log_sigma_hat.array().exp(); }
};

/// Maximum-likelihood Poisson regression (log link) by iteratively
/// reweighted least squares with step halving. Requires a full-column-rank
/// stacked design; rank deficiency raises std::invalid_argument naming the
/// collinear columns. Non-convergence is flagged on the result, which still
/// carries the best iterate.
FitResult fit_fixed_glm(const ClusteredCounts& data,
                        const SolverControls& controls = {},
                        const Parameters* warm_start = nullptr);

struct JointModeResult {
  Vec beta;
  std::vector<Vec> b;
  std::vector<Mat> neg_hessian;  // per-cluster Z'WZ + G^{-1} at the mode
  double objective = 0.0;        // penalized joint log-likelihood
  bool converged = false;
  int iterations = 0;
  double grad_norm = std::numeric_limits<double>::infinity();
};

/// Penalized joint log-likelihood
///   sum_i [ cond_loglik(y_i, mu_i) + log N(b_i; 0, G) ]
/// at the given point, with G = diag(exp(2 log_sigma)).
double joint_objective(const ClusteredCounts& data, const Vec& log_sigma,
                       const Vec& beta, const std::vector<Vec>& b);

/// Same value plus the analytic gradient in (beta, b_1, ..., b_m);
/// grad_b is resized to one q-vector per cluster.
double joint_objective_grad(const ClusteredCounts& data, const Vec& log_sigma,
                            const Vec& beta, const std::vector<Vec>& b,
                            Vec& grad_beta, std::vector<Vec>& grad_b);

/// Maximizes the penalized joint log-likelihood over (beta, b) at fixed
/// log_sigma by Newton with step halving, solving the arrow-structured
/// system through the per-cluster Schur complement. A singular system
/// raises std::runtime_error with a condition estimate.
JointModeResult joint_mode(const ClusteredCounts& data, const Vec& log_sigma,
                           const SolverControls& controls = {},
                           const Vec* beta0 = nullptr,
                           const std::vector<Vec>* b0 = nullptr);

/// Profiles the per-cluster random-effect modes at fixed parameters (beta is
/// not re-estimated), returning the modes, the negative Hessian blocks and
/// the penalized joint log-likelihood at the profiled point.
JointModeResult profile_modes(const ClusteredCounts& data,
                              const Parameters& params,
                              const SolverControls& controls = {});

/// Laplace approximation of the marginal log-likelihood at fixed parameters:
/// per cluster, the joint log-density at the profiled mode b_hat_i plus
/// (q/2) log 2pi - 1/2 log det H_i.
double laplace_marginal_loglik(const ClusteredCounts& data,
                               const Parameters& params,
                               const SolverControls& controls = {});

/// Laplace marginal and its analytic gradient in (beta, log_sigma),
/// accounting for the dependence of both the mode and the Hessian
/// determinant on the parameters.
double laplace_marginal_with_gradient(const ClusteredCounts& data,
                                      const Parameters& params,
                                      const SolverControls& controls,
                                      Vec& grad_beta, Vec& grad_log_sigma);

/// Fits the mixed model: BFGS ascent of the Laplace marginal over
/// (beta, log sigma) with the random-effect modes re-profiled at every
/// evaluation. log sigma is clamped at the variance floor; hitting it is
/// reported via sigma_at_floor. Non-convergence is flagged, best iterate
/// returned.
FitResult fit_glmm(const ClusteredCounts& data, const ModelSpec& spec,
                   const FitResult* warm_start = nullptr);

/// Adaptive Gauss-Hermite marginal log-likelihood, q = 1 only: each
/// cluster integral is centered at its mode and scaled by the mode
/// curvature. With nodes = 1 this reproduces laplace_marginal_loglik
/// exactly. Other q raise std::invalid_argument.
double aghq_marginal_loglik(const ClusteredCounts& data,
                            const Parameters& params, int nodes,
                            const SolverControls& controls = {});

struct GaussHermiteRule {
  Vec nodes;        // ascending
  Vec log_weights;  // for the weight function exp(-t^2)
};

/// Golub-Welsch nodes and weights for the physicists' Gauss-Hermite rule.
GaussHermiteRule gauss_hermite(int n);

}  // namespace poismix

#endif  // POISMIX_ESTIMATION_HPP
