#ifndef POISMIX_SIMLAB_HPP
#define POISMIX_SIMLAB_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "poismix/criteria.hpp"
#include "poismix/rng.hpp"

namespace poismix {

/// The random-intercept simulation design: clusters i = 1..m, within-cluster
/// covariate x_j = j for j = 0..n_per_cluster-1 (so a cluster has exactly
/// n_per_cluster observations), log mu_ij = beta0 + beta1 * j + u_i with
/// u_i ~ N(0, sigma_b^2).
struct SimulationDesign {
  int m = 10;
  int n_per_cluster = 5;
  double beta0 = 1.0;
  double beta1 = 0.2;
  double sigma_b = 0.25;
  int replicates = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedDataset {
  ClusteredCounts data;
  Vec true_mu;  // length N, the conditional means given u
  Vec u;        // length m
};

/// Draws one dataset. Consumes, per cluster, one normal then n_per_cluster
/// Poisson draws, so a replicate is fully determined by its stream.
SimulatedDataset simulate_dataset(const SimulationDesign& design, RngStream& stream);

struct BcEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  int fit_failures = 0;
};

/// True-optimism oracle by brute force: per replicate, fit, then draw S
/// fresh response sets from the same conditional distribution (same u) and
/// average their conditional log-likelihood under the fitted values;
/// BC_r = loglik(y) - mean_s loglik(y*_s).
BcEstimate bc_monte_carlo(const SimulationDesign& design, const FitProcedure& fitter,
                          int R, int S, std::uint64_t seed, int threads = 1);

/// True-optimism oracle via the known true means: per replicate
/// sum_i (y_i - mu0_i) * log yhat_i, averaged over replicates. Equals the
/// brute-force BC in expectation because the -yhat and log y! terms cancel.
BcEstimate bc_analytic(const SimulationDesign& design, const FitProcedure& fitter,
                       int R, std::uint64_t seed, int threads = 1);

/// Both sides of the identity E[mu g(Y)] = E[Y g(Y-1)], Y ~ Poisson(mu),
/// each evaluated by truncated exact-pmf summation. Throws if the tails do
/// not fall below tol within 10^6 terms.
std::pair<double, double> poisson_shift_oracle(
    const std::function<double(long)>& g, double mu, double tol);

/// One experiment configuration's aggregate results. Table-1 runs fill the
/// BC / mean-K block; selection runs fill the counts and mean criteria.
struct ConfigRow {
  int n_per_cluster = 0;
  double sigma_b = 0.0;
  int replicates = 0;
  std::optional<double> bc_mc, bc_mc_se;
  std::optional<double> bc_an, bc_an_se;
  std::optional<double> mean_K, K_se;
  std::optional<int> maic_fixed, caic_fixed;  // fixed model preferred counts
  std::optional<double> mean_aic, mean_maic, mean_caic;
  int fit_failures = 0;
  int refit_failures = 0;
  bool unreliable = false;  // > 5% of replicates had a failure
};

struct ExperimentReport {
  std::string experiment;  // "table1" or "selection"
  std::uint64_t seed = 0;
  int replicates = 0;
  int inner_replicates = 0;  // 0 when not applicable
  std::string fitter;
  std::vector<ConfigRow> rows;
  double wall_clock_seconds = 0.0;  // console provenance; never serialized
};

struct Table1Config {
  int n_per_cluster;
  double sigma_b;
};

/// The six configurations reported in the bias-correction table.
std::vector<Table1Config> table1_configs();

/// For each configuration: mean penalty K, both BC oracles and their
/// standard errors, computed on shared replicates (one fit per replicate
/// feeds K and both oracles). Replicate streams are keyed by
/// (seed, config, replicate), so results do not depend on thread count.
ExperimentReport run_table1(const std::vector<Table1Config>& configs, int R, int S,
                            std::uint64_t seed, int threads = 1,
                            const FitProcedure* fitter = nullptr);

/// Fits the fixed-effects and mixed models per replicate at n_per_cluster=5
/// and counts how often the fixed model wins AIC-vs-mAIC and AIC-vs-cAIC;
/// also records mean AIC/mAIC/cAIC per sigma_b as plot-ready data.
ExperimentReport run_selection_experiment(const std::vector<double>& sigma_b_list,
                                          int R, std::uint64_t seed,
                                          int threads = 1);

}  // namespace poismix

#endif  // POISMIX_SIMLAB_HPP
