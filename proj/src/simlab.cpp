#include "poismix/simlab.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "poismix/parallel.hpp"

namespace poismix {

namespace {

// Stream tags; replicate streams are (seed, {tag, config, replicate}).
enum : std::uint64_t {
  kTagTable1Data = 1,
  kTagTable1Star = 2,
  kTagSelection = 3,
  kTagBcMcData = 4,
  kTagBcMcStar = 5,
  kTagBcAnalytic = 6,
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(const std::vector<double>& v) {
  MeanSe out;
  const auto n = static_cast<double>(v.size());
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

SimulationDesign make_design(int n_per_cluster, double sigma_b) {
  SimulationDesign d;
  d.n_per_cluster = n_per_cluster;
  d.sigma_b = sigma_b;
  return d;
}

// Mean of conditional_log_lik(y*, yhat) over S fresh draws from Poisson(mu0).
double star_loglik_mean(const Vec& mu0, const Vec& y_hat, int S, RngStream& stream) {
  const auto n = mu0.size();
  Vec y_star(n);
  double acc = 0.0;
  for (int s = 0; s < S; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      y_star(i) = static_cast<double>(stream.poisson(mu0(i)));
    }
    acc += conditional_log_lik(y_star, y_hat);
  }
  return acc / static_cast<double>(S);
}

}  // namespace

void SimulationDesign::validate() const {
  if (m < 1 || n_per_cluster < 1 || replicates < 1) {
    throw std::invalid_argument("SimulationDesign: m, n_per_cluster and "
                                "replicates must be >= 1");
  }
  if (!(sigma_b >= 0.0) || !std::isfinite(beta0) || !std::isfinite(beta1)) {
    throw std::invalid_argument("SimulationDesign: sigma_b must be >= 0 and "
                                "coefficients finite");
  }
}

SimulatedDataset simulate_dataset(const SimulationDesign& design, RngStream& stream) {
  design.validate();
  const int m = design.m;
  const int n = design.n_per_cluster;
  std::vector<Cluster> clusters;
  clusters.reserve(static_cast<size_t>(m));
  Vec true_mu(m * n);
  Vec u(m);
  for (int i = 0; i < m; ++i) {
    u(i) = stream.normal(0.0, design.sigma_b);
    Cluster cl;
    cl.y.resize(n);
    cl.X.resize(n, 2);
    cl.Z = Mat::Ones(n, 1);
    for (int j = 0; j < n; ++j) {
      const double x = static_cast<double>(j);
      const double mu = std::exp(design.beta0 + design.beta1 * x + u(i));
      cl.X(j, 0) = 1.0;
      cl.X(j, 1) = x;
      cl.y(j) = static_cast<double>(stream.poisson(mu));
      true_mu(i * n + j) = mu;
    }
    clusters.push_back(std::move(cl));
  }
  return SimulatedDataset{ClusteredCounts(std::move(clusters)), std::move(true_mu),
                          std::move(u)};
}

BcEstimate bc_monte_carlo(const SimulationDesign& design, const FitProcedure& fitter,
                          int R, int S, std::uint64_t seed, int threads) {
  design.validate();
  if (R < 1 || S < 1) throw std::invalid_argument("bc_monte_carlo: R, S >= 1");
  std::vector<double> bc(static_cast<size_t>(R));
  std::vector<char> failed(static_cast<size_t>(R), 0);
  parallel_for(R, threads, [&](int r) {
    RngStream data_stream(seed, {kTagBcMcData, static_cast<std::uint64_t>(r)});
    const SimulatedDataset sim = simulate_dataset(design, data_stream);
    const FitResult fit = fitter.run(sim.data, nullptr);
    if (!fit.converged) failed[static_cast<size_t>(r)] = 1;
    RngStream star_stream(seed, {kTagBcMcStar, static_cast<std::uint64_t>(r)});
    bc[static_cast<size_t>(r)] =
        fit.cond_loglik - star_loglik_mean(sim.true_mu, fit.y_hat, S, star_stream);
  });
  const MeanSe ms = mean_and_se(bc);
  BcEstimate out;
  out.estimate = ms.mean;
  out.std_error = ms.se;
  for (char f : failed) out.fit_failures += f;
  return out;
}

BcEstimate bc_analytic(const SimulationDesign& design, const FitProcedure& fitter,
                       int R, std::uint64_t seed, int threads) {
  design.validate();
  if (R < 1) throw std::invalid_argument("bc_analytic: R >= 1");
  std::vector<double> bc(static_cast<size_t>(R));
  std::vector<char> failed(static_cast<size_t>(R), 0);
  parallel_for(R, threads, [&](int r) {
    RngStream data_stream(seed, {kTagBcAnalytic, static_cast<std::uint64_t>(r)});
    const SimulatedDataset sim = simulate_dataset(design, data_stream);
    const FitResult fit = fitter.run(sim.data, nullptr);
    if (!fit.converged) failed[static_cast<size_t>(r)] = 1;
    const Vec y = sim.data.stacked_y();
    bc[static_cast<size_t>(r)] =
        (y - sim.true_mu).dot(fit.y_hat.array().log().matrix());
  });
  const MeanSe ms = mean_and_se(bc);
  BcEstimate out;
  out.estimate = ms.mean;
  out.std_error = ms.se;
  for (char f : failed) out.fit_failures += f;
  return out;
}

std::pair<double, double> poisson_shift_oracle(
    const std::function<double(long)>& g, double mu, double tol) {
  if (!(mu > 0.0)) throw std::invalid_argument("poisson_shift_oracle: mu > 0");
  if (!(tol > 0.0)) throw std::invalid_argument("poisson_shift_oracle: tol > 0");
  double lhs = 0.0, rhs = 0.0;
  int quiet = 0;
  for (long k = 0; k < 1000000; ++k) {
    const double kd = static_cast<double>(k);
    const double log_pmf = kd * std::log(mu) - mu - std::lgamma(kd + 1.0);
    const double pmf = std::exp(log_pmf);
    const double term_l = mu * g(k) * pmf;
    const double term_r = k == 0 ? 0.0 : kd * g(k - 1) * pmf;
    lhs += term_l;
    rhs += term_r;
    if (kd > mu && std::max(std::abs(term_l), std::abs(term_r)) < 1e-4 * tol) {
      if (++quiet >= 3) return {lhs, rhs};
    } else {
      quiet = 0;
    }
  }
  throw std::runtime_error("poisson_shift_oracle: series did not converge "
                           "within 1e6 terms");
}

std::vector<Table1Config> table1_configs() {
  return {{5, 0.25}, {15, 0.25}, {5, 0.5}, {15, 0.5}, {5, 1.0}, {15, 1.0}};
}

ExperimentReport run_table1(const std::vector<Table1Config>& configs, int R, int S,
                            std::uint64_t seed, int threads,
                            const FitProcedure* fitter) {
  if (R < 1 || S < 1) throw std::invalid_argument("run_table1: R, S >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  FitProcedure default_fitter;
  if (fitter == nullptr) {
    default_fitter = glmm_fitter(ModelSpec::mixed_diagonal(1));
    fitter = &default_fitter;
  }

  ExperimentReport report;
  report.experiment = "table1";
  report.seed = seed;
  report.replicates = R;
  report.inner_replicates = S;
  report.fitter = fitter->name;

  for (size_t c = 0; c < configs.size(); ++c) {
    const SimulationDesign design =
        make_design(configs[c].n_per_cluster, configs[c].sigma_b);
    std::vector<double> k_vals(static_cast<size_t>(R));
    std::vector<double> bc_mc_vals(static_cast<size_t>(R));
    std::vector<double> bc_an_vals(static_cast<size_t>(R));
    std::vector<char> rep_failed(static_cast<size_t>(R), 0);
    std::vector<int> fit_fail(static_cast<size_t>(R), 0);
    std::vector<int> refit_fail(static_cast<size_t>(R), 0);

    parallel_for(R, threads, [&](int r) {
      RngStream data_stream(seed, {kTagTable1Data, static_cast<std::uint64_t>(c),
                                   static_cast<std::uint64_t>(r)});
      const SimulatedDataset sim = simulate_dataset(design, data_stream);
      const FitResult full = fitter->run(sim.data, nullptr);
      if (!full.converged) fit_fail[static_cast<size_t>(r)] = 1;

      // refits run serially inside a replicate; parallelism is per replicate
      const PenaltyResult penalty = compute_penalty_K(sim.data, *fitter, full, 1);
      k_vals[static_cast<size_t>(r)] = penalty.penalty_K;
      refit_fail[static_cast<size_t>(r)] =
          static_cast<int>(penalty.refit_failures.size());

      const Vec y = sim.data.stacked_y();
      bc_an_vals[static_cast<size_t>(r)] =
          (y - sim.true_mu).dot(full.y_hat.array().log().matrix());

      RngStream star_stream(seed, {kTagTable1Star, static_cast<std::uint64_t>(c),
                                   static_cast<std::uint64_t>(r)});
      bc_mc_vals[static_cast<size_t>(r)] =
          full.cond_loglik -
          star_loglik_mean(sim.true_mu, full.y_hat, S, star_stream);

      rep_failed[static_cast<size_t>(r)] =
          fit_fail[static_cast<size_t>(r)] != 0 ||
          refit_fail[static_cast<size_t>(r)] != 0;
    });

    ConfigRow row;
    row.n_per_cluster = design.n_per_cluster;
    row.sigma_b = design.sigma_b;
    row.replicates = R;
    const MeanSe k_ms = mean_and_se(k_vals);
    const MeanSe mc_ms = mean_and_se(bc_mc_vals);
    const MeanSe an_ms = mean_and_se(bc_an_vals);
    row.mean_K = k_ms.mean;
    row.K_se = k_ms.se;
    row.bc_mc = mc_ms.mean;
    row.bc_mc_se = mc_ms.se;
    row.bc_an = an_ms.mean;
    row.bc_an_se = an_ms.se;
    int failures = 0;
    for (int r = 0; r < R; ++r) {
      row.fit_failures += fit_fail[static_cast<size_t>(r)];
      row.refit_failures += refit_fail[static_cast<size_t>(r)];
      failures += rep_failed[static_cast<size_t>(r)] ? 1 : 0;
    }
    row.unreliable = failures * 20 > R;
    report.rows.push_back(row);
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

ExperimentReport run_selection_experiment(const std::vector<double>& sigma_b_list,
                                          int R, std::uint64_t seed, int threads) {
  if (R < 1) throw std::invalid_argument("run_selection_experiment: R >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec mixed = ModelSpec::mixed_diagonal(1);
  const FitProcedure fitter = glmm_fitter(mixed);
  const FitProcedure glm = fixed_glm_fitter(mixed.solver);

  ExperimentReport report;
  report.experiment = "selection";
  report.seed = seed;
  report.replicates = R;
  report.inner_replicates = 0;
  report.fitter = fitter.name;

  for (size_t c = 0; c < sigma_b_list.size(); ++c) {
    const SimulationDesign design = make_design(5, sigma_b_list[c]);
    std::vector<double> aic_vals(static_cast<size_t>(R));
    std::vector<double> maic_vals(static_cast<size_t>(R));
    std::vector<double> caic_vals(static_cast<size_t>(R));
    std::vector<char> maic_pref(static_cast<size_t>(R), 0);
    std::vector<char> caic_pref(static_cast<size_t>(R), 0);
    std::vector<char> rep_failed(static_cast<size_t>(R), 0);
    std::vector<int> fit_fail(static_cast<size_t>(R), 0);
    std::vector<int> refit_fail(static_cast<size_t>(R), 0);

    parallel_for(R, threads, [&](int r) {
      RngStream data_stream(seed, {kTagSelection, static_cast<std::uint64_t>(c),
                                   static_cast<std::uint64_t>(r)});
      const SimulatedDataset sim = simulate_dataset(design, data_stream);

      const FitResult fixed = glm.run(sim.data, nullptr);
      const FitResult full = fitter.run(sim.data, nullptr);
      if (!fixed.converged || !full.converged) fit_fail[static_cast<size_t>(r)] = 1;

      const PenaltyResult penalty = compute_penalty_K(sim.data, fitter, full, 1);
      refit_fail[static_cast<size_t>(r)] =
          static_cast<int>(penalty.refit_failures.size());

      const double aic_v = classical_aic(fixed, sim.data.p());
      const double maic_v = maic(full, sim.data.p() + sim.data.q());
      const double caic_v = caic(full, penalty.penalty_K);
      aic_vals[static_cast<size_t>(r)] = aic_v;
      maic_vals[static_cast<size_t>(r)] = maic_v;
      caic_vals[static_cast<size_t>(r)] = caic_v;
      maic_pref[static_cast<size_t>(r)] = aic_v < maic_v;
      caic_pref[static_cast<size_t>(r)] = aic_v < caic_v;
      rep_failed[static_cast<size_t>(r)] =
          fit_fail[static_cast<size_t>(r)] != 0 ||
          refit_fail[static_cast<size_t>(r)] != 0;
    });

    ConfigRow row;
    row.n_per_cluster = design.n_per_cluster;
    row.sigma_b = design.sigma_b;
    row.replicates = R;
    row.mean_aic = mean_and_se(aic_vals).mean;
    row.mean_maic = mean_and_se(maic_vals).mean;
    row.mean_caic = mean_and_se(caic_vals).mean;
    int maic_count = 0, caic_count = 0, failures = 0;
    for (int r = 0; r < R; ++r) {
      maic_count += maic_pref[static_cast<size_t>(r)];
      caic_count += caic_pref[static_cast<size_t>(r)];
      row.fit_failures += fit_fail[static_cast<size_t>(r)];
      row.refit_failures += refit_fail[static_cast<size_t>(r)];
      failures += rep_failed[static_cast<size_t>(r)] ? 1 : 0;
    }
    row.maic_fixed = maic_count;
    row.caic_fixed = caic_count;
    row.unreliable = failures * 20 > R;
    report.rows.push_back(row);
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace poismix
