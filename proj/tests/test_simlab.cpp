#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "poismix/report_io.hpp"
#include "poismix/rng.hpp"
#include "poismix/simlab.hpp"

using namespace poismix;

TEST_CASE("simulate_dataset dimensions and degenerate sigma") {
  SimulationDesign design;  // m = 10, n_i = 5
  design.sigma_b = 0.0;
  RngStream stream(1, {40});
  const SimulatedDataset sim = simulate_dataset(design, stream);
  CHECK(sim.data.num_clusters() == 10);
  CHECK(sim.data.total_obs() == 50);
  CHECK(sim.u.cwiseAbs().maxCoeff() == 0.0);
  // x_j = j over 0..4; mu depends on j only
  for (int i = 0; i < 10; ++i) {
    const Cluster& cl = sim.data.cluster(i);
    for (int j = 0; j < 5; ++j) {
      CHECK(cl.X(j, 0) == 1.0);
      CHECK(cl.X(j, 1) == double(j));
      CHECK(sim.true_mu(i * 5 + j) ==
            doctest::Approx(std::exp(1.0 + 0.2 * j)).epsilon(1e-15));
    }
  }
}

TEST_CASE("simulated counts have the designed conditional means") {
  SimulationDesign design;
  design.m = 1;
  design.n_per_cluster = 5;
  design.sigma_b = 0.6;
  // fix u by drawing once, then check E[y | u] empirically over replicates
  RngStream first(42, {41, 0});
  const SimulatedDataset ref = simulate_dataset(design, first);
  const int reps = 100000;
  Vec sums = Vec::Zero(5);
  RngStream ystream(42, {41, 1});
  for (int r = 0; r < reps; ++r) {
    for (int j = 0; j < 5; ++j) {
      sums(j) += static_cast<double>(ystream.poisson(ref.true_mu(j)));
    }
  }
  for (int j = 0; j < 5; ++j) {
    const double mean = sums(j) / reps;
    const double se = std::sqrt(ref.true_mu(j) / reps);
    CHECK(std::abs(mean - ref.true_mu(j)) < 3.5 * se);
  }
}

TEST_CASE("poisson_shift_oracle exact cases") {
  // g = 1: both sides are mu
  auto [l1, r1] = poisson_shift_oracle([](long) { return 1.0; }, 3.2, 1e-12);
  CHECK(l1 == doctest::Approx(3.2).epsilon(1e-12));
  CHECK(r1 == doctest::Approx(3.2).epsilon(1e-12));

  // g(k) = k: both sides are mu^2 (factorial moment)
  auto [l2, r2] =
      poisson_shift_oracle([](long k) { return double(k); }, 2.5, 1e-12);
  CHECK(l2 == doctest::Approx(6.25).epsilon(1e-11));
  CHECK(r2 == doctest::Approx(6.25).epsilon(1e-11));

  // bounded nonlinear g
  auto [l3, r3] = poisson_shift_oracle(
      [](long k) { return std::log(k + 1.5); }, 0.7, 1e-12);
  CHECK(std::abs(l3 - r3) < 1e-10);
}

TEST_CASE("poisson_shift_oracle randomized identity") {
  RngStream rng(77, {42});
  for (int rep = 0; rep < 100; ++rep) {
    const double mu = 0.2 + 6.0 * rng.uniform01();
    const double a = rng.normal(), b = rng.normal(), c = 0.5 + rng.uniform01();
    auto g = [a, b, c](long k) {
      return a + b * std::sin(0.7 * k) + std::log(k + c + 0.5);
    };
    const double tol = 1e-11;
    auto [lhs, rhs] = poisson_shift_oracle(g, mu, tol);
    CHECK(std::abs(lhs - rhs) <= 10.0 * tol);
  }
}

TEST_CASE("bc oracles agree and vanish for a data-independent estimator") {
  SimulationDesign design;  // n_i = 5, sigma_b = 0.25
  const FitProcedure constant = constant_fitter(4.0);
  const BcEstimate mc = bc_monte_carlo(design, constant, 120, 60, 5, 2);
  CHECK(std::abs(mc.estimate) < 3.0 * mc.std_error);
  const BcEstimate an = bc_analytic(design, constant, 120, 5, 2);
  CHECK(std::abs(an.estimate) < 3.0 * an.std_error);

  const FitProcedure glm = fixed_glm_fitter();
  const BcEstimate mc2 = bc_monte_carlo(design, glm, 150, 80, 6, 2);
  const BcEstimate an2 = bc_analytic(design, glm, 150, 6, 2);
  const double combined = std::sqrt(mc2.std_error * mc2.std_error +
                                    an2.std_error * an2.std_error);
  CHECK(std::abs(mc2.estimate - an2.estimate) < 3.0 * combined);
  // the fixed model has two parameters; its optimism sits near 2
  CHECK(mc2.estimate > 0.5);
  CHECK(mc2.estimate < 4.0);
}

TEST_CASE("experiment reports are bit-reproducible across runs and threads") {
  const FitProcedure glm = fixed_glm_fitter();
  const std::vector<Table1Config> configs = {{5, 0.25}};
  const ExperimentReport a = run_table1(configs, 6, 5, 99, 1, &glm);
  const ExperimentReport b = run_table1(configs, 6, 5, 99, 1, &glm);
  const ExperimentReport c = run_table1(configs, 6, 5, 99, 2, &glm);
  CHECK(experiment_json(a) == experiment_json(b));
  CHECK(experiment_json(a) == experiment_json(c));
  CHECK(experiment_csv(a) == experiment_csv(c));
}

TEST_CASE("run_table1 smoke produces the expected row shape") {
  const FitProcedure glm = fixed_glm_fitter();
  const std::vector<Table1Config> configs = {{5, 0.25}, {5, 0.5}};
  const ExperimentReport report = run_table1(configs, 8, 6, 123, 2, &glm);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.experiment == "table1");
  CHECK(report.fitter == "fixed-glm");
  for (const ConfigRow& row : report.rows) {
    CHECK(row.replicates == 8);
    CHECK(row.mean_K.has_value());
    CHECK(row.bc_mc.has_value());
    CHECK(row.bc_an.has_value());
    CHECK(row.K_se.value() >= 0.0);
    CHECK_FALSE(row.maic_fixed.has_value());
  }
}

TEST_CASE("run_selection_experiment smoke") {
  const ExperimentReport report = run_selection_experiment({0.25}, 5, 31, 2);
  REQUIRE(report.rows.size() == 1);
  const ConfigRow& row = report.rows[0];
  CHECK(report.experiment == "selection");
  REQUIRE(row.maic_fixed.has_value());
  REQUIRE(row.caic_fixed.has_value());
  CHECK(*row.maic_fixed >= 0);
  CHECK(*row.maic_fixed <= 5);
  CHECK(*row.caic_fixed >= 0);
  CHECK(*row.caic_fixed <= 5);
  CHECK(row.mean_aic.has_value());
  CHECK(row.mean_maic.has_value());
  CHECK(row.mean_caic.has_value());
  CHECK_FALSE(row.bc_mc.has_value());
}

TEST_CASE("table1_configs lists the six studied configurations") {
  const auto configs = table1_configs();
  REQUIRE(configs.size() == 6);
  CHECK(configs[0].n_per_cluster == 5);
  CHECK(configs[0].sigma_b == 0.25);
  CHECK(configs[5].n_per_cluster == 15);
  CHECK(configs[5].sigma_b == 1.0);
}

TEST_CASE("design validation") {
  SimulationDesign design;
  design.m = 0;
  CHECK_THROWS_AS(design.validate(), std::invalid_argument);
  design.m = 10;
  design.sigma_b = -0.1;
  CHECK_THROWS_AS(design.validate(), std::invalid_argument);
}
