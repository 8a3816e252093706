#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "causalps/simulation.hpp"
#include "causalps/stats.hpp"
#include "test_helpers.hpp"

using namespace causalps;

TEST_CASE("simple scenario: symmetric law gives a 0.5 marginal treatment rate") {
  Rng rng(711);
  auto [d, spec] = gen_simple(100000, SimpleVariant::correct, rng);
  REQUIRE(d.p() == 2);
  double rate = 0.0;
  for (int x : d.treatment) rate += x;
  rate /= d.n();
  REQUIRE(rate == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("simple variants expose the right confounder views") {
  Rng rng(713);
  auto [d_under, spec_under] = gen_simple(100, SimpleVariant::under, rng);
  REQUIRE(spec_under.visible == std::vector<int>{0});
  REQUIRE(subset_columns(d_under, spec_under.visible).p() == 1);

  auto [d_over, spec_over] = gen_simple(100, SimpleVariant::over, rng);
  REQUIRE(d_over.p() == 10);
  REQUIRE(spec_over.visible.size() == 10);
  // the 8 extra columns play no role in either generating equation
  for (int j = 2; j < 10; ++j) {
    REQUIRE(spec_over.beta_x[j] == 0.0);
    REQUIRE(spec_over.beta_y[j] == 0.0);
  }
}

TEST_CASE("generators are deterministic given the seed") {
  Rng a(715), b(715);
  auto [d1, s1] = gen_simple(200, SimpleVariant::correct, a);
  auto [d2, s2] = gen_simple(200, SimpleVariant::correct, b);
  REQUIRE(d1.treatment == d2.treatment);
  REQUIRE(d1.outcome == d2.outcome);
  REQUIRE((d1.confounders - d2.confounders).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("true ATE oracle: closed forms and the null effect") {
  ScenarioSpec flat;
  flat.n = 100;
  flat.p = 1;
  flat.law = ConfounderLaw::iid_standard_normal;
  flat.beta_x = Eigen::VectorXd::Zero(1);
  flat.beta_y = Eigen::VectorXd::Zero(1);
  flat.beta_tr = 1.0;
  Rng rng(717);
  const TrueAte a = true_ate_oracle(flat, 100000, rng);
  REQUIRE(a.value == Catch::Approx(expit(1.0) - 0.5).margin(1e-12));
  REQUIRE(a.value == Catch::Approx(0.23106).margin(1e-5));
  REQUIRE(a.mc_se == 0.0);  // constant integrand

  flat.beta_tr = 0.0;
  flat.beta_y[0] = 0.7;
  const TrueAte null = true_ate_oracle(flat, 100000, rng);
  REQUIRE(null.value == 0.0);
}

TEST_CASE("table3 preset honors every published constraint") {
  const ScenarioSpec spec = make_table3_spec();
  REQUIRE(spec.p == 100);
  REQUIRE(spec.beta_tr == -2.0);
  REQUIRE(count_zero_coefficients(spec) == 18);
  REQUIRE(spec.beta_x.minCoeff() == Catch::Approx(-1.1));
  REQUIRE(spec.beta_x.maxCoeff() == Catch::Approx(1.1));
  std::vector<double> bx(spec.beta_x.data(), spec.beta_x.data() + spec.p);
  REQUIRE(quantile(bx, 0.25) == Catch::Approx(-0.2).margin(1e-12));
  REQUIRE(quantile(bx, 0.75) == Catch::Approx(0.2).margin(1e-12));
  REQUIRE(std::abs(spec.beta_y.sum()) < 1e-12);

  // marginal treatment ~ 0.7 and event rate ~ 0.1 at n = 1e5
  ScenarioSpec big = spec;
  big.n = 100000;
  Rng rng(719);
  const Dataset d = gen_from_spec(big, rng);
  double treated = 0.0, events = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    treated += d.treatment[static_cast<std::size_t>(i)];
    events += d.outcome[static_cast<std::size_t>(i)];
  }
  REQUIRE(treated / d.n() == Catch::Approx(0.7).margin(0.02));
  REQUIRE(events / d.n() == Catch::Approx(0.1).margin(0.02));

  // ATE close to the published -0.15
  Rng oracle_rng(721);
  const TrueAte truth = true_ate_oracle(spec, 500000, oracle_rng);
  REQUIRE(truth.value == Catch::Approx(-0.15).margin(0.04));
}

TEST_CASE("sparse preset: 90 exact zeros, strong survivors, same outcome law") {
  const ScenarioSpec table3 = make_table3_spec();
  const ScenarioSpec sparse = make_sparse_spec();
  REQUIRE(count_zero_coefficients(sparse) == 90);
  int active = 0;
  for (int j = 0; j < sparse.p; ++j) {
    if (sparse.beta_x[j] == 0.0) continue;
    ++active;
    REQUIRE(std::abs(sparse.beta_x[j]) >= 0.8);
    REQUIRE(std::abs(sparse.beta_x[j]) <= 1.1);
    REQUIRE(sparse.beta_y[j] != 0.0);  // survivors stay confounders
  }
  REQUIRE(active == 10);
  REQUIRE((sparse.beta_y - table3.beta_y).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sparse.beta0_y == table3.beta0_y);

  ScenarioSpec big = sparse;
  big.n = 100000;
  Rng rng(723);
  const Dataset d = gen_from_spec(big, rng);
  double treated = 0.0;
  for (int x : d.treatment) treated += x;
  REQUIRE(treated / d.n() == Catch::Approx(0.7).margin(0.02));
}

TEST_CASE("no confounding: naive and IPW agree in expectation") {
  ScenarioSpec spec = make_table3_spec(20000);
  spec.beta_x.setZero();
  spec.beta0_x = 0.0;
  Rng rng(729);
  const Dataset d = gen_highdim(spec, rng);
  const EstimateWithCI naive = naive_estimate(d);
  const EstimateWithCI ipw = ipw_mle_sandwich(d);
  REQUIRE(std::abs(naive.point - ipw.point) < 0.015);
}

TEST_CASE("null scenario: bias within Monte Carlo error, calibrated coverage") {
  ScenarioSpec spec;
  spec.n = 200;
  spec.p = 2;
  spec.law = ConfounderLaw::iid_standard_normal;
  spec.beta_x = Eigen::VectorXd::Zero(2);
  spec.beta_y = Eigen::VectorXd::Zero(2);
  spec.beta_tr = 0.0;
  spec.beta0_y = -0.3;
  spec.visible = {0, 1};

  StudyConfig cfg;
  cfg.replications = 500;
  cfg.seed = 733;
  cfg.workers = 2;
  cfg.true_ate_mc = 100000;
  const MetricsTable table =
      run_study(spec, {{"naive", PsMode::integrated}, {"ipw", PsMode::integrated}},
                cfg);
  REQUIRE(table.true_ate == 0.0);
  for (const auto& row : table.rows) {
    const double mc_se = std::sqrt(row.mse / cfg.replications);
    REQUIRE(std::abs(row.bias) < 2.0 * mc_se + 1e-9);
    REQUIRE(row.coverage_pct >= 92.0);
    REQUIRE(row.coverage_pct <= 98.0);
    // bookkeeping identity: MSE = bias^2 + variance of the points
    REQUIRE(row.mse ==
            Catch::Approx(row.bias * row.bias + row.point_variance).margin(1e-12));
  }
}

TEST_CASE("run_study is invariant to the worker count") {
  ScenarioSpec spec = make_simple_spec(150, SimpleVariant::correct);
  StudyConfig cfg;
  cfg.replications = 12;
  cfg.seed = 739;
  cfg.true_ate_mc = 100000;
  const std::vector<EstimatorSpec> ests{{"naive", PsMode::integrated},
                                        {"ipw", PsMode::integrated}};
  cfg.workers = 1;
  const MetricsTable t1 = run_study(spec, ests, cfg);
  cfg.workers = 4;
  const MetricsTable t4 = run_study(spec, ests, cfg);
  cfg.workers = 8;
  const MetricsTable t8 = run_study(spec, ests, cfg);
  for (std::size_t e = 0; e < ests.size(); ++e) {
    REQUIRE(t1.rows[e].bias == t4.rows[e].bias);
    REQUIRE(t1.rows[e].bias == t8.rows[e].bias);
    REQUIRE(t1.rows[e].mse == t4.rows[e].mse);
    REQUIRE(t1.rows[e].coverage_pct == t8.rows[e].coverage_pct);
  }
}

TEST_CASE("run_study with a Bayesian estimator is reproducible") {
  ScenarioSpec spec = make_simple_spec(120, SimpleVariant::correct);
  StudyConfig cfg;
  cfg.replications = 3;
  cfg.seed = 741;
  cfg.workers = 2;
  cfg.true_ate_mc = 100000;
  cfg.chains = 1;
  cfg.warmup = 150;
  cfg.draws = 150;
  cfg.j_draws = 5;
  const std::vector<EstimatorSpec> ests{{"student_t", PsMode::integrated},
                                        {"student_t", PsMode::mean_ps}};
  const MetricsTable a = run_study(spec, ests, cfg);
  const MetricsTable b = run_study(spec, ests, cfg);
  for (std::size_t e = 0; e < ests.size(); ++e) {
    REQUIRE(a.rows[e].bias == b.rows[e].bias);
    REQUIRE(a.rows[e].mse == b.rows[e].mse);
    REQUIRE(a.rows[e].failures == 0);
  }
}

TEST_CASE("estimator failures are excluded and counted") {
  // two treated subjects: bootstrap resamples often lose the treated arm and
  // the study must keep going, recording failures
  ScenarioSpec spec;
  spec.n = 40;
  spec.p = 1;
  spec.law = ConfounderLaw::iid_standard_normal;
  spec.beta_x = Eigen::VectorXd::Zero(1);
  spec.beta0_x = -2.5;  // rare treatment
  spec.beta_y = Eigen::VectorXd::Zero(1);
  spec.beta_tr = 0.5;
  spec.visible = {0};
  StudyConfig cfg;
  cfg.replications = 8;
  cfg.seed = 743;
  cfg.workers = 2;
  cfg.true_ate_mc = 100000;
  cfg.bootstrap_b = 120;
  const MetricsTable t =
      run_study(spec, {{"naive", PsMode::integrated},
                       {"bootstrap_ipw", PsMode::integrated}},
                cfg);
  REQUIRE(t.rows[1].failures > 0);
  REQUIRE(t.rows[1].failures + t.rows[1].used == cfg.replications);
}
