#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "causalps/hmc.hpp"
#include "causalps/rng.hpp"
#include "causalps/stats.hpp"
#include "test_helpers.hpp"

using namespace causalps;

namespace {

struct StdNormalTarget {
  int d = 1;
  int dim() const { return d; }
  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
    g = -x;
    return -0.5 * x.squaredNorm();
  }
};

// zero-mean Gaussian with fixed precision matrix
struct GaussianTarget {
  Eigen::MatrixXd precision;
  int dim() const { return static_cast<int>(precision.rows()); }
  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
    g = -precision * x;
    return -0.5 * x.dot(precision * x);
  }
};

struct BadInitTarget {
  int dim() const { return 1; }
  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
    g.setZero(1);
    return std::log(x[0]);  // -inf at the zero initialization
  }
};

ChainDraws synthetic_chains(const std::vector<std::vector<double>>& data) {
  ChainDraws c;
  for (const auto& chain : data) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(chain.size()), 1);
    for (std::size_t i = 0; i < chain.size(); ++i)
      m(static_cast<Eigen::Index>(i), 0) = chain[i];
    c.chains.push_back(m);
  }
  return c;
}

}  // namespace

TEST_CASE("fixture targets pass the finite-difference gradient check") {
  Rng rng(101);
  StdNormalTarget t1;
  GaussianTarget t2;
  t2.precision.resize(2, 2);
  t2.precision << 5.2631578947368425, -4.736842105263158,
      -4.736842105263158, 5.2631578947368425;
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd x1(1), x2(2);
    x1 << rng.normal(0, 2);
    x2 << rng.normal(0, 2), rng.normal(0, 2);
    REQUIRE(testutil::max_rel_gradient_error(t1, x1) < 1e-5);
    REQUIRE(testutil::max_rel_gradient_error(t2, x2) < 1e-5);
  }
}

TEST_CASE("standard normal target: pooled moments recover the truth") {
  StdNormalTarget target;
  HmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 500;
  cfg.samples = 1000;
  cfg.seed = 7;
  const ChainDraws draws = run_hmc(target, cfg);
  const Eigen::MatrixXd pooled = draws.pooled();
  REQUIRE(pooled.rows() == 4000);
  const double m = pooled.col(0).mean();
  const double v = (pooled.col(0).array() - m).square().sum() / (pooled.rows() - 1);
  REQUIRE(std::abs(m) < 0.1);
  REQUIRE(std::abs(v - 1.0) < 0.15);
  for (double ar : draws.accept_rates) REQUIRE(ar > 0.5);
}

TEST_CASE("bivariate normal with strong correlation: sample covariance") {
  GaussianTarget target;
  // covariance [[1, .9], [.9, 1]] -> precision (1/0.19) [[1, -.9], [-.9, 1]]
  target.precision.resize(2, 2);
  target.precision << 1.0 / 0.19, -0.9 / 0.19, -0.9 / 0.19, 1.0 / 0.19;
  HmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 1000;
  cfg.samples = 2000;
  cfg.seed = 11;
  const ChainDraws draws = run_hmc(target, cfg);
  const Eigen::MatrixXd pooled = draws.pooled();
  const Eigen::RowVectorXd mu = pooled.colwise().mean();
  const Eigen::MatrixXd centered = pooled.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / (pooled.rows() - 1);
  REQUIRE(std::abs(cov(0, 0) - 1.0) < 0.1);
  REQUIRE(std::abs(cov(1, 1) - 1.0) < 0.1);
  REQUIRE(std::abs(cov(0, 1) - 0.9) < 0.1);
}

TEST_CASE("same seed and config give bit-identical draws; workers do not matter") {
  StdNormalTarget target;
  HmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 200;
  cfg.samples = 300;
  cfg.seed = 123;
  cfg.workers = 1;
  const ChainDraws a = run_hmc(target, cfg);
  const ChainDraws b = run_hmc(target, cfg);
  cfg.workers = 4;
  const ChainDraws c = run_hmc(target, cfg);
  for (int ch = 0; ch < 4; ++ch) {
    REQUIRE((a.chains[ch] - b.chains[ch]).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.chains[ch] - c.chains[ch]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("non-finite log density at initialization is an error") {
  BadInitTarget target;
  HmcConfig cfg;
  cfg.chains = 1;
  cfg.warmup = 10;
  cfg.samples = 10;
  REQUIRE_THROWS_WITH(run_hmc(target, cfg),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("Kolmogorov-Smirnov check on the pooled standard normal draws") {
  StdNormalTarget target;
  HmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 500;
  cfg.samples = 2000;
  cfg.seed = 29;
  const ChainDraws draws = run_hmc(target, cfg);
  Eigen::MatrixXd pooled = draws.pooled();
  std::vector<double> x(pooled.col(0).data(), pooled.col(0).data() + pooled.rows());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d_stat = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf(x[i]);
    d_stat = std::max(d_stat, std::abs(f - static_cast<double>(i + 1) / n));
    d_stat = std::max(d_stat, std::abs(f - static_cast<double>(i) / n));
  }
  // 0.001-level critical value c(alpha)/sqrt(n) with c(0.001) = 1.9495
  REQUIRE(n == 8000.0);
  REQUIRE(d_stat < 1.9495 / std::sqrt(n));
}

TEST_CASE("split R-hat on converged, separated, and copied chains") {
  Rng rng(31);
  // 4 chains drawn iid from the same normal
  std::vector<std::vector<double>> same(4, std::vector<double>(1000));
  for (auto& chain : same)
    for (auto& v : chain) v = rng.normal();
  REQUIRE(rhat(synthetic_chains(same))[0] < 1.02);

  // 2 chains with means 0 and 5
  std::vector<std::vector<double>> apart(2, std::vector<double>(1000));
  for (std::size_t c = 0; c < 2; ++c)
    for (auto& v : apart[c]) v = rng.normal(c == 0 ? 0.0 : 5.0, 1.0);
  REQUIRE(rhat(synthetic_chains(apart))[0] > 1.1);

  // exact copies: between-chain variance is zero
  std::vector<double> one(500);
  for (auto& v : one) v = rng.normal();
  REQUIRE(rhat(synthetic_chains({one, one, one}))[0] <= 1.0 + 1e-9);

  REQUIRE_THROWS_WITH(rhat(synthetic_chains({one})),
                      Catch::Matchers::ContainsSubstring(">=2 chains"));
}

TEST_CASE("effective sample size: iid, autocorrelated, constant") {
  Rng rng(37);
  std::vector<double> iid(4000);
  for (auto& v : iid) v = rng.normal();
  const double ess_iid = effective_sample_size(synthetic_chains({iid}))[0];
  REQUIRE(ess_iid > 3000.0);
  REQUIRE(ess_iid < 5000.0);

  // AR(1) with rho = .9: ESS factor (1-rho)/(1+rho) ~ 1/19
  std::vector<double> ar(4000);
  double prev = 0.0;
  const double rho = 0.9;
  for (auto& v : ar) {
    prev = rho * prev + std::sqrt(1 - rho * rho) * rng.normal();
    v = prev;
  }
  const double ess_ar = effective_sample_size(synthetic_chains({ar}))[0];
  REQUIRE(ess_ar < 4000.0 / 5.0);
  REQUIRE(ess_ar > 50.0);  // not degenerate

  std::vector<double> flat(100, 3.25);
  REQUIRE(effective_sample_size(synthetic_chains({flat}))[0] == 0.0);
}

TEST_CASE("draw dump emits one row per draw") {
  StdNormalTarget target;
  HmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 50;
  cfg.samples = 25;
  cfg.seed = 5;
  const ChainDraws draws = run_hmc(target, cfg);
  std::ostringstream out;
  dump_draws_csv(draws, out, {"theta"});
  const auto lines = std::count(out.str().begin(), out.str().end(), '\n');
  REQUIRE(lines == 51);  // header + 2 * 25
}
