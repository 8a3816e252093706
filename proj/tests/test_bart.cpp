#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "causalps/bart.hpp"
#include "causalps/simulation.hpp"
#include "test_helpers.hpp"

using namespace causalps;

namespace {

Tree root_with_two_leaves() {
  Tree t = Tree::single_leaf();
  const int li = t.alloc();
  const int ri = t.alloc();
  t.nodes[0].left = li;
  t.nodes[0].right = ri;
  t.nodes[0].split_var = 0;
  t.nodes[0].split_value = 0.0;
  t.nodes[static_cast<std::size_t>(li)].parent = 0;
  t.nodes[static_cast<std::size_t>(li)].depth = 1;
  t.nodes[static_cast<std::size_t>(ri)].parent = 0;
  t.nodes[static_cast<std::size_t>(ri)].depth = 1;
  return t;
}

}  // namespace

TEST_CASE("tree log prior: single leaf, one split, and the no-split limit") {
  BartConfig cfg;  // a = .95, b = 2
  const Tree leaf = Tree::single_leaf();
  REQUIRE(tree_log_prior(leaf, cfg) == Catch::Approx(std::log(0.05)).epsilon(1e-12));

  const Tree split = root_with_two_leaves();
  const double expected = std::log(0.95) + 2.0 * std::log(1.0 - 0.95 / 4.0);
  REQUIRE(tree_log_prior(split, cfg) == Catch::Approx(expected).epsilon(1e-12));

  BartConfig no_splits = cfg;
  no_splits.depth_base = 0.0;
  REQUIRE(tree_log_prior(leaf, no_splits) == 0.0);  // log(1)
  REQUIRE(tree_log_prior(split, no_splits) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("tree log prior decreases as a single path deepens") {
  BartConfig cfg;
  Tree t = Tree::single_leaf();
  double prev = tree_log_prior(t, cfg);
  int grow_at = 0;
  for (int depth = 0; depth < 4; ++depth) {
    const int li = t.alloc();
    const int ri = t.alloc();
    auto& nd = t.nodes[static_cast<std::size_t>(grow_at)];
    nd.left = li;
    nd.right = ri;
    nd.split_var = 0;
    t.nodes[static_cast<std::size_t>(li)].depth = nd.depth + 1;
    t.nodes[static_cast<std::size_t>(li)].parent = grow_at;
    t.nodes[static_cast<std::size_t>(ri)].depth = nd.depth + 1;
    t.nodes[static_cast<std::size_t>(ri)].parent = grow_at;
    const double cur = tree_log_prior(t, cfg);
    REQUIRE(cur < prev);
    prev = cur;
    grow_at = li;
  }
}

TEST_CASE("structural prior puts most mass on shallow trees") {
  BartConfig cfg;
  Rng rng(613);
  int shallow = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    if (sample_tree_depth_from_prior(cfg, rng) <= 3) ++shallow;
  REQUIRE(static_cast<double>(shallow) / draws > 0.5);
}

TEST_CASE("probit latent step: truncation sides and moments") {
  Rng rng(617);
  const int n = 100000;
  Eigen::VectorXd fit = Eigen::VectorXd::Zero(n);
  std::vector<int> treated(static_cast<std::size_t>(n), 1);
  const Eigen::VectorXd z = probit_latent_step(fit, treated, rng);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    REQUIRE(z[i] > 0.0);
    sum += z[i];
  }
  REQUIRE(sum / n ==
          Catch::Approx(std::sqrt(2.0 / std::numbers::pi)).margin(0.01));

  std::vector<int> control(static_cast<std::size_t>(n), 0);
  const Eigen::VectorXd zc = probit_latent_step(fit, control, rng);
  for (int i = 0; i < n; ++i) REQUIRE(zc[i] < 0.0);

  // far from the cut the truncation is negligible
  fit.setConstant(5.0);
  const Eigen::VectorXd zf = probit_latent_step(fit, treated, rng);
  REQUIRE(zf.mean() == Catch::Approx(5.0).margin(0.01));
}

TEST_CASE("pure-noise data: fitted propensities concentrate near 0.5") {
  Rng rng(619);
  Dataset d = testutil::random_dataset(rng, 500, 3);
  for (int i = 0; i < 500; ++i)
    d.treatment[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 1 : 0;
  BartConfig cfg;
  cfg.num_trees = 50;
  cfg.burn_in = 200;
  cfg.iterations = 400;
  cfg.seed = 23;
  const PropensityDraws pd = fit_bart_probit(d, cfg);
  const Eigen::VectorXd mean_ps = posterior_mean_ps(pd);
  int close = 0;
  for (int i = 0; i < 500; ++i)
    if (std::abs(mean_ps[i] - 0.5) < 0.05) ++close;
  REQUIRE(close >= 475);  // >= 95% of subjects
}

TEST_CASE("single binary confounder with 0.2 / 0.8 group propensities") {
  Rng rng(631);
  Dataset d;
  const int n = 2000;
  d.treatment.resize(n);
  d.outcome.assign(n, 0);
  d.confounders.resize(n, 1);
  d.columns = {{"G", ColumnKind::binary}};
  for (int i = 0; i < n; ++i) {
    const double g = i < n / 2 ? 0.0 : 1.0;
    d.confounders(i, 0) = g;
    const double pi = g == 1.0 ? 0.8 : 0.2;
    d.treatment[static_cast<std::size_t>(i)] = rng.uniform() < pi ? 1 : 0;
    d.outcome[static_cast<std::size_t>(i)] = rng.uniform() < 0.3 ? 1 : 0;
  }
  BartConfig cfg;
  cfg.num_trees = 50;
  cfg.burn_in = 200;
  cfg.iterations = 400;
  cfg.seed = 29;
  const PropensityDraws pd = fit_bart_probit(d, cfg);
  const Eigen::VectorXd mean_ps = posterior_mean_ps(pd);
  double g0 = 0.0, g1 = 0.0;
  for (int i = 0; i < n / 2; ++i) g0 += mean_ps[i];
  for (int i = n / 2; i < n; ++i) g1 += mean_ps[i];
  g0 /= n / 2;
  g1 /= n / 2;
  REQUIRE(g0 == Catch::Approx(0.2).margin(0.05));
  REQUIRE(g1 == Catch::Approx(0.8).margin(0.05));
}

TEST_CASE("fitted propensities track the truth on the two-confounder scenario") {
  Rng rng(641);
  auto [d, spec] = gen_simple(1000, SimpleVariant::correct, rng);
  Eigen::VectorXd true_pi(d.n());
  for (int i = 0; i < d.n(); ++i)
    true_pi[i] = expit(0.5 * d.confounders(i, 0) + 0.5 * d.confounders(i, 1));
  BartConfig cfg;
  cfg.num_trees = 200;
  cfg.burn_in = 300;
  cfg.iterations = 600;
  cfg.seed = 31;
  const PropensityDraws pd = fit_bart_probit(d, cfg);
  const Eigen::VectorXd mean_ps = posterior_mean_ps(pd);

  const double mx = mean_ps.mean(), my = true_pi.mean();
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < d.n(); ++i) {
    sxy += (mean_ps[i] - mx) * (true_pi[i] - my);
    sxx += (mean_ps[i] - mx) * (mean_ps[i] - mx);
    syy += (true_pi[i] - my) * (true_pi[i] - my);
  }
  REQUIRE(sxy / std::sqrt(sxx * syy) > 0.8);

  // clamped strictly inside the unit interval
  REQUIRE(pd.pi.minCoeff() >= 1e-6);
  REQUIRE(pd.pi.maxCoeff() <= 1.0 - 1e-6);
}

TEST_CASE("sum-of-trees prediction is invariant to tree order") {
  Rng rng(643);
  Dataset d = testutil::random_dataset(rng, 200, 2);
  BartConfig cfg;
  cfg.num_trees = 30;
  cfg.burn_in = 50;
  cfg.iterations = 50;
  cfg.seed = 37;
  BartForest forest;
  fit_bart_probit(d, cfg, &forest);
  REQUIRE(forest.trees.size() == 30);

  BartForest shuffled = forest;
  std::reverse(shuffled.trees.begin(), shuffled.trees.end());
  for (int i = 0; i < 20; ++i) {
    const Eigen::RowVectorXd x = d.confounders.row(i);
    REQUIRE(forest.predict(x) == Catch::Approx(shuffled.predict(x)).margin(1e-12));
  }

  // split values live inside the observed range of their variable
  for (const auto& t : forest.trees) {
    for (int idx : t.internal_indices()) {
      const auto& nd = t.nodes[static_cast<std::size_t>(idx)];
      REQUIRE(nd.split_value >= d.confounders.col(nd.split_var).minCoeff());
      REQUIRE(nd.split_value <= d.confounders.col(nd.split_var).maxCoeff());
    }
  }
}

TEST_CASE("Gibbs chain is deterministic given the seed") {
  Rng rng(647);
  Dataset d = testutil::random_dataset(rng, 150, 2);
  BartConfig cfg;
  cfg.num_trees = 20;
  cfg.burn_in = 50;
  cfg.iterations = 100;
  cfg.seed = 41;
  const PropensityDraws a = fit_bart_probit(d, cfg);
  const PropensityDraws b = fit_bart_probit(d, cfg);
  REQUIRE((a.pi - b.pi).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate inputs are rejected") {
  BartConfig cfg;
  Dataset empty;
  empty.confounders.resize(0, 0);
  REQUIRE_THROWS(fit_bart_probit(empty, cfg));
  Rng rng(653);
  Dataset no_covariates = testutil::random_dataset(rng, 20, 1);
  no_covariates.confounders.resize(20, 0);
  no_covariates.columns.clear();
  REQUIRE_THROWS(fit_bart_probit(no_covariates, cfg));
}

TEST_CASE("forest summary reports depths and split usage") {
  Rng rng(659);
  Dataset d = testutil::random_dataset(rng, 200, 3);
  BartConfig cfg;
  cfg.num_trees = 25;
  cfg.burn_in = 100;
  cfg.iterations = 100;
  cfg.seed = 43;
  BartForest forest;
  fit_bart_probit(d, cfg, &forest);
  const auto summary = forest_summary_json(forest, 3);
  REQUIRE(summary.at("num_trees").get<int>() == 25);
  int total = 0;
  for (const auto& c : summary.at("depth_counts")) total += c.get<int>();
  REQUIRE(total == 25);
  REQUIRE(summary.at("split_variable_usage").size() == 3);
}
