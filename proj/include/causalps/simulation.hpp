#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "causalps/bart.hpp"
#include "causalps/baselines.hpp"
#include "causalps/dataset.hpp"
#include "causalps/outcome.hpp"
#include "causalps/parallel.hpp"
#include "causalps/rng.hpp"
#include "causalps/stats.hpp"
#include "causalps/treatment_models.hpp"

namespace causalps {

enum class ConfounderLaw { iid_standard_normal, independent_bernoulli };

// Generating process for one simulation scenario: confounder law, logistic
// treatment and outcome models, and the confounder subset the estimators
// are allowed to see (under/over-specification).
struct ScenarioSpec {
  int n = 0;
  int p = 0;
  ConfounderLaw law = ConfounderLaw::iid_standard_normal;
  std::vector<double> prevalence;  // Bernoulli law only, length p
  Eigen::VectorXd beta_x;          // treatment coefficients, length p
  double beta0_x = 0.0;
  Eigen::VectorXd beta_y;          // outcome coefficients, length p
  double beta0_y = 0.0;
  double beta_tr = 0.0;            // treatment effect, logit scale
  std::vector<int> visible;        // estimator-visible confounder indices

  void check() const {
    if (n < 1 || p < 1) throw std::invalid_argument("ScenarioSpec: n, p >= 1");
    if (beta_x.size() != p || beta_y.size() != p)
      throw std::invalid_argument("ScenarioSpec: coefficient lengths must equal p");
    if (law == ConfounderLaw::independent_bernoulli) {
      if (static_cast<int>(prevalence.size()) != p)
        throw std::invalid_argument("ScenarioSpec: prevalence length must equal p");
      for (double q : prevalence)
        if (!(q > 0.0 && q < 1.0))
          throw std::invalid_argument("ScenarioSpec: prevalences in (0,1)");
    }
    for (int j : visible)
      if (j < 0 || j >= p)
        throw std::invalid_argument("ScenarioSpec: visible index out of range");
  }
};

namespace detail {

inline Eigen::RowVectorXd draw_confounders(const ScenarioSpec& spec, Rng& rng) {
  Eigen::RowVectorXd c(spec.p);
  if (spec.law == ConfounderLaw::iid_standard_normal) {
    for (int j = 0; j < spec.p; ++j) c[j] = rng.normal();
  } else {
    for (int j = 0; j < spec.p; ++j)
      c[j] = rng.uniform() < spec.prevalence[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  }
  return c;
}

}  // namespace detail

// Draws a dataset from the scenario's generating equations:
//   X ~ Bernoulli{ expit(beta0_x + beta_x . C) }
//   Y ~ Bernoulli{ expit(beta0_y + beta_tr X + beta_y . C) }
inline Dataset gen_from_spec(const ScenarioSpec& spec, Rng& rng) {
  spec.check();
  Dataset d;
  d.treatment.resize(static_cast<std::size_t>(spec.n));
  d.outcome.resize(static_cast<std::size_t>(spec.n));
  d.confounders.resize(spec.n, spec.p);
  const bool binary = spec.law == ConfounderLaw::independent_bernoulli;
  for (int j = 0; j < spec.p; ++j)
    d.columns.push_back({"C" + std::to_string(j + 1),
                         binary ? ColumnKind::binary : ColumnKind::continuous});
  for (int i = 0; i < spec.n; ++i) {
    const Eigen::RowVectorXd c = detail::draw_confounders(spec, rng);
    d.confounders.row(i) = c;
    const double eta_x = spec.beta0_x + c * spec.beta_x;
    const int x = rng.uniform() < expit(eta_x) ? 1 : 0;
    const double eta_y = spec.beta0_y + spec.beta_tr * x + c * spec.beta_y;
    d.treatment[static_cast<std::size_t>(i)] = x;
    d.outcome[static_cast<std::size_t>(i)] = rng.uniform() < expit(eta_y) ? 1 : 0;
  }
  return d;
}

enum class SimpleVariant { correct, over, under };

inline std::string to_string(SimpleVariant v) {
  switch (v) {
    case SimpleVariant::correct: return "correct";
    case SimpleVariant::over: return "over";
    case SimpleVariant::under: return "under";
  }
  return "?";
}

// The two-confounder scenario: X ~ Bern{expit(.5 C1 + .5 C2)},
// Y ~ Bern{expit(X - .5 C1 - .5 C2)}, C1, C2 iid standard normal. The over
// variant appends 8 pure-noise normals to the visible set; the under
// variant hides C2 from the estimators.
inline ScenarioSpec make_simple_spec(int n, SimpleVariant variant) {
  ScenarioSpec spec;
  spec.n = n;
  spec.law = ConfounderLaw::iid_standard_normal;
  spec.p = variant == SimpleVariant::over ? 10 : 2;
  spec.beta_x = Eigen::VectorXd::Zero(spec.p);
  spec.beta_y = Eigen::VectorXd::Zero(spec.p);
  spec.beta_x[0] = spec.beta_x[1] = 0.5;
  spec.beta_y[0] = spec.beta_y[1] = -0.5;
  spec.beta_tr = 1.0;
  switch (variant) {
    case SimpleVariant::correct: spec.visible = {0, 1}; break;
    case SimpleVariant::over:
      for (int j = 0; j < 10; ++j) spec.visible.push_back(j);
      break;
    case SimpleVariant::under: spec.visible = {0}; break;
  }
  return spec;
}

inline std::pair<Dataset, ScenarioSpec> gen_simple(int n, SimpleVariant variant,
                                                   Rng& rng) {
  if (n < 20) throw std::invalid_argument("gen_simple: n >= 20");
  const ScenarioSpec spec = make_simple_spec(n, variant);
  return {gen_from_spec(spec, rng), spec};
}

inline Dataset gen_highdim(const ScenarioSpec& spec, Rng& rng) {
  if (spec.law != ConfounderLaw::independent_bernoulli)
    throw std::invalid_argument("gen_highdim: Bernoulli confounder law expected");
  return gen_from_spec(spec, rng);
}

struct TrueAte {
  double value = 0.0;
  double mc_se = 0.0;
};

// Monte Carlo estimate of Delta = E_C[ P(Y=1 | X=1, C) - P(Y=1 | X=0, C) ]
// over fresh confounder draws.
inline TrueAte true_ate_oracle(const ScenarioSpec& spec, long n_mc, Rng& rng) {
  spec.check();
  if (n_mc < 100000) throw std::invalid_argument("true_ate_oracle: n_mc >= 1e5");
  double sum = 0.0, sumsq = 0.0;
  for (long i = 0; i < n_mc; ++i) {
    const Eigen::RowVectorXd c = detail::draw_confounders(spec, rng);
    const double eta = spec.beta0_y + c * spec.beta_y;
    const double diff = expit(eta + spec.beta_tr) - expit(eta);
    sum += diff;
    sumsq += diff * diff;
  }
  TrueAte out;
  out.value = sum / static_cast<double>(n_mc);
  const double var =
      (sumsq / static_cast<double>(n_mc) - out.value * out.value) /
      static_cast<double>(n_mc);
  out.mc_se = std::sqrt(std::max(0.0, var));
  return out;
}

// --- replication harness ---------------------------------------------------

struct EstimatorSpec {
  std::string model;  // naive | ipw | bootstrap_ipw | student_t | horseshoe | bart
  PsMode mode = PsMode::integrated;  // Bayesian models only

  std::string name() const {
    if (model == "naive" || model == "ipw" || model == "bootstrap_ipw")
      return model;
    return model + "/" + to_string(mode);
  }

  bool bayesian() const {
    return model == "student_t" || model == "horseshoe" || model == "bart";
  }
};

struct StudyConfig {
  int replications = 200;
  std::uint64_t seed = 0;
  int workers = 0;
  long true_ate_mc = 1000000;
  // HMC budgets for the logistic treatment models
  int chains = 2;
  int warmup = 500;
  int draws = 500;
  int thin_to = 1000;
  int max_leapfrog = 32;
  double target_accept = 0.8;
  // outcome draws per propensity draw; mean_ps uses j_draws * K total so the
  // two modes are resolved from the same number of posterior draws
  int j_draws = 10;
  OutcomeHyper hyper;
  // BART budgets
  int bart_trees = 200;
  int bart_burn = 500;
  int bart_iterations = 1000;
  int bart_thin = 1;
  // bootstrap replicates
  int bootstrap_b = 200;
};

struct EstimatorMetrics {
  std::string name;
  double bias = 0.0;
  double mse = 0.0;             // = bias^2 + point_variance
  double point_variance = 0.0;  // population variance of the point estimates
  double mean_ci_width = 0.0;
  double coverage_pct = 0.0;
  int failures = 0;
  int used = 0;
};

struct MetricsTable {
  std::vector<EstimatorMetrics> rows;
  int replications = 0;
  double true_ate = 0.0;
  double true_ate_mc_se = 0.0;
};

namespace detail {

struct ReplicationResult {
  double point = 0.0, lower = 0.0, upper = 0.0;
  bool ok = false;
};

struct ModelIds {
  // fixed stream offsets inside one replication
  static constexpr std::uint64_t dataset = 0;
  static constexpr std::uint64_t student_t = 1;
  static constexpr std::uint64_t horseshoe = 2;
  static constexpr std::uint64_t bart = 3;
  static constexpr std::uint64_t bootstrap = 4;
  static constexpr std::uint64_t outcome_base = 16;  // + estimator index
};

inline PropensityDraws fit_for_model(const std::string& model,
                                     const Dataset& standardized,
                                     const Dataset& raw, const StudyConfig& cfg,
                                     const Rng& rep_rng) {
  if (model == "bart") {
    BartConfig bc;
    bc.num_trees = cfg.bart_trees;
    bc.burn_in = cfg.bart_burn;
    bc.iterations = cfg.bart_iterations;
    bc.thin = cfg.bart_thin;
    bc.seed = rep_rng.derive(ModelIds::bart).seed();
    return fit_bart_probit(raw, bc);
  }
  TreatmentSamplerConfig tc;
  tc.hmc.chains = cfg.chains;
  tc.hmc.warmup = cfg.warmup;
  tc.hmc.samples = cfg.draws;
  tc.hmc.max_leapfrog = cfg.max_leapfrog;
  tc.hmc.target_accept = cfg.target_accept;
  tc.hmc.workers = 1;  // replications are the parallel axis
  tc.thin_to = cfg.thin_to;
  if (model == "horseshoe") {
    tc.hmc.seed = rep_rng.derive(ModelIds::horseshoe).seed();
    return fit_treatment_model(standardized, PriorSpec::horseshoe(), tc);
  }
  tc.hmc.seed = rep_rng.derive(ModelIds::student_t).seed();
  return fit_treatment_model(standardized, PriorSpec::student_t(), tc);
}

}  // namespace detail

// Runs R independent replications: fresh dataset, every estimator's point
// and 95% interval, then bias / MSE / mean width / coverage per estimator.
// Estimator failures are excluded from that estimator's aggregates and
// counted. Replication r draws everything from the stream derived as
// (seed, r), so results do not depend on the worker count.
inline MetricsTable run_study(const ScenarioSpec& spec,
                              const std::vector<EstimatorSpec>& estimators,
                              const StudyConfig& cfg) {
  spec.check();
  if (cfg.replications < 2)
    throw std::invalid_argument("run_study: replications >= 2");
  if (estimators.empty())
    throw std::invalid_argument("run_study: no estimators");

  const Rng base(cfg.seed);
  Rng truth_rng = base.derive(0xA7E);
  const TrueAte truth = true_ate_oracle(spec, cfg.true_ate_mc, truth_rng);

  const std::size_t r_count = static_cast<std::size_t>(cfg.replications);
  const std::size_t e_count = estimators.size();
  std::vector<detail::ReplicationResult> results(r_count * e_count);

  parallel_for(r_count, cfg.workers, [&](std::size_t r) {
    const Rng rep = base.derive(r + 1);
    Rng data_rng = rep.derive(detail::ModelIds::dataset);
    const Dataset full = gen_from_spec(spec, data_rng);
    const Dataset vis = spec.visible.empty() ? full
                                             : subset_columns(full, spec.visible);
    // standardized view for the regularized logistic fits
    std::optional<Dataset> standardized;
    std::map<std::string, PropensityDraws> fits;

    for (std::size_t e = 0; e < e_count; ++e) {
      const auto& est = estimators[e];
      auto& slot = results[r * e_count + e];
      try {
        if (est.model == "naive") {
          const EstimateWithCI x = naive_estimate(vis);
          slot = {x.point, x.lower, x.upper, true};
        } else if (est.model == "ipw") {
          const EstimateWithCI x = ipw_mle_sandwich(vis);
          slot = {x.point, x.lower, x.upper, true};
        } else if (est.model == "bootstrap_ipw") {
          const EstimateWithCI x =
              bootstrap_ipw(vis, cfg.bootstrap_b,
                            rep.derive(detail::ModelIds::bootstrap), 1);
          slot = {x.point, x.lower, x.upper, true};
        } else if (est.bayesian()) {
          if (est.model != "bart" && !standardized)
            standardized = standardize_continuous(vis).data;
          auto it = fits.find(est.model);
          if (it == fits.end())
            it = fits.emplace(est.model,
                              detail::fit_for_model(
                                  est.model, standardized ? *standardized : vis,
                                  vis, cfg, rep))
                     .first;
          const PropensityDraws& pd = it->second;
          const int j = est.mode == PsMode::integrated
                            ? cfg.j_draws
                            : cfg.j_draws * std::max(1, pd.K());
          const AtePosterior ap =
              ate_posterior(vis, pd, est.mode, j, cfg.hyper,
                            rep.derive(detail::ModelIds::outcome_base + e), 1);
          const AteSummary s = summarize(ap, 0.95);
          slot = {s.mean, s.lower, s.upper, true};
        } else {
          throw std::invalid_argument("unknown estimator model: " + est.model);
        }
      } catch (const std::invalid_argument&) {
        throw;  // configuration problems abort the study
      } catch (const std::exception&) {
        slot.ok = false;  // estimator failure in this replication
      }
    }
  });

  MetricsTable table;
  table.replications = cfg.replications;
  table.true_ate = truth.value;
  table.true_ate_mc_se = truth.mc_se;
  for (std::size_t e = 0; e < e_count; ++e) {
    EstimatorMetrics m;
    m.name = estimators[e].name();
    double sum = 0, sumsq_err = 0, width = 0;
    int covered = 0, used = 0;
    for (std::size_t r = 0; r < r_count; ++r) {
      const auto& slot = results[r * e_count + e];
      if (!slot.ok) {
        ++m.failures;
        continue;
      }
      ++used;
      sum += slot.point;
      sumsq_err += (slot.point - truth.value) * (slot.point - truth.value);
      width += slot.upper - slot.lower;
      if (slot.lower <= truth.value && truth.value <= slot.upper) ++covered;
    }
    m.used = used;
    if (used > 0) {
      m.bias = sum / used - truth.value;
      m.mse = sumsq_err / used;
      m.point_variance = m.mse - m.bias * m.bias;
      m.mean_ci_width = width / used;
      m.coverage_pct = 100.0 * covered / used;
    }
    table.rows.push_back(std::move(m));
  }
  return table;
}

// --- presets ----------------------------------------------------------------

namespace detail {

// Bisection on an intercept so that mean(expit(intercept + eta)) hits the
// target rate; eta is a fixed Monte Carlo sample of the linear predictor.
inline double tune_intercept(const std::vector<double>& eta, double target) {
  auto rate = [&](double b0) {
    double s = 0.0;
    for (double e : eta) s += expit(b0 + e);
    return s / static_cast<double>(eta.size());
  };
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Default 100-covariate scenario standing in for the registry-calibrated
// coefficients: beta_x spans [-1.1, 1.1] with quartiles -0.2 / 0.2 and
// exactly 18 zeros, beta_y sums to zero and loads on the strong treatment
// covariates to induce confounding, and the intercepts are tuned so the
// treated fraction is ~0.7 and the event rate ~0.1 with beta_tr = -2.
inline ScenarioSpec make_table3_spec(int n = 1000) {
  static const ScenarioSpec cached = [] {
    constexpr int p = 100;
    ScenarioSpec spec;
    spec.n = 1000;
    spec.p = p;
    spec.law = ConfounderLaw::independent_bernoulli;
    spec.beta_tr = -2.0;

    // prevalence ladder: a handful of common indicators, a long sparse tail
    spec.prevalence.resize(p);
    for (int j = 0; j < p; ++j) {
      const double q = 0.8 * std::exp(-static_cast<double>(j) / 15.0);
      spec.prevalence[static_cast<std::size_t>(j)] =
          std::round(std::max(0.01, q) * 1000.0) / 1000.0;
    }

    // ascending coefficient multiset with the published shape constraints
    std::vector<double> values;
    auto add = [&](double v, int count) {
      for (int i = 0; i < count; ++i) values.push_back(v);
    };
    add(-1.1, 1); add(-1.0, 1); add(-0.9, 2); add(-0.8, 2); add(-0.7, 2);
    add(-0.6, 3); add(-0.5, 3); add(-0.4, 4); add(-0.3, 6);
    add(-0.2, 6); add(-0.1, 10); add(0.0, 18); add(0.1, 10); add(0.2, 8);
    add(0.3, 6); add(0.4, 4); add(0.5, 3); add(0.6, 3); add(0.7, 2);
    add(0.8, 2); add(0.9, 2); add(1.0, 1); add(1.1, 1);
    // scatter magnitudes across the prevalence ladder
    spec.beta_x = Eigen::VectorXd::Zero(p);
    for (int rank = 0; rank < p; ++rank)
      spec.beta_x[(37 * rank + 11) % p] = values[static_cast<std::size_t>(rank)];

    // outcome coefficients: oppose the strong treatment coefficients so the
    // same covariates drive both models; the sign pairing keeps the sum 0
    spec.beta_y = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) {
      const double bx = std::abs(spec.beta_x[j]);
      if (bx >= 0.5) spec.beta_y[j] = spec.beta_x[j] > 0 ? -0.7 : 0.7;
      else if (bx >= 0.3) spec.beta_y[j] = spec.beta_x[j] > 0 ? -0.3 : 0.3;
    }

    for (int j = 0; j < p; ++j) spec.visible.push_back(j);

    // intercept tuning on a fixed Monte Carlo panel
    Rng rng(0xC0EF5EED);
    const long n_mc = 200000;
    std::vector<double> eta_x(static_cast<std::size_t>(n_mc));
    std::vector<double> eta_y(static_cast<std::size_t>(n_mc));
    std::vector<double> px(static_cast<std::size_t>(n_mc));
    for (long i = 0; i < n_mc; ++i) {
      const Eigen::RowVectorXd c = detail::draw_confounders(spec, rng);
      eta_x[static_cast<std::size_t>(i)] = c * spec.beta_x;
      eta_y[static_cast<std::size_t>(i)] = c * spec.beta_y;
    }
    spec.beta0_x = detail::tune_intercept(eta_x, 0.7);
    for (long i = 0; i < n_mc; ++i)
      px[static_cast<std::size_t>(i)] =
          expit(spec.beta0_x + eta_x[static_cast<std::size_t>(i)]);
    // event rate mixes treated and control arms through the propensity
    auto event_rate = [&](double b0y) {
      double s = 0.0;
      for (long i = 0; i < n_mc; ++i) {
        const double e = b0y + eta_y[static_cast<std::size_t>(i)];
        s += px[static_cast<std::size_t>(i)] * expit(e + spec.beta_tr) +
             (1.0 - px[static_cast<std::size_t>(i)]) * expit(e);
      }
      return s / static_cast<double>(n_mc);
    };
    double lo = -20.0, hi = 20.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (event_rate(mid) < 0.1) lo = mid;
      else hi = mid;
    }
    spec.beta0_y = 0.5 * (lo + hi);
    return spec;
  }();
  ScenarioSpec spec = cached;
  spec.n = n;
  return spec;
}

// Sparse variant: 90 treatment coefficients exactly zero, 10 kept at
// magnitudes in [0.8, 1.1] (five per sign, all of them outcome-relevant);
// the outcome model is unchanged.
inline ScenarioSpec make_sparse_spec(int n = 1000) {
  static const ScenarioSpec cached = [] {
    ScenarioSpec spec = make_table3_spec();
    Eigen::VectorXd sparse = Eigen::VectorXd::Zero(spec.p);
    int kept_pos = 0, kept_neg = 0;
    // strongest first so each sign keeps {1.1, 1.0, 0.9, 0.9, 0.8}
    for (double threshold : {1.05, 0.95, 0.85, 0.75}) {
      for (int j = 0; j < spec.p; ++j) {
        const double b = spec.beta_x[j];
        if (std::abs(b) < threshold || sparse[j] != 0.0) continue;
        if (b > 0 && kept_pos < 5) {
          sparse[j] = b;
          ++kept_pos;
        } else if (b < 0 && kept_neg < 5) {
          sparse[j] = b;
          ++kept_neg;
        }
      }
    }
    spec.beta_x = sparse;

    Rng rng(0x5BA25EED);
    const long n_mc = 200000;
    std::vector<double> eta_x(static_cast<std::size_t>(n_mc));
    for (long i = 0; i < n_mc; ++i) {
      const Eigen::RowVectorXd c = detail::draw_confounders(spec, rng);
      eta_x[static_cast<std::size_t>(i)] = c * spec.beta_x;
    }
    spec.beta0_x = detail::tune_intercept(eta_x, 0.7);
    return spec;
  }();
  ScenarioSpec spec = cached;
  spec.n = n;
  return spec;
}

inline int count_zero_coefficients(const ScenarioSpec& spec) {
  int zeros = 0;
  for (int j = 0; j < spec.p; ++j)
    if (spec.beta_x[j] == 0.0) ++zeros;
  return zeros;
}

}  // namespace causalps
