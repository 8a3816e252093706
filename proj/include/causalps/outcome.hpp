#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "causalps/dataset.hpp"
#include "causalps/parallel.hpp"
#include "causalps/rng.hpp"
#include "causalps/stats.hpp"
#include "causalps/treatment_models.hpp"

namespace causalps {

/// Beta prior pseudo-counts for the two arm-level event probabilities:
/// p1 ~ Beta(a11, a10) and p0 ~ Beta(a00, a01). The flat default {1,1,1,1}
/// adds one pseudo-event and one pseudo-non-event per arm.
struct OutcomeHyper {
  double a11 = 1.0;  // prior events, treated arm
  double a10 = 1.0;  // prior non-events, treated arm
  double a00 = 1.0;  // prior events, control arm
  double a01 = 1.0;  // prior non-events, control arm

  // Zero pseudo-counts give an improper prior; allowed only where the
  // posterior is used analytically (the IPW identity checks).
  bool improper() const { return a11 == 0 || a10 == 0 || a00 == 0 || a01 == 0; }

  void check() const {
    if (a11 < 0 || a10 < 0 || a00 < 0 || a01 < 0)
      throw std::invalid_argument("OutcomeHyper: pseudo-counts must be >= 0");
  }
};

/// Conjugate posterior parameters for one propensity vector. The gamma
/// renormalizers scale each arm's weighted counts back to the original arm
/// size, so a1 + b1 = prior mass + n1 and a0 + b0 = prior mass + n0.
struct BetaParams {
  double a1 = 0, b1 = 0, a0 = 0, b0 = 0;
  double gamma1 = 0, gamma0 = 0;

  double mean1() const { return a1 / (a1 + b1); }
  double mean0() const { return a0 / (a0 + b0); }
};

enum class PsMode { integrated, mean_ps };

inline std::string to_string(PsMode m) {
  return m == PsMode::integrated ? "integrated" : "mean_ps";
}

/// Posterior draws of the risk difference p1 - p0, stored k-major: the J
/// draws conditional on propensity draw k occupy [k*J, (k+1)*J).
struct AtePosterior {
  std::vector<double> draws;
  PsMode mode = PsMode::integrated;
  int J = 0;
  int K = 0;  // 1 in mean_ps mode
};

/// Weighted event and non-event counts of the inverse-probability-weighted
/// pseudo-population, renormalized per arm and combined with the prior
/// pseudo-counts:
///
///   a1 = a11 + g1 * sum_i X_i Y_i / pi_i          g1 = n1 / sum_i X_i / pi_i
///   b1 = a10 + g1 * sum_i X_i (1-Y_i) / pi_i
///   a0 = a00 + g0 * sum_i (1-X_i) Y_i / (1-pi_i)  g0 = n0 / sum_i (1-X_i)/(1-pi_i)
///   b0 = a01 + g0 * sum_i (1-X_i)(1-Y_i) / (1-pi_i)
inline BetaParams pseudo_population_counts(const Dataset& d,
                                           const Eigen::VectorXd& pi,
                                           const OutcomeHyper& h = {}) {
  h.check();
  const int n = d.n();
  if (pi.size() != n)
    throw std::invalid_argument("pseudo_population_counts: pi length mismatch");
  double w1 = 0, w0 = 0, e1 = 0, ne1 = 0, e0 = 0, ne0 = 0;
  int n1 = 0, n0 = 0;
  for (int i = 0; i < n; ++i) {
    const double p = pi[i];
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument(
          "pseudo_population_counts: propensities must lie in (0,1)");
    if (d.treatment[static_cast<std::size_t>(i)] == 1) {
      ++n1;
      w1 += 1.0 / p;
      if (d.outcome[static_cast<std::size_t>(i)] == 1) e1 += 1.0 / p;
      else ne1 += 1.0 / p;
    } else {
      ++n0;
      w0 += 1.0 / (1.0 - p);
      if (d.outcome[static_cast<std::size_t>(i)] == 1) e0 += 1.0 / (1.0 - p);
      else ne0 += 1.0 / (1.0 - p);
    }
  }
  if (n1 == 0 || n0 == 0)
    throw std::runtime_error(
        "pseudo_population_counts: empty treatment arm, renormalizer undefined");
  BetaParams bp;
  bp.gamma1 = n1 / w1;
  bp.gamma0 = n0 / w0;
  bp.a1 = h.a11 + bp.gamma1 * e1;
  bp.b1 = h.a10 + bp.gamma1 * ne1;
  bp.a0 = h.a00 + bp.gamma0 * e0;
  bp.b0 = h.a01 + bp.gamma0 * ne0;
  return bp;
}

/// J independent draws of p1 - p0 with p1 ~ Beta(a1,b1), p0 ~ Beta(a0,b0).
inline std::vector<double> draw_ate(const BetaParams& bp, int J, Rng& rng) {
  if (J < 1) throw std::invalid_argument("draw_ate: J >= 1");
  if (!(bp.a1 > 0 && bp.b1 > 0 && bp.a0 > 0 && bp.b0 > 0))
    throw std::invalid_argument("draw_ate: beta parameters must be positive");
  std::vector<double> out(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j)
    out[static_cast<std::size_t>(j)] = rng.beta(bp.a1, bp.b1) - rng.beta(bp.a0, bp.b0);
  return out;
}

/// Full posterior of the average treatment effect. Integrated mode draws J
/// outcome values for each of the K propensity draws and concatenates the
/// J*K draws; mean_ps mode conditions once on the posterior-mean propensity
/// vector. Per-k draws use derived streams, so the result is deterministic
/// for any worker count.
inline AtePosterior ate_posterior(const Dataset& d, const PropensityDraws& pd,
                                  PsMode mode, int J, const OutcomeHyper& h,
                                  const Rng& rng, int workers = 0) {
  if (pd.n() != d.n())
    throw std::invalid_argument("ate_posterior: propensity draws n mismatch");
  if (J < 1) throw std::invalid_argument("ate_posterior: J >= 1");
  AtePosterior ap;
  ap.mode = mode;
  ap.J = J;
  if (mode == PsMode::mean_ps) {
    ap.K = 1;
    const BetaParams bp = pseudo_population_counts(d, posterior_mean_ps(pd), h);
    Rng r = rng.derive(0);
    ap.draws = draw_ate(bp, J, r);
    return ap;
  }
  const int K = pd.K();
  ap.K = K;
  ap.draws.resize(static_cast<std::size_t>(K) * J);
  parallel_for(static_cast<std::size_t>(K), workers, [&](std::size_t k) {
    const BetaParams bp =
        pseudo_population_counts(d, pd.pi.row(static_cast<Eigen::Index>(k)), h);
    Rng r = rng.derive(k);
    const auto draws = draw_ate(bp, J, r);
    std::copy(draws.begin(), draws.end(), ap.draws.begin() + k * J);
  });
  return ap;
}

struct AteSummary {
  double mean = 0, sd = 0, lower = 0, upper = 0;
};

/// Mean, SD, and the empirical central interval of the concatenated draws.
inline AteSummary summarize(const AtePosterior& ap, double level = 0.95) {
  if (ap.draws.empty()) throw std::invalid_argument("summarize: no draws");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("summarize: level in (0,1)");
  AteSummary s;
  s.mean = mean(ap.draws);
  s.sd = ap.draws.size() > 1 ? stddev(ap.draws) : 0.0;
  const double tail = 0.5 * (1.0 - level);
  s.lower = quantile(ap.draws, tail);
  s.upper = quantile(ap.draws, 1.0 - tail);
  return s;
}

struct VarianceDecomposition {
  double within = 0, between = 0, total = 0;
};

/// Law-of-total-variance split of the integrated posterior: the mean
/// within-group variance (outcome-model uncertainty given the propensity
/// draw) plus the variance of group means (propensity-model uncertainty).
inline VarianceDecomposition total_variance_decomposition(const AtePosterior& ap) {
  if (ap.mode != PsMode::integrated)
    throw std::invalid_argument("decomposition requires integrated draws");
  if (ap.K < 2 || ap.J < 2)
    throw std::invalid_argument("decomposition requires K >= 2 and J >= 2");
  const int J = ap.J, K = ap.K;
  std::vector<double> group_means(static_cast<std::size_t>(K));
  double within = 0.0;
  for (int k = 0; k < K; ++k) {
    double m = 0.0;
    for (int j = 0; j < J; ++j)
      m += ap.draws[static_cast<std::size_t>(k) * J + j];
    m /= J;
    group_means[static_cast<std::size_t>(k)] = m;
    double v = 0.0;
    for (int j = 0; j < J; ++j) {
      const double dlt = ap.draws[static_cast<std::size_t>(k) * J + j] - m;
      v += dlt * dlt;
    }
    within += v / (J - 1);
  }
  within /= K;
  VarianceDecomposition out;
  out.within = within;
  out.between = variance(group_means);
  out.total = out.within + out.between;
  return out;
}

}  // namespace causalps
