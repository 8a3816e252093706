#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "causalps/dataset.hpp"
#include "causalps/parallel.hpp"
#include "causalps/stats.hpp"
#include "causalps/treatment_models.hpp"

namespace causalps {

// ATE weights w_i = X_i/pi_i + (1-X_i)/(1-pi_i); always >= 1.
inline Eigen::VectorXd ate_weights(const Dataset& d, const Eigen::VectorXd& pi) {
  if (pi.size() != d.n()) throw std::invalid_argument("ate_weights: pi length");
  Eigen::VectorXd w(d.n());
  for (int i = 0; i < d.n(); ++i) {
    const double p = pi[i];
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("ate_weights: propensities must lie in (0,1)");
    w[i] = d.treatment[static_cast<std::size_t>(i)] == 1 ? 1.0 / p
                                                         : 1.0 / (1.0 - p);
  }
  return w;
}

// Per-confounder percent standardized difference between weighted arm means.
// The denominator pools the *unweighted* arm SDs, sqrt((s1^2 + s0^2)/2), so
// the metric stays comparable across propensity draws; binary and indicator
// columns use the Bernoulli variance p(1-p). Columns with zero pooled SD
// report NaN (not applicable).
inline std::vector<double> weighted_std_diff(const Dataset& d,
                                             const Eigen::VectorXd& w) {
  if (w.size() != d.n())
    throw std::invalid_argument("weighted_std_diff: weight length");
  for (int i = 0; i < d.n(); ++i)
    if (!(w[i] > 0.0))
      throw std::invalid_argument("weighted_std_diff: weights must be positive");

  const int n = d.n();
  std::vector<double> out(static_cast<std::size_t>(d.p()));
  for (int j = 0; j < d.p(); ++j) {
    double w1 = 0, w0 = 0, wx1 = 0, wx0 = 0;
    double sum1 = 0, sum0 = 0, sq1 = 0, sq0 = 0;
    int n1 = 0, n0 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = d.confounders(i, j);
      if (d.treatment[static_cast<std::size_t>(i)] == 1) {
        w1 += w[i];
        wx1 += w[i] * x;
        ++n1;
        sum1 += x;
        sq1 += x * x;
      } else {
        w0 += w[i];
        wx0 += w[i] * x;
        ++n0;
        sum0 += x;
        sq0 += x * x;
      }
    }
    if (n1 == 0 || n0 == 0)
      throw std::runtime_error("weighted_std_diff: empty treatment arm");
    const double mean_w1 = wx1 / w1;
    const double mean_w0 = wx0 / w0;
    double var1, var0;
    const bool bernoulli =
        d.columns[static_cast<std::size_t>(j)].kind != ColumnKind::continuous;
    if (bernoulli) {
      const double p1 = sum1 / n1, p0 = sum0 / n0;
      var1 = p1 * (1.0 - p1);
      var0 = p0 * (1.0 - p0);
    } else {
      var1 = n1 > 1 ? (sq1 - sum1 * sum1 / n1) / (n1 - 1) : 0.0;
      var0 = n0 > 1 ? (sq0 - sum0 * sum0 / n0) / (n0 - 1) : 0.0;
    }
    const double pooled = std::sqrt(0.5 * (var1 + var0));
    out[static_cast<std::size_t>(j)] =
        pooled > 0.0 ? 100.0 * (mean_w1 - mean_w0) / pooled
                     : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct BalanceRow {
  std::string name;
  double unweighted = 0;      // percent std diff with unit weights
  double mean = 0;            // posterior mean of weighted std diff, percent
  double lower = 0, upper = 0;  // 2.5% / 97.5% across propensity draws
  bool flagged = false;       // |mean| > 10
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  bool all_within_10() const {
    for (const auto& r : rows)
      if (r.flagged) return false;
    return true;
  }
};

// Weighted standardized differences computed per propensity draw; each
// confounder is summarized by the posterior mean and the empirical 95%
// interval across draws.
inline BalanceReport balance_posterior(const Dataset& d,
                                       const PropensityDraws& pd,
                                       int workers = 0) {
  if (pd.n() != d.n())
    throw std::invalid_argument("balance_posterior: size mismatch");
  const int K = pd.K();
  const int p = d.p();
  std::vector<std::vector<double>> per_draw(static_cast<std::size_t>(K));
  parallel_for(static_cast<std::size_t>(K), workers, [&](std::size_t k) {
    per_draw[k] = weighted_std_diff(
        d, ate_weights(d, pd.pi.row(static_cast<Eigen::Index>(k))));
  });
  const std::vector<double> unweighted =
      weighted_std_diff(d, Eigen::VectorXd::Ones(d.n()));

  BalanceReport report;
  report.rows.resize(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    std::vector<double> vals(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
      vals[static_cast<std::size_t>(k)] =
          per_draw[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
    auto& row = report.rows[static_cast<std::size_t>(j)];
    row.name = d.columns[static_cast<std::size_t>(j)].name;
    row.unweighted = unweighted[static_cast<std::size_t>(j)];
    row.mean = mean(vals);
    row.lower = K > 1 ? quantile(vals, 0.025) : row.mean;
    row.upper = K > 1 ? quantile(vals, 0.975) : row.mean;
    row.flagged = std::abs(row.mean) > 10.0;
  }
  return report;
}

struct WeightSummary {
  double mean_weight = 0;
  double max_weight = 0;
  // min, 25%, median, 75%, max within each arm
  std::array<double, 5> treated_quantiles{};
  std::array<double, 5> control_quantiles{};
  double warn_threshold = 50.0;
  bool high_weight_warning = false;
};

// Weight distribution summary; a max above the threshold is the overfit /
// positivity-violation signal.
inline WeightSummary weight_summary(const Eigen::VectorXd& w,
                                    const std::vector<int>& treatment,
                                    double warn_threshold = 50.0) {
  if (w.size() == 0) throw std::invalid_argument("weight_summary: empty weights");
  if (static_cast<std::size_t>(w.size()) != treatment.size())
    throw std::invalid_argument("weight_summary: treatment length");
  WeightSummary s;
  s.warn_threshold = warn_threshold;
  s.mean_weight = w.mean();
  s.max_weight = w.maxCoeff();
  s.high_weight_warning = s.max_weight > warn_threshold;
  std::vector<double> w1, w0;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    (treatment[static_cast<std::size_t>(i)] == 1 ? w1 : w0).push_back(w[i]);
  const std::array<double, 5> probs{0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t q = 0; q < probs.size(); ++q) {
    s.treated_quantiles[q] = w1.empty() ? 0.0 : quantile(w1, probs[q]);
    s.control_quantiles[q] = w0.empty() ? 0.0 : quantile(w0, probs[q]);
  }
  return s;
}

// Figure-1-shaped tidy output, sorted by posterior mean.
inline void write_balance_csv(const BalanceReport& report, std::ostream& out) {
  std::vector<BalanceRow> rows = report.rows;
  std::sort(rows.begin(), rows.end(),
            [](const BalanceRow& a, const BalanceRow& b) {
              if (a.mean != b.mean) return a.mean < b.mean;
              return a.name < b.name;
            });
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  for (const auto& r : rows)
    cells.push_back({r.name, format_double(r.mean), format_double(r.lower),
                     format_double(r.upper), format_double(r.unweighted),
                     r.flagged ? "1" : "0"});
  write_csv(out, {"confounder", "mean", "lo", "hi", "unweighted", "flag_gt10"},
            cells);
}

}  // namespace causalps
