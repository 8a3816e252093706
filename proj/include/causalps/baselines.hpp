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

namespace causalps {

struct EstimateWithCI {
  double point = 0;
  double se = 0;
  double lower = 0;
  double upper = 0;
  std::string method;
  int failures = 0;
};

// Unadjusted difference in outcome means with the two-sample proportion
// variance and a 95% normal interval.
inline EstimateWithCI naive_estimate(const Dataset& d) {
  int n1 = 0, n0 = 0, e1 = 0, e0 = 0;
  for (int i = 0; i < d.n(); ++i) {
    if (d.treatment[static_cast<std::size_t>(i)] == 1) {
      ++n1;
      e1 += d.outcome[static_cast<std::size_t>(i)];
    } else {
      ++n0;
      e0 += d.outcome[static_cast<std::size_t>(i)];
    }
  }
  if (n1 == 0 || n0 == 0)
    throw std::runtime_error("naive_estimate: empty treatment arm");
  const double p1 = static_cast<double>(e1) / n1;
  const double p0 = static_cast<double>(e0) / n0;
  EstimateWithCI est;
  est.method = "naive";
  est.point = p1 - p0;
  est.se = std::sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0);
  est.lower = est.point - kZ975 * est.se;
  est.upper = est.point + kZ975 * est.se;
  return est;
}

// Normalized (Hajek) inverse probability weighted difference in means.
inline double ipw_point(const Dataset& d, const Eigen::VectorXd& pi) {
  if (pi.size() != d.n()) throw std::invalid_argument("ipw_point: pi length");
  double w1 = 0, w0 = 0, wy1 = 0, wy0 = 0;
  bool any1 = false, any0 = false;
  for (int i = 0; i < d.n(); ++i) {
    const double p = pi[i];
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("ipw_point: propensities must lie in (0,1)");
    if (d.treatment[static_cast<std::size_t>(i)] == 1) {
      any1 = true;
      w1 += 1.0 / p;
      wy1 += d.outcome[static_cast<std::size_t>(i)] / p;
    } else {
      any0 = true;
      w0 += 1.0 / (1.0 - p);
      wy0 += d.outcome[static_cast<std::size_t>(i)] / (1.0 - p);
    }
  }
  if (!any1 || !any0) throw std::runtime_error("ipw_point: empty treatment arm");
  return wy1 / w1 - wy0 / w0;
}

struct LogisticFit {
  Eigen::VectorXd beta;  // intercept first
  bool converged = false;
  int iterations = 0;
};

// Maximum-likelihood logistic regression by Newton-Raphson with step
// halving. Nonconvergence within max_iter (the separation signature) is
// reported, not thrown.
inline LogisticFit logistic_mle(const Eigen::MatrixXd& design,
                                const std::vector<int>& y,
                                int max_iter = 100, double tol = 1e-9) {
  const Eigen::Index n = design.rows(), p = design.cols();
  LogisticFit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  auto loglik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      ll += y[static_cast<std::size_t>(i)] * eta[i] - log1pexp(eta[i]);
    return ll;
  };
  double ll = loglik(fit.beta);
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const Eigen::VectorXd eta = design * fit.beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i)
      resid[i] = y[static_cast<std::size_t>(i)] - mu[i];
    const Eigen::VectorXd score = design.transpose() * resid;
    if (score.lpNorm<Eigen::Infinity>() < tol * std::max<double>(1.0, n)) {
      fit.converged = true;
      return fit;
    }
    const Eigen::MatrixXd info =
        design.transpose() * w.asDiagonal() * design;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) return fit;
    Eigen::VectorXd step = ldlt.solve(score);
    if (!step.allFinite()) return fit;
    // halve until the likelihood does not decrease
    double scale = 1.0;
    for (int h = 0; h < 30; ++h) {
      const Eigen::VectorXd candidate = fit.beta + scale * step;
      const double ll_new = loglik(candidate);
      if (std::isfinite(ll_new) && ll_new >= ll - 1e-12) {
        fit.beta = candidate;
        ll = ll_new;
        break;
      }
      scale *= 0.5;
    }
  }
  return fit;
}

inline Eigen::VectorXd fitted_propensities(const Eigen::MatrixXd& design,
                                           const Eigen::VectorXd& beta) {
  Eigen::VectorXd pi = design * beta;
  for (Eigen::Index i = 0; i < pi.size(); ++i)
    pi[i] = std::clamp(expit(pi[i]), 1e-15, 1.0 - 1e-15);
  return pi;
}

// Stacked M-estimation (empirical sandwich) variance for the Hajek IPW
// estimator, treating the logistic propensity coefficients as estimated.
// The estimating equations stacked per subject i are
//   psi_mu1 = X_i (Y_i - mu1) / pi_i
//   psi_mu0 = (1-X_i)(Y_i - mu0) / (1 - pi_i)
//   psi_beta = (X_i - pi_i) C_i                       (logistic score)
// with pi_i = expit(beta' C_i). The variance of (mu1, mu0, beta) is
// A^-1 B A^-T / n with A = -mean d psi / d theta and B = mean psi psi'.
inline EstimateWithCI ipw_sandwich(const Dataset& d, const Eigen::VectorXd& pi,
                                   const Eigen::MatrixXd& design) {
  const int n = d.n();
  if (pi.size() != n || design.rows() != n)
    throw std::invalid_argument("ipw_sandwich: size mismatch");
  const Eigen::Index p = design.cols();
  double mu1_num = 0, mu1_den = 0, mu0_num = 0, mu0_den = 0;
  for (int i = 0; i < n; ++i) {
    if (d.treatment[static_cast<std::size_t>(i)] == 1) {
      mu1_num += d.outcome[static_cast<std::size_t>(i)] / pi[i];
      mu1_den += 1.0 / pi[i];
    } else {
      mu0_num += d.outcome[static_cast<std::size_t>(i)] / (1.0 - pi[i]);
      mu0_den += 1.0 / (1.0 - pi[i]);
    }
  }
  if (mu1_den == 0 || mu0_den == 0)
    throw std::runtime_error("ipw_sandwich: empty treatment arm");
  const double mu1 = mu1_num / mu1_den;
  const double mu0 = mu0_num / mu0_den;

  const Eigen::Index dim = 2 + p;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd psi(dim);
  for (int i = 0; i < n; ++i) {
    const double x = d.treatment[static_cast<std::size_t>(i)];
    const double y = d.outcome[static_cast<std::size_t>(i)];
    const double pr = pi[i];
    const auto c = design.row(i);
    psi[0] = x * (y - mu1) / pr;
    psi[1] = (1 - x) * (y - mu0) / (1 - pr);
    psi.tail(p) = (x - pr) * c.transpose();
    b += psi * psi.transpose();

    a(0, 0) += x / pr;
    a(1, 1) += (1 - x) / (1 - pr);
    // -d psi_mu1 / d beta = x (y - mu1) (1 - pi) / pi * C
    a.row(0).tail(p) += x * (y - mu1) * (1 - pr) / pr * c;
    // -d psi_mu0 / d beta = -(1-x)(y - mu0) pi / (1 - pi) * C
    a.row(1).tail(p) -= (1 - x) * (y - mu0) * pr / (1 - pr) * c;
    a.bottomRightCorner(p, p) += pr * (1 - pr) * c.transpose() * c;
  }
  a /= n;
  b /= n;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw std::runtime_error("ipw_sandwich: singular information matrix");
  const Eigen::MatrixXd a_inv = lu.inverse();
  const Eigen::MatrixXd v = a_inv * b * a_inv.transpose() / n;

  EstimateWithCI est;
  est.method = "ipw";
  est.point = mu1 - mu0;
  est.se = std::sqrt(std::max(0.0, v(0, 0) + v(1, 1) - 2 * v(0, 1)));
  est.lower = est.point - kZ975 * est.se;
  est.upper = est.point + kZ975 * est.se;
  return est;
}

// Fits the maximum-likelihood propensity model and applies the sandwich
// variance in one step.
inline EstimateWithCI ipw_mle_sandwich(const Dataset& d) {
  const Eigen::MatrixXd design = design_matrix(d);
  const LogisticFit fit = logistic_mle(design, d.treatment);
  if (!fit.converged)
    throw std::runtime_error("ipw_mle_sandwich: propensity MLE did not converge");
  return ipw_sandwich(d, fitted_propensities(design, fit.beta), design);
}

// Nonparametric bootstrap of the Hajek IPW estimator with the logistic
// propensity model refit per replicate. Replicates whose MLE fails to
// converge (separation) or that lose an arm are counted as failures and
// excluded from the percentile interval.
inline EstimateWithCI bootstrap_ipw(const Dataset& d, int B, const Rng& rng,
                                    int workers = 0, int max_iter = 100) {
  if (B < 100) throw std::invalid_argument("bootstrap_ipw: B >= 100");
  const Eigen::MatrixXd design = design_matrix(d);
  const LogisticFit full_fit = logistic_mle(design, d.treatment, max_iter);
  if (!full_fit.converged)
    throw std::runtime_error("bootstrap_ipw: full-data MLE did not converge");
  const double point = ipw_point(d, fitted_propensities(design, full_fit.beta));

  const int n = d.n();
  std::vector<double> reps(static_cast<std::size_t>(B),
                           std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(B), workers, [&](std::size_t bidx) {
    Rng r = rng.derive(bidx);
    Dataset res;
    res.columns = d.columns;
    res.treatment.resize(static_cast<std::size_t>(n));
    res.outcome.resize(static_cast<std::size_t>(n));
    res.confounders.resize(n, d.confounders.cols());
    int n1 = 0;
    for (int i = 0; i < n; ++i) {
      const int src = static_cast<int>(r.uniform_int(static_cast<std::uint64_t>(n)));
      res.treatment[static_cast<std::size_t>(i)] =
          d.treatment[static_cast<std::size_t>(src)];
      res.outcome[static_cast<std::size_t>(i)] =
          d.outcome[static_cast<std::size_t>(src)];
      res.confounders.row(i) = d.confounders.row(src);
      n1 += res.treatment[static_cast<std::size_t>(i)];
    }
    if (n1 == 0 || n1 == n) return;  // lost an arm: failure
    const Eigen::MatrixXd res_design = design_matrix(res);
    const LogisticFit fit = logistic_mle(res_design, res.treatment, max_iter);
    if (!fit.converged) return;
    reps[bidx] = ipw_point(res, fitted_propensities(res_design, fit.beta));
  });

  std::vector<double> ok;
  ok.reserve(static_cast<std::size_t>(B));
  int failures = 0;
  for (double v : reps) {
    if (std::isnan(v)) ++failures;
    else ok.push_back(v);
  }
  if (2 * failures > B) throw std::runtime_error("bootstrap unstable");

  EstimateWithCI est;
  est.method = "bootstrap_ipw";
  est.point = point;
  est.failures = failures;
  est.se = ok.size() > 1 ? stddev(ok) : 0.0;
  est.lower = quantile(ok, 0.025);
  est.upper = quantile(ok, 0.975);
  return est;
}

}  // namespace causalps
