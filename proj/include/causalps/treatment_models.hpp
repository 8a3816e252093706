#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causalps/dataset.hpp"
#include "causalps/hmc.hpp"
#include "causalps/stats.hpp"

namespace causalps {

// Prior family for the Bayesian logistic treatment model. Slope priors are
// either weakly informative Student-t or horseshoe (half-t scale mixture);
// the intercept always gets a wide Student-t and is never shrunk.
struct PriorSpec {
  enum class Variant { student_t, horseshoe };
  Variant variant = Variant::student_t;
  double slope_df = 3.0;
  double slope_scale = 2.5;
  double local_df = 3.0;    // horseshoe lambda_j ~ half-t(local_df, local_scale)
  double local_scale = 1.0;
  double global_df = 3.0;   // horseshoe tau ~ half-t(global_df, global_scale)
  double global_scale = 1.0;
  double intercept_df = 3.0;
  double intercept_scale = 10.0;

  static PriorSpec student_t() { return {}; }
  static PriorSpec horseshoe() {
    PriorSpec s;
    s.variant = Variant::horseshoe;
    return s;
  }

  void check() const {
    if (slope_df <= 0 || local_df <= 0 || global_df <= 0 || intercept_df <= 0)
      throw std::invalid_argument("PriorSpec: degrees of freedom must be > 0");
    if (slope_scale <= 0 || local_scale <= 0 || global_scale <= 0 ||
        intercept_scale <= 0)
      throw std::invalid_argument("PriorSpec: scales must be > 0");
  }
};

// One retained draw of the treatment-model coefficients. For the horseshoe
// the local/global scales ride along for inspection.
struct CoefficientDraw {
  Eigen::VectorXd beta;    // intercept first, length p+1
  Eigen::VectorXd lambda;  // horseshoe only, length p
  double tau = 1.0;        // horseshoe only
};

struct FitDiagnostics {
  double max_rhat = std::numeric_limits<double>::quiet_NaN();
  double min_ess = std::numeric_limits<double>::quiet_NaN();
  bool rhat_flag = false;            // true when max R-hat >= 1.1
  bool separation_warning = false;   // student-t fit with pi within 1e-12 of 0/1
  int divergences = 0;
  double mean_accept = 0.0;
};

// K posterior draws of the n propensity scores, every entry strictly in (0,1).
struct PropensityDraws {
  Eigen::MatrixXd pi;    // K x n
  Eigen::MatrixXd coef;  // K x (p+1) coefficient draws (empty for BART)
  std::string model;
  FitDiagnostics diag;

  int K() const { return static_cast<int>(pi.rows()); }
  int n() const { return static_cast<int>(pi.cols()); }
};

namespace detail {

inline double bernoulli_loglik_grad(const Eigen::MatrixXd& design,
                                    const std::vector<int>& x,
                                    const Eigen::VectorXd& beta,
                                    Eigen::VectorXd& grad_beta) {
  const Eigen::VectorXd eta = design * beta;
  double ll = 0.0;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += x[static_cast<std::size_t>(i)] * eta[i] - log1pexp(eta[i]);
    resid[i] = x[static_cast<std::size_t>(i)] - expit(eta[i]);
  }
  grad_beta.noalias() = design.transpose() * resid;
  return ll;
}

}  // namespace detail

// theta = [beta_0, beta_1..beta_p]
class StudentTLogisticTarget {
 public:
  StudentTLogisticTarget(Eigen::MatrixXd design, std::vector<int> treatment,
                         PriorSpec prior)
      : design_(std::move(design)), x_(std::move(treatment)), prior_(prior) {
    prior_.check();
  }

  int dim() const { return static_cast<int>(design_.cols()); }

  double log_density_gradient(const Eigen::VectorXd& theta,
                              Eigen::VectorXd& grad) const {
    if (theta.size() != dim())
      throw std::invalid_argument("logistic target: dimension mismatch");
    double lp = detail::bernoulli_loglik_grad(design_, x_, theta, grad);
    lp += student_t_logpdf(theta[0], prior_.intercept_df, prior_.intercept_scale);
    grad[0] += student_t_dlogpdf(theta[0], prior_.intercept_df,
                                 prior_.intercept_scale);
    for (Eigen::Index j = 1; j < theta.size(); ++j) {
      lp += student_t_logpdf(theta[j], prior_.slope_df, prior_.slope_scale);
      grad[j] += student_t_dlogpdf(theta[j], prior_.slope_df, prior_.slope_scale);
    }
    return lp;
  }

  const Eigen::MatrixXd& design() const { return design_; }

 private:
  Eigen::MatrixXd design_;
  std::vector<int> x_;
  PriorSpec prior_;
};

// Non-centered horseshoe: theta = [beta_0, z_1..z_p, log lambda_1..log lambda_p,
// log tau] with beta_j = z_j * lambda_j * tau. Sampling the scales on the log
// scale adds the usual Jacobian terms to the density.
class HorseshoeLogisticTarget {
 public:
  HorseshoeLogisticTarget(Eigen::MatrixXd design, std::vector<int> treatment,
                          PriorSpec prior)
      : design_(std::move(design)), x_(std::move(treatment)), prior_(prior) {
    prior_.check();
    p_ = static_cast<int>(design_.cols()) - 1;
  }

  int dim() const { return 2 * p_ + 2; }
  int n_covariates() const { return p_; }

  double log_density_gradient(const Eigen::VectorXd& theta,
                              Eigen::VectorXd& grad) const {
    if (theta.size() != dim())
      throw std::invalid_argument("horseshoe target: dimension mismatch");
    const double beta0 = theta[0];
    const auto z = theta.segment(1, p_);
    const auto u = theta.segment(1 + p_, p_);  // log lambda
    const double v = theta[2 * p_ + 1];        // log tau
    const double tau = std::exp(v);

    Eigen::VectorXd lambda = u.array().exp();
    Eigen::VectorXd beta(p_ + 1);
    beta[0] = beta0;
    beta.tail(p_) = z.array() * lambda.array() * tau;

    Eigen::VectorXd grad_beta(p_ + 1);
    double lp = detail::bernoulli_loglik_grad(design_, x_, beta, grad_beta);

    grad.resize(dim());
    lp += student_t_logpdf(beta0, prior_.intercept_df, prior_.intercept_scale);
    grad[0] = grad_beta[0] + student_t_dlogpdf(beta0, prior_.intercept_df,
                                               prior_.intercept_scale);
    double grad_v = 0.0;
    for (int j = 0; j < p_; ++j) {
      const double gb = grad_beta[j + 1];
      // z_j ~ N(0,1)
      lp += normal_logpdf(z[j]);
      grad[1 + j] = gb * lambda[j] * tau - z[j];
      // lambda_j ~ half-t(local), sampled as u_j = log lambda_j (+Jacobian u_j)
      lp += half_t_logpdf(lambda[j], prior_.local_df, prior_.local_scale) + u[j];
      grad[1 + p_ + j] =
          gb * z[j] * lambda[j] * tau +
          lambda[j] * student_t_dlogpdf(lambda[j], prior_.local_df,
                                        prior_.local_scale) +
          1.0;
      grad_v += gb * z[j] * lambda[j] * tau;
    }
    // tau ~ half-t(global), sampled as v = log tau (+Jacobian v)
    lp += half_t_logpdf(tau, prior_.global_df, prior_.global_scale) + v;
    grad[2 * p_ + 1] =
        grad_v + tau * student_t_dlogpdf(tau, prior_.global_df,
                                         prior_.global_scale) +
        1.0;
    return lp;
  }

  // Maps a sampled parameter vector to the regression coefficients.
  Eigen::VectorXd coefficients(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd beta(p_ + 1);
    beta[0] = theta[0];
    const auto z = theta.segment(1, p_);
    const auto u = theta.segment(1 + p_, p_);
    const double tau = std::exp(theta[2 * p_ + 1]);
    beta.tail(p_) = z.array() * u.array().exp() * tau;
    return beta;
  }

  const Eigen::MatrixXd& design() const { return design_; }

 private:
  Eigen::MatrixXd design_;
  std::vector<int> x_;
  PriorSpec prior_;
  int p_ = 0;
};

// Log posterior and gradient for either prior variant, with the parameter
// layout documented on the target classes above.
inline std::pair<double, Eigen::VectorXd> logistic_log_posterior(
    const Eigen::VectorXd& theta, const Dataset& d, const PriorSpec& prior) {
  Eigen::VectorXd grad;
  if (prior.variant == PriorSpec::Variant::student_t) {
    StudentTLogisticTarget t(design_matrix(d), d.treatment, prior);
    const double lp = t.log_density_gradient(theta, grad);
    return {lp, grad};
  }
  HorseshoeLogisticTarget t(design_matrix(d), d.treatment, prior);
  const double lp = t.log_density_gradient(theta, grad);
  return {lp, grad};
}

struct TreatmentSamplerConfig {
  HmcConfig hmc;
  int thin_to = 1000;  // cap on retained propensity draws, 0 keeps all
};

namespace detail {

inline void require_standardized_continuous(const Dataset& d) {
  const Eigen::Index n = d.confounders.rows();
  if (n < 2) return;
  for (std::size_t j = 0; j < d.columns.size(); ++j) {
    if (d.columns[j].kind != ColumnKind::continuous) continue;
    const auto col = d.confounders.col(static_cast<Eigen::Index>(j));
    const double m = col.mean();
    const double sd =
        std::sqrt((col.array() - m).square().sum() / static_cast<double>(n - 1));
    if (std::abs(m) > 1e-6 || std::abs(sd - 1.0) > 1e-6)
      throw std::runtime_error(
          "horseshoe fit requires standardized continuous confounders; column '" +
          d.columns[j].name + "' has mean " + std::to_string(m) + ", sd " +
          std::to_string(sd));
  }
}

inline std::vector<int> thin_indices(int total, int keep) {
  std::vector<int> idx;
  if (keep <= 0 || keep >= total) {
    idx.resize(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }
  idx.reserve(static_cast<std::size_t>(keep));
  for (int i = 0; i < keep; ++i)
    idx.push_back(static_cast<int>((static_cast<long>(i) * total) / keep));
  return idx;
}

}  // namespace detail

// Fits the Bayesian logistic treatment model by HMC and maps the retained
// coefficient draws through the inverse logit of the linear predictor. The
// emitted propensities are clamped away from the closed endpoints.
inline PropensityDraws fit_treatment_model(const Dataset& d,
                                           const PriorSpec& prior,
                                           const TreatmentSamplerConfig& cfg) {
  prior.check();
  if (d.n() < 1) throw std::invalid_argument("fit_treatment_model: empty dataset");
  const bool horseshoe = prior.variant == PriorSpec::Variant::horseshoe;
  if (horseshoe) detail::require_standardized_continuous(d);

  const Eigen::MatrixXd design = design_matrix(d);
  ChainDraws draws;
  const int p = d.p();
  if (horseshoe) {
    HorseshoeLogisticTarget target(design, d.treatment, prior);
    draws = run_hmc(target, cfg.hmc);
  } else {
    StudentTLogisticTarget target(design, d.treatment, prior);
    draws = run_hmc(target, cfg.hmc);
  }

  PropensityDraws out;
  out.model = horseshoe ? "horseshoe" : "student_t";
  if (draws.num_chains() >= 2) {
    const Eigen::VectorXd r = rhat(draws);
    const Eigen::VectorXd ess = effective_sample_size(draws);
    out.diag.max_rhat = r.maxCoeff();
    out.diag.min_ess = ess.minCoeff();
    out.diag.rhat_flag = out.diag.max_rhat >= 1.1;
  }
  for (int c = 0; c < draws.num_chains(); ++c) {
    out.diag.divergences += draws.divergences[static_cast<std::size_t>(c)];
    out.diag.mean_accept += draws.accept_rates[static_cast<std::size_t>(c)];
  }
  out.diag.mean_accept /= std::max(1, draws.num_chains());

  const Eigen::MatrixXd pooled = draws.pooled();
  const auto keep = detail::thin_indices(static_cast<int>(pooled.rows()),
                                         cfg.thin_to);
  const int K = static_cast<int>(keep.size());
  out.coef.resize(K, p + 1);
  if (horseshoe) {
    HorseshoeLogisticTarget target(design, d.treatment, prior);
    for (int k = 0; k < K; ++k)
      out.coef.row(k) =
          target.coefficients(pooled.row(keep[static_cast<std::size_t>(k)])
                                  .transpose())
              .transpose();
  } else {
    for (int k = 0; k < K; ++k)
      out.coef.row(k) = pooled.row(keep[static_cast<std::size_t>(k)]);
  }

  constexpr double kClamp = 1e-15;
  out.pi.resize(K, d.n());
  bool near_boundary = false;
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd eta = design * out.coef.row(k).transpose();
    for (int i = 0; i < d.n(); ++i) {
      double pi = expit(eta[i]);
      if (pi < 1e-12 || pi > 1.0 - 1e-12) near_boundary = true;
      out.pi(k, i) = std::clamp(pi, kClamp, 1.0 - kClamp);
    }
  }
  out.diag.separation_warning = !horseshoe && near_boundary;
  return out;
}

// Elementwise posterior mean of the propensity draws.
inline Eigen::VectorXd posterior_mean_ps(const PropensityDraws& pd) {
  if (pd.K() < 1)
    throw std::invalid_argument("posterior_mean_ps: need >=1 draw");
  return pd.pi.colwise().mean();
}

// Draw dump (rows = draws, columns = subjects). Guarded: refuses matrices
// above the cell cap so a config typo cannot write gigabytes.
inline void dump_propensity_csv(const PropensityDraws& pd, std::ostream& out,
                                long max_cells = 50'000'000) {
  const long cells = static_cast<long>(pd.K()) * pd.n();
  if (cells > max_cells)
    throw std::runtime_error("propensity dump exceeds size guard");
  std::vector<std::string> header;
  for (int i = 0; i < pd.n(); ++i) header.push_back("subject" + std::to_string(i + 1));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<std::size_t>(pd.K()));
  for (int k = 0; k < pd.K(); ++k) {
    std::vector<std::string> row;
    row.reserve(static_cast<std::size_t>(pd.n()));
    for (int i = 0; i < pd.n(); ++i) row.push_back(format_double(pd.pi(k, i)));
    rows.push_back(std::move(row));
  }
  write_csv(out, header, rows);
}

}  // namespace causalps
