#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "causalps/csv.hpp"
#include "causalps/parallel.hpp"
#include "causalps/rng.hpp"

namespace causalps {

// A differentiable unnormalized log posterior. Evaluation must be reentrant:
// chains call it concurrently on shared read-only data.
template <class F>
concept LogDensityTarget = requires(const F f, const Eigen::VectorXd& x,
                                    Eigen::VectorXd& g) {
  { f.dim() } -> std::convertible_to<int>;
  { f.log_density_gradient(x, g) } -> std::convertible_to<double>;
};

struct HmcConfig {
  int chains = 4;
  int warmup = 1000;
  int samples = 1000;
  int max_leapfrog = 32;        // per-iteration count jittered on {1..max}
  double target_accept = 0.8;   // dual-averaging target
  std::uint64_t seed = 0;
  int workers = 0;              // 0 = resolve from env/hardware
  std::optional<Eigen::VectorXd> init;
};

struct ChainDraws {
  std::vector<Eigen::MatrixXd> chains;     // one S x d matrix per chain
  int warmup = 0;
  std::vector<double> step_sizes;          // adapted step size per chain
  std::vector<Eigen::VectorXd> inv_mass;   // adapted diagonal metric per chain
  std::vector<double> accept_rates;        // mean accept statistic, retained phase
  std::vector<int> divergences;            // post-warmup divergent trajectories

  int num_chains() const { return static_cast<int>(chains.size()); }
  int num_samples() const {
    return chains.empty() ? 0 : static_cast<int>(chains.front().rows());
  }
  int dim() const {
    return chains.empty() ? 0 : static_cast<int>(chains.front().cols());
  }

  // All chains stacked, chain-major.
  Eigen::MatrixXd pooled() const {
    const int s = num_samples(), d = dim();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(num_chains()) * s, d);
    for (int c = 0; c < num_chains(); ++c)
      out.middleRows(static_cast<Eigen::Index>(c) * s, s) = chains[c];
    return out;
  }
};

namespace detail {

// Dual-averaging step size adaptation (Hoffman & Gelman 2014 scheme).
class DualAverage {
 public:
  DualAverage(double eps0, double delta)
      : log_eps_(std::log(eps0)),
        log_eps_bar_(std::log(eps0)),
        mu_(std::log(10.0 * eps0)),
        delta_(delta) {}

  void update(double alpha) {
    const double w = 1.0 / (m_ + t0_);
    h_bar_ = (1.0 - w) * h_bar_ + w * (delta_ - alpha);
    log_eps_ = mu_ - std::sqrt(m_) / gamma_ * h_bar_;
    const double w2 = std::pow(m_, -kappa_);
    log_eps_bar_ = w2 * log_eps_ + (1.0 - w2) * log_eps_bar_;
    m_ += 1.0;
  }

  double current() const { return std::exp(log_eps_); }
  double averaged() const { return std::exp(log_eps_bar_); }

 private:
  double log_eps_;
  double log_eps_bar_;
  double h_bar_ = 0.0;
  double mu_;
  double m_ = 1.0;
  const double delta_;
  const double t0_ = 10.0;
  const double gamma_ = 0.05;
  const double kappa_ = 0.75;
};

struct Welford {
  Eigen::VectorXd mean, m2;
  long count = 0;

  explicit Welford(int d) : mean(Eigen::VectorXd::Zero(d)), m2(Eigen::VectorXd::Zero(d)) {}

  void add(const Eigen::VectorXd& x) {
    ++count;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2.array() += delta.array() * (x - mean).array();
  }

  // Stan-style regularized diagonal variance estimate.
  Eigen::VectorXd regularized_variance() const {
    const double n = static_cast<double>(count);
    Eigen::VectorXd var = count > 1 ? (m2 / (n - 1.0)).eval()
                                    : Eigen::VectorXd::Ones(mean.size()).eval();
    var = var * (n / (n + 5.0));
    var.array() += 1e-3 * (5.0 / (n + 5.0));
    return var.cwiseMax(1e-10);
  }
};

template <LogDensityTarget F>
class HmcChain {
 public:
  HmcChain(const F& target, Rng rng, double target_accept, int max_leapfrog)
      : target_(target),
        rng_(rng),
        target_accept_(target_accept),
        max_leapfrog_(max_leapfrog),
        d_(target.dim()),
        inv_mass_(Eigen::VectorXd::Ones(target.dim())),
        theta_(Eigen::VectorXd::Zero(target.dim())),
        grad_(target.dim()) {}

  void init_position(const Eigen::VectorXd& theta0) {
    theta_ = theta0;
    logp_ = target_.log_density_gradient(theta_, grad_);
    if (!std::isfinite(logp_))
      throw std::runtime_error("non-finite log-density at initialization");
  }

  void set_inv_mass(const Eigen::VectorXd& v) { inv_mass_ = v; }
  const Eigen::VectorXd& inv_mass() const { return inv_mass_; }
  const Eigen::VectorXd& position() const { return theta_; }

  // One jittered-length HMC transition. Returns the accept statistic
  // (0 for a divergent trajectory).
  double transition(double eps, bool* divergent) {
    const int steps = static_cast<int>(rng_.uniform_int(
                          static_cast<std::uint64_t>(max_leapfrog_))) + 1;
    Eigen::VectorXd p(d_);
    for (int i = 0; i < d_; ++i) p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);

    const double h0 = hamiltonian(logp_, p);
    Eigen::VectorXd theta = theta_;
    Eigen::VectorXd grad = grad_;
    double logp = logp_;
    bool ok = true;
    for (int s = 0; s < steps; ++s) {
      p += 0.5 * eps * grad;
      theta.array() += eps * inv_mass_.array() * p.array();
      logp = target_.log_density_gradient(theta, grad);
      if (!std::isfinite(logp)) {
        ok = false;
        break;
      }
      p += 0.5 * eps * grad;
    }
    const double h1 = ok ? hamiltonian(logp, p)
                         : std::numeric_limits<double>::infinity();
    const double dh = h0 - h1;  // log accept ratio
    const bool div = !ok || std::abs(h1 - h0) > 1000.0;
    if (divergent) *divergent = div;
    if (div) return 0.0;
    const double alpha = dh >= 0.0 ? 1.0 : std::exp(dh);
    if (alpha >= 1.0 || rng_.uniform() < alpha) {
      theta_ = theta;
      grad_ = grad;
      logp_ = logp;
    }
    return alpha;
  }

  // Stan's crossing heuristic for a usable starting step size.
  double find_initial_step() {
    double eps = 1.0;
    double a = one_step_accept(eps);
    const bool up = a > 0.5;
    for (int it = 0; it < 100; ++it) {
      eps *= up ? 2.0 : 0.5;
      if (eps < 1e-10 || eps > 1e10) break;
      a = one_step_accept(eps);
      if (up && a < 0.5) break;
      if (!up && a > 0.5) break;
    }
    return std::clamp(eps, 1e-10, 1e10);
  }

 private:
  double hamiltonian(double logp, const Eigen::VectorXd& p) const {
    return -logp + 0.5 * (inv_mass_.array() * p.array().square()).sum();
  }

  double one_step_accept(double eps) {
    Eigen::VectorXd p(d_);
    for (int i = 0; i < d_; ++i) p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
    const double h0 = hamiltonian(logp_, p);
    Eigen::VectorXd theta = theta_;
    Eigen::VectorXd grad = grad_;
    p += 0.5 * eps * grad;
    theta.array() += eps * inv_mass_.array() * p.array();
    Eigen::VectorXd g2(d_);
    const double logp = target_.log_density_gradient(theta, g2);
    if (!std::isfinite(logp)) return 0.0;
    p += 0.5 * eps * g2;
    const double h1 = hamiltonian(logp, p);
    return std::min(1.0, std::exp(h0 - h1));
  }

  const F& target_;
  Rng rng_;
  double target_accept_;
  int max_leapfrog_;
  int d_;
  Eigen::VectorXd inv_mass_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd grad_;
  double logp_ = 0.0;
};

}  // namespace detail

// Plain HMC with jittered leapfrog length, dual-averaged step size, and a
// diagonal metric estimated during the second half of warmup. Chains run
// concurrently on deterministic derived streams: output is identical for
// any worker count.
template <LogDensityTarget F>
ChainDraws run_hmc(const F& target, const HmcConfig& cfg) {
  if (target.dim() < 1) throw std::invalid_argument("run_hmc: dimension >= 1");
  if (cfg.chains < 1) throw std::invalid_argument("run_hmc: chains >= 1");
  if (cfg.samples < 1) throw std::invalid_argument("run_hmc: samples >= 1");
  if (cfg.max_leapfrog < 1)
    throw std::invalid_argument("run_hmc: leapfrog steps >= 1");
  if (cfg.init && cfg.init->size() != target.dim())
    throw std::invalid_argument("run_hmc: init dimension mismatch");

  const int d = target.dim();
  ChainDraws out;
  out.warmup = cfg.warmup;
  out.chains.assign(static_cast<std::size_t>(cfg.chains),
                    Eigen::MatrixXd(cfg.samples, d));
  out.step_sizes.assign(static_cast<std::size_t>(cfg.chains), 0.0);
  out.inv_mass.assign(static_cast<std::size_t>(cfg.chains),
                      Eigen::VectorXd::Ones(d));
  out.accept_rates.assign(static_cast<std::size_t>(cfg.chains), 0.0);
  out.divergences.assign(static_cast<std::size_t>(cfg.chains), 0);

  const Rng base(cfg.seed);
  parallel_for(static_cast<std::size_t>(cfg.chains), cfg.workers, [&](std::size_t c) {
    detail::HmcChain<F> chain(target, base.derive(c), cfg.target_accept,
                              cfg.max_leapfrog);
    chain.init_position(cfg.init ? *cfg.init : Eigen::VectorXd::Zero(d));

    double eps = chain.find_initial_step();
    const int w = cfg.warmup;
    // metric update points: none for short warmups, otherwise at w/2 (from
    // the late first half) and at 9w/10 (from the second half proper)
    const bool adapt_metric = w >= 40;
    const int m1 = w / 2;
    const int m2 = (9 * w) / 10;
    detail::DualAverage da(eps, cfg.target_accept);
    detail::Welford acc(d);
    bool divergent = false;
    for (int it = 0; it < w; ++it) {
      da.update(chain.transition(da.current(), &divergent));
      if (adapt_metric) {
        if (it >= m1 / 2) acc.add(chain.position());
        if (it + 1 == m1 || it + 1 == m2) {
          chain.set_inv_mass(acc.regularized_variance());
          acc = detail::Welford(d);
          da = detail::DualAverage(da.averaged(), cfg.target_accept);
        }
      }
    }
    eps = w > 0 ? da.averaged() : eps;

    double accept_sum = 0.0;
    int n_div = 0;
    for (int s = 0; s < cfg.samples; ++s) {
      accept_sum += chain.transition(eps, &divergent);
      n_div += divergent ? 1 : 0;
      out.chains[c].row(s) = chain.position().transpose();
    }
    out.step_sizes[c] = eps;
    out.inv_mass[c] = chain.inv_mass();
    out.accept_rates[c] = accept_sum / cfg.samples;
    out.divergences[c] = n_div;
  });

  long total_div = 0;
  for (int v : out.divergences) total_div += v;
  if (total_div * 2 > static_cast<long>(cfg.chains) * cfg.samples)
    throw std::runtime_error("sampler failed to adapt");
  return out;
}

// Split-chain potential scale reduction factor (BDA3). Each chain is halved,
// so M chains contribute 2M sequences.
inline Eigen::VectorXd rhat(const ChainDraws& c) {
  if (c.num_chains() < 2)
    throw std::invalid_argument("R-hat requires >=2 chains");
  if (c.num_samples() < 2)
    throw std::invalid_argument("R-hat requires >=2 samples per chain");
  const int half = c.num_samples() / 2;
  const int m = 2 * c.num_chains();
  const int d = c.dim();
  Eigen::VectorXd result(d);
  for (int j = 0; j < d; ++j) {
    std::vector<double> means, vars;
    means.reserve(m);
    vars.reserve(m);
    for (const auto& chain : c.chains) {
      for (int h = 0; h < 2; ++h) {
        const auto seg = chain.col(j).segment(h * half, half);
        const double mu = seg.mean();
        const double v = (seg.array() - mu).square().sum() / (half - 1);
        means.push_back(mu);
        vars.push_back(v);
      }
    }
    double grand = 0.0;
    for (double mu : means) grand += mu;
    grand /= m;
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(half) / (m - 1);
    double w = 0.0;
    for (double v : vars) w += v;
    w /= m;
    if (w <= 0.0) {
      // all sequences constant: no detectable disagreement
      result[j] = 1.0;
      continue;
    }
    const double var_plus = (half - 1.0) / half * w + b / half;
    result[j] = std::sqrt(var_plus / w);
  }
  return result;
}

// Autocorrelation-based effective sample size with Geyer's initial monotone
// positive sequence truncation, pooled across chains. Degenerate (constant)
// parameters report 0.
inline Eigen::VectorXd effective_sample_size(const ChainDraws& c) {
  const int s = c.num_samples();
  if (s < 4) throw std::invalid_argument("ESS requires >=4 samples per chain");
  const int m = c.num_chains();
  const int d = c.dim();
  Eigen::VectorXd result(d);
  for (int j = 0; j < d; ++j) {
    std::vector<Eigen::VectorXd> centered(static_cast<std::size_t>(m));
    std::vector<double> chain_mean(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      chain_mean[static_cast<std::size_t>(k)] = c.chains[k].col(j).mean();
      centered[static_cast<std::size_t>(k)] =
          c.chains[k].col(j).array() - chain_mean[static_cast<std::size_t>(k)];
    }
    auto acov = [&](int k, int t) {
      const auto& x = centered[static_cast<std::size_t>(k)];
      double sum = 0.0;
      for (int i = 0; i + t < s; ++i) sum += x[i] * x[i + t];
      return sum / s;
    };
    double w = 0.0;
    for (int k = 0; k < m; ++k) w += acov(k, 0) * s / (s - 1.0);
    w /= m;
    if (!(w > 0.0)) {
      result[j] = 0.0;
      continue;
    }
    double b = 0.0;
    if (m > 1) {
      double grand = 0.0;
      for (double v : chain_mean) grand += v;
      grand /= m;
      for (double v : chain_mean) b += (v - grand) * (v - grand);
      b /= (m - 1);
    }
    const double var_plus = w * (s - 1.0) / s + b;

    double tau = 1.0;  // = 1 + 2 sum rho_t, accumulated in Geyer pairs
    double prev_pair = std::numeric_limits<double>::infinity();
    for (int t = 1; t + 1 < s; t += 2) {
      double mean_acov_t = 0.0, mean_acov_t1 = 0.0;
      for (int k = 0; k < m; ++k) {
        mean_acov_t += acov(k, t);
        mean_acov_t1 += acov(k, t + 1);
      }
      mean_acov_t /= m;
      mean_acov_t1 /= m;
      const double rho_t = 1.0 - (w - mean_acov_t) / var_plus;
      const double rho_t1 = 1.0 - (w - mean_acov_t1) / var_plus;
      double pair = rho_t + rho_t1;
      if (pair < 0.0) break;
      pair = std::min(pair, prev_pair);  // enforce monotone decrease
      prev_pair = pair;
      tau += 2.0 * pair;
    }
    result[j] = static_cast<double>(m) * s / tau;
  }
  return result;
}

// One row per draw (chain-major), one column per parameter.
inline void dump_draws_csv(const ChainDraws& c, std::ostream& out,
                           const std::vector<std::string>& names = {}) {
  const int d = c.dim();
  std::vector<std::string> header;
  for (int j = 0; j < d; ++j)
    header.push_back(names.empty() ? "p" + std::to_string(j) : names.at(j));
  const Eigen::MatrixXd pooled = c.pooled();
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<std::size_t>(pooled.rows()));
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) row.push_back(format_double(pooled(i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(out, header, rows);
}

}  // namespace causalps
