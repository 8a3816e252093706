#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace causalps {

// 97.5% standard normal quantile, used for normal-theory intervals.
inline constexpr double kZ975 = 1.959963984540054;

// Numerically stable logistic function. exp never overflows; output can
// reach the closed endpoints in floating point for |x| beyond ~37.
inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x <= -37.0) return std::exp(x);
  if (x <= 18.0) return std::log1p(std::exp(x));
  if (x <= 33.3) return x + std::exp(-x);
  return x;
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

inline double normal_logpdf(double x, double mean = 0.0, double sd = 1.0) {
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

// Student-t density, location 0.
inline double student_t_logpdf(double x, double df, double scale) {
  const double z = x / scale;
  return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         0.5 * (df + 1.0) * std::log1p(z * z / df);
}

// d/dx log t_df(x; 0, scale) = -(df+1) x / (df scale^2 + x^2)
inline double student_t_dlogpdf(double x, double df, double scale) {
  return -(df + 1.0) * x / (df * scale * scale + x * x);
}

// Half-t density on (0, inf), location 0.
inline double half_t_logpdf(double x, double df, double scale) {
  return std::numbers::ln2 + student_t_logpdf(x, df, scale);
}

inline double mean(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Sample variance, n-1 denominator.
inline double variance(const std::vector<double>& x) {
  if (x.size() < 2) throw std::invalid_argument("variance: need >= 2 values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double stddev(const std::vector<double>& x) {
  return std::sqrt(variance(x));
}

// Type-7 interpolated empirical quantile (sorts a copy).
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile: empty input");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p in [0,1]");
  std::sort(x.begin(), x.end());
  const double h = p * static_cast<double>(x.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

}  // namespace causalps
