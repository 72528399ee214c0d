#pragma once

// Scalar probability and numerics helpers shared across the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace bablr {

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kSqrt2Pi = 2.5066282746310005024;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double normal_lpdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -std::log(sigma) - 0.5 * kLog2Pi - 0.5 * z * z;
}

inline double std_normal_lpdf(double z) { return -0.5 * kLog2Pi - 0.5 * z * z; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

// log Phi(x). erfc covers the whole range where it does not underflow;
// past that the standard tail expansion takes over.
inline double log_normal_cdf(double x) {
  if (x > -20.0) return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  const double x2 = x * x;
  const double s =
      -1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
  return -0.5 * x2 - 0.5 * kLog2Pi - std::log(-x) + std::log1p(s);
}

// phi(x) / Phi(x), stable on both tails.
inline double normal_pdf_over_cdf(double x) {
  return std::exp(std_normal_lpdf(x) - log_normal_cdf(x));
}

// Phi^-1(p): analytic starting point refined by Newton steps on log Phi,
// whose derivative is the Mills ratio above. Accurate to machine precision
// over (0, 1).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return kNegInf;
    if (p == 1.0) return kPosInf;
    return kNaN;
  }
  const bool upper = p > 0.5;
  const double pl = upper ? 1.0 - p : p;
  const double lp = std::log(pl);
  double x;
  if (pl >= 0.15) {
    x = kSqrt2Pi * (pl - 0.5);
  } else {
    const double r = -2.0 * lp;
    x = -std::sqrt(std::max(r - kLog2Pi - std::log(r), 1e-10));
  }
  for (int it = 0; it < 60; ++it) {
    const double f = log_normal_cdf(x) - lp;
    const double step = f / normal_pdf_over_cdf(x);
    x -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
  }
  return upper ? -x : x;
}

// N(mu, sigma) truncated to x <= ub.
inline double trunc_normal_upper_lpdf(double x, double mu, double sigma, double ub) {
  if (x > ub) return kNegInf;
  return normal_lpdf(x, mu, sigma) - log_normal_cdf((ub - mu) / sigma);
}

// N(mu, sigma) truncated to x >= lb.
inline double trunc_normal_lower_lpdf(double x, double mu, double sigma, double lb) {
  if (x < lb) return kNegInf;
  return normal_lpdf(x, mu, sigma) - log_normal_cdf((mu - lb) / sigma);
}

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) return kNaN;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased sample variance.
inline double variance_of(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) return kNaN;
  const double m = mean_of(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(n - 1);
}

inline double sd_of(const std::vector<double>& x) { return std::sqrt(variance_of(x)); }

// Linear-interpolation sample quantile (order statistics, type 7) on a
// pre-sorted vector.
inline double quantile_of_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0,1]");
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const std::size_t i = static_cast<std::size_t>(h);
  if (i + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

inline double sample_quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_of_sorted(values, q);
}

inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("correlation needs two equal-length samples");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

// 1-based ranks with ties averaged.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace bablr
