#pragma once

// Reference computations written independently of the library: direct
// summation in long double, log-gamma closed forms and power series.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

inline long double log_choose(std::int64_t n, std::int64_t k) {
  return std::lgammal(n + 1.0L) - std::lgammal(k + 1.0L) - std::lgammal(n - k + 1.0L);
}

inline long double binom_pmf(std::int64_t k, std::int64_t n, long double p) {
  if (k < 0 || k > n) return 0.0L;
  if (p == 0.0L) return k == 0 ? 1.0L : 0.0L;
  if (p == 1.0L) return k == n ? 1.0L : 0.0L;
  return std::exp(log_choose(n, k) + k * std::log(p) + (n - k) * std::log1p(-p));
}

inline long double binom_cdf(std::int64_t k, std::int64_t n, long double p) {
  long double s = 0.0L;
  for (std::int64_t i = 0; i <= std::min(k, n); ++i) s += binom_pmf(i, n, p);
  return std::min(s, 1.0L);
}

/// Largest k with binom_cdf(k) <= delta by linear scan, -1 if none.
inline std::int64_t sup_k(std::int64_t n, long double eps, long double delta) {
  std::int64_t best = -1;
  long double s = 0.0L;
  for (std::int64_t k = 0; k <= n; ++k) {
    s += binom_pmf(k, n, eps);
    if (s <= delta) best = k;
  }
  return best;
}

inline long double lbeta(long double a, long double b) {
  return std::lgammal(a) + std::lgammal(b) - std::lgammal(a + b);
}

inline long double betabin_pmf(std::int64_t k, std::int64_t n, long double a, long double b) {
  if (k < 0 || k > n) return 0.0L;
  return std::exp(log_choose(n, k) + lbeta(k + a, n - k + b) - lbeta(a, b));
}

inline long double betabin_cdf(std::int64_t k, std::int64_t n, long double a, long double b) {
  long double s = 0.0L;
  for (std::int64_t i = 0; i <= std::min(k, n); ++i) s += betabin_pmf(i, n, a, b);
  return s;
}

/// I_x(a, b) from the positive series
///   x^a (1 - x)^b / (a B(a, b)) * sum_n (a + b)_n / (a + 1)_n x^n,
/// evaluated on whichever tail is below the mean so nothing cancels.
inline long double beta_reg_series(long double x, long double a, long double b) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  if (x > a / (a + b)) return 1 - beta_reg_series(1 - x, b, a);
  long double term = 1;
  long double sum = 0;
  for (int n = 0; n < 1000000; ++n) {
    sum += term;
    if (term < 1e-22L * sum) break;
    term *= (a + b + n) / (a + 1 + n) * x;
  }
  return std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta(a, b)) / a * sum;
}

/// i-th smallest (1-based) by full sort, +inf beyond the sample.
inline double order_stat(std::vector<double> v, std::int64_t i) {
  std::sort(v.begin(), v.end());
  if (i > static_cast<std::int64_t>(v.size())) return INFINITY;
  return v[static_cast<std::size_t>(i - 1)];
}

}  // namespace oracle
