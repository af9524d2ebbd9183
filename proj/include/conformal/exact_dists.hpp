#pragma once

// Binomial, beta and beta-binomial distribution functions together with the
// monotone inversions used by the calibrators.
//
// Binomial probabilities are built from Loader's saddle-point form of the
// pmf (stirlerr / bd0), which keeps full relative accuracy for n in the
// millions. Tail sums run outward from the mode with a geometric remainder
// bound, so only the terms that matter are evaluated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "levels.hpp"

namespace conformal {

struct BetaParams {
  double a;
  double b;

  BetaParams(double a_, double b_) : a(a_), b(b_) {
    if (!(a > 0.0 && b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw std::domain_error("beta shape parameters must be positive and finite");
    }
  }

  double mean() const { return a / (a + b); }
  double variance() const { return a * b / ((a + b) * (a + b) * (a + b + 1.0)); }

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

struct BetaBinParams {
  std::int64_t trials;
  double a;
  double b;

  BetaBinParams(std::int64_t trials_, double a_, double b_) : trials(trials_), a(a_), b(b_) {
    if (trials < 1) throw std::domain_error("beta-binomial needs at least one trial");
    BetaParams check(a, b);
    (void)check;
  }
  BetaBinParams(std::int64_t trials_, const BetaParams& law) : BetaBinParams(trials_, law.a, law.b) {}

  double mean() const { return static_cast<double>(trials) * a / (a + b); }
  double variance() const {
    const double n = static_cast<double>(trials);
    const double s = a + b;
    return n * a * b * (s + n) / (s * s * (s + 1.0));
  }
};

/// Largest k in {0..n} with Bin(k; n, eps) <= delta. Empty when even k = 0 fails.
using SupKResult = std::optional<std::int64_t>;

namespace detail {

inline constexpr double kLnSqrt2Pi = 0.918938533204672741780329736406;

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// log(x!) - [(x + 1/2) log x - x + log sqrt(2 pi)], the Stirling remainder.
inline double stirlerr(double x) {
  if (x <= 15.0) {
    const long double lx = x;
    return static_cast<double>(std::lgamma(lx + 1.0L) - (lx + 0.5L) * std::log(lx) + lx -
                               static_cast<long double>(kLnSqrt2Pi));
  }
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  const double xx = x * x;
  if (x > 500.0) return (s0 - s1 / xx) / x;
  if (x > 80.0) return (s0 - (s1 - s2 / xx) / xx) / x;
  if (x > 35.0) return (s0 - (s1 - (s2 - s3 / xx) / xx) / xx) / x;
  return (s0 - (s1 - (s2 - (s3 - s4 / xx) / xx) / xx) / xx) / x;
}

// Deviance term x log(x / np) + np - x, evaluated without cancellation near x = np.
inline double bd0(double x, double np) {
  if (std::fabs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    if (std::fabs(s) < std::numeric_limits<double>::min()) return s;
    double ej = 2.0 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
  }
  return x * std::log(x / np) + np - x;
}

// Binomial pmf with q = 1 - p passed separately.
inline double binom_pmf_raw(std::int64_t k, std::int64_t n, double p, double q) {
  if (p == 0.0) return k == 0 ? 1.0 : 0.0;
  if (q == 0.0) return k == n ? 1.0 : 0.0;
  const double nd = static_cast<double>(n);
  if (k == 0) {
    if (p < 0.1) return std::exp(-bd0(nd, nd * q) - nd * p);
    return std::exp(nd * std::log(q));
  }
  if (k == n) {
    if (q < 0.1) return std::exp(-bd0(nd, nd * p) - nd * q);
    return std::exp(nd * std::log(p));
  }
  const double x = static_cast<double>(k);
  const double lc =
      stirlerr(nd) - stirlerr(x) - stirlerr(nd - x) - bd0(x, nd * p) - bd0(nd - x, nd * q);
  const double lf = 2.0 * kLnSqrt2Pi + std::log(x) + std::log1p(-x / nd);
  return std::exp(lc - 0.5 * lf);
}

// x^a (1-x)^b / B(a, b) for 0 < x < 1, written so that no large logarithms cancel.
inline double beta_kernel(double x, double a, double b) {
  const double s = a + b;
  const double lc = stirlerr(s) - stirlerr(a) - stirlerr(b) - bd0(a, s * x) - bd0(b, s * (1.0 - x));
  return std::sqrt(a * b / (2.0 * std::numbers::pi * s)) * std::exp(lc);
}

// Continued fraction for I_x(a, b) (modified Lentz); converges fast for x < (a+1)/(a+b+2).
inline double beta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < 1'000'000; ++m) {
    const double md = m;
    const double m2 = 2.0 * md;
    double aa = md * (b - md) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + md) * (qab + md) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

inline void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error(std::string(name) + " must lie in [0, 1]");
  }
}

}  // namespace detail

inline double binom_pmf(std::int64_t k, std::int64_t n, double p) {
  detail::require_probability(p, "success probability");
  if (n < 1) throw std::domain_error("binomial needs at least one trial");
  if (k < 0 || k > n) return 0.0;
  return detail::binom_pmf_raw(k, n, p, 1.0 - p);
}

/// Binomial CDF Bin(k; n, p) = P[X <= k]. k outside {0..n-1} saturates to 0 or 1.
inline double binom_cdf(std::int64_t k, std::int64_t n, double p) {
  detail::require_probability(p, "success probability");
  if (n < 1) throw std::domain_error("binomial needs at least one trial");
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;

  const double q = 1.0 - p;
  const double nd = static_cast<double>(n);
  const auto mode = static_cast<std::int64_t>(std::floor((nd + 1.0) * p));
  constexpr double rel_tol = 1e-17;
  detail::CompensatedSum sum;

  if (k < mode) {
    // Terms decrease monotonically from k towards 0.
    for (std::int64_t i = k; i >= 0; --i) {
      const double term = detail::binom_pmf_raw(i, n, p, q);
      sum.add(term);
      const double ratio = static_cast<double>(i) * q / ((nd - static_cast<double>(i) + 1.0) * p);
      if (ratio < 1.0 && term * ratio / (1.0 - ratio) <= rel_tol * sum.value()) break;
    }
    return sum.value();
  }

  // Upper tail from k+1 upwards, also monotonically decreasing.
  for (std::int64_t i = k + 1; i <= n; ++i) {
    const double term = detail::binom_pmf_raw(i, n, p, q);
    sum.add(term);
    const double ratio = (nd - static_cast<double>(i)) * p / ((static_cast<double>(i) + 1.0) * q);
    if (ratio < 1.0 && term * ratio / (1.0 - ratio) <= rel_tol * sum.value()) break;
  }
  return 1.0 - sum.value();
}

/// sup{k : Bin(k; n, eps) <= delta} by binary search over k.
inline SupKResult binom_sup_k(std::int64_t n, double eps, double delta) {
  if (n < 1) throw std::domain_error("calibration size must be at least 1");
  require_open_unit(eps, "eps");
  require_open_unit(delta, "delta");
  if (binom_cdf(0, n, eps) > delta) return std::nullopt;
  // invariant: cdf(lo) <= delta < cdf(hi); cdf(n) = 1 > delta
  std::int64_t lo = 0;
  std::int64_t hi = n;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (binom_cdf(mid, n, eps) <= delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// inf{p : Bin(k; n, p) <= delta}. The CDF is strictly decreasing in p, so
/// bisection brackets the crossing; the upper end of the final bracket is returned.
inline double binom_inf_p(std::int64_t k, std::int64_t n, double delta) {
  if (n < 1) throw std::domain_error("binomial needs at least one trial");
  require_open_unit(delta, "delta");
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double lo = 0.0;  // Bin(k; n, 0) = 1 > delta
  double hi = 1.0;  // Bin(k; n, 1) = 0 <= delta
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (binom_cdf(k, n, mid) <= delta) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

/// Regularized incomplete beta function I_x(a, b).
inline double beta_reg(double x, const BetaParams& params) {
  detail::require_probability(x, "x");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double a = params.a;
  const double b = params.b;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return detail::beta_kernel(x, a, b) * detail::beta_continued_fraction(x, a, b) / a;
  }
  const double y = 1.0 - x;
  return 1.0 - detail::beta_kernel(y, b, a) * detail::beta_continued_fraction(y, b, a) / b;
}

/// Inverse of beta_reg in x, by bisection to full double resolution.
inline double beta_quantile(double q, const BetaParams& params) {
  require_open_unit(q, "q");
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (beta_reg(mid, params) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double flo = std::fabs(beta_reg(lo, params) - q);
  const double fhi = std::fabs(beta_reg(hi, params) - q);
  return flo < fhi ? lo : hi;
}

/// Beta-binomial law with its pmf and CDF tabulated over {0..trials}.
///
/// The pmf is built from the term ratio
///   w(i+1)/w(i) = (n-i)/(i+1) * (i+a)/(n-i-1+b)
/// in log space and normalized by its own sum, which avoids log-gamma
/// cancellation at large n.
class BetaBinomial {
 public:
  explicit BetaBinomial(const BetaBinParams& params) : params_(params) {
    const std::int64_t n = params.trials;
    const double nd = static_cast<double>(n);
    std::vector<double> logw(static_cast<std::size_t>(n) + 1);
    logw[0] = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double id = static_cast<double>(i);
      logw[i + 1] = logw[i] + std::log((nd - id) / (id + 1.0)) +
                    std::log((id + params.a) / (nd - id - 1.0 + params.b));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    detail::CompensatedSum total;
    pmf_.resize(logw.size());
    for (std::size_t i = 0; i < logw.size(); ++i) {
      pmf_[i] = std::exp(logw[i] - top);
      total.add(pmf_[i]);
    }
    const double z = total.value();
    for (double& v : pmf_) v /= z;

    cdf_.resize(pmf_.size());
    detail::CompensatedSum lower;
    for (std::size_t i = 0; i < pmf_.size(); ++i) {
      lower.add(pmf_[i]);
      cdf_[i] = std::min(1.0, lower.value());
    }
    // upper-tail sums give the CDF near 1 without accumulated drift
    detail::CompensatedSum upper;
    for (std::size_t i = pmf_.size(); i-- > 1;) {
      upper.add(pmf_[i]);
      if (cdf_[i - 1] > 0.5) cdf_[i - 1] = 1.0 - upper.value();
    }
    cdf_.back() = 1.0;
    for (std::size_t i = 1; i < cdf_.size(); ++i) cdf_[i] = std::max(cdf_[i], cdf_[i - 1]);
  }

  const BetaBinParams& params() const { return params_; }

  double pmf(std::int64_t k) const {
    if (k < 0 || k > params_.trials) return 0.0;
    return pmf_[static_cast<std::size_t>(k)];
  }

  double cdf(std::int64_t k) const {
    if (k < 0) return 0.0;
    if (k >= params_.trials) return 1.0;
    return cdf_[static_cast<std::size_t>(k)];
  }

  /// Largest k with cdf(k) <= q; empty when cdf(0) > q.
  std::optional<std::int64_t> quantile(double q) const {
    require_open_unit(q, "q");
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), q);
    if (it == cdf_.begin()) return std::nullopt;
    return static_cast<std::int64_t>(it - cdf_.begin()) - 1;
  }

  double mean() const { return params_.mean(); }
  double variance() const { return params_.variance(); }

 private:
  BetaBinParams params_;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

inline double betabin_cdf(std::int64_t k, const BetaBinParams& params) {
  return BetaBinomial(params).cdf(k);
}

/// Lower quantile: largest k with betabin_cdf(k) <= q, empty if none.
inline std::optional<std::int64_t> betabin_quantile(double q, const BetaBinParams& params) {
  return BetaBinomial(params).quantile(q);
}

}  // namespace conformal
