#pragma once

// Split conformal calibrators: the marginal-coverage quantile, the tolerance
// region quantile, the conversions between the two guarantees, and the Beta
// laws of conditional coverage they induce.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "exact_dists.hpp"
#include "levels.hpp"
#include "nested_family.hpp"

namespace conformal {

/// Calibration scores r_1..r_n held in ascending order.
class NonconformityScores {
 public:
  explicit NonconformityScores(std::vector<double> values) : sorted_(std::move(values)) {
    if (sorted_.empty()) throw std::invalid_argument("no calibration scores");
    for (double v : sorted_) {
      if (std::isnan(v)) throw std::invalid_argument("calibration score is NaN");
    }
    std::stable_sort(sorted_.begin(), sorted_.end());
  }

  std::int64_t size() const { return static_cast<std::int64_t>(sorted_.size()); }

  /// r_(i) for i in {0..n+1}, with r_(0) = -inf and r_(n+1) = +inf.
  double order_stat(std::int64_t i) const {
    if (i <= 0) return -kInf;
    if (i > size()) return kInf;
    return sorted_[static_cast<std::size_t>(i - 1)];
  }

  std::span<const double> sorted() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

struct Marginal {
  double alpha;
};

struct Tolerance {
  double eps;
  double delta;
};

using TargetGuarantee = std::variant<Marginal, Tolerance>;

inline void validate(const TargetGuarantee& target) {
  if (const auto* m = std::get_if<Marginal>(&target)) {
    require_open_unit(m->alpha, "alpha");
  } else {
    const auto& t = std::get<Tolerance>(target);
    require_open_unit(t.eps, "eps");
    require_open_unit(t.delta, "delta");
  }
}

/// Marginal coverage band [1 - alpha, 1 - alpha + 1/(n+1)] and the exact
/// coverage 1 - floor(alpha (n+1)) / (n+1) attained with distinct scores.
struct CoverageBounds {
  double lo;
  double hi;
  double exact_mean;
};

/// Parameters of the guarantee implied on the other side of the duality.
struct DualParams {
  std::optional<double> alpha;      // tolerance input: smallest valid alpha
  std::optional<double> eps_min;    // marginal input: smallest eps at the probe delta
  std::optional<double> delta_min;  // marginal input: smallest delta at the probe eps
};

struct CalibrationResult {
  double lambda_hat;
  std::int64_t order_index;  // in {1..n+1}; n+1 selects the whole label space
  std::int64_t n;
  std::optional<BetaParams> law;  // absent when order_index = n+1
  DualParams dual;
  CoverageBounds marginal_bounds;

  bool full_set() const { return order_index > n; }
};

/// Smallest admissible alpha for a tolerance region, (sup k + 1)/(n+1).
struct DualAlpha {
  double alpha;
  std::int64_t numerator;  // alpha = numerator / (n+1)
  bool full_set;           // the sup was over an empty set
};

inline CoverageBounds marginal_bounds(std::int64_t n, double alpha) {
  if (n < 1) throw std::domain_error("calibration size must be at least 1");
  require_open_unit(alpha, "alpha");
  const double m = static_cast<double>(n + 1);
  const double f = static_cast<double>(scaled_floor(alpha, n + 1));
  return {1.0 - alpha, 1.0 - alpha + 1.0 / m, 1.0 - f / m};
}

/// Minimal delta for which the alpha-quantile is an (eps, delta) tolerance region.
inline double tolerance_delta_given_alpha(std::int64_t n, double alpha, double eps) {
  require_open_unit(alpha, "alpha");
  require_open_unit(eps, "eps");
  return binom_cdf(scaled_floor(alpha, n + 1) - 1, n, eps);
}

/// Minimal eps for which the alpha-quantile is an (eps, delta) tolerance region.
inline double tolerance_eps_given_alpha(std::int64_t n, double alpha, double delta) {
  require_open_unit(alpha, "alpha");
  return binom_inf_p(scaled_floor(alpha, n + 1) - 1, n, delta);
}

inline DualAlpha alpha_given_tolerance(std::int64_t n, double eps, double delta) {
  const SupKResult k = binom_sup_k(n, eps, delta);
  const double m = static_cast<double>(n + 1);
  if (!k) return {1.0 / m, 1, true};
  return {static_cast<double>(*k + 1) / m, *k + 1, false};
}

/// ceil((1 - alpha)(n + 1))-th smallest score.
inline CalibrationResult q_hat(const NonconformityScores& scores, double alpha,
                               std::optional<Tolerance> probe = std::nullopt) {
  require_open_unit(alpha, "alpha");
  const std::int64_t n = scores.size();
  const std::int64_t f = scaled_floor(alpha, n + 1);
  const std::int64_t index = n + 1 - f;

  CalibrationResult out{scores.order_stat(index), index, n, std::nullopt, {}, marginal_bounds(n, alpha)};
  if (f > 0) out.law = BetaParams(static_cast<double>(index), static_cast<double>(f));
  out.dual.alpha = alpha;
  if (probe) {
    out.dual.eps_min = tolerance_eps_given_alpha(n, alpha, probe->delta);
    out.dual.delta_min = tolerance_delta_given_alpha(n, alpha, probe->eps);
  }
  return out;
}

/// (n - sup{k : Bin(k; n, eps) <= delta})-th smallest score.
inline CalibrationResult p_hat(const NonconformityScores& scores, double eps, double delta) {
  const std::int64_t n = scores.size();
  const SupKResult k = binom_sup_k(n, eps, delta);
  const DualAlpha dual = alpha_given_tolerance(n, eps, delta);
  const std::int64_t index = k ? n - *k : n + 1;

  CalibrationResult out{scores.order_stat(index), index, n, std::nullopt, {}, marginal_bounds(n, dual.alpha)};
  if (k) out.law = BetaParams(static_cast<double>(n - *k), static_cast<double>(*k + 1));
  out.dual.alpha = dual.alpha;
  return out;
}

inline CalibrationResult calibrate(const NonconformityScores& scores, const TargetGuarantee& target) {
  validate(target);
  if (const auto* m = std::get_if<Marginal>(&target)) return q_hat(scores, m->alpha);
  const auto& t = std::get<Tolerance>(target);
  return p_hat(scores, t.eps, t.delta);
}

/// Coverage law of the calibrated set for a calibration size n, without needing scores.
inline std::optional<BetaParams> coverage_law(std::int64_t n, const TargetGuarantee& target) {
  validate(target);
  if (const auto* m = std::get_if<Marginal>(&target)) {
    const std::int64_t f = scaled_floor(m->alpha, n + 1);
    if (f == 0) return std::nullopt;
    return BetaParams(static_cast<double>(n + 1 - f), static_cast<double>(f));
  }
  const auto& t = std::get<Tolerance>(target);
  const SupKResult k = binom_sup_k(n, t.eps, t.delta);
  if (!k) return std::nullopt;
  return BetaParams(static_cast<double>(n - *k), static_cast<double>(*k + 1));
}

/// Law of the coverage of [Y_(r), Y_(s)] for n iid draws: Beta(s - r, n - s + r + 1).
inline BetaParams wilks_interval_law(std::int64_t n, std::int64_t r, std::int64_t s) {
  if (n < 1) throw std::domain_error("sample size must be at least 1");
  if (!(0 <= r && r < s && s <= n + 1)) throw std::domain_error("need 0 <= r < s <= n+1");
  if (r == 0 && s == n + 1) throw std::domain_error("[Y_(0), Y_(n+1)] is the whole line");
  return BetaParams(static_cast<double>(s - r), static_cast<double>(n - s + r + 1));
}

inline bool wilks_is_tolerance(std::int64_t n, std::int64_t r, std::int64_t s, double eps,
                               double delta) {
  require_open_unit(eps, "eps");
  require_open_unit(delta, "delta");
  return beta_reg(1.0 - eps, wilks_interval_law(n, r, s)) <= delta;
}

}  // namespace conformal
