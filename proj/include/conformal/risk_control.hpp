#pragma once

// Conformal risk control, upper-confidence-bound calibration and learn-then-test
// over monotone step losses.
//
// Every loss curve is a right-continuous non-increasing step function, so the
// empirical risk is itself a step function whose jumps sit at the union of the
// curves' breakpoints. Infima over lambda are taken over those breakpoints,
// which makes the 0-1 reductions to q_hat / p_hat exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "exact_dists.hpp"
#include "levels.hpp"
#include "nested_family.hpp"

namespace conformal {

class LossCurve {
 public:
  /// value(lam) = levels[j] with j = #{breakpoints <= lam}.
  LossCurve(std::vector<double> breakpoints, std::vector<double> levels,
            std::optional<double> bound = std::nullopt)
      : breaks_(std::move(breakpoints)), levels_(std::move(levels)), bound_(bound) {
    if (levels_.size() != breaks_.size() + 1) {
      throw std::invalid_argument("loss curve needs one more level than breakpoints");
    }
    for (std::size_t i = 1; i < breaks_.size(); ++i) {
      if (!(breaks_[i - 1] < breaks_[i])) throw std::invalid_argument("breakpoints must increase");
    }
    for (std::size_t i = 1; i < levels_.size(); ++i) {
      if (levels_[i] > levels_[i - 1]) throw std::invalid_argument("loss must be non-increasing");
    }
    if (bound_ && levels_.front() > *bound_) throw std::invalid_argument("loss exceeds its bound");
  }

  /// 1{score > lam}: the miscoverage loss of a calibration point.
  static LossCurve zero_one(double score) { return LossCurve({score}, {1.0, 0.0}, 1.0); }

  /// Step approximation of a monotone loss sampled on an ascending grid;
  /// on [grid_j, grid_{j+1}) it takes the value at grid_j.
  template <class Fn>
  static LossCurve from_grid(std::span<const double> grid, Fn&& loss,
                             std::optional<double> bound = std::nullopt) {
    if (grid.empty()) throw std::invalid_argument("empty loss grid");
    std::vector<double> breaks(grid.begin() + 1, grid.end());
    std::vector<double> levels;
    levels.reserve(grid.size());
    for (double g : grid) levels.push_back(loss(g));
    return LossCurve(std::move(breaks), std::move(levels), bound);
  }

  double operator()(double lam) const {
    const auto j = std::upper_bound(breaks_.begin(), breaks_.end(), lam) - breaks_.begin();
    return levels_[static_cast<std::size_t>(j)];
  }

  std::span<const double> breakpoints() const { return breaks_; }
  std::span<const double> levels() const { return levels_; }
  std::optional<double> bound() const { return bound_; }
  double sup_loss() const { return levels_.front(); }

 private:
  std::vector<double> breaks_;
  std::vector<double> levels_;
  std::optional<double> bound_;
};

struct RiskEstimate {
  double r_hat;
  double total;  // sum of losses, exact for 0-1 losses
  std::int64_t n;
};

struct PValueGrid {
  std::vector<double> lambdas;
  std::vector<double> pvals;
};

enum class UcbMethod { ExactBinomial, Hoeffding };

inline RiskEstimate empirical_risk(std::span<const LossCurve> curves, double lam) {
  if (curves.empty()) throw std::invalid_argument("no loss curves");
  detail::CompensatedSum sum;
  for (const auto& c : curves) sum.add(c(lam));
  const auto n = static_cast<std::int64_t>(curves.size());
  return {sum.value() / static_cast<double>(n), sum.value(), n};
}

/// Total loss sum_i l_i(lam) at every point where it can change: dom.lo and
/// each breakpoint in (dom.lo, dom.hi], ascending.
struct RiskPath {
  std::vector<double> lambdas;
  std::vector<double> totals;
};

inline RiskPath risk_path(std::span<const LossCurve> curves, const LambdaDomain& dom) {
  if (curves.empty()) throw std::invalid_argument("no loss curves");
  struct Drop {
    double at;
    double amount;
  };
  std::vector<Drop> drops;
  detail::CompensatedSum start;
  for (const auto& c : curves) {
    start.add(c(dom.lo));
    const auto br = c.breakpoints();
    const auto lv = c.levels();
    for (std::size_t j = 0; j < br.size(); ++j) {
      if (br[j] > dom.lo && br[j] <= dom.hi) drops.push_back({br[j], lv[j] - lv[j + 1]});
    }
  }
  std::sort(drops.begin(), drops.end(), [](const Drop& x, const Drop& y) { return x.at < y.at; });

  RiskPath path;
  path.lambdas.push_back(dom.lo);
  path.totals.push_back(start.value());
  detail::CompensatedSum total = start;
  for (std::size_t i = 0; i < drops.size();) {
    const double at = drops[i].at;
    for (; i < drops.size() && drops[i].at == at; ++i) total.add(-drops[i].amount);
    path.lambdas.push_back(at);
    path.totals.push_back(total.value());
  }
  return path;
}

/// inf{lam : n/(n+1) R(lam) + B/(n+1) <= alpha}, or dom.hi if the set is empty.
inline double crc_lambda(std::span<const LossCurve> curves, double bound, double alpha,
                         const LambdaDomain& dom = {}) {
  if (alpha > bound) throw std::domain_error("alpha above the loss bound B");
  for (const auto& c : curves) {
    if (c.sup_loss() > bound) throw std::domain_error("loss curve exceeds the bound B");
  }
  const RiskPath path = risk_path(curves, dom);
  const auto n = static_cast<std::int64_t>(curves.size());
  // n R + B <= alpha (n + 1), compared on the unnormalized scale
  const double rhs = scaled_level(alpha, n + 1);
  for (std::size_t i = 0; i < path.lambdas.size(); ++i) {
    if (path.totals[i] + bound <= rhs) return path.lambdas[i];
  }
  return dom.hi;
}

/// inf{p : Bin(count; n, p) <= delta}.
inline double ucb_exact_binomial(std::int64_t count, std::int64_t n, double delta) {
  return binom_inf_p(count, n, delta);
}

/// One-sided Hoeffding bound r_hat + B sqrt(log(1/delta) / (2n)).
inline double ucb_hoeffding(double r_hat, std::int64_t n, double delta, double bound) {
  if (n < 1) throw std::domain_error("need at least one loss");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::domain_error("delta must lie in (0, 1]");
  return r_hat + bound * std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(n)));
}

namespace detail {

inline std::int64_t integral_count(double total, std::int64_t n) {
  const double r = std::nearbyint(total);
  if (std::fabs(total - r) > 1e-9 || r < 0 || r > static_cast<double>(n)) {
    throw std::domain_error("exact binomial bound needs 0-1 losses");
  }
  return static_cast<std::int64_t>(r);
}

inline double curves_bound(std::span<const LossCurve> curves) {
  double b = 0.0;
  for (const auto& c : curves) b = std::max(b, c.bound().value_or(c.sup_loss()));
  return b;
}

}  // namespace detail

/// inf{lam : eps >= R+(lam') for all lam' >= lam}, or dom.hi if never satisfied.
inline double ucb_lambda(std::span<const LossCurve> curves, double eps, double delta,
                         UcbMethod method, const LambdaDomain& dom = {}) {
  require_open_unit(delta, "delta");
  const RiskPath path = risk_path(curves, dom);
  const auto n = static_cast<std::int64_t>(curves.size());
  const double bound = detail::curves_bound(curves);
  if (method == UcbMethod::ExactBinomial) {
    for (double total : path.totals) detail::integral_count(total, n);
  }

  auto controlled = [&](double total) {
    if (method == UcbMethod::ExactBinomial) {
      // eps >= inf{p : Bin(c; n, p) <= delta}  <=>  Bin(c; n, eps) <= delta
      if (eps <= 0.0) return false;
      if (eps >= 1.0) return true;
      return binom_cdf(detail::integral_count(total, n), n, eps) <= delta;
    }
    return ucb_hoeffding(total / static_cast<double>(n), n, delta, bound) <= eps;
  };

  std::size_t i = path.lambdas.size();
  while (i > 0 && controlled(path.totals[i - 1])) --i;
  if (i == path.lambdas.size()) return dom.hi;
  return path.lambdas[i];
}

/// Binomial tail p-values for H_j : R(lambda_j) > eps on an ascending grid.
inline PValueGrid ltt_pvalues(std::span<const double> grid, std::span<const LossCurve> curves,
                              double eps) {
  require_open_unit(eps, "eps");
  if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("grid must ascend");
  const auto n = static_cast<std::int64_t>(curves.size());
  PValueGrid out;
  out.lambdas.assign(grid.begin(), grid.end());
  out.pvals.reserve(grid.size());
  for (double lam : grid) {
    const RiskEstimate r = empirical_risk(curves, lam);
    out.pvals.push_back(binom_cdf(detail::integral_count(r.total, n), n, eps));
  }
  return out;
}

/// {lambda_j : p_j < delta / N}.
inline std::vector<double> ltt_bonferroni(const PValueGrid& pgrid, double delta) {
  require_open_unit(delta, "delta");
  const double cut = delta / static_cast<double>(pgrid.lambdas.size());
  std::vector<double> out;
  for (std::size_t j = 0; j < pgrid.lambdas.size(); ++j) {
    if (pgrid.pvals[j] < cut) out.push_back(pgrid.lambdas[j]);
  }
  return out;
}

/// Fixed-sequence testing from the largest lambda down, stopping at the first
/// p-value above delta. Returned ascending.
inline std::vector<double> ltt_fixed_sequence(const PValueGrid& pgrid, double delta) {
  require_open_unit(delta, "delta");
  std::size_t j = pgrid.lambdas.size();
  while (j > 0 && pgrid.pvals[j - 1] <= delta) --j;
  return {pgrid.lambdas.begin() + static_cast<std::ptrdiff_t>(j), pgrid.lambdas.end()};
}

/// Calibration scores plus the two infinite sentinels.
inline std::vector<double> default_ltt_grid(std::span<const double> scores) {
  std::vector<double> grid{-kInf};
  grid.insert(grid.end(), scores.begin(), scores.end());
  grid.push_back(kInf);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

inline std::vector<LossCurve> zero_one_curves(std::span<const double> scores) {
  std::vector<LossCurve> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(LossCurve::zero_one(s));
  return out;
}

}  // namespace conformal
