#pragma once

// Self-checks runnable from the command line: the calibrator duality, the
// exact 0-1 reductions of the risk-control procedures, an exhaustive rank
// enumeration of marginal coverage, the beta/binomial identity, the coverage
// law of repeated trials and the validity of the binomial p-values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "calibration.hpp"
#include "exact_dists.hpp"
#include "experiments.hpp"
#include "risk_control.hpp"
#include "seeding.hpp"

namespace conformal {

struct SuiteResult {
  explicit SuiteResult(std::string suite) : name(std::move(suite)) {}

  std::string name;
  std::int64_t checks = 0;
  std::int64_t failures = 0;
  std::string detail;

  bool passed() const { return failures == 0 && checks > 0; }

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok) {
      if (failures < 5) detail += (detail.empty() ? "" : "; ") + what;
      ++failures;
    }
  }
};

using QuantileCalibrator = std::function<CalibrationResult(const NonconformityScores&, double)>;

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t score_sets = 1000;
  std::size_t ks_trials = 1000;
  QuantileCalibrator quantile = [](const NonconformityScores& s, double a) { return q_hat(s, a); };
};

namespace detail {

inline std::string describe(const char* what, double got, double want) {
  std::ostringstream o;
  o.precision(17);
  o << what << ": got " << got << ", want " << want;
  return o.str();
}

}  // namespace detail

/// Round trips between the two guarantees and the p_hat/q_hat index identity.
inline SuiteResult verify_duality() {
  SuiteResult r{"duality"};
  const std::int64_t ns[] = {1, 5, 10, 50, 100, 999, 1000, 10000};
  const double levels[] = {0.2, 0.1, 0.05, 0.01, 0.005, 0.001};
  for (auto n : ns) {
    for (double eps : levels) {
      for (double delta : levels) {
        const DualAlpha a = alpha_given_tolerance(n, eps, delta);
        const SupKResult k = binom_sup_k(n, eps, delta);
        if (a.full_set) {
          r.expect(!k.has_value(), "full-set flag without an empty sup");
          continue;
        }
        r.expect(scaled_floor(a.alpha, n + 1) == *k + 1, "floor(alpha(n+1)) != k+1");
        r.expect(tolerance_delta_given_alpha(n, a.alpha, eps) <= delta,
                 detail::describe("delta round trip", tolerance_delta_given_alpha(n, a.alpha, eps), delta));
        r.expect(tolerance_eps_given_alpha(n, a.alpha, delta) <= eps + 1e-12,
                 detail::describe("eps round trip", tolerance_eps_given_alpha(n, a.alpha, delta), eps));
        if (n <= 1000) {
          std::vector<double> s(static_cast<std::size_t>(n));
          std::iota(s.begin(), s.end(), 1.0);
          const NonconformityScores scores(s);
          r.expect(p_hat(scores, eps, delta).order_index == q_hat(scores, a.alpha).order_index,
                   "p_hat and q_hat(dual alpha) disagree");
        }
      }
    }
  }
  return r;
}

/// crc_lambda == q_hat and ucb_lambda(ExactBinomial) == p_hat on random score
/// sets, a share of them with ties.
inline SuiteResult verify_equivalence(const VerifyOptions& opt = {}) {
  SuiteResult r{"equivalence"};
  auto rng = make_rng(opt.seed, 11);
  std::uniform_int_distribution<int> size(1, 200);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  for (std::size_t t = 0; t < opt.score_sets; ++t) {
    const auto n = static_cast<std::size_t>(size(rng));
    const bool ties = t % 4 == 3;
    std::vector<double> s(n);
    for (double& v : s) v = ties ? std::round(3.0 * normal(rng)) : normal(rng);
    const double alpha = 0.005 + 0.49 * unit(rng);
    const double eps = 0.01 + 0.3 * unit(rng);
    const double delta = 0.01 + 0.3 * unit(rng);
    const NonconformityScores scores(s);
    const auto curves = zero_one_curves(s);

    const double crc = crc_lambda(curves, 1.0, alpha);
    const double split = opt.quantile(scores, alpha).lambda_hat;
    r.expect(crc == split, detail::describe("crc vs q_hat", crc, split));

    const double ucb = ucb_lambda(curves, eps, delta, UcbMethod::ExactBinomial);
    const double tol = p_hat(scores, eps, delta).lambda_hat;
    r.expect(ucb == tol, detail::describe("ucb vs p_hat", ucb, tol));
  }
  return r;
}

/// Minimal fixed-sequence selection lies within one grid step above the UCB
/// threshold on a 10^4-point grid.
inline SuiteResult verify_ltt_vs_ucb(const VerifyOptions& opt = {}, std::size_t sets = 10) {
  SuiteResult r{"ltt"};
  auto rng = make_rng(opt.seed, 12);
  std::normal_distribution<double> normal;
  constexpr std::size_t kGrid = 10000;
  for (std::size_t t = 0; t < sets; ++t) {
    std::vector<double> s(500 + 100 * t);
    for (double& v : s) v = normal(rng);
    const auto [mn, mx] = std::minmax_element(s.begin(), s.end());
    const double lo = *mn - 0.5;
    const double step = (*mx + 0.5 - lo) / static_cast<double>(kGrid - 1);
    std::vector<double> grid(kGrid);
    for (std::size_t i = 0; i < kGrid; ++i) grid[i] = lo + step * static_cast<double>(i);

    const auto curves = zero_one_curves(s);
    const double eps = 0.1;
    const double delta = 0.1;
    const double ucb = ucb_lambda(curves, eps, delta, UcbMethod::ExactBinomial);
    const auto selected = ltt_fixed_sequence(ltt_pvalues(grid, curves, eps), delta);
    if (selected.empty()) {
      r.expect(false, "fixed sequence selected nothing");
      continue;
    }
    const double first = selected.front();
    r.expect(first >= ucb && first - ucb <= step * (1 + 1e-9), detail::describe("ltt min vs ucb", first, ucb));
  }
  return r;
}

/// Exact marginal coverage by enumerating every rank order of n + 1 distinct scores.
inline SuiteResult verify_sandwich(const VerifyOptions& opt = {}) {
  SuiteResult r{"sandwich"};
  for (std::int64_t n = 2; n <= 6; ++n) {
    for (double alpha : {0.1, 0.2, 0.3}) {
      std::vector<int> ranks(static_cast<std::size_t>(n) + 1);
      std::iota(ranks.begin(), ranks.end(), 1);
      std::int64_t covered = 0;
      std::int64_t total = 0;
      do {
        std::vector<double> cal(ranks.begin(), ranks.end() - 1);
        const double lam = opt.quantile(NonconformityScores(cal), alpha).lambda_hat;
        covered += static_cast<double>(ranks.back()) <= lam ? 1 : 0;
        ++total;
      } while (std::next_permutation(ranks.begin(), ranks.end()));
      const double cov = static_cast<double>(covered) / static_cast<double>(total);
      const CoverageBounds b = marginal_bounds(n, alpha);
      r.expect(cov >= b.lo - 1e-12 && cov <= b.hi + 1e-12,
               "n=" + std::to_string(n) + " coverage outside the sandwich");
    }
  }
  return r;
}

/// Beta(1 - p; m + 1 - k, k) == Bin(k - 1; m, p) on a 10 x 10 x 9 grid.
inline SuiteResult verify_identity() {
  SuiteResult r{"identity"};
  const std::int64_t ms[] = {1, 2, 5, 10, 20, 50, 100, 500, 1000, 10000};
  for (auto m : ms) {
    for (int i = 0; i < 10; ++i) {
      const std::int64_t k = 1 + (m - 1) * i / 9;
      for (int j = 1; j <= 9; ++j) {
        const double p = 0.1 * j;
        const double lhs = beta_reg(1.0 - p, BetaParams(static_cast<double>(m + 1 - k), static_cast<double>(k)));
        const double rhs = binom_cdf(k - 1, m, p);
        r.expect(std::fabs(lhs - rhs) <= 1e-10, detail::describe("beta/binomial identity", lhs, rhs));
      }
    }
  }
  return r;
}

/// KS distance of the trial coverages from the Beta-Binomial reference and the
/// one-sided dominance check, both against 1.36 / sqrt(R).
inline SuiteResult verify_ks(const VerifyOptions& opt = {}) {
  SuiteResult r{"ks"};
  ExperimentConfig cfg;
  cfg.trials = opt.ks_trials;
  cfg.seed = opt.seed;
  cfg.candidates = {{0.05, 0.95}};
  cfg.folds = 2;
  const ExperimentResult res = run_synthetic_experiment(cfg);
  const double crit = 1.36 / std::sqrt(static_cast<double>(cfg.trials));
  r.expect(res.summary.ks_distance < crit, detail::describe("ks distance", res.summary.ks_distance, crit));
  r.expect(res.summary.ks_upper < crit, detail::describe("dominance excess", res.summary.ks_upper, crit));
  return r;
}

/// Super-uniformity of the binomial p-value at an exact null and the FWER of
/// fixed-sequence testing, each within three Monte-Carlo standard errors.
inline SuiteResult verify_pvalues(const VerifyOptions& opt = {}, std::size_t sims = 20000) {
  SuiteResult r{"pvalues"};
  auto rng = make_rng(opt.seed, 13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double eps = 0.1;
  const double delta = 0.1;
  const std::size_t n = 60;
  const double M = static_cast<double>(sims);

  // uniform scores: R(lam) = 1 - lam, so lam = 1 - eps is an exact null
  const std::vector<double> null_grid{1.0 - eps};
  std::vector<double> pv(sims);
  std::vector<double> s(n);
  for (std::size_t t = 0; t < sims; ++t) {
    for (double& v : s) v = unit(rng);
    pv[t] = ltt_pvalues(null_grid, zero_one_curves(s), eps).pvals[0];
  }
  for (int i = 1; i <= 99; ++i) {
    const double u = 0.01 * i;
    const double frac = static_cast<double>(std::count_if(pv.begin(), pv.end(), [u](double p) { return p <= u; })) / M;
    r.expect(frac <= u + 3.0 * std::sqrt(u * (1.0 - u) / M), detail::describe("P[p <= u]", frac, u));
  }

  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.5 + 0.025 * i);
  std::int64_t errors = 0;
  for (std::size_t t = 0; t < sims; ++t) {
    for (double& v : s) v = unit(rng);
    const auto sel = ltt_fixed_sequence(ltt_pvalues(grid, zero_one_curves(s), eps), delta);
    // any selected lam with 1 - lam > eps is a false rejection
    if (!sel.empty() && 1.0 - sel.front() > eps + 1e-12) ++errors;
  }
  const double fwer = static_cast<double>(errors) / M;
  r.expect(fwer <= delta + 3.0 * std::sqrt(delta * (1.0 - delta) / M), detail::describe("FWER", fwer, delta));
  return r;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"duality", "equivalence", "ltt", "sandwich", "identity", "ks", "pvalues"};
  return names;
}

inline SuiteResult run_suite(const std::string& name, const VerifyOptions& opt = {}) {
  if (name == "duality") return verify_duality();
  if (name == "equivalence") return verify_equivalence(opt);
  if (name == "ltt") return verify_ltt_vs_ucb(opt);
  if (name == "sandwich") return verify_sandwich(opt);
  if (name == "identity") return verify_identity();
  if (name == "ks") return verify_ks(opt);
  if (name == "pvalues") return verify_pvalues(opt);
  throw std::invalid_argument("unknown suite '" + name + "'");
}

}  // namespace conformal
