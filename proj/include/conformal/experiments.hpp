#pragma once

// Repeated split/calibrate/test trials and the coverage statistics computed
// over them: the mean coverage, the two exceedance estimates, a histogram and
// the distance to the Beta-Binomial reference law.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "calibration.hpp"
#include "data.hpp"
#include "exact_dists.hpp"
#include "predictors.hpp"
#include "seeding.hpp"

namespace conformal {

struct TrialReport {
  std::int64_t j = 0;
  double lambda_hat = 0.0;
  std::int64_t covered = 0;  // test points inside the calibrated set
  double coverage = 0.0;     // covered / n_test
  double avg_length = 0.0;
  std::int64_t n = 0;
  std::int64_t n_test = 0;
};

struct TrialConfig {
  std::size_t n = 1000;
  std::size_t n_test = 5000;
  std::size_t trials = 1000;
  TargetGuarantee target = Tolerance{0.1, 0.1};
  std::uint64_t master_seed = 0;
  std::size_t workers = 1;
  std::optional<double> forced_lambda;  // bypasses calibration when set
};

namespace detail {

inline TrialReport run_one_trial(std::span<const Interval> base, std::span<const double> labels,
                                 const TrialConfig& cfg, std::size_t j) {
  std::vector<std::size_t> perm(labels.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(cfg.master_seed, j);
  std::shuffle(perm.begin(), perm.end(), rng);

  double lam = 0.0;
  if (cfg.forced_lambda) {
    lam = *cfg.forced_lambda;
  } else {
    std::vector<double> scores(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) scores[i] = cqr_score(base[perm[i]], labels[perm[i]]);
    lam = calibrate(NonconformityScores(std::move(scores)), cfg.target).lambda_hat;
  }

  TrialReport r;
  r.j = static_cast<std::int64_t>(j);
  r.lambda_hat = lam;
  r.n = static_cast<std::int64_t>(cfg.n);
  r.n_test = static_cast<std::int64_t>(cfg.n_test);
  double length = 0.0;
  for (std::size_t t = cfg.n; t < cfg.n + cfg.n_test; ++t) {
    const std::size_t i = perm[t];
    if (cqr_score(base[i], labels[i]) <= lam) ++r.covered;
    length += expand(base[i], lam).length();
  }
  r.coverage = static_cast<double>(r.covered) / static_cast<double>(cfg.n_test);
  r.avg_length = length / static_cast<double>(cfg.n_test);
  return r;
}

}  // namespace detail

/// Trials over a pool whose base intervals are already computed. Trial j shuffles
/// the pool with its own seed derived from (master_seed, j); the first n rows
/// calibrate and the next n_test rows test. Output does not depend on `workers`.
inline std::vector<TrialReport> run_trials(std::span<const Interval> base, std::span<const double> labels,
                                           const TrialConfig& cfg) {
  if (base.size() != labels.size()) throw std::invalid_argument("intervals and labels differ in length");
  if (cfg.n < 1 || cfg.n_test < 1 || cfg.trials < 1) throw std::invalid_argument("n, n_test and R must be positive");
  if (cfg.n + cfg.n_test > labels.size()) throw std::invalid_argument("pool smaller than n + n_test");
  validate(cfg.target);

  std::vector<TrialReport> out(cfg.trials);
  const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, cfg.trials);
  if (workers == 1) {
    for (std::size_t j = 0; j < cfg.trials; ++j) out[j] = detail::run_one_trial(base, labels, cfg, j);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < cfg.trials; j = next++) {
          try {
            out[j] = detail::run_one_trial(base, labels, cfg, j);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

template <IntervalPredictor P>
std::vector<TrialReport> run_trials(const P& base, const Dataset& pool, const TrialConfig& cfg) {
  std::vector<Interval> intervals(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) intervals[i] = base.predict(pool.row(i));
  return run_trials(intervals, pool.labels(), cfg);
}

struct Histogram {
  std::vector<double> edges;  // bins [edges[i], edges[i+1]), last bin closed
  std::vector<std::int64_t> counts;
};

struct LawRow {
  std::int64_t covered;
  double coverage;
  double empirical_cdf;
  double betabin_cdf;
  double beta_cdf;
};

struct ExperimentSummary {
  double c_bar = 0.0;
  double delta_hat = 0.0;  // fraction with C_j <= 1 - eps
  double delta_bar = 0.0;  // fraction with n_test C_j <= threshold
  double mean_length = 0.0;
  double ks_distance = 0.0;  // sup |F_emp - F_ref| over the lattice
  double ks_upper = 0.0;     // sup (F_emp - F_ref), the dominance direction
  std::optional<std::int64_t> threshold;
  std::optional<BetaParams> law;
  std::int64_t n_test = 0;
  std::int64_t trials = 0;
  Histogram histogram;
  std::vector<LawRow> law_rows;
};

/// sqrt(R) equal-width bins over the observed coverage range.
inline Histogram coverage_histogram(std::span<const TrialReport> reports) {
  Histogram h;
  if (reports.empty()) return h;
  const auto [mn, mx] = std::minmax_element(reports.begin(), reports.end(),
                                            [](const auto& a, const auto& b) { return a.coverage < b.coverage; });
  const double lo = mn->coverage;
  const double hi = mx->coverage;
  const auto bins = hi > lo ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(reports.size())))) : 1;
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(i == bins ? std::max(hi, lo + width) : lo + width * static_cast<double>(i));
  h.counts.assign(bins, 0);
  for (const auto& r : reports) {
    auto b = static_cast<std::size_t>((r.coverage - lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

/// `law` empty means every trial returned the whole label space, so the
/// reference is the point mass at n_test.
inline ExperimentSummary summarize(std::span<const TrialReport> reports, const std::optional<BetaParams>& law,
                                   double eps, double delta, std::int64_t n_test) {
  if (reports.empty()) throw std::invalid_argument("no trial reports");
  require_open_unit(eps, "eps");
  require_open_unit(delta, "delta");
  if (n_test < 1) throw std::invalid_argument("n_test must be positive");

  ExperimentSummary s;
  s.law = law;
  s.n_test = n_test;
  s.trials = static_cast<std::int64_t>(reports.size());
  const double R = static_cast<double>(reports.size());

  std::optional<BetaBinomial> ref;
  if (law) ref.emplace(BetaBinParams(n_test, *law));
  auto ref_cdf = [&](std::int64_t k) {
    if (ref) return ref->cdf(k);
    return k >= n_test ? 1.0 : 0.0;
  };
  if (ref) {
    s.threshold = ref->quantile(delta);
  } else {
    s.threshold = n_test - 1;
  }

  const std::int64_t cut = scaled_floor(1.0 - eps, n_test);
  std::vector<std::int64_t> hits(static_cast<std::size_t>(n_test) + 1, 0);
  detail::CompensatedSum cov;
  detail::CompensatedSum len;
  std::int64_t below_cut = 0;
  std::int64_t below_t = 0;
  for (const auto& r : reports) {
    if (r.n_test != n_test || r.covered < 0 || r.covered > n_test) throw std::invalid_argument("report does not match n_test");
    cov.add(r.coverage);
    len.add(r.avg_length);
    ++hits[static_cast<std::size_t>(r.covered)];
    if (r.covered <= cut) ++below_cut;
    if (s.threshold && r.covered <= *s.threshold) ++below_t;
  }
  s.c_bar = cov.value() / R;
  s.mean_length = len.value() / R;
  s.delta_hat = static_cast<double>(below_cut) / R;
  s.delta_bar = static_cast<double>(below_t) / R;

  std::int64_t seen = 0;
  std::int64_t obs_lo = n_test;
  std::int64_t obs_hi = 0;
  for (const auto& r : reports) {
    obs_lo = std::min(obs_lo, r.covered);
    obs_hi = std::max(obs_hi, r.covered);
  }
  for (std::int64_t k = 0; k <= n_test; ++k) {
    seen += hits[static_cast<std::size_t>(k)];
    const double emp = static_cast<double>(seen) / R;
    const double f = ref_cdf(k);
    s.ks_distance = std::max(s.ks_distance, std::fabs(emp - f));
    s.ks_upper = std::max(s.ks_upper, emp - f);
    const bool in_support = f > 1e-9 && f < 1.0 - 1e-9;
    if (in_support || (k >= obs_lo && k <= obs_hi)) {
      const double c = static_cast<double>(k) / static_cast<double>(n_test);
      const double beta = law ? beta_reg(c, *law) : (k >= n_test ? 1.0 : 0.0);
      s.law_rows.push_back({k, c, emp, f, beta});
    }
  }
  s.histogram = coverage_histogram(reports);
  return s;
}

struct ExperimentConfig {
  std::size_t n_train = 1000;
  std::size_t n = 1000;
  std::size_t n_test = 5000;
  std::size_t trials = 1000;
  TargetGuarantee target = Tolerance{0.1, 0.1};
  double eps = 0.1;    // for the exceedance statistics
  double delta = 0.1;  // for the exceedance statistics
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t k_neighbors = 50;
  std::size_t folds = 10;
  std::vector<LevelPair> candidates = default_level_grid();
};

struct ExperimentResult {
  TuneReport tuning;
  std::vector<TrialReport> trials;
  ExperimentSummary summary;
  std::size_t n = 0;
  std::size_t n_test = 0;
};

inline std::int64_t calibration_size_check(std::size_t n) {
  if (n < 1) throw std::invalid_argument("calibration size must be positive");
  return static_cast<std::int64_t>(n);
}

/// Tune on the training part, fit the k-NN base once, then run the trials over
/// the fixed pool.
inline ExperimentResult run_experiment(const Dataset& train, const Dataset& pool, const ExperimentConfig& cfg) {
  ExperimentResult out;
  out.n = cfg.n;
  out.n_test = cfg.n_test;
  out.tuning = tune_nominal_quantiles(train, cfg.candidates, cfg.target, cfg.k_neighbors, cfg.folds,
                                      derive_seed(cfg.seed, 0x74756e65u));
  const KnnQuantilePredictor base(train, {cfg.k_neighbors, out.tuning.selected.lo, out.tuning.selected.hi});
  TrialConfig tc{cfg.n, cfg.n_test, cfg.trials, cfg.target, derive_seed(cfg.seed, 0x7472u), cfg.workers, std::nullopt};
  out.trials = run_trials(base, pool, tc);
  const auto law = coverage_law(calibration_size_check(cfg.n), cfg.target);
  out.summary = summarize(out.trials, law, cfg.eps, cfg.delta, static_cast<std::int64_t>(cfg.n_test));
  return out;
}

/// Synthetic protocol: n_train training rows and a pool of n + n_test rows,
/// drawn from independent seeds.
inline ExperimentResult run_synthetic_experiment(const ExperimentConfig& cfg) {
  const Dataset train = gen_synthetic(cfg.n_train, derive_seed(cfg.seed, 1));
  const Dataset pool = gen_synthetic(cfg.n + cfg.n_test, derive_seed(cfg.seed, 2));
  return run_experiment(train, pool, cfg);
}

struct CsvSplit {
  double train_fraction = 0.4;
  double calibration_fraction = 0.4;  // remainder is the test fraction
};

/// Shuffles once, standardizes with training statistics and calibrates on
/// random calibration/test splits of the remaining rows.
inline ExperimentResult run_dataset_experiment(const Dataset& data, ExperimentConfig cfg, CsvSplit split = {}) {
  if (!(split.train_fraction > 0 && split.calibration_fraction > 0 &&
        split.train_fraction + split.calibration_fraction < 1)) {
    throw std::invalid_argument("split fractions must be positive and sum below 1");
  }
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(cfg.seed, 3);
  std::shuffle(perm.begin(), perm.end(), rng);

  const auto total = static_cast<double>(data.size());
  const auto n_train = static_cast<std::size_t>(std::floor(split.train_fraction * total));
  const auto n_cal = static_cast<std::size_t>(std::floor(split.calibration_fraction * total));
  const std::size_t n_test = data.size() - n_train - n_cal;
  if (n_train < cfg.k_neighbors || n_cal < 1 || n_test < 1) throw std::invalid_argument("dataset too small for the split");

  const std::span<const std::size_t> all(perm);
  const auto parts = standardize(data.subset(all.first(n_train)), data.subset(all.subspan(n_train)));
  cfg.n_train = n_train;
  cfg.n = n_cal;
  cfg.n_test = n_test;
  return run_experiment(parts.train, parts.rest, cfg);
}

}  // namespace conformal
