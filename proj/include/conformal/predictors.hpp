#pragma once

// Interval base predictors and the conformalized quantile regression layer:
// k-nearest-neighbour conditional quantiles, the signed CQR score, the
// expanded CQR set and cross-validated choice of nominal quantile levels.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "calibration.hpp"
#include "data.hpp"
#include "nested_family.hpp"
#include "seeding.hpp"

namespace conformal {

template <class P>
concept IntervalPredictor = requires(const P& p, Features x) {
  { p.predict(x) } -> std::convertible_to<Interval>;
};

struct KnnQuantileConfig {
  std::size_t k = 50;
  double lo_level = 0.05;
  double hi_level = 0.95;

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (!(lo_level > 0.0 && lo_level < hi_level && hi_level < 1.0)) {
      throw std::invalid_argument("need 0 < lo_level < hi_level < 1");
    }
  }
};

/// Lower and upper empirical quantiles of the labels of the k nearest training
/// points, under Euclidean distance on features standardized with the training
/// statistics. Distance ties go to the lower training index.
class KnnQuantilePredictor {
 public:
  KnnQuantilePredictor(const Dataset& train, KnnQuantileConfig config)
      : config_(config), p_(train.dim()) {
    config_.validate();
    if (config_.k > train.size()) throw std::invalid_argument("k exceeds the training size");
    stats_ = fit_standardization(train);
    x_.assign(train.features().begin(), train.features().end());
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] = (x_[i] - stats_.mean[i % p_]) / stats_.scale[i % p_];
    y_.assign(train.labels().begin(), train.labels().end());
    lo_rank_ = rank_of(config_.lo_level);
    hi_rank_ = rank_of(config_.hi_level);
  }

  const KnnQuantileConfig& config() const { return config_; }

  Interval predict(Features x) const {
    if (x.size() != p_) throw std::invalid_argument("feature dimension mismatch");
    std::vector<double> q(p_);
    for (std::size_t j = 0; j < p_; ++j) q[j] = (x[j] - stats_.mean[j]) / stats_.scale[j];

    const std::size_t n = y_.size();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < p_; ++j) {
        const double t = x_[i * p_ + j] - q[j];
        d += t * t;
      }
      dist[i] = {d, i};
    }
    const auto kth = dist.begin() + static_cast<std::ptrdiff_t>(config_.k);
    std::nth_element(dist.begin(), kth - 1, dist.end());

    std::vector<double> labels(config_.k);
    for (std::size_t i = 0; i < config_.k; ++i) labels[i] = y_[dist[i].second];
    std::sort(labels.begin(), labels.end());
    Interval out{labels[lo_rank_], labels[hi_rank_]};
    if (out.lo > out.hi) std::swap(out.lo, out.hi);
    return out;
  }

 private:
  // 0-based position of the ceil(level k)-th order statistic
  std::size_t rank_of(double level) const {
    const std::int64_t r = scaled_ceil(level, static_cast<std::int64_t>(config_.k));
    return static_cast<std::size_t>(std::clamp<std::int64_t>(r, 1, static_cast<std::int64_t>(config_.k)) - 1);
  }

  KnnQuantileConfig config_;
  std::size_t p_;
  Standardization stats_;
  std::vector<double> x_;
  std::vector<double> y_;
  std::size_t lo_rank_ = 0;
  std::size_t hi_rank_ = 0;
};

inline KnnQuantilePredictor fit_knn_quantile(const Dataset& train, KnnQuantileConfig config) {
  return KnnQuantilePredictor(train, config);
}

/// Same interval for every input; a deliberately uninformative base.
class ConstantIntervalPredictor {
 public:
  explicit ConstantIntervalPredictor(Interval band) : band_(band) {
    if (band_.lo > band_.hi) std::swap(band_.lo, band_.hi);
  }
  Interval predict(Features) const { return band_; }

 private:
  Interval band_;
};

/// max(lo(x) - y, y - hi(x)); negative iff y lies strictly inside.
inline double cqr_score(const Interval& base, double y) { return std::max(base.lo - y, y - base.hi); }

template <IntervalPredictor P>
double cqr_score(const P& predictor, Features x, double y) {
  return cqr_score(Interval(predictor.predict(x)), y);
}

template <IntervalPredictor P>
Interval cqr_set(const P& predictor, double lam, Features x) {
  return expand(predictor.predict(x), lam);
}

/// The CQR nested family over a fitted interval predictor.
template <IntervalPredictor P>
class CqrFamily {
 public:
  explicit CqrFamily(const P& predictor) : predictor_(&predictor) {}
  LambdaDomain domain() const { return {}; }
  Interval set_at(double lam, Features x) const { return cqr_set(*predictor_, lam, x); }
  double score(Features x, double y) const { return cqr_score(*predictor_, x, y); }

 private:
  const P* predictor_;
};

struct LevelPair {
  double lo;
  double hi;
  friend bool operator==(const LevelPair&, const LevelPair&) = default;
};

/// {(b/2, 1 - b/2) : b = 0.05, 0.10, ..., 0.40}.
inline std::vector<LevelPair> default_level_grid() {
  std::vector<LevelPair> out;
  for (int i = 1; i <= 8; ++i) {
    const double b = 0.05 * i;
    out.push_back({b / 2.0, 1.0 - b / 2.0});
  }
  return out;
}

struct TuneReport {
  std::vector<LevelPair> tried;
  std::vector<double> mean_length;  // per candidate, averaged over folds
  LevelPair selected;
  std::size_t selected_index;
};

/// Mean calibrated length of base intervals on one calibration fold.
inline double calibrated_mean_length(std::span<const Interval> base, std::span<const double> labels,
                                     const TargetGuarantee& target) {
  std::vector<double> scores(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) scores[i] = cqr_score(base[i], labels[i]);
  const CalibrationResult cal = calibrate(NonconformityScores(std::move(scores)), target);
  if (cal.full_set()) return kInf;
  double total = 0.0;
  for (const auto& b : base) total += expand(b, cal.lambda_hat).length();
  return total / static_cast<double>(base.size());
}

/// K-fold choice of nominal quantiles: for each candidate and fold, fit on the
/// other folds, calibrate on the held-out fold and record the mean calibrated
/// length there. The candidate with the smallest fold average wins; ties go to
/// the earlier candidate.
inline TuneReport tune_nominal_quantiles(const Dataset& train, std::span<const LevelPair> candidates,
                                         const TargetGuarantee& target, std::size_t k,
                                         std::size_t folds = 10, std::uint64_t seed = 0) {
  if (candidates.empty()) throw std::invalid_argument("no candidate levels");
  if (folds < 2) throw std::invalid_argument("need at least two folds");
  if (train.size() < folds) throw std::invalid_argument("fewer rows than folds");
  validate(target);

  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(seed, 0x7475u);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<std::size_t>> held(folds);
  for (std::size_t i = 0; i < perm.size(); ++i) held[i % folds].push_back(perm[i]);

  TuneReport report{{candidates.begin(), candidates.end()},
                    std::vector<double>(candidates.size(), 0.0), candidates.front(), 0};
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> fit_idx;
    for (std::size_t g = 0; g < folds; ++g) {
      if (g != f) fit_idx.insert(fit_idx.end(), held[g].begin(), held[g].end());
    }
    const Dataset fit_part = train.subset(fit_idx);
    const Dataset cal_part = train.subset(held[f]);
    if (k > fit_part.size()) throw std::invalid_argument("k exceeds the fold training size");
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const KnnQuantilePredictor pred(fit_part, {k, candidates[c].lo, candidates[c].hi});
      std::vector<Interval> base(cal_part.size());
      for (std::size_t i = 0; i < cal_part.size(); ++i) base[i] = pred.predict(cal_part.row(i));
      report.mean_length[c] += calibrated_mean_length(base, cal_part.labels(), target) / static_cast<double>(folds);
    }
  }
  const auto best = std::min_element(report.mean_length.begin(), report.mean_length.end());
  report.selected_index = static_cast<std::size_t>(best - report.mean_length.begin());
  report.selected = candidates[report.selected_index];
  return report;
}

}  // namespace conformal
