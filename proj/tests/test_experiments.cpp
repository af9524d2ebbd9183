#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "conformal/experiments.hpp"

using namespace conformal;
using Catch::Approx;

namespace {

std::vector<TrialReport> reports_from(const std::vector<std::int64_t>& covered, std::int64_t n_test) {
  std::vector<TrialReport> out;
  for (std::size_t j = 0; j < covered.size(); ++j) {
    TrialReport r;
    r.j = static_cast<std::int64_t>(j);
    r.covered = covered[j];
    r.coverage = static_cast<double>(covered[j]) / static_cast<double>(n_test);
    r.n_test = n_test;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("forced full set covers everything", "[trials]") {
  const Dataset pool = gen_synthetic(300, 1);
  const ConstantIntervalPredictor c({0, 0});
  TrialConfig cfg{100, 200, 1, Tolerance{0.1, 0.1}, 0, 1, kInf};
  const auto r = run_trials(c, pool, cfg);
  REQUIRE(r.size() == 1);
  CHECK(r[0].coverage == 1.0);
  CHECK(r[0].covered == 200);
  CHECK(std::isinf(r[0].avg_length));
}

TEST_CASE("trials are independent of the worker count", "[trials][property]") {
  const Dataset train = gen_synthetic(300, 2);
  const Dataset pool = gen_synthetic(900, 3);
  const auto pred = fit_knn_quantile(train, {30, 0.1, 0.9});
  TrialConfig cfg{300, 600, 40, Tolerance{0.1, 0.1}, 77, 1, std::nullopt};
  const auto one = run_trials(pred, pool, cfg);
  cfg.workers = 4;
  const auto four = run_trials(pred, pool, cfg);
  REQUIRE(one.size() == four.size());
  for (std::size_t j = 0; j < one.size(); ++j) {
    CHECK(one[j].j == four[j].j);
    CHECK(one[j].lambda_hat == four[j].lambda_hat);
    CHECK(one[j].covered == four[j].covered);
    CHECK(one[j].avg_length == four[j].avg_length);
  }
}

TEST_CASE("trial input errors", "[trials]") {
  const Dataset pool = gen_synthetic(100, 4);
  const ConstantIntervalPredictor c({0, 1});
  CHECK_THROWS_AS(run_trials(c, pool, TrialConfig{60, 50, 1, Tolerance{0.1, 0.1}, 0, 1, std::nullopt}), std::invalid_argument);
  CHECK_THROWS_AS(run_trials(c, pool, TrialConfig{10, 10, 0, Tolerance{0.1, 0.1}, 0, 1, std::nullopt}), std::invalid_argument);
  const std::vector<Interval> base(3, Interval{0, 1});
  const std::vector<double> labels(2, 0.0);
  CHECK_THROWS_AS(run_trials(base, labels, TrialConfig{1, 1, 1, Tolerance{0.1, 0.1}, 0, 1, std::nullopt}), std::invalid_argument);
}

TEST_CASE("summary of an all-covered run", "[summary]") {
  const auto reports = reports_from(std::vector<std::int64_t>(20, 50), 50);
  const auto s = summarize(reports, BetaParams(9, 1), 0.1, 0.1, 50);
  CHECK(s.c_bar == 1.0);
  CHECK(s.delta_hat == 0.0);
  CHECK(s.delta_bar == 0.0);
  CHECK(s.trials == 20);

  const auto point = summarize(reports, std::nullopt, 0.1, 0.1, 50);
  CHECK(point.ks_distance == 0.0);
  CHECK(point.threshold == 49);
}

TEST_CASE("summary statistics by hand", "[summary]") {
  // n_test = 10, eps = 0.1: C_j <= 0.9 means covered <= 9
  const auto reports = reports_from({10, 9, 8, 10}, 10);
  const auto s = summarize(reports, BetaParams(9, 1), 0.1, 0.1, 10);
  CHECK(s.c_bar == Approx(0.925));
  CHECK(s.delta_hat == 0.5);
  REQUIRE(s.threshold.has_value());
  const BetaBinomial ref(BetaBinParams(10, BetaParams(9, 1)));
  CHECK(*s.threshold == ref.quantile(0.1));
  CHECK(s.histogram.counts.size() == 2);
  std::int64_t total = 0;
  for (auto c : s.histogram.counts) total += c;
  CHECK(total == 4);
  CHECK(s.histogram.edges.front() == 0.8);
  CHECK(s.histogram.edges.back() == 1.0);
  CHECK_THROWS_AS(summarize({}, BetaParams(9, 1), 0.1, 0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(summarize(reports, BetaParams(9, 1), 0.1, 0.1, 11), std::invalid_argument);
}

TEST_CASE("delta_bar tracks delta when trials follow the reference law", "[summary][property]") {
  // C_j drawn as Bin(n_test, Z) with Z ~ Beta(913, 88)
  std::mt19937_64 rng(9);
  const std::int64_t n_test = 5000;
  const std::size_t R = 20000;
  std::gamma_distribution<double> ga(913.0);
  std::gamma_distribution<double> gb(88.0);
  std::vector<std::int64_t> covered(R);
  for (auto& c : covered) {
    const double a = ga(rng);
    const double z = a / (a + gb(rng));
    c = std::binomial_distribution<std::int64_t>(n_test, z)(rng);
  }
  const auto s = summarize(reports_from(covered, n_test), BetaParams(913, 88), 0.1, 0.1, n_test);
  const BetaBinomial ref(BetaBinParams(n_test, BetaParams(913, 88)));
  const double p = ref.cdf(*s.threshold);
  CHECK(p <= 0.1);
  CHECK(s.delta_bar == Approx(p).margin(4 * std::sqrt(p * (1 - p) / R)));
  CHECK(s.ks_distance < 1.36 / std::sqrt(static_cast<double>(R)));
}

TEST_CASE("a useless base predictor still lands in the coverage band", "[experiment][property]") {
  // constant [0, 0] intervals: calibration alone has to carry the guarantee
  const Dataset pool = gen_synthetic(3000, 10);
  const ConstantIntervalPredictor c({0, 0});
  const double alpha = 0.1;
  const std::size_t n = 500;
  TrialConfig cfg{n, 2000, 400, Marginal{alpha}, 5, 1, std::nullopt};
  const auto reports = run_trials(c, pool, cfg);
  const auto law = coverage_law(static_cast<std::int64_t>(n), cfg.target);
  const auto s = summarize(reports, law, 0.1, 0.1, 2000);
  const double a = law->a;
  const double b = law->b;
  // variance of the coverage of one trial, plus the finite test-set term
  const double var = a * b / ((a + b) * (a + b) * (a + b + 1)) + a * b / ((a + b) * (a + b)) / 2000.0;
  const double se = std::sqrt(var / 400);
  CHECK(s.c_bar >= 1 - alpha - 3 * se);
  CHECK(s.c_bar <= 1 - alpha + 1.0 / (n + 1) + 3 * se);
}

TEST_CASE("small synthetic experiment end to end", "[experiment]") {
  ExperimentConfig cfg;
  cfg.n_train = 300;
  cfg.n = 300;
  cfg.n_test = 600;
  cfg.trials = 50;
  cfg.k_neighbors = 30;
  cfg.folds = 3;
  cfg.seed = 4;
  const auto r = run_synthetic_experiment(cfg);
  CHECK(r.trials.size() == 50);
  CHECK(r.tuning.tried.size() == 8);
  REQUIRE(r.summary.law.has_value());
  CHECK(*r.summary.law == *coverage_law(300, Tolerance{0.1, 0.1}));
  CHECK(r.summary.c_bar > 0.85);
  CHECK(r.summary.mean_length > 0);
  const auto again = run_synthetic_experiment(cfg);
  CHECK(again.summary.c_bar == r.summary.c_bar);
  CHECK(again.summary.ks_distance == r.summary.ks_distance);
}

TEST_CASE("dataset experiment on a generated csv", "[experiment]") {
  const Dataset d = gen_synthetic(500, 21);
  ExperimentConfig cfg;
  cfg.trials = 5;
  cfg.k_neighbors = 20;
  cfg.folds = 2;
  const auto r = run_dataset_experiment(d, cfg);
  CHECK(r.n == 200);
  CHECK(r.n_test == 100);
  CHECK(r.trials.size() == 5);
  CHECK(r.trials[0].n_test == 100);
  CHECK_THROWS_AS(run_dataset_experiment(d, cfg, {0.6, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(run_dataset_experiment(d.slice(0, 20), cfg), std::invalid_argument);
}
