// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "conformal/conformal.hpp"

using namespace conformal;

namespace {

// tolerances and limits
constexpr double kTable1Seconds = 5.0;
constexpr double kTable2Seconds = 30.0;
constexpr double kCbarLo = 0.910;
constexpr double kCbarHi = 0.915;
constexpr double kDeltaBarLo = 0.07;
constexpr double kDeltaBarHi = 0.13;
constexpr double kKsCoefficient = 1.36;
constexpr double kAlphaTol = 5e-5;  // |1 - alpha - 0.9121|

// [n][delta][eps], n in {1e2, 1e3, 1e4, 1e5}, delta and eps in {10, 5, 1, 0.5, 0.1}%
constexpr int kTable1[4][5][5] = {
    {{5, 1, 0, 0, 0}, {4, 1, 0, 0, 0}, {3, 0, 0, 0, 0}, {2, 0, 0, 0, 0}, {1, 0, 0, 0, 0}},
    {{87, 40, 5, 1, 0}, {84, 38, 4, 1, 0}, {78, 34, 2, 0, 0}, {75, 32, 2, 0, 0}, {71, 29, 1, 0, 0}},
    {{961, 471, 86, 40, 5}, {950, 463, 83, 38, 4}, {930, 449, 77, 33, 2}, {922, 444, 74, 32, 2},
     {907, 433, 70, 29, 1}},
    {{9878, 4911, 959, 471, 86}, {9843, 4886, 948, 463, 83}, {9779, 4839, 927, 448, 77},
     {9755, 4822, 919, 442, 74}, {9707, 4787, 903, 432, 70}},
};

// [n][delta][alpha], percentages as printed
const char* const kTable2[4][5][5] = {
    {{"13.8351", "7.8347", "2.2762", "0.0000", "0.0000"},
     {"15.1795", "8.9196", "2.9513", "0.0000", "0.0000"},
     {"17.8746", "11.1704", "4.5007", "0.0000", "0.0000"},
     {"18.9152", "12.0632", "5.1604", "0.0000", "0.0000"},
     {"21.1465", "14.0165", "6.6745", "0.0000", "0.0000"}},
    {{"11.2203", "5.8942", "1.4169", "0.7977", "0.2299"},
     {"11.5924", "6.1758", "1.5652", "0.9129", "0.2991"},
     {"12.3092", "6.7257", "1.8691", "1.1560", "0.4594"},
     {"12.5776", "6.9342", "1.9888", "1.2540", "0.5284"},
     {"13.1413", "7.3760", "2.2503", "1.4714", "0.6883"}},
    {{"10.3850", "5.2806", "1.1293", "0.5921", "0.1420"},
     {"10.4968", "5.3629", "1.1689", "0.6213", "0.1569"},
     {"10.7085", "5.5196", "1.2456", "0.6783", "0.1877"},
     {"10.7865", "5.5776", "1.2744", "0.7001", "0.1998"},
     {"10.9486", "5.6985", "1.3353", "0.7462", "0.2264"}},
    {{"10.1216", "5.0884", "1.0405", "0.5287", "0.1130"},
     {"10.1563", "5.1138", "1.0522", "0.5372", "0.1169"},
     {"10.2217", "5.1616", "1.0746", "0.5533", "0.1247"},
     {"10.2457", "5.1791", "1.0828", "0.5593", "0.1276"},
     {"10.2953", "5.2154", "1.1000", "0.5717", "0.1337"}},
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void table1() {
  const auto t0 = Clock::now();
  const SupKTable t = sup_k_table();
  const double secs = seconds_since(t0);
  int mismatches = 0;
  for (int i = 0; i < 4; ++i) {
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 5; ++c) mismatches += t.cells[i][r][c].value_or(0) != kTable1[i][r][c];
    }
  }
  report(1, mismatches == 0 && secs < kTable1Seconds,
         fmt("sup-k table, %g of 100 cells differ, %.3f s (limit %g s)", mismatches, secs, kTable1Seconds));
}

void table2() {
  const auto t0 = Clock::now();
  const InfPTable t = inf_p_table();
  const double secs = seconds_since(t0);
  int mismatches = 0;
  for (int i = 0; i < 4; ++i) {
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 5; ++c) mismatches += format_percent(t.cells[i][r][c], Rounding::Truncate) != kTable2[i][r][c];
    }
  }
  report(2, mismatches == 0 && secs < kTable2Seconds,
         fmt("inf-p table at 4 printed decimals, %g of 100 cells differ, %.3f s (limit %g s)", mismatches, secs,
             kTable2Seconds));
}

void duality() {
  const DualAlpha a = alpha_given_tolerance(1000, 0.1, 0.1);
  std::vector<double> iota(1000);
  for (std::size_t i = 0; i < iota.size(); ++i) iota[i] = static_cast<double>(i + 1);
  const CalibrationResult p = p_hat(NonconformityScores(iota), 0.1, 0.1);
  const bool ok = a.numerator == 88 && !a.full_set && std::fabs(1.0 - a.alpha - 0.9121) <= kAlphaTol &&
                  p.order_index == 913 && std::fabs(a.alpha - 0.0879) <= kAlphaTol;
  report(3, ok, fmt("alpha = %.6f (88/1001), coverage %.4f, order index %g", a.alpha, 1.0 - a.alpha,
                    static_cast<double>(p.order_index)));
}

void experiment() {
  ExperimentConfig cfg;  // n_train = n = 1000, n_test = 5000, R = 1000, eps = delta = 0.1, seed 0
  const auto t0 = Clock::now();
  const ExperimentResult res = run_synthetic_experiment(cfg);
  const double secs = seconds_since(t0);
  const ExperimentSummary& s = res.summary;
  report(4, s.c_bar >= kCbarLo && s.c_bar <= kCbarHi && s.delta_bar >= kDeltaBarLo && s.delta_bar <= kDeltaBarHi,
         fmt("synthetic C_bar = %.4f in [0.910, 0.915], delta_bar = %.3f in [0.07, 0.13], %.1f s", s.c_bar,
             s.delta_bar, secs) +
             fmt(" (delta_hat %.3f, mean length %.3f)", s.delta_hat, s.mean_length));

  const double crit = kKsCoefficient / std::sqrt(static_cast<double>(cfg.trials));
  const bool law_ok = s.law && s.law->a == 913 && s.law->b == 88;
  report(5, law_ok && s.ks_distance < crit && s.ks_upper < crit,
         fmt("KS distance %.4f and dominance excess %.4f below %.4f against BetaBin(5000, 913, 88)", s.ks_distance,
             s.ks_upper, crit));
}

void suite_criterion(int id, std::vector<SuiteResult> parts, const std::string& what) {
  bool ok = true;
  std::string detail;
  for (const auto& p : parts) {
    ok = ok && p.passed();
    detail += " " + p.name + ": " + std::to_string(p.checks) + " checks, " + std::to_string(p.failures) + " failed;";
    if (!p.detail.empty()) detail += " (" + p.detail + ")";
  }
  report(id, ok, what + detail);
}

}  // namespace

int main() {
  try {
    table1();
    table2();
    duality();
    experiment();
    VerifyOptions opt;
    opt.score_sets = 1000;
    suite_criterion(6, {verify_equivalence(opt), verify_ltt_vs_ucb(opt)}, "0-1 reductions over 1000 score sets;");
    suite_criterion(7, {verify_sandwich(opt)}, "exhaustive rank enumeration for n = 2..6;");
    suite_criterion(8, {verify_identity()}, "beta/binomial identity within 1e-10 on 900 points;");
    suite_criterion(9, {verify_pvalues(opt)}, "p-value super-uniformity and fixed-sequence FWER;");
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
