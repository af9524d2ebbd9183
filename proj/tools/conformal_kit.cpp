// conformal_kit: calibration, duality tables, coverage experiments and self-checks.
//
// Exit codes: 0 success, 1 I/O or parse failure of an input file, 2 invalid
// arguments or levels, 3 a verification suite failed.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "conformal/conformal.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace conformal;

namespace {

struct Options {
  std::optional<double> alpha;
  std::optional<double> eps;
  std::optional<double> delta;
  std::string scores_path;
  std::string data_path;
  std::string label_col = "y";
  std::size_t n = 1000;
  std::size_t n_test = 5000;
  std::size_t n_train = 1000;
  std::size_t trials = 1000;
  std::optional<std::uint64_t> seed;
  std::string method = "split";
  std::string ucb_bound = "exact";
  std::string fwer = "fixed-sequence";
  std::size_t workers = 1;
  std::string out_dir;
  std::string format = "json";
  std::string rounding = "truncate";
  std::string table = "both";
  std::vector<std::int64_t> ns;
  std::vector<std::string> suites;
  std::size_t k_neighbors = 50;
  std::size_t folds = 10;
  double train_frac = 0.4;
  double cal_frac = 0.4;
};

std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("CONFORMAL_KIT_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("CONFORMAL_KIT_SEED is not an unsigned integer");
  }
  return 0;
}

std::vector<double> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::istringstream ls(line);
    std::string cell;
    if (!(ls >> cell)) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    std::string rest;
    if (used != cell.size() || (ls >> rest)) {
      throw std::invalid_argument("line " + std::to_string(row) + ": not a single number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("scores file " + path + " holds no scores");
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json law_json(const std::optional<BetaParams>& law) {
  if (!law) return nullptr;
  return json{{"a", law->a}, {"b", law->b}};
}

json calibration_json(const CalibrationResult& c) {
  json j;
  j["lambda_hat"] = number_or_null(c.lambda_hat);
  j["full_set"] = c.lambda_hat == kInf;
  j["order_index"] = c.order_index;
  j["n"] = c.n;
  j["law"] = law_json(c.law);
  json dual = json::object();
  if (c.dual.alpha) dual["alpha"] = *c.dual.alpha;
  if (c.dual.eps_min) dual["eps_min"] = *c.dual.eps_min;
  if (c.dual.delta_min) dual["delta_min"] = *c.dual.delta_min;
  j["dual"] = dual;
  j["marginal_bounds"] = {{"lo", c.marginal_bounds.lo},
                          {"hi", c.marginal_bounds.hi},
                          {"exact_mean", c.marginal_bounds.exact_mean}};
  return j;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

int cmd_calibrate(const Options& o) {
  require(!o.scores_path.empty(), "calibrate needs --scores");
  const std::vector<double> raw = read_scores(o.scores_path);
  const NonconformityScores scores(raw);
  const bool tolerance = o.eps && o.delta;
  std::optional<Tolerance> probe;
  if (tolerance) probe = Tolerance{*o.eps, *o.delta};

  json j;
  j["method"] = o.method;
  if (o.method == "split" || o.method == "crc") {
    if (o.method == "split" && !o.alpha) {
      require(tolerance, "split needs --alpha or both --eps and --delta");
      j.update(calibration_json(p_hat(scores, *o.eps, *o.delta)));
    } else {
      require(o.alpha.has_value(), o.method + " needs --alpha");
      CalibrationResult c = q_hat(scores, *o.alpha, probe);
      if (o.method == "crc") c.lambda_hat = crc_lambda(zero_one_curves(raw), 1.0, *o.alpha);
      j.update(calibration_json(c));
    }
  } else if (o.method == "ucb") {
    require(tolerance, "ucb needs --eps and --delta");
    const UcbMethod m = o.ucb_bound == "hoeffding" ? UcbMethod::Hoeffding : UcbMethod::ExactBinomial;
    require(o.ucb_bound == "hoeffding" || o.ucb_bound == "exact", "--ucb-bound must be exact or hoeffding");
    CalibrationResult c = p_hat(scores, *o.eps, *o.delta);
    c.lambda_hat = ucb_lambda(zero_one_curves(raw), *o.eps, *o.delta, m);
    j.update(calibration_json(c));
    j["ucb_bound"] = o.ucb_bound;
  } else if (o.method == "ltt") {
    require(tolerance, "ltt needs --eps and --delta");
    const auto grid = default_ltt_grid(raw);
    const PValueGrid pv = ltt_pvalues(grid, zero_one_curves(raw), *o.eps);
    std::vector<double> selected;
    if (o.fwer == "bonferroni") {
      selected = ltt_bonferroni(pv, *o.delta);
    } else {
      require(o.fwer == "fixed-sequence", "--fwer must be fixed-sequence or bonferroni");
      selected = ltt_fixed_sequence(pv, *o.delta);
    }
    const double lam = selected.empty() ? kInf : selected.front();
    j["lambda_hat"] = number_or_null(lam);
    j["full_set"] = lam == kInf;
    j["n"] = scores.size();
    j["fwer"] = o.fwer;
    j["grid_size"] = grid.size();
    j["selected"] = selected.size();
  } else {
    throw std::invalid_argument("unknown method '" + o.method + "'");
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_tables(const Options& o) {
  TableGrid grid;
  if (!o.ns.empty()) grid.ns = o.ns;
  for (auto n : grid.ns) require(n >= 1, "table sizes must be positive");
  const Rounding mode = parse_rounding(o.rounding);
  const bool first = o.table == "both" || o.table == "sup-k";
  const bool second = o.table == "both" || o.table == "inf-p";
  require(first || second, "--table must be sup-k, inf-p or both");

  if (o.format == "json") {
    json j;
    if (first) {
      const SupKTable t = sup_k_table(grid);
      json cells = json::array();
      for (std::size_t i = 0; i < grid.ns.size(); ++i)
        for (std::size_t r = 0; r < grid.deltas.size(); ++r)
          for (std::size_t c = 0; c < grid.levels.size(); ++c) {
            const auto& k = t.cells[i][r][c];
            cells.push_back({{"n", grid.ns[i]}, {"delta", grid.deltas[r]}, {"eps", grid.levels[c]},
                             {"sup_k", k ? json(*k) : json(nullptr)}});
          }
      j["sup_k"] = cells;
    }
    if (second) {
      const InfPTable t = inf_p_table(grid);
      json cells = json::array();
      for (std::size_t i = 0; i < grid.ns.size(); ++i)
        for (std::size_t r = 0; r < grid.deltas.size(); ++r)
          for (std::size_t c = 0; c < grid.levels.size(); ++c) {
            cells.push_back({{"n", grid.ns[i]}, {"delta", grid.deltas[r]}, {"alpha", grid.levels[c]},
                             {"eps", t.cells[i][r][c]}, {"percent", format_percent(t.cells[i][r][c], mode)}});
          }
      j["inf_p"] = cells;
    }
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  require(o.format == "text" || o.format == "csv", "--format must be text, csv or json");
  const bool csv = o.format == "csv";
  if (first) {
    const SupKTable t = sup_k_table(grid);
    std::cout << (csv ? render_sup_k_csv(t) : render_sup_k_table(t));
  }
  if (first && second) std::cout << '\n';
  if (second) {
    const InfPTable t = inf_p_table(grid);
    std::cout << (csv ? render_inf_p_csv(t, mode) : render_inf_p_table(t, mode));
  }
  return 0;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string trials_csv(const std::vector<TrialReport>& reports) {
  std::ostringstream s;
  s.precision(17);
  s << "j,lambda_hat,covered,coverage,avg_length,n,n_test\n";
  for (const auto& r : reports) {
    s << r.j << ',' << r.lambda_hat << ',' << r.covered << ',' << r.coverage << ',' << r.avg_length << ','
      << r.n << ',' << r.n_test << '\n';
  }
  return s.str();
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream s;
  s.precision(17);
  s << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) s << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
  return s.str();
}

std::string law_csv(const std::vector<LawRow>& rows) {
  std::ostringstream s;
  s.precision(17);
  s << "covered,coverage,empirical_cdf,betabin_cdf,beta_cdf\n";
  for (const auto& r : rows) {
    s << r.covered << ',' << r.coverage << ',' << r.empirical_cdf << ',' << r.betabin_cdf << ',' << r.beta_cdf << '\n';
  }
  return s.str();
}

int cmd_experiment(const Options& o) {
  ExperimentConfig cfg;
  cfg.seed = resolve_seed(o);
  cfg.trials = o.trials;
  cfg.workers = o.workers;
  cfg.k_neighbors = o.k_neighbors;
  cfg.folds = o.folds;
  cfg.n = o.n;
  cfg.n_test = o.n_test;
  cfg.n_train = o.n_train;
  if (o.alpha) {
    cfg.target = Marginal{*o.alpha};
    cfg.eps = o.eps.value_or(*o.alpha);
    cfg.delta = o.delta.value_or(0.1);
  } else {
    cfg.eps = o.eps.value_or(0.1);
    cfg.delta = o.delta.value_or(0.1);
    cfg.target = Tolerance{cfg.eps, cfg.delta};
  }
  validate(cfg.target);

  ExperimentResult res;
  std::string source = "synthetic";
  if (!o.data_path.empty()) {
    const Dataset data = load_csv(o.data_path, o.label_col);
    res = run_dataset_experiment(data, cfg, {o.train_frac, o.cal_frac});
    source = o.data_path;
  } else {
    res = run_synthetic_experiment(cfg);
  }
  const ExperimentSummary& s = res.summary;

  json j;
  j["c_bar"] = s.c_bar;
  j["delta_hat"] = s.delta_hat;
  j["delta_bar"] = s.delta_bar;
  j["mean_length"] = number_or_null(s.mean_length);
  j["ks_distance"] = s.ks_distance;
  j["ks_upper"] = s.ks_upper;
  j["law"] = law_json(s.law);
  j["threshold"] = s.threshold ? json(*s.threshold) : json(nullptr);
  j["n"] = res.n;
  j["n_test"] = res.n_test;
  j["R"] = s.trials;
  j["seed"] = cfg.seed;
  j["source"] = source;
  j["levels"] = {{"lo", res.tuning.selected.lo}, {"hi", res.tuning.selected.hi}};

  if (!o.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(o.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + o.out_dir + ": " + ec.message());
    const fs::path dir(o.out_dir);
    write_file(dir / "summary.json", j.dump(2) + "\n");
    write_file(dir / "trials.csv", trials_csv(res.trials));
    write_file(dir / "histogram.csv", histogram_csv(s.histogram));
    write_file(dir / "ecdf.csv", law_csv(s.law_rows));
  }
  if (o.format == "csv") {
    std::cout << trials_csv(res.trials);
  } else {
    require(o.format == "json", "--format must be json or csv");
    std::cout << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_verify(const Options& o) {
  VerifyOptions vo;
  vo.seed = resolve_seed(o);
  vo.ks_trials = o.trials;
  std::vector<std::string> names = o.suites;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = suite_names();

  json j;
  j["seed"] = vo.seed;
  json arr = json::array();
  bool all_ok = true;
  for (const auto& name : names) {
    const SuiteResult r = run_suite(name, vo);
    all_ok = all_ok && r.passed();
    arr.push_back({{"name", r.name}, {"passed", r.passed()}, {"checks", r.checks}, {"failures", r.failures},
                   {"detail", r.detail}});
  }
  j["suites"] = arr;
  j["passed"] = all_ok;
  std::cout << j.dump(2) << '\n';
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split conformal calibration, tolerance regions and risk control"};
  app.require_subcommand(1);
  Options o;

  auto levels = [&](CLI::App* sub) {
    sub->add_option("--alpha", o.alpha, "marginal miscoverage level");
    sub->add_option("--eps", o.eps, "tolerance: coverage shortfall");
    sub->add_option("--delta", o.delta, "tolerance: failure probability");
  };
  auto seeded = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "master seed (fallback: CONFORMAL_KIT_SEED, then 0)");
  };

  auto* cal = app.add_subcommand("calibrate", "calibrate a threshold from a scores file");
  levels(cal);
  cal->add_option("--scores", o.scores_path, "file with one score per line")->required();
  cal->add_option("--method", o.method, "split|crc|ucb|ltt")->capture_default_str();
  cal->add_option("--ucb-bound", o.ucb_bound, "exact|hoeffding")->capture_default_str();
  cal->add_option("--fwer", o.fwer, "fixed-sequence|bonferroni")->capture_default_str();

  auto* tab = app.add_subcommand("tables", "print the duality tables");
  tab->add_option("--ns", o.ns, "calibration sizes (default 100 1000 10000 100000)");
  tab->add_option("--rounding", o.rounding, "truncate|up|half-up")->capture_default_str();
  tab->add_option("--table", o.table, "sup-k|inf-p|both")->capture_default_str();
  tab->add_option("--format", o.format, "text|csv|json");

  auto* exp = app.add_subcommand("experiment", "repeated calibration/test trials");
  levels(exp);
  seeded(exp);
  exp->add_option("--data", o.data_path, "CSV dataset (default: synthetic)");
  exp->add_option("--label-col", o.label_col, "label column name")->capture_default_str();
  exp->add_option("--n", o.n, "calibration size (synthetic)")->capture_default_str();
  exp->add_option("--n-test", o.n_test, "test size (synthetic)")->capture_default_str();
  exp->add_option("--n-train", o.n_train, "training size (synthetic)")->capture_default_str();
  exp->add_option("--trials", o.trials, "number of trials R")->capture_default_str();
  exp->add_option("--workers", o.workers, "worker threads")->capture_default_str();
  exp->add_option("--k-neighbors", o.k_neighbors, "neighbours of the base predictor")->capture_default_str();
  exp->add_option("--folds", o.folds, "folds for tuning the nominal quantiles")->capture_default_str();
  exp->add_option("--train-frac", o.train_frac, "CSV: training fraction")->capture_default_str();
  exp->add_option("--cal-frac", o.cal_frac, "CSV: calibration fraction")->capture_default_str();
  exp->add_option("--out", o.out_dir, "directory for summary.json, trials.csv, histogram.csv, ecdf.csv");
  exp->add_option("--format", o.format, "json|csv");

  auto* ver = app.add_subcommand("verify", "run the property suites");
  seeded(ver);
  ver->add_option("--suite", o.suites, "suite name(s) or all");
  ver->add_option("--trials", o.trials, "trials for the ks suite")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cal) return cmd_calibrate(o);
    if (*tab) {
      if (tab->count("--format") == 0) o.format = "text";
      return cmd_tables(o);
    }
    if (*exp) return cmd_experiment(o);
    if (*ver) return cmd_verify(o);
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
