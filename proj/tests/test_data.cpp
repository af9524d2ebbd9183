#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>

#include "conformal/data.hpp"

using namespace conformal;
using Catch::Approx;

TEST_CASE("fixture csv", "[csv]") {
  const Dataset d = load_csv(std::string(FIXTURE_DIR) + "/small.csv", "y");
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.feature_names() == std::vector<std::string>{"x1", "x2"});
  CHECK(d.row(2)[1] == 8.0);
  CHECK(d.label(2) == -2.5);

  const Dataset by_x1 = load_csv(std::string(FIXTURE_DIR) + "/small.csv", "x1");
  CHECK(by_x1.label(1) == 2.0);
  CHECK(by_x1.row(1)[1] == 1.5);
}

TEST_CASE("csv errors", "[csv]") {
  CHECK_THROWS_AS(load_csv(std::string(FIXTURE_DIR) + "/small.csv", "nope"), std::invalid_argument);
  CHECK_THROWS_AS(load_csv(std::string(FIXTURE_DIR) + "/absent.csv", "y"), std::runtime_error);

  std::istringstream ragged("a,y\n1,2\n3\n");
  try {
    read_csv(ragged, "y");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
  }

  std::istringstream word("a,y\n1,2\n\n4,x5\n");
  try {
    read_csv(word, "y");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 4);
  }

  std::istringstream header_only("a,y\n");
  CHECK_THROWS_AS(read_csv(header_only, "y"), ParseError);
  std::istringstream only_label("y\n1\n");
  CHECK_THROWS_AS(read_csv(only_label, "y"), std::invalid_argument);
}

TEST_CASE("csv round trip", "[csv]") {
  const Dataset d = gen_synthetic(50, 3);
  std::stringstream buf;
  write_csv(buf, d, "target");
  const Dataset back = read_csv(buf, "target");
  CHECK(back.size() == d.size());
  CHECK(std::equal(back.features().begin(), back.features().end(), d.features().begin()));
  CHECK(std::equal(back.labels().begin(), back.labels().end(), d.labels().begin()));
}

TEST_CASE("dataset shape checks", "[dataset]") {
  CHECK_THROWS_AS(Dataset({1, 2, 3}, 2, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Dataset({}, 0, {}), std::invalid_argument);
  const Dataset d({1, 2, 3, 4, 5, 6}, 2, {7, 8, 9});
  const std::vector<std::size_t> idx{2, 0};
  const Dataset s = d.subset(idx);
  CHECK(s.label(0) == 9);
  CHECK(s.row(1)[1] == 2);
  CHECK(d.slice(1, 3).label(0) == 8);
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(d.subset(bad), std::out_of_range);
}

TEST_CASE("standardization uses training statistics", "[standardize]") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(3.0, 2.0);
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 500; ++i) {
    x.push_back(g(rng));
    x.push_back(7.0);  // constant column
    x.push_back(g(rng) * 10);
    y.push_back(g(rng));
  }
  const Dataset train(x, 3, y);
  const Dataset rest({3.0, 7.0, 0.0, 5.0, 8.0, 10.0}, 3, {2.0, -4.0});
  const auto parts = standardize(train, rest);

  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0;
    double v = 0;
    for (std::size_t i = 0; i < parts.train.size(); ++i) m += parts.train.row(i)[j];
    m /= 500;
    for (std::size_t i = 0; i < parts.train.size(); ++i) v += std::pow(parts.train.row(i)[j] - m, 2);
    v /= 500;
    CHECK(std::abs(m) < 1e-12);
    if (j == 1) {
      CHECK(parts.stats.constant_column[j]);
      CHECK(v == 0.0);
    } else {
      CHECK_FALSE(parts.stats.constant_column[j]);
      CHECK(std::abs(v - 1.0) < 1e-12);
    }
  }
  double abs_mean = 0;
  for (double v : parts.train.labels()) abs_mean += std::abs(v);
  CHECK(abs_mean / 500 == Approx(1.0).epsilon(1e-12));

  const auto& s = parts.stats;
  CHECK(parts.rest.row(0)[0] == Approx((3.0 - s.mean[0]) / s.scale[0]));
  CHECK(parts.rest.row(1)[1] == 1.0);
  CHECK(parts.rest.label(1) == Approx(-4.0 / s.label_scale));
}

TEST_CASE("synthetic outlier frequency", "[synthetic]") {
  // with the noise term off, non-integral labels are exactly the outliers
  const std::size_t count = 1000000;
  const Dataset d = gen_synthetic(count, 11, {false, true});
  std::size_t hits = 0;
  for (double y : d.labels()) hits += y != std::round(y);
  const double p = static_cast<double>(hits) / count;
  CHECK(std::abs(p - 0.01) <= 3 * std::sqrt(0.01 * 0.99 / count));
}

TEST_CASE("synthetic Poisson part", "[synthetic]") {
  const std::size_t count = 200000;
  const Dataset d = gen_synthetic(count, 12, {false, false});
  double resid = 0;
  double var = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double y = d.label(i);
    const double x = d.row(i)[0];
    REQUIRE(y == std::round(y));
    REQUIRE(y >= 0);
    REQUIRE(x >= 1.0);
    REQUIRE(x <= 5.0);
    const double mu = std::pow(std::sin(x), 2) + 0.1;
    resid += y - mu;
    var += mu;
  }
  CHECK(std::abs(resid) <= 4 * std::sqrt(var));
}

TEST_CASE("synthetic determinism", "[synthetic]") {
  const Dataset a = gen_synthetic(1000, 7);
  const Dataset b = gen_synthetic(1000, 7);
  const Dataset c = gen_synthetic(1000, 8);
  CHECK(std::equal(a.labels().begin(), a.labels().end(), b.labels().begin()));
  CHECK_FALSE(std::equal(a.labels().begin(), a.labels().end(), c.labels().begin()));
  // turning the outliers off leaves X and the Poisson draws untouched
  const Dataset d = gen_synthetic(1000, 7, {true, false});
  CHECK(std::equal(a.features().begin(), a.features().end(), d.features().begin()));
  CHECK_THROWS_AS(gen_synthetic(0, 1), std::invalid_argument);
}
