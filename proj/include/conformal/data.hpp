#pragma once

// Regression datasets: CSV ingestion, train-fitted standardization and the
// heteroskedastic synthetic generator with rare large outliers.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "seeding.hpp"

namespace conformal {

/// Row-major feature matrix with one label per row.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<double> features, std::size_t p, std::vector<double> labels,
          std::vector<std::string> feature_names = {})
      : x_(std::move(features)), p_(p), y_(std::move(labels)), names_(std::move(feature_names)) {
    if (p_ == 0) throw std::invalid_argument("dataset needs at least one feature");
    if (x_.size() != p_ * y_.size()) throw std::invalid_argument("feature/label row counts differ");
    if (!names_.empty() && names_.size() != p_) throw std::invalid_argument("feature name count");
  }

  std::size_t size() const { return y_.size(); }
  std::size_t dim() const { return p_; }

  std::span<const double> row(std::size_t i) const { return {x_.data() + i * p_, p_}; }
  double label(std::size_t i) const { return y_[i]; }

  std::span<const double> features() const { return x_; }
  std::span<const double> labels() const { return y_; }
  const std::vector<std::string>& feature_names() const { return names_; }

  Dataset subset(std::span<const std::size_t> idx) const {
    std::vector<double> x;
    std::vector<double> y;
    x.reserve(idx.size() * p_);
    y.reserve(idx.size());
    for (std::size_t i : idx) {
      if (i >= size()) throw std::out_of_range("dataset row index");
      const auto r = row(i);
      x.insert(x.end(), r.begin(), r.end());
      y.push_back(y_[i]);
    }
    return Dataset(std::move(x), p_, std::move(y), names_);
  }

  Dataset slice(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return subset(idx);
  }

 private:
  std::vector<double> x_;
  std::size_t p_ = 0;
  std::vector<double> y_;
  std::vector<std::string> names_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline double parse_double(std::string_view cell, std::size_t row) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError(row, "non-numeric cell '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace detail

/// Header row plus numeric rows. Row numbers in errors count the header as row 1.
inline Dataset read_csv(std::istream& in, const std::string& label_column) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  std::vector<std::string> header;
  for (auto c : detail::split_commas(line)) header.emplace_back(c);

  std::size_t label_at = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == label_column) label_at = j;
  }
  if (label_at == header.size()) throw std::invalid_argument("no label column '" + label_column + "'");
  if (header.size() < 2) throw std::invalid_argument("need at least one feature column");

  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != label_at) names.push_back(header[j]);
  }

  std::vector<double> x;
  std::vector<double> y;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size()) {
      throw ParseError(row, "expected " + std::to_string(header.size()) + " cells, got " +
                                std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double v = detail::parse_double(cells[j], row);
      if (j == label_at) {
        y.push_back(v);
      } else {
        x.push_back(v);
      }
    }
  }
  if (y.empty()) throw ParseError(row, "no data rows");
  const std::size_t p = names.size();
  return Dataset(std::move(x), p, std::move(y), std::move(names));
}

inline Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in, label_column);
}

inline void write_csv(std::ostream& out, const Dataset& data, const std::string& label_column = "y") {
  for (std::size_t j = 0; j < data.dim(); ++j) {
    out << (data.feature_names().empty() ? "x" + std::to_string(j) : data.feature_names()[j]) << ',';
  }
  out << label_column << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << v << ',';
    out << data.label(i) << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& data, const std::string& label_column = "y") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out, data, label_column);
}

struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;          // 1 for constant columns
  std::vector<bool> constant_column;  // centered but left unscaled
  double label_scale = 1.0;           // mean |y| on the training part

  Dataset apply(const Dataset& d) const {
    std::vector<double> x(d.features().begin(), d.features().end());
    const std::size_t p = d.dim();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mean[i % p]) / scale[i % p];
    std::vector<double> y(d.labels().begin(), d.labels().end());
    for (double& v : y) v /= label_scale;
    return Dataset(std::move(x), p, std::move(y), d.feature_names());
  }
};

inline Standardization fit_standardization(const Dataset& train) {
  const std::size_t p = train.dim();
  const double n = static_cast<double>(train.size());
  if (train.size() == 0) throw std::invalid_argument("empty training part");
  Standardization s{std::vector<double>(p, 0.0), std::vector<double>(p, 1.0),
                    std::vector<bool>(p, false), 1.0};
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) s.mean[j] += train.row(i)[j];
  }
  for (double& m : s.mean) m /= n;
  std::vector<double> var(p, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double d = train.row(i)[j] - s.mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    const double sd = std::sqrt(var[j] / n);
    if (sd > 0.0) {
      s.scale[j] = sd;
    } else {
      s.constant_column[j] = true;
    }
  }
  double abs_sum = 0.0;
  for (double y : train.labels()) abs_sum += std::fabs(y);
  if (abs_sum > 0.0) s.label_scale = abs_sum / n;
  return s;
}

struct StandardizedPair {
  Dataset train;
  Dataset rest;
  Standardization stats;
};

/// Fits on train_part only and applies the same transform to rest.
inline StandardizedPair standardize(const Dataset& train_part, const Dataset& rest) {
  Standardization s = fit_standardization(train_part);
  Dataset a = s.apply(train_part);
  Dataset b = s.apply(rest);
  return {std::move(a), std::move(b), std::move(s)};
}

struct SyntheticOptions {
  bool noise = true;     // 0.03 X gamma_1
  bool outliers = true;  // 25 1{U < 0.01} gamma_2
};

/// X ~ U[1, 5], Y = Pois(sin^2 X + 0.1) + 0.03 X g1 + 25 1{U < 0.01} g2 with
/// g1, g2 standard normal. Each ingredient draws from its own stream.
inline Dataset gen_synthetic(std::size_t count, std::uint64_t seed, SyntheticOptions opt = {}) {
  if (count == 0) throw std::invalid_argument("count must be at least 1");
  auto rx = make_rng(seed, 0);
  auto rpois = make_rng(seed, 1);
  auto rg1 = make_rng(seed, 2);
  auto rg2 = make_rng(seed, 3);
  auto ru = make_rng(seed, 4);
  std::uniform_real_distribution<double> ux(1.0, 5.0);
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  std::normal_distribution<double> g1;
  std::normal_distribution<double> g2;

  std::vector<double> x(count);
  std::vector<double> y(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double xi = ux(rx);
    const double s = std::sin(xi);
    std::poisson_distribution<long> pois(s * s + 0.1);
    double yi = static_cast<double>(pois(rpois));
    const double n1 = g1(rg1);
    const double n2 = g2(rg2);
    const double u = uu(ru);
    if (opt.noise) yi += 0.03 * xi * n1;
    if (opt.outliers && u < 0.01) yi += 25.0 * n2;
    x[i] = xi;
    y[i] = yi;
  }
  return Dataset(std::move(x), 1, std::move(y), {"x"});
}

}  // namespace conformal
