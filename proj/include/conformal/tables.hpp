#pragma once

// Duality tables: sup{k : Bin(k; n, eps) <= delta} and the smallest eps for
// which the alpha-quantile is an (eps, delta) tolerance region.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "exact_dists.hpp"

namespace conformal {

enum class Rounding { Truncate, Up, HalfUp };

inline Rounding parse_rounding(const std::string& s) {
  if (s == "truncate") return Rounding::Truncate;
  if (s == "up") return Rounding::Up;
  if (s == "half-up") return Rounding::HalfUp;
  throw std::invalid_argument("unknown rounding '" + s + "'");
}

/// 100 p with four decimals, rounded as requested on the scale of 1e-6.
inline std::string format_percent(double p, Rounding mode = Rounding::Truncate) {
  const long double x = static_cast<long double>(p) * 1.0e6L;
  long double q = 0;
  switch (mode) {
    case Rounding::Truncate: q = std::floor(x); break;
    case Rounding::Up: q = std::ceil(x); break;
    case Rounding::HalfUp: q = std::floor(x + 0.5L); break;
  }
  const auto units = static_cast<long long>(q);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%lld.%04lld", units / 10000, units % 10000);
  return buf;
}

inline std::string level_label(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", level * 100.0);
  return buf;
}

struct TableGrid {
  std::vector<std::int64_t> ns{100, 1000, 10000, 100000};
  std::vector<double> deltas{0.1, 0.05, 0.01, 0.005, 0.001};
  std::vector<double> levels{0.1, 0.05, 0.01, 0.005, 0.001};  // eps or alpha columns
};

/// cells[i][r][c] for ns[i], deltas[r], levels[c].
template <class T>
struct DualityTable {
  TableGrid grid;
  std::vector<std::vector<std::vector<T>>> cells;
};

using SupKTable = DualityTable<SupKResult>;
using InfPTable = DualityTable<double>;

inline SupKTable sup_k_table(const TableGrid& grid = {}) {
  SupKTable t{grid, {}};
  for (auto n : grid.ns) {
    auto& block = t.cells.emplace_back();
    for (double d : grid.deltas) {
      auto& row = block.emplace_back();
      for (double e : grid.levels) row.push_back(binom_sup_k(n, e, d));
    }
  }
  return t;
}

inline InfPTable inf_p_table(const TableGrid& grid = {}) {
  InfPTable t{grid, {}};
  for (auto n : grid.ns) {
    auto& block = t.cells.emplace_back();
    for (double d : grid.deltas) {
      auto& row = block.emplace_back();
      for (double a : grid.levels) row.push_back(tolerance_eps_given_alpha(n, a, d));
    }
  }
  return t;
}

namespace detail {

template <class T, class Fmt>
std::string render_table(const DualityTable<T>& t, const std::string& title, const std::string& col_symbol, Fmt fmt) {
  std::ostringstream out;
  out << title << '\n';
  char buf[64];
  for (std::size_t i = 0; i < t.grid.ns.size(); ++i) {
    out << "\nn = " << t.grid.ns[i] << '\n';
    std::snprintf(buf, sizeof buf, "%-8s", "delta");
    out << buf;
    for (double lv : t.grid.levels) {
      std::snprintf(buf, sizeof buf, "%12s", (col_symbol + "=" + level_label(lv)).c_str());
      out << buf;
    }
    out << '\n';
    for (std::size_t r = 0; r < t.grid.deltas.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%-8s", level_label(t.grid.deltas[r]).c_str());
      out << buf;
      for (const auto& cell : t.cells[i][r]) {
        std::snprintf(buf, sizeof buf, "%12s", fmt(cell).c_str());
        out << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

template <class T, class Fmt>
std::string render_table_csv(const DualityTable<T>& t, const std::string& col_name, Fmt fmt) {
  std::ostringstream out;
  out << "n,delta," << col_name << ",value\n";
  for (std::size_t i = 0; i < t.grid.ns.size(); ++i) {
    for (std::size_t r = 0; r < t.grid.deltas.size(); ++r) {
      for (std::size_t c = 0; c < t.grid.levels.size(); ++c) {
        out << t.grid.ns[i] << ',' << t.grid.deltas[r] << ',' << t.grid.levels[c] << ','
            << fmt(t.cells[i][r][c]) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace detail

/// Infeasible cells print as 0.
inline std::string sup_k_cell(const SupKResult& k) { return std::to_string(k.value_or(0)); }

inline std::string render_sup_k_table(const SupKTable& t) {
  return detail::render_table(t, "sup{k : Bin(k; n, eps) <= delta}", "eps", sup_k_cell);
}

inline std::string render_inf_p_table(const InfPTable& t, Rounding mode = Rounding::Truncate) {
  return detail::render_table(t, "smallest eps (%) with eps >= inf{p : Bin(floor(alpha(n+1)) - 1; n, p) <= delta}",
                              "alpha", [mode](double p) { return format_percent(p, mode); });
}

inline std::string render_sup_k_csv(const SupKTable& t) {
  return detail::render_table_csv(t, "eps", sup_k_cell);
}

inline std::string render_inf_p_csv(const InfPTable& t, Rounding mode = Rounding::Truncate) {
  return detail::render_table_csv(t, "alpha", [mode](double p) { return format_percent(p, mode); });
}

}  // namespace conformal
