#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace conformal {

/// Throws std::domain_error unless 0 < level < 1.
inline void require_open_unit(double level, const char* name) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::domain_error(std::string(name) + " must lie strictly inside (0, 1)");
  }
}

namespace detail {

// level * m with products that sit within a few ulps of an integer snapped onto it.
// Levels such as 88/1001 cannot be represented exactly, so without snapping
// floor(alpha * (n + 1)) would drift by one at exact rational boundaries.
inline long double snapped_product(double level, std::int64_t m) {
  const long double x = static_cast<long double>(level) * static_cast<long double>(m);
  const long double r = std::nearbyint(x);
  const long double tol =
      8.0L * std::numeric_limits<double>::epsilon() * std::fmax(1.0L, std::fabs(x));
  return std::fabs(x - r) <= tol ? r : x;
}

}  // namespace detail

/// floor(level * m), exact at rational boundaries of the form j / m.
inline std::int64_t scaled_floor(double level, std::int64_t m) {
  return static_cast<std::int64_t>(std::floor(detail::snapped_product(level, m)));
}

/// ceil(level * m), exact at rational boundaries of the form j / m.
inline std::int64_t scaled_ceil(double level, std::int64_t m) {
  return static_cast<std::int64_t>(std::ceil(detail::snapped_product(level, m)));
}

/// level * m as a double, snapped to an integer when it sits on one.
inline double scaled_level(double level, std::int64_t m) {
  return static_cast<double>(detail::snapped_product(level, m));
}

}  // namespace conformal
