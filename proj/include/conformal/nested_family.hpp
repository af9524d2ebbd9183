#pragma once

// Nested prediction sets S_lambda(x) indexed by a closed lambda domain, and the
// score/membership correspondence r(x, y) = inf{lambda : y in S_lambda(x)}.

#include <algorithm>
#include <concepts>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>

namespace conformal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using Features = std::span<const double>;

/// Closed index set [lo, hi] in the extended reals. S_lo is empty and S_hi the
/// whole label space.
struct LambdaDomain {
  double lo = -kInf;
  double hi = kInf;

  LambdaDomain() = default;
  LambdaDomain(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(lo < hi)) throw std::domain_error("lambda domain needs lo < hi");
  }

  bool contains(double lam) const { return lam >= lo && lam <= hi; }
};

/// Closed interval of labels. Empty is encoded as lo > hi.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval empty() { return {kInf, -kInf}; }
  static Interval whole() { return {-kInf, kInf}; }

  bool is_empty() const { return lo > hi; }
  bool contains(double y) const { return lo <= y && y <= hi; }
  double length() const { return is_empty() ? 0.0 : hi - lo; }
  bool subset_of(const Interval& other) const {
    return is_empty() || (other.lo <= lo && hi <= other.hi);
  }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// [lo - lam, hi + lam], empty once the two ends cross.
inline Interval expand(const Interval& base, double lam) {
  if (lam == kInf) return Interval::whole();
  if (lam == -kInf) return Interval::empty();
  const Interval out{base.lo - lam, base.hi + lam};
  return out.is_empty() ? Interval::empty() : out;
}

/// A right-continuous nested family of label intervals.
template <class F>
concept NestedIntervalFamily = requires(const F& f, Features x, double lam, double y) {
  { f.domain() } -> std::convertible_to<LambdaDomain>;
  { f.set_at(lam, x) } -> std::convertible_to<Interval>;
  { f.score(x, y) } -> std::convertible_to<double>;
};

template <NestedIntervalFamily F>
double score_of(const F& family, Features x, double y) {
  const LambdaDomain dom = family.domain();
  return std::clamp(static_cast<double>(family.score(x, y)), dom.lo, dom.hi);
}

template <NestedIntervalFamily F>
bool member(const F& family, double lam, Features x, double y) {
  return score_of(family, x, y) <= lam;
}

/// S_lam(x) = [lo(x) - lam, hi(x) + lam] around a base band x -> [lo(x), hi(x)].
template <class Band>
  requires std::invocable<const Band&, Features>
class SymmetricExpansion {
 public:
  explicit SymmetricExpansion(Band band) : band_(std::move(band)) {}

  LambdaDomain domain() const { return {}; }

  Interval set_at(double lam, Features x) const { return expand(base(x), lam); }

  // smallest lam with lo - lam <= y <= hi + lam
  double score(Features x, double y) const {
    const Interval b = base(x);
    return std::max(b.lo - y, y - b.hi);
  }

  Interval base(Features x) const {
    Interval b = band_(x);
    if (b.lo > b.hi) std::swap(b.lo, b.hi);
    return b;
  }

 private:
  Band band_;
};

}  // namespace conformal
