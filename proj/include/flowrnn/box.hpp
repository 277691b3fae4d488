#pragma once

#include <vector>

#include "flowrnn/control.hpp"

namespace flowrnn {

/// Axis-aligned box [lower, upper] in R^d.
struct BoxSet {
  Vec lower;
  Vec upper;

  BoxSet() = default;
  BoxSet(Vec lo, Vec hi);

  /// Box with the same bounds on every axis.
  static BoxSet uniform(int dim, double lo, double hi);

  int dim() const noexcept { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x, double slack = 0.0) const;
  Vec center() const { return 0.5 * (lower + upper); }

  /// Tensor grid with `density` points per axis (endpoints included).
  std::vector<Vec> grid(int density) const;
  /// All 2^d vertices.
  std::vector<Vec> corners() const;
};

/// Closed eps-neighbourhood in the sup metric, i.e. bounds moved outward by eps.
BoxSet inflate(const BoxSet& box, double eps);

/// Smallest box containing both arguments.
BoxSet hull(const BoxSet& a, const BoxSet& b);

}  // namespace flowrnn
