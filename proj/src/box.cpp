#include "flowrnn/box.hpp"

#include <cmath>

#include "flowrnn/errors.hpp"

namespace flowrnn {

BoxSet::BoxSet(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw DimensionError("box bounds differ in dimension");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] <= upper[i])) throw DomainError("box lower bound exceeds upper bound");
  }
}

BoxSet BoxSet::uniform(int dim, double lo, double hi) {
  return BoxSet(Vec::Constant(dim, lo), Vec::Constant(dim, hi));
}

bool BoxSet::contains(const Vec& x, double slack) const {
  if (x.size() != lower.size()) throw DimensionError("point and box differ in dimension");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
  }
  return true;
}

std::vector<Vec> BoxSet::grid(int density) const {
  if (density < 2) throw DomainError("grid density must be at least 2");
  const int d = dim();
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(density);
  std::vector<Vec> points;
  points.reserve(total);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t n = 0; n < total; ++n) {
    Vec p(d);
    for (int i = 0; i < d; ++i) {
      const double s = static_cast<double>(idx[i]) / (density - 1);
      p[i] = lower[i] + s * (upper[i] - lower[i]);
    }
    points.push_back(std::move(p));
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < density) break;
      idx[i] = 0;
    }
  }
  return points;
}

std::vector<Vec> BoxSet::corners() const {
  const int d = dim();
  std::vector<Vec> out;
  out.reserve(std::size_t{1} << d);
  for (unsigned mask = 0; mask < (1u << d); ++mask) {
    Vec p(d);
    for (int i = 0; i < d; ++i) p[i] = (mask >> i) & 1u ? upper[i] : lower[i];
    out.push_back(std::move(p));
  }
  return out;
}

BoxSet inflate(const BoxSet& box, double eps) {
  if (!(eps >= 0.0)) throw DomainError("inflation radius must be non-negative");
  return BoxSet(box.lower.array() - eps, box.upper.array() + eps);
}

BoxSet hull(const BoxSet& a, const BoxSet& b) {
  if (a.dim() != b.dim()) throw DimensionError("boxes differ in dimension");
  return BoxSet(a.lower.cwiseMin(b.lower), a.upper.cwiseMax(b.upper));
}

}  // namespace flowrnn
