#pragma once

#include <cmath>
#include <random>

#include "flowrnn/nets.hpp"
#include "flowrnn/ode.hpp"

namespace flowrnn::test {

/// xdot = -x.
inline OdeSystem decay_system() {
  return {"decay", 1, 1, [](const Vec& x, const Vec&) -> Vec { return -x; },
          [](const Vec&, const Vec&) -> Mat { return -Mat::Identity(1, 1); }, std::nullopt};
}

/// xdot = u.
inline OdeSystem integrator_system() {
  return {"integrator", 1, 1, [](const Vec&, const Vec& u) -> Vec { return u; }, {}, std::nullopt};
}

/// xdot = A x + B u with fixed 2x2 A.
inline OdeSystem linear2_system() {
  Mat A(2, 2);
  A << -0.5, 1.0, -1.0, -0.3;
  Mat B(2, 1);
  B << 0.0, 1.0;
  return {"linear2", 2, 1, [A, B](const Vec& x, const Vec& u) -> Vec { return A * x + B * u; },
          [A](const Vec&, const Vec&) -> Mat { return A; }, std::nullopt};
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

struct LiftCase {
  FeedforwardNet g;
  int dx = 0;
  int du = 0;
};

/// Random one-hidden-layer map g(x, u) with d_x <= 4, d_u <= 3, p <= 8. Every
/// third case has an output matrix built as a low-rank product.
inline LiftCase random_lift_case(Rng& rng, int index) {
  std::uniform_int_distribution<int> DX(1, 4), DU(0, 3), P(1, 8);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  LiftCase c;
  c.dx = DX(rng);
  c.du = DU(rng);
  const int p = P(rng);
  const Activation act = index % 2 ? Activation::Sigmoid : Activation::Tanh;
  c.g = FeedforwardNet::random(c.dx + c.du, p, c.dx, act, rng);
  c.g.A *= 2.0;
  c.g.b = Vec::NullaryExpr(p, [&] { return U(rng); });
  c.g.d = Vec::NullaryExpr(c.dx, [&] { return U(rng); });
  if (index % 3 == 0) {
    const int k = std::max(0, std::min(c.dx, p) - 1 - index % 2);
    const Mat L = Mat::NullaryExpr(c.dx, k, [&] { return U(rng); });
    const Mat R = Mat::NullaryExpr(k, p, [&] { return U(rng); });
    c.g.C = L * R;
  }
  return c;
}

}  // namespace flowrnn::test
