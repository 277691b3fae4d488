#include <doctest.h>

#include <cmath>
#include <random>

#include "flowrnn/errors.hpp"
#include "flowrnn/ode.hpp"
#include "test_util.hpp"

using namespace flowrnn;
using flowrnn::test::vec;

namespace {

const ControlSpec kConst02(ControlKind::PiecewiseConstant, 0.2, 1);

IntegratorConfig tight() {
  IntegratorConfig c;
  c.rel_tol = 1e-12;
  c.abs_tol = 1e-12;
  return c;
}

ControlSequence random_seq(const ControlSpec& spec, std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> U(-scale, scale);
  std::vector<Vec> omegas;
  for (std::size_t k = 0; k < n; ++k) {
    Vec w(spec.param_dim());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = U(rng);
    omegas.push_back(w);
  }
  return ControlSequence(spec, omegas);
}

Mat fd_jacobian(const FlowEvaluator& ev, double t, const Vec& x, const ControlSequence& seq, double h) {
  Mat J(x.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (integrate_flow(ev, xp, seq, t) - integrate_flow(ev, xm, seq, t)) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("integrate_flow matches closed forms") {
  const FlowEvaluator decay(test::decay_system(), ControlSpec(ControlKind::PiecewiseConstant, 0.5, 1));
  const auto zero = constant_sequence(decay.spec(), vec({0.0}), 10);
  CHECK(integrate_flow(decay, vec({1.0}), zero, 1.0)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-7));
  CHECK(std::exp(-1.0) == doctest::Approx(0.367879).epsilon(1e-6));

  const FlowEvaluator integ(test::integrator_system(), ControlSpec(ControlKind::PiecewiseConstant, 0.5, 1));
  const auto one = constant_sequence(integ.spec(), vec({1.0}), 10);
  CHECK(integrate_flow(integ, vec({0.0}), one, 2.0)[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("integrate_flow at t = 0 returns the initial state exactly") {
  for (const char* name : {"fhn", "linear-scalar", "vdp"}) {
    const OdeSystem sys = system_by_name(name);
    const FlowEvaluator ev(sys, kConst02);
    Vec x = Vec::LinSpaced(sys.state_dim, 0.3, 1.7);
    const auto seq = constant_sequence(kConst02, vec({0.4}), 3);
    CHECK(integrate_flow(ev, x, seq, 0.0) == x);
  }
}

TEST_CASE("integration restarts at control discontinuities") {
  // xdot = u with u piecewise constant: x(t) is a piecewise-linear sum.
  const ControlSpec spec(ControlKind::PiecewiseConstant, 0.2, 1);
  const FlowEvaluator ev(test::integrator_system(), spec);
  const ControlSequence seq(spec, {vec({1.0}), vec({-3.0}), vec({2.0}), vec({0.5})});
  const double expected = 0.2 * 1.0 + 0.2 * -3.0 + 0.1 * 2.0;
  CHECK(integrate_flow(ev, vec({0.0}), seq, 0.5)[0] == doctest::Approx(expected).epsilon(1e-12));

  const ControlSpec lin(ControlKind::PiecewiseLinear, 1.0, 1);
  const FlowEvaluator evl(test::integrator_system(), lin);
  const ControlSequence ramp(lin, {vec({0.0, 2.0}), vec({4.0, 4.0})});
  // int_0^1 2s ds + int_1^1.5 4 ds = 1 + 2.
  CHECK(integrate_flow(evl, vec({0.0}), ramp, 1.5)[0] == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("integrate_flow errors") {
  const FlowEvaluator ev(test::decay_system(), kConst02);
  const auto seq = constant_sequence(kConst02, vec({0.0}), 2);
  CHECK_THROWS_AS(integrate_flow(ev, vec({1.0}), seq, 1.0), OutOfRangeError);
  CHECK_THROWS_AS(integrate_flow(ev, vec({1.0}), seq, -0.1), DomainError);
  CHECK_THROWS_AS(integrate_flow(ev, vec({1.0, 2.0}), seq, 0.1), DimensionError);
  CHECK_THROWS_AS(FlowEvaluator(fhn_system(), ControlSpec(ControlKind::PiecewiseConstant, 0.2, 2)), DimensionError);
  CHECK_THROWS_AS(system_by_name("lorenz"), DomainError);
}

TEST_CASE("blow-up is reported with the escape time") {
  const OdeSystem quad{"quadratic", 1, 1, [](const Vec& x, const Vec&) -> Vec { return x.cwiseProduct(x); }, {},
                       std::nullopt};
  const ControlSpec spec(ControlKind::PiecewiseConstant, 0.25, 1);
  const FlowEvaluator ev(quad, spec);
  const auto seq = constant_sequence(spec, vec({0.0}), 8);
  // x(t) = 1 / (1 - t) escapes at t = 1.
  try {
    integrate_flow(ev, vec({1.0}), seq, 2.0);
    FAIL("expected blow-up");
  } catch (const BlowUpError& e) {
    CHECK(e.time() == doctest::Approx(1.0).epsilon(1e-3));
  }

  OdeSystem grow = test::decay_system();
  grow.rhs = [](const Vec& x, const Vec&) -> Vec { return x; };
  grow.domain = BoxSet(vec({-2.0}), vec({2.0}));
  const FlowEvaluator evd(grow, spec);
  try {
    integrate_flow(evd, vec({1.0}), seq, 2.0);
    FAIL("expected domain escape");
  } catch (const BlowUpError& e) {
    CHECK(e.time() == doctest::Approx(std::log(2.0)).epsilon(0.05));
  }
}

TEST_CASE("phi_eval and psi_eval") {
  const FlowEvaluator lin(linear_scalar_system(), kConst02);
  CHECK(phi_eval(lin, 0.0, vec({1.3}), vec({0.7})) == vec({1.3}));
  CHECK(phi_eval(lin, 1.0, vec({1.0}), vec({0.0}))[0] == doctest::Approx(0.818731).epsilon(1e-6));
  CHECK(phi_eval(lin, 1.0, vec({0.0}), vec({1.0}))[0] == doctest::Approx(0.181269).epsilon(1e-6));
  CHECK(phi_eval(lin, 1.0, vec({1.0}), vec({0.0}))[0] == doctest::Approx(std::exp(-0.2)).epsilon(1e-8));

  const FlowEvaluator decay(test::decay_system(), kConst02);
  CHECK(psi_eval(decay, 0.0, vec({1.0}), vec({3.0}))[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(psi_eval(decay, 1.0, vec({1.0}), vec({3.0}))[0] == doctest::Approx(0.818731).epsilon(1e-6));
  CHECK_THROWS_AS(phi_eval(decay, 1.5, vec({1.0}), vec({0.0})), DomainError);
}

TEST_CASE("psi_eval is Lipschitz in tau at zero for linear dynamics") {
  // xdot = -x + u: Psi(tau) - Psi(0) = (x - u) ((e^{-tau D} - 1) / tau + D) ~ (x - u) tau D^2 / 2.
  const FlowEvaluator lin(linear_scalar_system(), kConst02, tight());
  const double x = 1.0, u = 0.25, tau = 1e-3;
  const double C = std::abs(x - u) * 0.2 * 0.2 / 2.0;
  const double diff = std::abs(psi_eval(lin, tau, vec({x}), vec({u}))[0] - psi_eval(lin, 0.0, vec({x}), vec({u}))[0]);
  CHECK(diff < 1.01 * tau * C);
  CHECK(diff > 0.99 * tau * C);
}

TEST_CASE("psi_eval(1) equals phi_eval(1)") {
  const FlowEvaluator ev(fhn_system(), kConst02);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  for (int i = 0; i < 20; ++i) {
    const Vec x = vec({N(rng), N(rng)});
    const Vec w = vec({std::abs(N(rng)) * 0.2});
    CHECK((psi_eval(ev, 1.0, x, w) - phi_eval(ev, 1.0, x, w)).norm() < 1e-12 * (1 + x.norm()));
  }
}

TEST_CASE("right derivative of Phi at tau = 0 by Richardson extrapolation") {
  const FlowEvaluator ev(fhn_system(), kConst02, tight());
  const Vec x = vec({0.4, -0.2});
  const Vec w = vec({0.3});
  const Vec target = 0.2 * fhn_system().eval(x, w);
  const auto D = [&](double tau) -> Vec { return (phi_eval(ev, tau, x, w) - x) / tau; };
  const double tau = 1e-3;
  const Vec richardson = 2.0 * D(tau / 2) - D(tau);
  CHECK((richardson - target).norm() / target.norm() < 1e-4);
}

TEST_CASE("semigroup property on seeded random instances") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> N;
  for (const char* name : {"fhn", "vdp", "linear-scalar"}) {
    const OdeSystem sys = system_by_name(name);
    const FlowEvaluator ev(sys, kConst02);
    for (int i = 0; i < 10; ++i) {
      Vec x(sys.state_dim);
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = N(rng);
      const auto seq = random_seq(kConst02, 40, rng, 0.5);
      const int m = 1 + static_cast<int>(rng() % 10);
      const double s = 0.2 * m;
      const double t = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
      const Vec direct = integrate_flow(ev, x, seq, s + t);
      const Vec mid = integrate_flow(ev, x, seq, s);
      const Vec composed = integrate_flow(ev, mid, shift_control(seq, s), t);
      const double bound = 10 * (1e-8 + 1e-8 * std::max(direct.norm(), mid.norm()));
      CHECK((direct - composed).norm() <= bound);
    }
  }
}

TEST_CASE("integrate_trajectory agrees with integrate_flow") {
  const FlowEvaluator ev(fhn_system(), kConst02);
  std::mt19937_64 rng(2);
  const auto seq = random_seq(kConst02, 25, rng, 0.4);
  const std::vector<double> times{0.0, 0.05, 0.2, 0.2, 0.73, 1.4, 3.99, 4.0};
  const Vec x = vec({0.5, -1.0});
  const auto traj = integrate_trajectory(ev, x, seq, times);
  REQUIRE(traj.size() == times.size());
  CHECK(traj[0] == x);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK((traj[i] - integrate_flow(ev, x, seq, times[i])).norm() < 1e-6);
  }
  const std::vector<double> bad{0.5, 0.1};
  CHECK_THROWS_AS(integrate_trajectory(ev, x, seq, bad), DomainError);
}

TEST_CASE("fixed-step RK4 agrees with the adaptive integrator") {
  IntegratorConfig rk4;
  rk4.method = IntegratorMethod::RK4Fixed;
  rk4.fixed_step = 1e-3;
  const FlowEvaluator a(van_der_pol_system(), kConst02);
  const FlowEvaluator b(van_der_pol_system(), kConst02, rk4);
  std::mt19937_64 rng(4);
  const auto seq = random_seq(kConst02, 20, rng);
  const Vec x = vec({1.0, 0.5});
  CHECK((integrate_flow(a, x, seq, 3.3) - integrate_flow(b, x, seq, 3.3)).norm() < 1e-6);

  IntegratorConfig bad;
  bad.rel_tol = 0.0;
  CHECK_THROWS_AS(FlowEvaluator(van_der_pol_system(), kConst02, bad), DomainError);
}

TEST_CASE("FitzHugh-Nagumo right-hand side and Jacobian") {
  const OdeSystem f = fhn_system();
  const Vec a = f.eval(vec({0.0, 0.0}), vec({0.0}));
  CHECK(a[0] == doctest::Approx(0.0));
  CHECK(a[1] == doctest::Approx(0.375).epsilon(1e-14));
  const Vec b = f.eval(vec({1.0, 0.0}), vec({0.0}));
  CHECK(b[0] == doctest::Approx(0.0));
  CHECK(b[1] == doctest::Approx(1.625).epsilon(1e-14));
  const Mat J = f.jacobian_x(vec({0.0, 0.0}), vec({0.0}));
  CHECK(J(0, 0) == doctest::Approx(50.0));
  CHECK(J(0, 1) == doctest::Approx(-50.0));
  CHECK(J(1, 0) == doctest::Approx(1.25));
  CHECK(J(1, 1) == doctest::Approx(-1.75));

  // The analytic Jacobian agrees with differences of the right-hand side.
  OdeSystem fd = f;
  fd.jacobian = {};
  const Vec x = vec({0.7, -0.4});
  const Vec u = vec({0.2});
  CHECK((fd.jacobian_x(x, u) - f.jacobian_x(x, u)).norm() < 1e-6 * f.jacobian_x(x, u).norm());
}

TEST_CASE("flow_jacobian") {
  const FlowEvaluator decay(test::decay_system(), kConst02, tight());
  const auto zero = constant_sequence(kConst02, vec({0.0}), 10);
  CHECK(flow_jacobian(decay, 0.0, vec({2.0}), zero) == Mat::Identity(1, 1));
  CHECK(flow_jacobian(decay, 1.0, vec({2.0}), zero)(0, 0) == doctest::Approx(0.367879).epsilon(1e-6));

  std::mt19937_64 rng(9);
  std::normal_distribution<double> N;
  for (OdeSystem sys : {fhn_system(), test::linear2_system(), van_der_pol_system()}) {
    const FlowEvaluator ev(sys, kConst02, tight());
    for (int i = 0; i < 5; ++i) {
      const Vec x = vec({N(rng), N(rng)});
      const auto seq = random_seq(kConst02, 6, rng, 0.5);
      const double t = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
      const Mat J = flow_jacobian(ev, t, x, seq);
      const Mat F = fd_jacobian(ev, t, x, seq, 1e-5);
      CHECK((J - F).norm() / std::max(1e-12, F.norm()) < 1e-5);
    }
  }

  // Finite-difference D_x f fallback.
  OdeSystem no_jac = fhn_system();
  no_jac.jacobian = {};
  const FlowEvaluator ev_fd(no_jac, kConst02, tight());
  const FlowEvaluator ev_an(fhn_system(), kConst02, tight());
  const auto seq = constant_sequence(kConst02, vec({0.2}), 5);
  CHECK((flow_jacobian(ev_fd, 0.7, vec({0.1, 0.2}), seq) - flow_jacobian(ev_an, 0.7, vec({0.1, 0.2}), seq)).norm() <
        1e-5);
}

TEST_CASE("Gronwall sensitivity bound") {
  MatrixPath A{0.0, 1.0, {Mat::Identity(2, 2) * -0.5, Mat::Identity(2, 2) * 0.3}};
  const GronwallReport same = gronwall_bound_check(A, A, vec({1.0, 2.0}), vec({1.0, 2.0}));
  CHECK(same.lhs == doctest::Approx(0.0));
  CHECK(same.holds);

  // Equal dynamics, different initial states: |d(1)| <= |d(0)| exp(int |B|).
  const GronwallReport shifted = gronwall_bound_check(A, A, vec({1.0, 2.0}), vec({0.0, 2.0}));
  CHECK(shifted.holds);
  // d(t) = d(0) exp(-0.5 * 0.5 + 0.3 * 0.5) exactly for scalar-multiple pieces.
  CHECK(shifted.lhs == doctest::Approx(std::exp(-0.1)).epsilon(1e-9));
  CHECK(shifted.rhs == doctest::Approx(std::exp(0.4)).epsilon(1e-9));

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    MatrixPath a{0.0, 1.0, {}}, b{0.0, 1.0, {}};
    for (int p = 0; p < 4; ++p) {
      a.pieces.push_back(Mat::NullaryExpr(3, 3, [&] { return U(rng); }));
      b.pieces.push_back(Mat::NullaryExpr(3, 3, [&] { return U(rng); }));
    }
    const Vec x0 = Vec::NullaryExpr(3, [&] { return U(rng); });
    const Vec z0 = Vec::NullaryExpr(3, [&] { return U(rng); });
    if (!gronwall_bound_check(a, b, x0, z0).holds) ++violations;
  }
  CHECK(violations == 0);

  MatrixPath wrong{0.0, 1.0, {Mat::Identity(3, 3)}};
  CHECK_THROWS_AS(gronwall_bound_check(A, wrong, vec({1.0, 2.0}), vec({1.0, 2.0})), DimensionError);
}

TEST_CASE("operator_norm is the largest singular value") {
  Mat m(2, 2);
  m << 3.0, 0.0, 0.0, -4.0;
  CHECK(operator_norm(m) == doctest::Approx(4.0));
}
