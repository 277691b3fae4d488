#include <doctest.h>

#include <random>

#include "flowrnn/errors.hpp"
#include "flowrnn/flow_model.hpp"
#include "flowrnn/lift.hpp"
#include "test_util.hpp"

using namespace flowrnn;
using flowrnn::test::vec;

namespace {

const ControlSpec kSpec(ControlKind::PiecewiseConstant, 0.2, 1);

ControlSequence random_seq(const ControlSpec& spec, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<Vec> omegas;
  for (std::size_t k = 0; k < n; ++k) omegas.push_back(Vec::NullaryExpr(spec.param_dim(), [&] { return U(rng); }));
  return ControlSequence(spec, omegas);
}

FlowModel identity_zero_model() {
  const RnnCell zero{Mat::Zero(1, 1), Mat::Zero(1, 2), Vec::Zero(1), Activation::Tanh};
  const AffinePair id{AffineMap{Mat::Identity(1, 1), Vec::Zero(1)}, AffineMap{Mat::Identity(1, 1), Vec::Zero(1)}};
  return FlowModel::with_affine_pair(kSpec, zero, id);
}

}  // namespace

TEST_CASE("hidden_rollout shapes and definition") {
  const FlowModel m = FlowModel::random(kSpec, 2, 5, {}, Activation::Tanh, 1);
  const Vec x = vec({0.3, -0.2});
  const auto empty = hidden_rollout(m, x, {}, {});
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == m.beta.eval(x));

  const std::vector<double> taus{1.0, 1.0, 0.4};
  const std::vector<Vec> omegas{vec({0.1}), vec({-0.5}), vec({0.9})};
  const auto z = hidden_rollout(m, x, taus, omegas);
  REQUIRE(z.size() == 4);
  Vec ref = m.beta.eval(x);
  for (std::size_t k = 0; k < 3; ++k) {
    Vec in(2);
    in << taus[k], omegas[k][0];
    ref = m.cell.step(ref, in);
    CHECK(z[k + 1] == ref);
  }
  const std::vector<double> short_taus{1.0};
  CHECK_THROWS_AS(hidden_rollout(m, x, short_taus, omegas), DimensionError);
}

TEST_CASE("zero cell with identity encoder and decoder") {
  const FlowModel m = identity_zero_model();
  const auto seq = constant_sequence(kSpec, vec({0.7}), 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> T(0.0, 0.2);
  for (int i = 0; i < 50; ++i) {
    const double t = T(rng);
    const double tau = time_decompose(t, 0.2).tau;
    CHECK(flow_predict(m, t, vec({1.7}), seq)[0] == doctest::Approx((1 - tau) * 1.7).epsilon(1e-15));
  }
  CHECK(flow_predict(m, 0.0, vec({1.7}), seq)[0] == 1.7);
}

TEST_CASE("interpolation weights at half a period") {
  const FlowModel m = FlowModel::random(kSpec, 2, 4, {6}, Activation::Tanh, 3);
  const auto seq = constant_sequence(kSpec, vec({0.2}), 2);
  const Vec x = vec({0.5, 0.1});
  const Vec z0 = m.beta.eval(x);
  const Vec z1 = m.cell.step(z0, cell_input(0.5, seq[0]));
  CHECK((flow_predict(m, 0.1, x, seq) - m.gamma.eval(0.5 * z0 + 0.5 * z1)).norm() < 1e-15);
}

TEST_CASE("affine pair gives exact initial condition") {
  std::mt19937_64 rng(6);
  Rng nrng(6);
  for (int i = 0; i < 20; ++i) {
    const auto c = test::random_lift_case(nrng, i);
    if (c.du == 0) continue;
    const LiftedRnn lift = lift_to_rnn(c.g, c.dx);
    const ControlSpec spec(ControlKind::PiecewiseConstant, 0.2, c.du - 1 > 0 ? c.du - 1 : 1);
    RnnCell cell = RnnCell::random(lift.lifted_dim(), 1 + spec.param_dim(), Activation::Tanh, nrng);
    const FlowModel m = FlowModel::with_affine_pair(spec, cell, lift.pair);
    const Vec x = Vec::NullaryExpr(c.dx, [&] { return std::uniform_real_distribution<double>(-2, 2)(rng); });
    const auto seq = random_seq(spec, 2, rng);
    CHECK((flow_predict(m, 0.0, x, seq) - x).norm() < 1e-12);
  }
}

TEST_CASE("continuity across segment boundaries") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 5; ++i) {
    const FlowModel m = FlowModel::random(kSpec, 2, 8, {8}, Activation::Tanh, static_cast<std::uint64_t>(i));
    const auto seq = random_seq(kSpec, 12, rng);
    const Vec x = vec({0.4, -0.9});
    for (int k = 1; k <= 10; ++k) {
      const double t = 0.2 * k;
      const Vec at = flow_predict(m, t, x, seq);
      const Vec before = flow_predict(m, t - 1e-9, x, seq);
      const Vec after = flow_predict(m, t + 1e-9, x, seq);
      CHECK((at - before).norm() < 1e-6 * (1 + at.norm()));
      CHECK((at - after).norm() < 1e-6 * (1 + at.norm()));
    }
  }
}

TEST_CASE("flow_predict ignores the control beyond the current period") {
  std::mt19937_64 rng(10);
  const FlowModel m = FlowModel::random(kSpec, 2, 6, {}, Activation::Sigmoid, 5);
  auto a = random_seq(kSpec, 10, rng);
  auto omegas = a.omegas();
  for (std::size_t k = 4; k < omegas.size(); ++k) omegas[k] = vec({100.0});
  const ControlSequence b(kSpec, omegas);
  const Vec x = vec({1.0, 2.0});
  for (double t : {0.0, 0.1, 0.2, 0.55, 0.8}) CHECK(flow_predict(m, t, x, a) == flow_predict(m, t, x, b));
}

TEST_CASE("flow_predict_batch is bitwise equal to flow_predict") {
  std::mt19937_64 rng(12);
  const FlowModel m = FlowModel::random(kSpec, 2, 6, {5, 5}, Activation::Tanh, 9);
  const auto seq = random_seq(kSpec, 30, rng);
  const Vec x = vec({-0.3, 0.8});

  const std::vector<double> single{0.37};
  CHECK(flow_predict_batch(m, single, x, seq)[0] == flow_predict(m, 0.37, x, seq));

  const std::vector<double> grid{0.0, 0.2, 0.4};
  const auto g = flow_predict_batch(m, grid, x, seq);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(g[i] == flow_predict(m, grid[i], x, seq));
    CHECK(time_decompose(grid[i], 0.2).tau == 0.0);
  }

  std::vector<double> times;
  std::uniform_real_distribution<double> T(0.0, 6.0);
  for (int i = 0; i < 100; ++i) times.push_back(T(rng));
  std::sort(times.begin(), times.end());
  const auto batch = flow_predict_batch(m, times, x, seq);
  for (std::size_t i = 0; i < times.size(); ++i) CHECK(batch[i] == flow_predict(m, times[i], x, seq));

  std::swap(times[0], times[50]);
  CHECK_THROWS_AS(flow_predict_batch(m, times, x, seq), DomainError);
}

TEST_CASE("flow_predict horizon and dimension errors") {
  const FlowModel m = FlowModel::random(kSpec, 2, 3, {}, Activation::Tanh, 1);
  const auto seq = constant_sequence(kSpec, vec({0.0}), 2);
  CHECK_NOTHROW(flow_predict(m, 0.4, vec({0.0, 0.0}), seq));
  CHECK_THROWS_AS(flow_predict(m, 0.41, vec({0.0, 0.0}), seq), OutOfRangeError);
  CHECK_THROWS_AS(flow_predict(m, 0.1, vec({0.0}), seq), DimensionError);
  const ControlSpec other(ControlKind::PiecewiseConstant, 0.3, 1);
  CHECK_THROWS_AS(flow_predict(m, 0.1, vec({0.0, 0.0}), constant_sequence(other, vec({0.0}), 2)), DimensionError);
}

TEST_CASE("parameter flattening round trip") {
  FlowModel m = FlowModel::random(kSpec, 2, 4, {3}, Activation::Tanh, 2);
  const Vec p = flatten_parameters(m);
  // beta: 2*3+3 + 3*4+4, cell: 16 + 4*2 + 4, gamma: 4*3+3 + 3*2+2.
  CHECK(parameter_count(m) == 25 + 28 + 23);
  CHECK(p.size() == parameter_count(m));
  FlowModel n = FlowModel::random(kSpec, 2, 4, {3}, Activation::Tanh, 99);
  assign_parameters(n, p);
  CHECK(flatten_parameters(n) == p);
  CHECK(n.cell.A == m.cell.A);
  CHECK_THROWS_AS(assign_parameters(n, Vec::Zero(3)), DimensionError);
}

TEST_CASE("true_flow_recursive") {
  const FlowEvaluator lin(linear_scalar_system(), kSpec);
  std::mt19937_64 rng(14);
  const auto seq = random_seq(kSpec, 30, rng);

  // Single period: one phi_eval.
  CHECK(true_flow_recursive(lin, 0.13, vec({0.4}), seq) == phi_eval(lin, 0.65, vec({0.4}), seq[0]));

  // Variation of constants for xdot = -x + u, u piecewise constant.
  std::uniform_real_distribution<double> T(0.0, 5.9);
  for (int i = 0; i < 30; ++i) {
    const double t = T(rng);
    double x = 0.8;
    double now = 0.0;
    std::size_t k = 0;
    while (now < t) {
      const double end = std::min(t, 0.2 * static_cast<double>(k + 1));
      const double u = seq[k][0];
      x = u + (x - u) * std::exp(-(end - now));
      now = end;
      ++k;
    }
    CHECK(true_flow_recursive(lin, t, vec({0.8}), seq)[0] == doctest::Approx(x).epsilon(1e-6));
  }

  const FlowEvaluator fhn(fhn_system(), kSpec);
  for (int i = 0; i < 10; ++i) {
    const double t = std::uniform_real_distribution<double>(0.0, 4.0)(rng);
    const Vec x = vec({std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng)});
    const Vec a = true_flow_recursive(fhn, t, x, seq);
    const Vec b = integrate_flow(fhn, x, seq, t);
    CHECK((a - b).norm() <= 10 * (1e-8 + 1e-8 * b.norm()));
  }
}
