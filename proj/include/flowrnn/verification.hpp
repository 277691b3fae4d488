#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "flowrnn/box.hpp"
#include "flowrnn/lift.hpp"
#include "flowrnn/nets.hpp"

namespace flowrnn {

/// Discrete-time dynamics x' = f(x, u).
using DiscreteMap = std::function<Vec(const Vec& x, const Vec& u)>;

/// Outer box estimates of K^0 = K_x, K^{n+1} = f(K^n, K_u) for n < N - 1.
/// Each image box is the bounding box of f on a grid over K^n x K_u with its
/// half-widths enlarged by 5%.
std::vector<BoxSet> reachable_boxes(const DiscreteMap& f, const BoxSet& kx, const BoxSet& ku, int N, int density);

/// max(1, largest |D_x f| over a grid on box x K_u), Jacobians by central differences.
double lipschitz_estimate(const DiscreteMap& f, const BoxSet& box, const BoxSet& ku, int density);

/// Per-step tolerance budgets. Index i of each list holds step n = i + 1:
/// L = (L^1..L^{N-1}), eta = (eta^1..eta^N), eps_n = (eps_1..eps_N).
struct ToleranceSchedule {
  std::vector<double> L;
  std::vector<double> eta;
  std::vector<double> eps_n;
  double eps = 0.0;
  int N = 0;

  double min_eps() const;
};

/// eta^1 = 1, eta^{n+1} = 1 + L^n eta^n, eps_n = eps / (2^{N-n} prod_{k=n}^{N-1} L^k).
ToleranceSchedule tolerance_schedule(double eps, int N, std::span<const double> L);

struct SimulationCertificate {
  /// Worst |Psi_f(n, x, u) - gamma(Psi_h(n, beta(x), u))| over all samples, n = 0..N.
  std::vector<double> max_err;
  double eps = 0.0;
  int samples = 0;
  bool pass = false;
  /// Smallest n with max_err[n] >= eps.
  std::optional<int> first_failing_step;
};

using VectorMap = std::function<Vec(const Vec&)>;

/// Compares the recursion of f with gamma o Psi_h o beta over box corners
/// (held constant inputs at every K_u corner) and `trials` random draws.
SimulationCertificate check_simulation(const DiscreteMap& f, const RnnCell& cell, const VectorMap& beta,
                                       const VectorMap& gamma, const BoxSet& kx, const BoxSet& ku, int N, double eps,
                                       int trials, std::uint64_t seed);
SimulationCertificate check_simulation(const DiscreteMap& f, const LiftedRnn& lift, const BoxSet& kx,
                                       const BoxSet& ku, int N, double eps, int trials, std::uint64_t seed);

struct FitBudget {
  int initial_width = 8;
  int max_width = 512;
  int iterations = 20000;
  int train_density = 15;
  int check_density = 41;
  double learning_rate = 1e-2;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
};

struct FitResult {
  FeedforwardNet net;
  double sup_error = 0.0;
  int iterations = 0;
};

/// One-hidden-layer fit of f on domain_x x domain_u with sup error (on a
/// check grid plus corners) below `target`. Widths double from
/// initial_width to max_width; throws BudgetExhaustedError otherwise.
FitResult fit_one_hidden_layer(const DiscreteMap& f, const BoxSet& domain_x, const BoxSet& domain_u, double target,
                               const FitBudget& budget);

struct DemoConfig {
  int N = 4;
  double eps = 0.05;
  int reach_density = 21;
  int lipschitz_density = 11;
  int trials = 500;
  FitBudget fit;
  std::uint64_t seed = 0;
};

struct DemoReport {
  std::vector<BoxSet> reachable;  // K^0..K^{N-1}
  std::vector<BoxSet> inflated;   // K~^1..K~^{N-1}
  BoxSet fit_domain;              // hull of K_x and the K~^n
  ToleranceSchedule schedule;
  double target_sup = 0.0;
  std::optional<FitResult> fit;
  std::optional<LiftedRnn> lift;
  SimulationCertificate certificate;
  bool pass = false;
};

/// Reachable boxes -> Lipschitz moduli -> schedule -> network fit -> lift ->
/// simulation check, for a discrete map on K_x x K_u.
DemoReport theorem2_demo(const DiscreteMap& f, const BoxSet& kx, const BoxSet& ku, const DemoConfig& cfg);

}  // namespace flowrnn
