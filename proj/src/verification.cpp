#include "flowrnn/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "flowrnn/errors.hpp"
#include "flowrnn/ode.hpp"
#include "flowrnn/training.hpp"

namespace flowrnn {

namespace {

BoxSet product(const BoxSet& a, const BoxSet& b) {
  Vec lo(a.dim() + b.dim());
  Vec hi(a.dim() + b.dim());
  lo << a.lower, b.lower;
  hi << a.upper, b.upper;
  return BoxSet(lo, hi);
}

// Largest per-axis density keeping the grid below `max_points`.
int capped_density(int density, int dims, double max_points) {
  const int cap = static_cast<int>(std::floor(std::pow(max_points, 1.0 / std::max(dims, 1)) + 1e-9));
  return std::max(2, std::min(density, cap));
}

// Hidden activations of a one-hidden-layer net for every column of `in`.
Mat activate_matrix(const FeedforwardNet& net, const Mat& in) {
  const Mat pre = (net.A * in).colwise() + net.b;
  if (net.activation == Activation::Tanh) return pre.array().tanh().matrix();
  return (1.0 + (-pre.array()).exp()).inverse().matrix();
}

Mat slope_matrix(const FeedforwardNet& net, const Mat& hidden) {
  if (net.activation == Activation::Tanh) return (1.0 - hidden.array().square()).matrix();
  return (hidden.array() * (1.0 - hidden.array())).matrix();
}

Vec draw(const BoxSet& box, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec v(box.dim());
  for (int i = 0; i < box.dim(); ++i) v[i] = box.lower[i] + unit(rng) * (box.upper[i] - box.lower[i]);
  return v;
}

}  // namespace

std::vector<BoxSet> reachable_boxes(const DiscreteMap& f, const BoxSet& kx, const BoxSet& ku, int N, int density) {
  if (density < 2) throw DomainError("grid density must be at least 2");
  if (N < 0) throw DomainError("horizon must be non-negative");
  std::vector<BoxSet> boxes;
  if (N == 0) return boxes;
  boxes.push_back(kx);
  const int dx = kx.dim();
  const int dens = capped_density(density, dx + ku.dim(), 2e5);
  for (int n = 1; n < N; ++n) {
    Vec lo = Vec::Constant(dx, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(dx, -std::numeric_limits<double>::infinity());
    for (const Vec& p : product(boxes.back(), ku).grid(dens)) {
      const Vec y = f(p.head(dx), p.tail(ku.dim()));
      lo = lo.cwiseMin(y);
      hi = hi.cwiseMax(y);
    }
    const Vec center = 0.5 * (lo + hi);
    const Vec half = 0.5 * (hi - lo) * 1.05;
    boxes.emplace_back(center - half, center + half);
  }
  return boxes;
}

double lipschitz_estimate(const DiscreteMap& f, const BoxSet& box, const BoxSet& ku, int density) {
  if (density < 2) throw DomainError("grid density must be at least 2");
  const int dx = box.dim();
  const int dens = capped_density(density, dx + ku.dim(), 5e4);
  double worst = 0.0;
  Mat jac(dx, dx);
  for (const Vec& p : product(box, ku).grid(dens)) {
    const Vec x = p.head(dx);
    const Vec u = p.tail(ku.dim());
    for (int i = 0; i < dx; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
      Vec xp = x;
      Vec xm = x;
      xp[i] += h;
      xm[i] -= h;
      jac.col(i) = (f(xp, u) - f(xm, u)) / (2.0 * h);
    }
    worst = std::max(worst, operator_norm(jac));
  }
  return std::max(1.0, worst);
}

double ToleranceSchedule::min_eps() const {
  return eps_n.empty() ? eps : *std::min_element(eps_n.begin(), eps_n.end());
}

ToleranceSchedule tolerance_schedule(double eps, int N, std::span<const double> L) {
  if (!(eps > 0.0)) throw DomainError("target tolerance must be positive");
  if (N < 2) throw DomainError("tolerance schedule needs N >= 2");
  if (L.size() != static_cast<std::size_t>(N - 1)) {
    throw DimensionError("expected " + std::to_string(N - 1) + " Lipschitz moduli, got " + std::to_string(L.size()));
  }
  for (const double l : L) {
    if (!(l >= 1.0)) throw DomainError("Lipschitz moduli must be at least 1");
  }
  ToleranceSchedule s;
  s.eps = eps;
  s.N = N;
  s.L.assign(L.begin(), L.end());
  s.eta.resize(static_cast<std::size_t>(N));
  s.eta[0] = 1.0;
  for (int n = 1; n < N; ++n) s.eta[n] = 1.0 + s.L[n - 1] * s.eta[n - 1];
  // Backward recursion eps_n = eps_{n+1} / (2 L^n) telescopes to the closed form.
  s.eps_n.resize(static_cast<std::size_t>(N));
  s.eps_n[N - 1] = eps;
  for (int n = N - 1; n >= 1; --n) s.eps_n[n - 1] = s.eps_n[n] / (2.0 * s.L[n - 1]);
  return s;
}

SimulationCertificate check_simulation(const DiscreteMap& f, const RnnCell& cell, const VectorMap& beta,
                                       const VectorMap& gamma, const BoxSet& kx, const BoxSet& ku, int N, double eps,
                                       int trials, std::uint64_t seed) {
  if (N < 0) throw DomainError("horizon must be non-negative");
  SimulationCertificate cert;
  cert.eps = eps;
  cert.max_err.assign(static_cast<std::size_t>(N) + 1, 0.0);

  const auto h_step = [&](const Vec& z, const Vec& u) { return cell.step(z, u); };
  const auto run = [&](const Vec& x, const std::vector<Vec>& inputs) {
    const std::span<const Vec> in(inputs);
    const auto ref = recursion_rollout(f, static_cast<std::size_t>(N), x, in);
    const auto hidden = recursion_rollout(h_step, static_cast<std::size_t>(N), beta(x), in);
    for (int n = 0; n <= N; ++n) cert.max_err[n] = std::max(cert.max_err[n], (gamma(hidden[n]) - ref[n]).norm());
    ++cert.samples;
  };

  for (const Vec& x : kx.corners()) {
    for (const Vec& u : ku.corners()) run(x, std::vector<Vec>(static_cast<std::size_t>(N), u));
  }
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const Vec x = draw(kx, rng);
    std::vector<Vec> inputs;
    inputs.reserve(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) inputs.push_back(draw(ku, rng));
    run(x, inputs);
  }
  for (int n = 0; n <= N; ++n) {
    if (!(cert.max_err[n] < eps)) {
      cert.first_failing_step = n;
      break;
    }
  }
  cert.pass = !cert.first_failing_step.has_value();
  return cert;
}

SimulationCertificate check_simulation(const DiscreteMap& f, const LiftedRnn& lift, const BoxSet& kx,
                                       const BoxSet& ku, int N, double eps, int trials, std::uint64_t seed) {
  return check_simulation(
      f, lift.cell, [&](const Vec& x) { return lift.pair.beta(x); }, [&](const Vec& z) { return lift.pair.gamma(z); },
      kx, ku, N, eps, trials, seed);
}

FitResult fit_one_hidden_layer(const DiscreteMap& f, const BoxSet& domain_x, const BoxSet& domain_u, double target,
                               const FitBudget& budget) {
  if (!(target > 0.0)) throw DomainError("fit target must be positive");
  if (budget.initial_width <= 0 || budget.max_width < budget.initial_width || budget.iterations <= 0) {
    throw DomainError("invalid fitting budget");
  }
  const int dx = domain_x.dim();
  const int du = domain_u.dim();
  const BoxSet domain = product(domain_x, domain_u);
  const int dims = dx + du;

  const auto make_targets = [&](const std::vector<Vec>& pts) {
    Mat in(dims, static_cast<Eigen::Index>(pts.size()));
    Mat out(dx, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      in.col(static_cast<Eigen::Index>(i)) = pts[i];
      out.col(static_cast<Eigen::Index>(i)) = f(pts[i].head(dx), pts[i].tail(du));
    }
    return std::pair{in, out};
  };
  const auto [train_in, train_out] = make_targets(domain.grid(capped_density(budget.train_density, dims, 5e3)));
  const auto [check_in, check_out] = make_targets(domain.grid(capped_density(budget.check_density, dims, 5e4)));

  const auto sup_error = [&](const FeedforwardNet& net) {
    const Mat hidden = activate_matrix(net, check_in);
    const Mat pred = (net.C * hidden).colwise() + net.d;
    return (pred - check_out).colwise().norm().maxCoeff();
  };

  Rng rng(budget.seed);
  double best_seen = std::numeric_limits<double>::infinity();
  constexpr int kCheckEvery = 200;
  const int mse_phase = budget.iterations / 2;
  const Eigen::Index n_train = train_in.cols();

  for (int width = budget.initial_width; width <= budget.max_width; width *= 2) {
    FeedforwardNet net = FeedforwardNet::random(dims, width, dx, budget.activation, rng);
    net.d = train_out.rowwise().mean();
    Vec params(0);
    {
      Eigen::Index count = 0;
      visit_tensors(net, [&](double*, Eigen::Index size) { count += size; });
      params.resize(count);
    }
    const auto pull = [&] {
      Eigen::Index at = 0;
      visit_tensors(net, [&](double* data, Eigen::Index size) {
        params.segment(at, size) = Eigen::Map<const Vec>(data, size);
        at += size;
      });
    };
    const auto push = [&] {
      Eigen::Index at = 0;
      visit_tensors(net, [&](double* data, Eigen::Index size) {
        Eigen::Map<Vec>(data, size) = params.segment(at, size);
        at += size;
      });
    };
    pull();

    TrainConfig adam;
    adam.learning_rate = budget.learning_rate;
    AdamMoments moments;
    for (int it = 1; it <= budget.iterations; ++it) {
      // Loss (mean |r|^{2q})^{1/q}: q = 1 is MSE, q = 4 weights the worst points.
      const int q = it <= mse_phase ? 1 : 4;
      const Mat hidden = activate_matrix(net, train_in);
      const Mat resid = ((net.C * hidden).colwise() + net.d) - train_out;
      const Eigen::ArrayXd sq = resid.colwise().squaredNorm().transpose().array();
      const double S = sq.pow(q).mean();
      if (!(S > 0.0)) break;
      const Eigen::ArrayXd w = (2.0 / static_cast<double>(n_train)) * std::pow(S, 1.0 / q - 1.0) * sq.pow(q - 1);
      const Mat d_out = resid * w.matrix().asDiagonal();
      const Mat d_pre = (net.C.transpose() * d_out).cwiseProduct(slope_matrix(net, hidden));
      FeedforwardGrad grad(net);
      grad.C = d_out * hidden.transpose();
      grad.d = d_out.rowwise().sum();
      grad.A = d_pre * train_in.transpose();
      grad.b = d_pre.rowwise().sum();
      Vec g(params.size());
      Eigen::Index at = 0;
      visit_tensors(grad, [&](double* data, Eigen::Index size) {
        g.segment(at, size) = Eigen::Map<const Vec>(data, size);
        at += size;
      });
      if (it == mse_phase + 1) moments = AdamMoments{};
      adam_step(params, g, moments, it <= mse_phase ? it : it - mse_phase, adam);
      push();
      if (it % kCheckEvery == 0 || it == budget.iterations) {
        const double sup = sup_error(net);
        best_seen = std::min(best_seen, sup);
        if (sup < target) return {net, sup, it};
      }
    }
  }
  throw BudgetExhaustedError("network fit reached sup error " + std::to_string(best_seen) + ", target " +
                                 std::to_string(target),
                             best_seen, target);
}

DemoReport theorem2_demo(const DiscreteMap& f, const BoxSet& kx, const BoxSet& ku, const DemoConfig& cfg) {
  if (cfg.N < 0) throw DomainError("horizon must be non-negative");
  if (!(cfg.eps > 0.0)) throw DomainError("target tolerance must be positive");
  DemoReport report;
  report.fit_domain = kx;
  if (cfg.N == 0) {
    // Only the identity step: gamma = beta = id simulates exactly.
    report.certificate.eps = cfg.eps;
    report.certificate.max_err = {0.0};
    report.certificate.pass = true;
    report.pass = true;
    return report;
  }

  report.reachable = reachable_boxes(f, kx, ku, cfg.N, cfg.reach_density);
  std::vector<double> L;
  double eta = 1.0;
  for (int n = 1; n < cfg.N; ++n) {
    report.inflated.push_back(inflate(report.reachable[n], cfg.eps * eta));
    L.push_back(lipschitz_estimate(f, report.inflated.back(), ku, cfg.lipschitz_density));
    eta = 1.0 + L.back() * eta;
    report.fit_domain = hull(report.fit_domain, report.inflated.back());
  }
  if (cfg.N >= 2) {
    report.schedule = tolerance_schedule(cfg.eps, cfg.N, L);
  } else {
    report.schedule.eps = cfg.eps;
    report.schedule.N = 1;
    report.schedule.eta = {1.0};
    report.schedule.eps_n = {cfg.eps};
  }
  report.target_sup = report.schedule.min_eps();

  report.fit = fit_one_hidden_layer(f, report.fit_domain, ku, report.target_sup, cfg.fit);
  report.lift = lift_to_rnn(report.fit->net, kx.dim());
  report.certificate = check_simulation(f, *report.lift, kx, ku, cfg.N, cfg.eps, cfg.trials, cfg.seed);
  report.pass = report.certificate.pass;
  return report;
}

}  // namespace flowrnn
