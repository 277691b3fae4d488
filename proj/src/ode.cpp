#include "flowrnn/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SVD>
#include <boost/numeric/odeint.hpp>

#include "flowrnn/errors.hpp"

namespace flowrnn {

namespace odeint = boost::numeric::odeint;

namespace {

using Buffer = std::vector<double>;
using Deriv = std::function<void(const Buffer& y, Buffer& dy, double s)>;
using Guard = std::function<void(const Buffer& y, double s)>;

Eigen::Map<const Vec> as_vec(const Buffer& y, int n, int offset = 0) {
  return Eigen::Map<const Vec>(y.data() + offset, n);
}

// Integrates y over local time [s0, s1].
void integrate_span(const Deriv& rhs, Buffer& y, double s0, double s1, const IntegratorConfig& cfg,
                    const Guard& guard) {
  if (!(s1 > s0)) return;
  const double len = s1 - s0;
  try {
    if (cfg.method == IntegratorMethod::RK4Fixed) {
      odeint::runge_kutta4<Buffer> stepper;
      const auto steps = static_cast<long>(std::max(1.0, std::ceil(len / cfg.fixed_step - 1e-9)));
      const double h = len / static_cast<double>(steps);
      double s = s0;
      for (long i = 0; i < steps; ++i) {
        stepper.do_step(rhs, y, s, h);
        s = (i + 1 == steps) ? s1 : s0 + static_cast<double>(i + 1) * h;
        guard(y, s);
      }
      return;
    }
    using Dopri = odeint::runge_kutta_dopri5<Buffer>;
    const double dt0 = std::min(len, std::isfinite(cfg.max_step) ? cfg.max_step : len);
    auto observer = [&](const Buffer& state, double s) { guard(state, s); };
    if (std::isfinite(cfg.max_step)) {
      auto stepper = odeint::make_controlled(cfg.abs_tol, cfg.rel_tol, cfg.max_step, Dopri());
      odeint::integrate_adaptive(stepper, rhs, y, s0, s1, dt0, observer);
    } else {
      auto stepper = odeint::make_controlled(cfg.abs_tol, cfg.rel_tol, Dopri());
      odeint::integrate_adaptive(stepper, rhs, y, s0, s1, dt0, observer);
    }
  } catch (const odeint::odeint_error& e) {
    throw BlowUpError(std::string("integrator step size collapsed: ") + e.what(), s0);
  }
}

Guard state_guard(const OdeSystem& sys, double time_offset) {
  return [&sys, time_offset](const Buffer& y, double s) {
    const auto x = as_vec(y, sys.state_dim);
    const double t = time_offset + s;
    if (!x.allFinite() || x.norm() > kBlowUpNorm) {
      throw BlowUpError("solution blew up at t = " + std::to_string(t), t);
    }
    if (sys.domain && !sys.domain->contains(x)) {
      throw BlowUpError("solution left the state domain at t = " + std::to_string(t), t);
    }
  };
}

// Right-hand side on one control period in local time s in [0, delta].
Deriv period_rhs(const FlowEvaluator& ev, const Vec& omega, bool variational) {
  const OdeSystem& sys = ev.system();
  const ControlSpec& spec = ev.spec();
  const int n = sys.state_dim;
  const bool constant = spec.kind() == ControlKind::PiecewiseConstant;
  Vec u_const = constant ? spec.alpha_local(omega, 0.0) : Vec();
  return [&sys, &spec, omega, u_const, constant, n, variational](const Buffer& y, Buffer& dy, double s) {
    dy.resize(y.size());
    const Vec u = constant ? u_const : spec.alpha_local(omega, std::clamp(s / spec.delta(), 0.0, 1.0));
    const Vec x = as_vec(y, n);
    Eigen::Map<Vec>(dy.data(), n) = sys.eval(x, u);
    if (variational) {
      Eigen::Map<const Mat> lambda(y.data() + n, n, n);
      Eigen::Map<Mat>(dy.data() + n, n, n) = sys.jacobian_x(x, u) * lambda;
    }
  };
}

// Moves y from absolute time `from` to `to`, splitting at every grid point.
void advance(const FlowEvaluator& ev, const ControlSequence& seq, Buffer& y, double from, double to,
             bool variational) {
  const double delta = ev.spec().delta();
  while (from < to) {
    const TimeIndex idx = time_decompose(from, delta);
    const double period_start = static_cast<double>(idx.k) * delta;
    const double period_end = static_cast<double>(idx.k + 1) * delta;
    const double seg_end = std::min(to, period_end);
    const double tau_end = seg_end >= period_end ? 1.0 : (seg_end - period_start) / delta;
    if (tau_end > idx.tau) {
      if (idx.k >= seq.size()) {
        throw OutOfRangeError("time " + std::to_string(to) + " beyond control horizon " +
                              std::to_string(seq.horizon()));
      }
      const Deriv rhs = period_rhs(ev, seq[idx.k], variational);
      integrate_span(rhs, y, idx.tau * delta, tau_end * delta, ev.config(),
                     state_guard(ev.system(), period_start));
    }
    from = seg_end;
  }
}

void check_state(const FlowEvaluator& ev, const Vec& x) {
  if (x.size() != ev.system().state_dim) {
    throw DimensionError("state has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(ev.system().state_dim));
  }
  if (ev.system().domain && !ev.system().domain->contains(x)) {
    throw DomainError("initial state outside the state domain");
  }
}

void check_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("time must be non-negative and finite");
}

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
}

Buffer to_buffer(const Vec& x) { return Buffer(x.data(), x.data() + x.size()); }

}  // namespace

Vec OdeSystem::eval(const Vec& x, const Vec& u) const { return rhs(x, u); }

Mat OdeSystem::jacobian_x(const Vec& x, const Vec& u) const {
  if (jacobian) return jacobian(x, u);
  const double h = std::max(1e-6, 1e-8 * x.norm());
  Mat jac(state_dim, state_dim);
  Vec xp = x;
  Vec xm = x;
  for (int i = 0; i < state_dim; ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    jac.col(i) = (rhs(xp, u) - rhs(xm, u)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return jac;
}

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw DomainError("integrator tolerances must be positive");
  if (!(max_step > 0.0)) throw DomainError("max_step must be positive");
  if (method == IntegratorMethod::RK4Fixed && !(fixed_step > 0.0)) {
    throw DomainError("fixed_step must be positive");
  }
}

FlowEvaluator::FlowEvaluator(OdeSystem system, ControlSpec spec, IntegratorConfig config)
    : system_(std::move(system)), spec_(spec), config_(config) {
  config_.validate();
  if (system_.input_dim != spec_.input_dim()) {
    throw DimensionError("system input dimension " + std::to_string(system_.input_dim) +
                         " does not match control input dimension " + std::to_string(spec_.input_dim()));
  }
  if (!system_.rhs) throw DomainError("system has no right-hand side");
}

Vec integrate_flow(const FlowEvaluator& ev, const Vec& x, const ControlSequence& seq, double t) {
  check_state(ev, x);
  check_time(t);
  if (t == 0.0) return x;
  Buffer y = to_buffer(x);
  advance(ev, seq, y, 0.0, t, false);
  return as_vec(y, ev.system().state_dim);
}

std::vector<Vec> integrate_trajectory(const FlowEvaluator& ev, const Vec& x, const ControlSequence& seq,
                                      std::span<const double> times) {
  check_state(ev, x);
  std::vector<Vec> out;
  out.reserve(times.size());
  Buffer y = to_buffer(x);
  double now = 0.0;
  for (const double t : times) {
    check_time(t);
    if (t < now) throw DomainError("trajectory times must be ascending");
    advance(ev, seq, y, now, t, false);
    now = std::max(now, t);
    out.emplace_back(as_vec(y, ev.system().state_dim));
  }
  return out;
}

Vec phi_eval(const FlowEvaluator& ev, double tau, const Vec& x, const Vec& omega) {
  check_tau(tau);
  check_state(ev, x);
  if (tau == 0.0) return x;
  Buffer y = to_buffer(x);
  const Deriv rhs = period_rhs(ev, omega, false);
  integrate_span(rhs, y, 0.0, tau * ev.spec().delta(), ev.config(), state_guard(ev.system(), 0.0));
  return as_vec(y, ev.system().state_dim);
}

Vec psi_eval(const FlowEvaluator& ev, double tau, const Vec& x, const Vec& omega) {
  check_tau(tau);
  check_state(ev, x);
  if (tau == 0.0) {
    return x + ev.spec().delta() * ev.system().eval(x, ev.spec().alpha_local(omega, 0.0));
  }
  return x + (phi_eval(ev, tau, x, omega) - x) / tau;
}

Mat flow_jacobian(const FlowEvaluator& ev, double t, const Vec& x, const ControlSequence& seq) {
  check_state(ev, x);
  check_time(t);
  const int n = ev.system().state_dim;
  Buffer y(static_cast<std::size_t>(n + n * n), 0.0);
  Eigen::Map<Vec>(y.data(), n) = x;
  Eigen::Map<Mat>(y.data() + n, n, n).setIdentity();
  advance(ev, seq, y, 0.0, t, true);
  return Eigen::Map<const Mat>(y.data() + n, n, n);
}

double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

GronwallReport gronwall_bound_check(const MatrixPath& a, const MatrixPath& b, const Vec& x0, const Vec& z0) {
  if (a.pieces.empty() || a.pieces.size() != b.pieces.size()) {
    throw DimensionError("matrix paths must have the same non-zero number of pieces");
  }
  if (a.t_begin != b.t_begin || a.t_end != b.t_end || !(a.t_end > a.t_begin)) {
    throw DimensionError("matrix paths must share a non-empty interval");
  }
  const int n = static_cast<int>(x0.size());
  if (z0.size() != n) throw DimensionError("initial states differ in dimension");
  for (std::size_t i = 0; i < a.pieces.size(); ++i) {
    for (const Mat* m : {&a.pieces[i], &b.pieces[i]}) {
      if (m->rows() != n || m->cols() != n) throw DimensionError("matrix piece does not match state dimension");
    }
  }

  IntegratorConfig cfg;
  cfg.rel_tol = 1e-12;
  cfg.abs_tol = 1e-12;
  const Guard no_guard = [](const Buffer&, double) {};
  const double h = a.piece_length();

  // y = (x, z, int |D| |x| ds)
  Buffer y(static_cast<std::size_t>(2 * n + 1), 0.0);
  Eigen::Map<Vec>(y.data(), n) = x0;
  Eigen::Map<Vec>(y.data() + n, n) = z0;
  double log_growth = 0.0;
  for (std::size_t i = 0; i < a.pieces.size(); ++i) {
    const Mat& ai = a.pieces[i];
    const Mat& bi = b.pieces[i];
    const double d_norm = operator_norm(ai - bi);
    log_growth += operator_norm(bi) * h;
    const Deriv rhs = [&](const Buffer& s, Buffer& ds, double) {
      ds.resize(s.size());
      const auto x = as_vec(s, n);
      Eigen::Map<Vec>(ds.data(), n) = ai * x;
      Eigen::Map<Vec>(ds.data() + n, n) = bi * as_vec(s, n, n);
      ds[2 * n] = d_norm * x.norm();
    };
    integrate_span(rhs, y, 0.0, h, cfg, no_guard);
  }
  GronwallReport report;
  report.lhs = (as_vec(y, n) - as_vec(y, n, n)).norm();
  report.rhs = ((x0 - z0).norm() + y[2 * n]) * std::exp(log_growth);
  report.holds = report.lhs <= report.rhs * (1.0 + 1e-9);
  return report;
}

OdeSystem fhn_system() {
  constexpr double eta = 1.0 / 50.0;
  constexpr double gamma = 40.0;
  constexpr double a = 0.3;
  constexpr double b = 1.4;
  OdeSystem sys;
  sys.name = "fhn";
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.rhs = [](const Vec& x, const Vec& u) {
    Vec dx(2);
    dx[0] = (x[0] - x[0] * x[0] * x[0] - x[1] + u[0]) / eta;
    dx[1] = (x[0] + a - b * x[1]) / (eta * gamma);
    return dx;
  };
  sys.jacobian = [](const Vec& x, const Vec&) {
    Mat j(2, 2);
    j << (1.0 - 3.0 * x[0] * x[0]) / eta, -1.0 / eta,  //
        1.0 / (eta * gamma), -b / (eta * gamma);
    return j;
  };
  return sys;
}

OdeSystem linear_scalar_system() {
  OdeSystem sys;
  sys.name = "linear-scalar";
  sys.state_dim = 1;
  sys.input_dim = 1;
  sys.rhs = [](const Vec& x, const Vec& u) { return Vec(-x + u); };
  sys.jacobian = [](const Vec&, const Vec&) { return Mat::Constant(1, 1, -1.0); };
  return sys;
}

OdeSystem van_der_pol_system() {
  constexpr double mu = 1.0;
  OdeSystem sys;
  sys.name = "vdp";
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.rhs = [](const Vec& x, const Vec& u) {
    Vec dx(2);
    dx[0] = x[1];
    dx[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0] + u[0];
    return dx;
  };
  sys.jacobian = [](const Vec& x, const Vec&) {
    Mat j(2, 2);
    j << 0.0, 1.0,  //
        -2.0 * mu * x[0] * x[1] - 1.0, mu * (1.0 - x[0] * x[0]);
    return j;
  };
  return sys;
}

OdeSystem system_by_name(const std::string& name) {
  if (name == "fhn") return fhn_system();
  if (name == "linear-scalar") return linear_scalar_system();
  if (name == "vdp") return van_der_pol_system();
  throw DomainError("unknown system '" + name + "' (expected fhn, linear-scalar or vdp)");
}

}  // namespace flowrnn
