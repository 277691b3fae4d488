#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowrnn/box.hpp"
#include "flowrnn/control.hpp"

namespace flowrnn {

using Rhs = std::function<Vec(const Vec& x, const Vec& u)>;
using RhsJacobian = std::function<Mat(const Vec& x, const Vec& u)>;

/// Controlled ODE  xdot = f(x, u).
struct OdeSystem {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  Rhs rhs;
  /// D_x f. When empty, central differences are used.
  RhsJacobian jacobian;
  /// Open state domain X; unset means all of R^{d_x}.
  std::optional<BoxSet> domain;

  Vec eval(const Vec& x, const Vec& u) const;
  Mat jacobian_x(const Vec& x, const Vec& u) const;
};

enum class IntegratorMethod { RK45Adaptive, RK4Fixed };

struct IntegratorConfig {
  IntegratorMethod method = IntegratorMethod::RK45Adaptive;
  double rel_tol = 1e-8;
  double abs_tol = 1e-8;
  double max_step = std::numeric_limits<double>::infinity();
  double fixed_step = 1e-3;

  void validate() const;
};

/// Realises the flow phi(t, x, u) of an OdeSystem driven by parameterised controls.
class FlowEvaluator {
 public:
  FlowEvaluator(OdeSystem system, ControlSpec spec, IntegratorConfig config = {});

  const OdeSystem& system() const noexcept { return system_; }
  const ControlSpec& spec() const noexcept { return spec_; }
  const IntegratorConfig& config() const noexcept { return config_; }

 private:
  OdeSystem system_;
  ControlSpec spec_;
  IntegratorConfig config_;
};

/// State magnitude beyond which integration is reported as blow-up.
inline constexpr double kBlowUpNorm = 1e8;

/// phi(t, x, u). Integration restarts at every control grid point.
Vec integrate_flow(const FlowEvaluator& ev, const Vec& x, const ControlSequence& seq, double t);

/// phi at each of the ascending `times`, computed in one forward sweep.
std::vector<Vec> integrate_trajectory(const FlowEvaluator& ev, const Vec& x, const ControlSequence& seq,
                                      std::span<const double> times);

/// Phi(tau, x, w) = phi(tau * delta, x, u_w).
Vec phi_eval(const FlowEvaluator& ev, double tau, const Vec& x, const Vec& omega);

/// Psi(tau, x, w) = x + (Phi(tau, x, w) - x) / tau, with the limit
/// x + delta f(x, alpha(w, 0)) at tau = 0.
Vec psi_eval(const FlowEvaluator& ev, double tau, const Vec& x, const Vec& omega);

/// D_x phi(t, x, u): state transition matrix of the variational equation,
/// integrated jointly with the state.
Mat flow_jacobian(const FlowEvaluator& ev, double t, const Vec& x, const ControlSequence& seq);

/// Piecewise-constant matrix-valued function on [t_begin, t_end], with the
/// pieces covering equal-length subintervals.
struct MatrixPath {
  double t_begin = 0.0;
  double t_end = 1.0;
  std::vector<Mat> pieces;

  double piece_length() const { return (t_end - t_begin) / static_cast<double>(pieces.size()); }
};

struct GronwallReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// Evaluates both sides of the linear sensitivity bound
///   |d(t)| <= (|d(t1)| + int |A - B| |x| ds) exp(int |B| ds)
/// at the right endpoint for xdot = A x, zdot = B z, d = x - z.
GronwallReport gronwall_bound_check(const MatrixPath& a, const MatrixPath& b, const Vec& x0, const Vec& z0);

/// Induced 2-norm (largest singular value).
double operator_norm(const Mat& m);

/// FitzHugh-Nagumo with eta = 1/50, gamma = 40, a = 0.3, b = 1.4.
OdeSystem fhn_system();
/// xdot = -x + u.
OdeSystem linear_scalar_system();
/// Forced Van der Pol oscillator, mu = 1.
OdeSystem van_der_pol_system();
/// One of "fhn", "linear-scalar", "vdp".
OdeSystem system_by_name(const std::string& name);

}  // namespace flowrnn
