#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace flowrnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Waveform used on each control period.
enum class ControlKind {
  PiecewiseConstant,  ///< alpha(w, s) = w
  PiecewiseLinear,    ///< alpha(w, s) = w_start + frac(s) (w_end - w_start)
};

/// Control parameterisation: the map alpha and the period delta.
///
/// Parameters for PiecewiseLinear are laid out as (start_1..start_du,
/// end_1..end_du).
class ControlSpec {
 public:
  ControlSpec(ControlKind kind, double delta, int input_dim);

  ControlKind kind() const noexcept { return kind_; }
  double delta() const noexcept { return delta_; }
  int input_dim() const noexcept { return input_dim_; }
  int param_dim() const noexcept;

  /// 1-periodic alpha(w, s).
  Vec alpha(const Vec& omega, double s) const;

  /// alpha restricted to one period, tau in [0, 1]. At tau = 1 this is the
  /// left limit of the period, which integration over a closed segment needs.
  Vec alpha_local(const Vec& omega, double tau) const;

  bool operator==(const ControlSpec&) const = default;

 private:
  ControlKind kind_;
  double delta_;
  int input_dim_;
};

/// Finite prefix (w_0, ..., w_{n-1}) of a parameter sequence.
class ControlSequence {
 public:
  ControlSequence(ControlSpec spec, std::vector<Vec> omegas);

  const ControlSpec& spec() const noexcept { return spec_; }
  const std::vector<Vec>& omegas() const noexcept { return omegas_; }
  std::size_t size() const noexcept { return omegas_.size(); }
  const Vec& operator[](std::size_t k) const { return omegas_[k]; }

  /// End of the covered time interval, n * delta.
  double horizon() const noexcept { return spec_.delta() * static_cast<double>(omegas_.size()); }

 private:
  ControlSpec spec_;
  std::vector<Vec> omegas_;
};

struct TimeIndex {
  std::size_t k = 0;  ///< floor(t / delta)
  double tau = 0.0;   ///< fractional position in period k, in [0, 1)
};

/// Splits t into period index and in-period fraction. Ratios within 1e-12 of
/// an integer snap onto the grid (tau = 0).
TimeIndex time_decompose(double t, double delta);

/// u(t) = alpha(w_{k_t}, t / delta).
Vec eval_control(const ControlSequence& seq, double t);

/// Interpolation weights: 1 before k_t, tau_t at k_t, 0 after. Length `horizon`.
std::vector<double> tau_sequence(double t, double delta, std::size_t horizon);

/// u^s for s a non-negative whole multiple of delta.
ControlSequence shift_control(const ControlSequence& seq, double s);

/// Constant parameter sequence of length n (the control u_w).
ControlSequence constant_sequence(const ControlSpec& spec, const Vec& omega, std::size_t n);

}  // namespace flowrnn
