#include "flowrnn/control.hpp"

#include <cmath>
#include <string>

#include "flowrnn/errors.hpp"

namespace flowrnn {

namespace {

constexpr double kGridSnap = 1e-12;

// Returns m when s/delta is within kGridSnap of the integer m, -1 otherwise.
long long grid_multiple(double s, double delta) {
  const double ratio = s / delta;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) < kGridSnap) return static_cast<long long>(nearest);
  return -1;
}

}  // namespace

ControlSpec::ControlSpec(ControlKind kind, double delta, int input_dim)
    : kind_(kind), delta_(delta), input_dim_(input_dim) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw DomainError("control period must be positive, got " + std::to_string(delta));
  }
  if (input_dim <= 0) throw DomainError("input dimension must be positive");
}

int ControlSpec::param_dim() const noexcept {
  return kind_ == ControlKind::PiecewiseConstant ? input_dim_ : 2 * input_dim_;
}

Vec ControlSpec::alpha(const Vec& omega, double s) const {
  return alpha_local(omega, s - std::floor(s));
}

Vec ControlSpec::alpha_local(const Vec& omega, double tau) const {
  if (omega.size() != param_dim()) {
    throw DimensionError("control parameter has dimension " + std::to_string(omega.size()) +
                         ", expected " + std::to_string(param_dim()));
  }
  switch (kind_) {
    case ControlKind::PiecewiseConstant:
      return omega;
    case ControlKind::PiecewiseLinear: {
      const auto start = omega.head(input_dim_);
      const auto end = omega.tail(input_dim_);
      return start + tau * (end - start);
    }
  }
  return omega;
}

ControlSequence::ControlSequence(ControlSpec spec, std::vector<Vec> omegas)
    : spec_(spec), omegas_(std::move(omegas)) {
  if (omegas_.empty()) throw DomainError("control sequence must be non-empty");
  for (std::size_t k = 0; k < omegas_.size(); ++k) {
    if (omegas_[k].size() != spec_.param_dim()) {
      throw DimensionError("omega[" + std::to_string(k) + "] has dimension " +
                           std::to_string(omegas_[k].size()) + ", expected " +
                           std::to_string(spec_.param_dim()));
    }
  }
}

TimeIndex time_decompose(double t, double delta) {
  if (!(delta > 0.0)) throw DomainError("period must be positive");
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("time must be non-negative and finite");
  if (const long long m = grid_multiple(t, delta); m >= 0) {
    return {static_cast<std::size_t>(m), 0.0};
  }
  const double ratio = t / delta;
  const double k = std::floor(ratio);
  double tau = ratio - k;
  if (tau >= 1.0) tau = std::nextafter(1.0, 0.0);
  return {static_cast<std::size_t>(k), tau};
}

Vec eval_control(const ControlSequence& seq, double t) {
  const TimeIndex idx = time_decompose(t, seq.spec().delta());
  if (idx.k >= seq.size()) {
    throw OutOfRangeError("time " + std::to_string(t) + " beyond control horizon " +
                          std::to_string(seq.horizon()));
  }
  return seq.spec().alpha_local(seq[idx.k], idx.tau);
}

std::vector<double> tau_sequence(double t, double delta, std::size_t horizon) {
  const TimeIndex idx = time_decompose(t, delta);
  if (horizon < idx.k + 1) {
    throw DomainError("tau sequence horizon " + std::to_string(horizon) + " shorter than k_t + 1 = " +
                      std::to_string(idx.k + 1));
  }
  std::vector<double> taus(horizon, 0.0);
  for (std::size_t k = 0; k < idx.k; ++k) taus[k] = 1.0;
  taus[idx.k] = idx.tau;
  return taus;
}

ControlSequence shift_control(const ControlSequence& seq, double s) {
  if (!(s >= 0.0)) throw UnsupportedShiftError("shift must be non-negative");
  const long long m = grid_multiple(s, seq.spec().delta());
  if (m < 0) {
    throw UnsupportedShiftError("shift " + std::to_string(s) + " is not a multiple of the period");
  }
  if (static_cast<std::size_t>(m) >= seq.size()) {
    throw OutOfRangeError("shift by " + std::to_string(m) + " periods exhausts the control horizon");
  }
  std::vector<Vec> tail(seq.omegas().begin() + m, seq.omegas().end());
  return ControlSequence(seq.spec(), std::move(tail));
}

ControlSequence constant_sequence(const ControlSpec& spec, const Vec& omega, std::size_t n) {
  return ControlSequence(spec, std::vector<Vec>(n, omega));
}

}  // namespace flowrnn
