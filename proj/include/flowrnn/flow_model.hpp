#pragma once

#include <span>
#include <vector>

#include "flowrnn/control.hpp"
#include "flowrnn/nets.hpp"
#include "flowrnn/ode.hpp"

namespace flowrnn {

/// phi_hat(t, x, u) = gamma((1 - tau_t) z_{k_t} + tau_t z_{k_t + 1}) with
/// z_0 = beta(x) and z_{k+1} = h(z_k, (tau_k, w_k)).
///
/// The cell input is the concatenation (tau, w), tau first. Encoder and
/// decoder are MLPs; a single-layer MLP is an affine map.
struct FlowModel {
  MlpNet beta;
  RnnCell cell;
  MlpNet gamma;
  ControlSpec spec;

  int state_dim() const { return beta.input_dim(); }
  int hidden_dim() const { return cell.state_dim(); }

  void validate() const;

  /// Randomly initialised model. `mlp_hidden` lists the hidden widths of the
  /// encoder and decoder; empty gives affine maps.
  static FlowModel random(const ControlSpec& spec, int state_dim, int hidden_dim, const std::vector<int>& mlp_hidden,
                          Activation act, std::uint64_t seed);

  /// Model with an affine encoder/decoder pair.
  static FlowModel with_affine_pair(const ControlSpec& spec, RnnCell cell, const AffinePair& pair);
};

/// (tau, w) as a single cell input vector.
Vec cell_input(double tau, const Vec& omega);

/// z_0..z_n for n = taus.size() inputs (tau_k, w_k).
std::vector<Vec> hidden_rollout(const FlowModel& model, const Vec& x, std::span<const double> taus,
                                std::span<const Vec> omegas);

Vec flow_predict(const FlowModel& model, double t, const Vec& x, const ControlSequence& seq);

/// flow_predict at ascending times sharing one hidden prefix; entries are
/// bitwise equal to individual flow_predict calls.
std::vector<Vec> flow_predict_batch(const FlowModel& model, std::span<const double> times, const Vec& x,
                                    const ControlSequence& seq);

/// phi(t, x, u) through iterated one-period maps Phi(1, ., w_k) followed by
/// Phi(tau_t, ., w_{k_t}).
Vec true_flow_recursive(const FlowEvaluator& ev, double t, const Vec& x, const ControlSequence& seq);

/// Parameters in the order beta, cell, gamma.
Vec flatten_parameters(const FlowModel& model);
void assign_parameters(FlowModel& model, const Vec& params);
Eigen::Index parameter_count(const FlowModel& model);

}  // namespace flowrnn
