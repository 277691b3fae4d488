#include "flowrnn/flow_model.hpp"

#include <string>

#include "flowrnn/errors.hpp"

namespace flowrnn {

namespace {

void require_horizon(const ControlSequence& seq, const TimeIndex& idx) {
  const std::size_t needed = idx.k + (idx.tau > 0.0 ? 1 : 0);
  if (seq.size() < needed) {
    throw OutOfRangeError("control horizon exhausted: need " + std::to_string(needed) + " periods, have " +
                          std::to_string(seq.size()));
  }
}

// z_0..z_count with full periods (tau = 1).
std::vector<Vec> full_period_prefix(const FlowModel& model, const Vec& x, const ControlSequence& seq,
                                    std::size_t count) {
  std::vector<Vec> states;
  states.reserve(count + 1);
  states.push_back(model.beta.eval(x));
  for (std::size_t k = 0; k < count; ++k) states.push_back(model.cell.step(states.back(), cell_input(1.0, seq[k])));
  return states;
}

Vec readout(const FlowModel& model, const Vec& zk, const TimeIndex& idx, const ControlSequence& seq) {
  if (idx.tau == 0.0) return model.gamma.eval(zk);
  const Vec tail = model.cell.step(zk, cell_input(idx.tau, seq[idx.k]));
  return model.gamma.eval((1.0 - idx.tau) * zk + idx.tau * tail);
}

void check_inputs(const FlowModel& model, const Vec& x, const ControlSequence& seq) {
  if (x.size() != model.state_dim()) throw DimensionError("initial state dimension does not match the model");
  if (!(seq.spec() == model.spec)) throw DimensionError("control sequence spec does not match the model");
}

}  // namespace

void FlowModel::validate() const {
  beta.validate();
  cell.validate();
  gamma.validate();
  if (beta.output_dim() != cell.state_dim()) throw DimensionError("encoder output must match hidden dimension");
  if (gamma.input_dim() != cell.state_dim()) throw DimensionError("decoder input must match hidden dimension");
  if (gamma.output_dim() != beta.input_dim()) throw DimensionError("decoder output must match state dimension");
  if (cell.input_dim() != 1 + spec.param_dim()) {
    throw DimensionError("cell input must be 1 + d_omega = " + std::to_string(1 + spec.param_dim()));
  }
}

FlowModel FlowModel::random(const ControlSpec& spec, int state_dim, int hidden_dim, const std::vector<int>& mlp_hidden,
                            Activation act, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> enc{state_dim};
  enc.insert(enc.end(), mlp_hidden.begin(), mlp_hidden.end());
  enc.push_back(hidden_dim);
  std::vector<int> dec{hidden_dim};
  dec.insert(dec.end(), mlp_hidden.rbegin(), mlp_hidden.rend());
  dec.push_back(state_dim);
  FlowModel model{MlpNet::random(enc, act, rng), RnnCell::random(hidden_dim, 1 + spec.param_dim(), act, rng),
                  MlpNet::random(dec, act, rng), spec};
  model.validate();
  return model;
}

FlowModel FlowModel::with_affine_pair(const ControlSpec& spec, RnnCell cell, const AffinePair& pair) {
  FlowModel model{MlpNet::affine(pair.beta.M, pair.beta.offset), std::move(cell),
                  MlpNet::affine(pair.gamma.M, pair.gamma.offset), spec};
  model.validate();
  return model;
}

Vec cell_input(double tau, const Vec& omega) {
  Vec in(omega.size() + 1);
  in[0] = tau;
  in.tail(omega.size()) = omega;
  return in;
}

std::vector<Vec> hidden_rollout(const FlowModel& model, const Vec& x, std::span<const double> taus,
                                std::span<const Vec> omegas) {
  if (taus.size() != omegas.size()) throw DimensionError("tau and omega sequences differ in length");
  std::vector<Vec> inputs;
  inputs.reserve(taus.size());
  for (std::size_t k = 0; k < taus.size(); ++k) inputs.push_back(cell_input(taus[k], omegas[k]));
  const auto step = [&](const Vec& z, const Vec& in) { return model.cell.step(z, in); };
  return recursion_rollout(step, inputs.size(), model.beta.eval(x), std::span<const Vec>(inputs));
}

Vec flow_predict(const FlowModel& model, double t, const Vec& x, const ControlSequence& seq) {
  check_inputs(model, x, seq);
  const TimeIndex idx = time_decompose(t, model.spec.delta());
  require_horizon(seq, idx);
  const auto prefix = full_period_prefix(model, x, seq, idx.k);
  return readout(model, prefix[idx.k], idx, seq);
}

std::vector<Vec> flow_predict_batch(const FlowModel& model, std::span<const double> times, const Vec& x,
                                    const ControlSequence& seq) {
  check_inputs(model, x, seq);
  std::vector<TimeIndex> idx;
  idx.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0 && times[i] < times[i - 1]) throw DomainError("query times must be sorted ascending");
    idx.push_back(time_decompose(times[i], model.spec.delta()));
    require_horizon(seq, idx.back());
  }
  if (times.empty()) return {};
  const auto prefix = full_period_prefix(model, x, seq, idx.back().k);
  std::vector<Vec> out;
  out.reserve(times.size());
  for (const auto& i : idx) out.push_back(readout(model, prefix[i.k], i, seq));
  return out;
}

Vec true_flow_recursive(const FlowEvaluator& ev, double t, const Vec& x, const ControlSequence& seq) {
  const TimeIndex idx = time_decompose(t, ev.spec().delta());
  require_horizon(seq, idx);
  Vec state = x;
  for (std::size_t k = 0; k < idx.k; ++k) state = phi_eval(ev, 1.0, state, seq[k]);
  if (idx.tau > 0.0) state = phi_eval(ev, idx.tau, state, seq[idx.k]);
  return state;
}

namespace {

template <class Model, class Fn>
void visit_model(Model& model, Fn&& fn) {
  visit_tensors(model.beta, fn);
  visit_tensors(model.cell, fn);
  visit_tensors(model.gamma, fn);
}

}  // namespace

Eigen::Index parameter_count(const FlowModel& model) {
  Eigen::Index n = 0;
  visit_model(model, [&](const double*, Eigen::Index size) { n += size; });
  return n;
}

Vec flatten_parameters(const FlowModel& model) {
  Vec out(parameter_count(model));
  Eigen::Index at = 0;
  visit_model(model, [&](const double* data, Eigen::Index size) {
    out.segment(at, size) = Eigen::Map<const Vec>(data, size);
    at += size;
  });
  return out;
}

void assign_parameters(FlowModel& model, const Vec& params) {
  if (params.size() != parameter_count(model)) throw DimensionError("parameter vector has the wrong length");
  Eigen::Index at = 0;
  visit_model(model, [&](double* data, Eigen::Index size) {
    Eigen::Map<Vec>(data, size) = params.segment(at, size);
    at += size;
  });
}

}  // namespace flowrnn
