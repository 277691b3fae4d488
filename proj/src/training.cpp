#include "flowrnn/training.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "flowrnn/errors.hpp"
#include "flowrnn/parallel.hpp"

namespace flowrnn {

namespace {

Rng stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

TrajectoryRecord generate_record(const FlowEvaluator& ev, const GenConfig& cfg, std::size_t index) {
  Rng rng = stream(cfg.seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::lognormal_distribution<double> amplitude(cfg.lognormal_mu, cfg.lognormal_sigma);
  std::uniform_real_distribution<double> when(0.0, cfg.horizon);

  const ControlSpec& spec = ev.spec();
  const int dx = ev.system().state_dim;
  const int du = spec.input_dim();

  Vec x0(dx);
  for (int i = 0; i < dx; ++i) x0[i] = normal(rng);

  const std::size_t periods = time_decompose(cfg.horizon, spec.delta()).k + 1;
  std::vector<Vec> omegas;
  omegas.reserve(periods);
  Vec level(du);
  for (std::size_t k = 0; k < periods; ++k) {
    if (k % static_cast<std::size_t>(cfg.block_length) == 0) {
      for (int i = 0; i < du; ++i) level[i] = amplitude(rng);
    }
    if (spec.kind() == ControlKind::PiecewiseConstant) {
      omegas.push_back(level);
    } else {
      Vec w(2 * du);
      w << level, level;
      omegas.push_back(w);
    }
  }
  ControlSequence seq(spec, std::move(omegas));

  const auto count = static_cast<std::size_t>(cfg.samples_per_traj);
  std::vector<double> times(count);
  if (cfg.uniform_grid) {
    for (std::size_t k = 0; k < count; ++k) {
      times[k] = count > 1 ? cfg.horizon * static_cast<double>(k) / static_cast<double>(count - 1) : 0.0;
    }
  } else {
    for (auto& t : times) t = when(rng);
    std::sort(times.begin(), times.end());
  }

  std::vector<Vec> clean;
  try {
    clean = integrate_trajectory(ev, x0, seq, times);
  } catch (const BlowUpError& e) {
    throw BlowUpError("trajectory " + std::to_string(index) + ": " + e.what(), e.time());
  }

  TrajectoryRecord rec{x0, std::move(seq), {}};
  rec.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vec y = clean[k];
    for (int i = 0; i < dx; ++i) y[i] += cfg.noise_std * normal(rng);
    rec.samples.push_back({times[k], std::move(y)});
  }
  return rec;
}

struct RecordGradient {
  double loss = 0.0;
  Vec params;
  std::vector<Vec> omegas;
};

RecordGradient record_gradient(const FlowModel& model, const BatchRecord& br, double weight) {
  const TrajectoryRecord& rec = *br.record;
  const ControlSequence& seq = rec.seq;
  const double delta = model.spec.delta();
  const int dw = model.spec.param_dim();

  std::vector<TimeIndex> idx;
  idx.reserve(br.samples.size());
  std::size_t kmax = 0;
  for (const std::size_t s : br.samples) {
    const TimeIndex i = time_decompose(rec.samples.at(s).t, delta);
    if (seq.size() < i.k + (i.tau > 0.0 ? 1 : 0)) throw OutOfRangeError("sample time beyond control horizon");
    kmax = std::max(kmax, i.k);
    idx.push_back(i);
  }

  MlpCache beta_cache;
  std::vector<Vec> z(kmax + 1);
  z[0] = forward(model.beta, rec.x0, beta_cache);
  std::vector<RnnCache> prefix(kmax);
  for (std::size_t k = 0; k < kmax; ++k) z[k + 1] = forward(model.cell, z[k], cell_input(1.0, seq[k]), prefix[k]);

  MlpGrad g_beta(model.beta);
  RnnGrad g_cell(model.cell);
  MlpGrad g_gamma(model.gamma);
  std::vector<Vec> gz(kmax + 1, Vec::Zero(model.hidden_dim()));
  RecordGradient out;
  out.omegas.assign(seq.size(), Vec::Zero(dw));

  RnnCache tail_cache;
  MlpCache gamma_cache;
  for (std::size_t j = 0; j < br.samples.size(); ++j) {
    const TimeIndex& i = idx[j];
    const Vec& zk = z[i.k];
    Vec mix;
    if (i.tau > 0.0) {
      const Vec tail = forward(model.cell, zk, cell_input(i.tau, seq[i.k]), tail_cache);
      mix = (1.0 - i.tau) * zk + i.tau * tail;
    } else {
      mix = zk;
    }
    const Vec residual = forward(model.gamma, mix, gamma_cache) - rec.samples[br.samples[j]].y;
    out.loss += weight * residual.squaredNorm();
    const Vec d_mix = backward(model.gamma, gamma_cache, 2.0 * weight * residual, g_gamma);
    if (i.tau > 0.0) {
      gz[i.k] += (1.0 - i.tau) * d_mix;
      const RnnInputGrad in = backward(model.cell, tail_cache, i.tau * d_mix, g_cell);
      gz[i.k] += in.state;
      out.omegas[i.k] += in.input.tail(dw);
    } else {
      gz[i.k] += d_mix;
    }
  }
  for (std::size_t k = kmax; k-- > 0;) {
    const RnnInputGrad in = backward(model.cell, prefix[k], gz[k + 1], g_cell);
    gz[k] += in.state;
    out.omegas[k] += in.input.tail(dw);
  }
  backward(model.beta, beta_cache, gz[0], g_beta);

  out.params.resize(parameter_count(model));
  Eigen::Index at = 0;
  const TensorVisitor copy = [&](double* data, Eigen::Index size) {
    out.params.segment(at, size) = Eigen::Map<const Vec>(data, size);
    at += size;
  };
  visit_tensors(g_beta, copy);
  visit_tensors(g_cell, copy);
  visit_tensors(g_gamma, copy);
  return out;
}

void check_batch(const FlowModel& model, const Batch& batch) {
  if (batch.empty()) throw DomainError("batch must be non-empty");
  for (const auto& br : batch) {
    if (br.record == nullptr || br.samples.empty()) throw DomainError("batch records must hold samples");
    if (br.record->x0.size() != model.state_dim()) throw DimensionError("record state dimension does not match model");
  }
}

}  // namespace

void Dataset::validate() const {
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& rec = records[n];
    for (const auto& s : rec.samples) {
      if (s.y.size() != rec.x0.size()) {
        throw DimensionError("record " + std::to_string(n) + ": sample dimension differs from state dimension");
      }
      const TimeIndex i = time_decompose(s.t, rec.seq.spec().delta());
      if (rec.seq.size() < i.k + (i.tau > 0.0 ? 1 : 0)) {
        throw OutOfRangeError("record " + std::to_string(n) + ": sample time beyond control horizon");
      }
    }
  }
}

std::size_t Dataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.samples.size();
  return n;
}

void GenConfig::validate() const {
  if (n_traj <= 0 || samples_per_traj <= 0 || block_length <= 0) {
    throw DomainError("trajectory count, samples per trajectory and block length must be positive");
  }
  if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
  if (!(noise_std >= 0.0)) throw DomainError("noise standard deviation must be non-negative");
  if (!(lognormal_sigma > 0.0)) throw DomainError("log-normal sigma must be positive");
}

Dataset generate_dataset(const FlowEvaluator& ev, const GenConfig& cfg) {
  cfg.validate();
  Dataset data;
  std::vector<std::optional<TrajectoryRecord>> slots(static_cast<std::size_t>(cfg.n_traj));
  parallel_for(slots.size(), [&](std::size_t i) { slots[i] = generate_record(ev, cfg, i); });
  data.records.reserve(slots.size());
  for (auto& s : slots) data.records.push_back(std::move(*s));
  return data;
}

Batch full_batch(const Dataset& data) {
  Batch batch;
  batch.reserve(data.records.size());
  for (const auto& rec : data.records) {
    BatchRecord br{&rec, std::vector<std::size_t>(rec.samples.size())};
    std::iota(br.samples.begin(), br.samples.end(), std::size_t{0});
    batch.push_back(std::move(br));
  }
  return batch;
}

double mse_loss(const FlowModel& model, const Batch& batch) {
  check_batch(model, batch);
  double total = 0.0;
  for (const auto& br : batch) {
    std::vector<std::size_t> order = br.samples;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return br.record->samples[a].t < br.record->samples[b].t; });
    std::vector<double> times;
    times.reserve(order.size());
    for (const std::size_t s : order) times.push_back(br.record->samples[s].t);
    const auto pred = flow_predict_batch(model, times, br.record->x0, br.record->seq);
    double rec_sum = 0.0;
    for (std::size_t j = 0; j < order.size(); ++j) rec_sum += (br.record->samples[order[j]].y - pred[j]).squaredNorm();
    total += rec_sum / static_cast<double>(order.size());
  }
  return total / static_cast<double>(batch.size());
}

LossGradient loss_gradient(const FlowModel& model, const Batch& batch) {
  check_batch(model, batch);
  std::vector<RecordGradient> parts(batch.size());
  const double n = static_cast<double>(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    parts[i] = record_gradient(model, batch[i], 1.0 / (n * static_cast<double>(batch[i].samples.size())));
  });
  LossGradient out;
  out.params = Vec::Zero(parameter_count(model));
  out.omegas.reserve(parts.size());
  for (auto& p : parts) {
    out.loss += p.loss;
    out.params += p.params;
    out.omegas.push_back(std::move(p.omegas));
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw DomainError("epochs must be non-negative");
  if (batch_size <= 0 || hidden_dim <= 0) throw DomainError("batch size and hidden dimension must be positive");
  if (!(learning_rate > 0.0) || !(eps_adam > 0.0)) throw DomainError("learning rate and eps must be positive");
  if (!(clip_norm >= 0.0)) throw DomainError("clip norm must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw DomainError("Adam betas must lie in (0, 1)");
  }
}

void adam_step(Vec& params, const Vec& grads, AdamMoments& moments, long step_index, const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw DimensionError("gradient and parameter sizes differ");
  if (step_index < 1) throw DomainError("Adam step index starts at 1");
  if (moments.m.size() == 0) moments.m = Vec::Zero(params.size());
  if (moments.v.size() == 0) moments.v = Vec::Zero(params.size());
  if (moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw DimensionError("Adam moments do not match parameter size");
  }
  moments.m = cfg.beta1 * moments.m + (1.0 - cfg.beta1) * grads;
  moments.v = cfg.beta2 * moments.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
  params.array() -= cfg.learning_rate * (moments.m.array() / c1) / ((moments.v.array() / c2).sqrt() + cfg.eps_adam);
}

TrainResult train(FlowModel model, const Dataset& data, const TrainConfig& cfg, TrainState state,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (data.records.empty()) throw DomainError("training dataset is empty");

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(data.sample_count());
  for (std::size_t r = 0; r < data.records.size(); ++r) {
    for (std::size_t s = 0; s < data.records[r].samples.size(); ++s) pairs.emplace_back(r, s);
  }
  if (pairs.empty()) throw DomainError("training dataset has no samples");

  Vec params = flatten_parameters(model);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = state.epoch;
    Rng rng = stream(cfg.seed, static_cast<std::uint64_t>(epoch));
    auto order = pairs;
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < pairs.size(); begin += batch_size) {
      const std::size_t end = std::min(pairs.size(), begin + batch_size);
      std::vector<std::pair<std::size_t, std::size_t>> chunk(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                             order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(chunk.begin(), chunk.end());
      Batch batch;
      for (const auto& [r, s] : chunk) {
        if (batch.empty() || batch.back().record != &data.records[r]) batch.push_back({&data.records[r], {}});
        batch.back().samples.push_back(s);
      }
      assign_parameters(model, params);
      const LossGradient lg = loss_gradient(model, batch);
      if (!std::isfinite(lg.loss) || !lg.params.allFinite()) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch), epoch);
      }
      const double gnorm = lg.params.norm();
      if (cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm) {
        adam_step(params, lg.params * (cfg.clip_norm / gnorm), state.moments, ++state.step, cfg);
      } else {
        adam_step(params, lg.params, state.moments, ++state.step, cfg);
      }
      epoch_loss += lg.loss * static_cast<double>(end - begin);
    }
    epoch_loss /= static_cast<double>(pairs.size());
    assign_parameters(model, params);
    history.push_back(epoch_loss);
    ++state.epoch;
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return {std::move(model), std::move(history), std::move(state)};
}

}  // namespace flowrnn
