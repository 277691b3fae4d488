#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "flowrnn/flow_model.hpp"
#include "flowrnn/ode.hpp"

namespace flowrnn {

struct Sample {
  double t = 0.0;
  Vec y;
};

/// One noisy trajectory: xi_k = phi(t_k, x0, u) + noise.
struct TrajectoryRecord {
  Vec x0;
  ControlSequence seq;
  std::vector<Sample> samples;
};

struct Dataset {
  std::vector<TrajectoryRecord> records;

  void validate() const;
  std::size_t sample_count() const;
};

/// Data generation protocol: standard normal initial states, square-wave
/// inputs holding one log-normal amplitude for `block_length` periods,
/// Gaussian measurement noise.
struct GenConfig {
  int n_traj = 300;
  int samples_per_traj = 300;
  double horizon = 20.0;
  double noise_std = 0.05;
  int block_length = 40;
  double lognormal_mu = std::log(0.2);
  double lognormal_sigma = 0.5;
  /// Evenly spaced sample times instead of sorted uniform draws.
  bool uniform_grid = false;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate_dataset(const FlowEvaluator& ev, const GenConfig& cfg);

/// Subset of one record's samples.
struct BatchRecord {
  const TrajectoryRecord* record = nullptr;
  std::vector<std::size_t> samples;
};
using Batch = std::vector<BatchRecord>;

Batch full_batch(const Dataset& data);

/// Mean over records of the mean squared residual over that record's samples.
double mse_loss(const FlowModel& model, const Batch& batch);

struct LossGradient {
  double loss = 0.0;
  /// d loss / d parameters, laid out as flatten_parameters.
  Vec params;
  /// d loss / d w_k for every batch record and period k of its sequence.
  std::vector<std::vector<Vec>> omegas;
};

/// Backpropagation through the unrolled hidden recursion.
LossGradient loss_gradient(const FlowModel& model, const Batch& batch);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  /// Rescale batch gradients whose 2-norm exceeds this; 0 disables.
  double clip_norm = 0.0;
  std::uint64_t seed = 0;
  int hidden_dim = 32;

  void validate() const;
};

struct AdamMoments {
  Vec m;
  Vec v;
};

/// One Adam update with bias correction; step_index starts at 1.
void adam_step(Vec& params, const Vec& grads, AdamMoments& moments, long step_index, const TrainConfig& cfg);

/// Optimiser state carried across resumed runs.
struct TrainState {
  AdamMoments moments;
  long step = 0;
  int epoch = 0;
};

struct TrainResult {
  FlowModel model;
  /// Mean batch loss per epoch.
  std::vector<double> history;
  TrainState state;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Mini-batch Adam over shuffled (record, sample) pairs. The shuffle of
/// epoch e depends only on (seed, e), so a resumed run continues the
/// uninterrupted one exactly.
TrainResult train(FlowModel model, const Dataset& data, const TrainConfig& cfg, TrainState state = {},
                  const EpochCallback& on_epoch = {});

}  // namespace flowrnn
