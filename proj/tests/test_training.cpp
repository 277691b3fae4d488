#include <doctest.h>

#include <cmath>

#include "flowrnn/errors.hpp"
#include "flowrnn/training.hpp"
#include "test_util.hpp"

using namespace flowrnn;
using flowrnn::test::vec;

namespace {

const ControlSpec kSpec(ControlKind::PiecewiseConstant, 0.2, 1);

// Model whose decoder outputs a constant `c` regardless of the hidden state.
FlowModel constant_output_model(const Vec& c) {
  FlowModel m = FlowModel::random(kSpec, static_cast<int>(c.size()), 3, {}, Activation::Tanh, 0);
  m.gamma = MlpNet::affine(Mat::Zero(c.size(), 3), c);
  return m;
}

TrajectoryRecord record_with(const Vec& x0, std::vector<Sample> samples) {
  return {x0, constant_sequence(kSpec, vec({0.0}), 10), std::move(samples)};
}

Dataset small_dataset(const OdeSystem& sys, int n, int k, std::uint64_t seed, double noise = 0.05) {
  GenConfig cfg;
  cfg.n_traj = n;
  cfg.samples_per_traj = k;
  cfg.horizon = 2.0;
  cfg.block_length = 4;
  cfg.noise_std = noise;
  cfg.seed = seed;
  return generate_dataset(FlowEvaluator(sys, kSpec), cfg);
}

}  // namespace

TEST_CASE("GenConfig defaults follow the experiment protocol") {
  const GenConfig cfg;
  CHECK(cfg.n_traj == 300);
  CHECK(cfg.samples_per_traj == 300);
  CHECK(cfg.horizon == 20.0);
  CHECK(cfg.noise_std == 0.05);
  CHECK(cfg.block_length == 40);
  CHECK(cfg.lognormal_mu == std::log(0.2));
  CHECK(cfg.lognormal_sigma == 0.5);
  // Square-wave period 8 time units at delta = 0.2.
  CHECK(cfg.block_length * 0.2 == doctest::Approx(8.0));
}

TEST_CASE("default dataset shape, block structure and noise statistics") {
  const FlowEvaluator ev(fhn_system(), kSpec);
  GenConfig cfg;
  cfg.seed = 123;
  const Dataset noisy = generate_dataset(ev, cfg);
  REQUIRE(noisy.records.size() == 300);
  for (const auto& rec : noisy.records) {
    REQUIRE(rec.samples.size() == 300);
    REQUIRE(rec.seq.size() == 101);
    for (std::size_t k = 0; k < rec.seq.size(); ++k) CHECK(rec.seq[k] == rec.seq[k - k % 40]);
    CHECK(rec.seq[0] != rec.seq[40]);
    for (std::size_t s = 1; s < rec.samples.size(); ++s) CHECK(rec.samples[s - 1].t <= rec.samples[s].t);
    CHECK(rec.samples.back().t <= 20.0);
  }
  CHECK_NOTHROW(noisy.validate());

  // Noise is drawn after everything else, so the noiseless set shares times and controls.
  cfg.noise_std = 0.0;
  const Dataset clean = generate_dataset(ev, cfg);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < clean.records.size(); ++n) {
    CHECK(clean.records[n].x0 == noisy.records[n].x0);
    for (std::size_t k = 0; k < 300; ++k) {
      REQUIRE(clean.records[n].samples[k].t == noisy.records[n].samples[k].t);
      const Vec r = noisy.records[n].samples[k].y - clean.records[n].samples[k].y;
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        sum += r[i];
        sq += r[i] * r[i];
        ++count;
      }
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double sd = std::sqrt(sq / static_cast<double>(count) - mean * mean);
  CHECK(std::abs(sd - 0.05) < 0.05 * 0.05);
}

TEST_CASE("noiseless decay samples follow x0 exp(-t)") {
  const Dataset d = small_dataset(test::decay_system(), 5, 30, 4, 0.0);
  for (const auto& rec : d.records) {
    for (const auto& s : rec.samples) {
      CHECK(s.y[0] == doctest::Approx(rec.x0[0] * std::exp(-s.t)).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("dataset generation is deterministic") {
  const Dataset a = small_dataset(fhn_system(), 6, 20, 9);
  const Dataset b = small_dataset(fhn_system(), 6, 20, 9);
  const Dataset c = small_dataset(fhn_system(), 6, 20, 10);
  for (std::size_t n = 0; n < a.records.size(); ++n) {
    CHECK(a.records[n].x0 == b.records[n].x0);
    CHECK(a.records[n].seq.omegas() == b.records[n].seq.omegas());
    for (std::size_t k = 0; k < a.records[n].samples.size(); ++k) {
      CHECK(a.records[n].samples[k].t == b.records[n].samples[k].t);
      CHECK(a.records[n].samples[k].y == b.records[n].samples[k].y);
    }
  }
  CHECK(a.records[0].x0 != c.records[0].x0);
}

TEST_CASE("generation reports blow-up with the trajectory index") {
  OdeSystem quad{"quad", 1, 1, [](const Vec& x, const Vec&) -> Vec { return x.cwiseProduct(x) * 10.0; }, {},
                 std::nullopt};
  GenConfig cfg;
  cfg.n_traj = 4;
  cfg.samples_per_traj = 5;
  cfg.horizon = 2.0;
  try {
    generate_dataset(FlowEvaluator(quad, kSpec), cfg);
    FAIL("expected blow-up");
  } catch (const BlowUpError& e) {
    CHECK(std::string(e.what()).find("trajectory ") != std::string::npos);
  }
}

TEST_CASE("mse_loss examples") {
  Dataset one;
  one.records.push_back(record_with(vec({0.0, 0.0}), {{0.1, vec({1.0, 0.0})}}));
  CHECK(mse_loss(constant_output_model(vec({0.0, 0.0})), full_batch(one)) == 1.0);

  Dataset two;
  two.records.push_back(record_with(vec({0.0}), {{0.1, vec({1.0})}, {0.3, vec({-1.0})}}));
  two.records.push_back(record_with(vec({0.0}), {{0.1, vec({std::sqrt(3.0)})}}));
  const FlowModel zero = constant_output_model(vec({0.0}));
  CHECK(mse_loss(zero, full_batch(two)) == doctest::Approx(2.0).epsilon(1e-15));

  // Predictions equal targets.
  const FlowModel m = FlowModel::random(kSpec, 2, 4, {}, Activation::Tanh, 3);
  Dataset exact;
  exact.records.push_back(record_with(vec({0.5, -0.5}), {}));
  for (double t : {0.0, 0.15, 0.4, 1.1}) {
    exact.records[0].samples.push_back({t, flow_predict(m, t, exact.records[0].x0, exact.records[0].seq)});
  }
  CHECK(mse_loss(m, full_batch(exact)) == 0.0);
}

TEST_CASE("mse_loss over the full dataset is the mean of per-record losses") {
  const Dataset d = small_dataset(fhn_system(), 5, 12, 2);
  const FlowModel m = FlowModel::random(kSpec, 2, 5, {}, Activation::Tanh, 4);
  const Batch all = full_batch(d);
  double mean = 0.0;
  for (const auto& br : all) mean += mse_loss(m, Batch{br});
  mean /= static_cast<double>(all.size());
  CHECK(mse_loss(m, all) == doctest::Approx(mean).epsilon(1e-14));
  CHECK(mse_loss(m, all) >= 0.0);
  CHECK_THROWS_AS(mse_loss(m, Batch{}), DomainError);
}

TEST_CASE("loss_gradient value matches mse_loss and vanishes at zero residual") {
  const Dataset d = small_dataset(fhn_system(), 4, 10, 5);
  const FlowModel m = FlowModel::random(kSpec, 2, 4, {3}, Activation::Tanh, 6);
  const Batch b = full_batch(d);
  CHECK(loss_gradient(m, b).loss == doctest::Approx(mse_loss(m, b)).epsilon(1e-12));

  Dataset exact;
  exact.records.push_back(record_with(vec({0.5, -0.5}), {}));
  for (double t : {0.0, 0.15, 0.4, 1.1}) {
    exact.records[0].samples.push_back({t, flow_predict(m, t, exact.records[0].x0, exact.records[0].seq)});
  }
  const LossGradient z = loss_gradient(m, full_batch(exact));
  CHECK(z.loss == 0.0);
  CHECK(z.params.isZero(0.0));
}

TEST_CASE("loss_gradient matches central differences") {
  const Dataset d = small_dataset(fhn_system(), 2, 5, 7);
  Batch b = full_batch(d);
  b.resize(1);
  FlowModel m = FlowModel::random(kSpec, 2, 4, {}, Activation::Tanh, 8);
  const LossGradient g = loss_gradient(m, b);
  const Vec p = flatten_parameters(m);
  const double h = 1e-5;
  double diff = 0.0, scale = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vec q = p;
    q[i] += h;
    assign_parameters(m, q);
    const double up = mse_loss(m, b);
    q[i] -= 2 * h;
    assign_parameters(m, q);
    const double down = mse_loss(m, b);
    const double fd = (up - down) / (2 * h);
    diff = std::max(diff, std::abs(fd - g.params[i]));
    scale = std::max({scale, std::abs(fd), std::abs(g.params[i])});
  }
  assign_parameters(m, p);
  CHECK(diff / scale < 1e-4);

  // Control-parameter gradients, including the zero tail beyond the last sample.
  const TrajectoryRecord& rec = *b[0].record;
  double last_t = 0.0;
  for (const auto& s : rec.samples) last_t = std::max(last_t, s.t);
  const std::size_t kt = time_decompose(last_t, 0.2).k;
  double wdiff = 0.0, wscale = 0.0;
  for (std::size_t k = 0; k < rec.seq.size(); ++k) {
    auto omegas = rec.seq.omegas();
    omegas[k][0] += h;
    TrajectoryRecord up_rec{rec.x0, ControlSequence(kSpec, omegas), rec.samples};
    omegas[k][0] -= 2 * h;
    TrajectoryRecord dn_rec{rec.x0, ControlSequence(kSpec, omegas), rec.samples};
    const double fd = (mse_loss(m, Batch{{&up_rec, b[0].samples}}) - mse_loss(m, Batch{{&dn_rec, b[0].samples}})) /
                      (2 * h);
    wdiff = std::max(wdiff, std::abs(fd - g.omegas[0][k][0]));
    wscale = std::max({wscale, std::abs(fd), std::abs(g.omegas[0][k][0])});
    if (k > kt) CHECK(g.omegas[0][k][0] == 0.0);
  }
  CHECK(wdiff / wscale < 1e-4);
}

TEST_CASE("adam_step") {
  TrainConfig cfg;
  Vec p = vec({1.0, -2.0});
  AdamMoments mom;
  adam_step(p, Vec::Zero(2), mom, 1, cfg);
  CHECK(p == vec({1.0, -2.0}));

  Vec theta = vec({0.0});
  AdamMoments m1;
  adam_step(theta, vec({2.0}), m1, 1, cfg);
  CHECK(theta[0] == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(std::abs(theta[0] + 0.001) < 1e-6);
  const double first = theta[0];
  adam_step(theta, vec({2.0}), m1, 2, cfg);
  CHECK(theta[0] < first);
  CHECK(theta[0] == doctest::Approx(-0.002).epsilon(1e-5));

  CHECK_THROWS_AS(adam_step(theta, vec({1.0, 2.0}), m1, 3, cfg), DimensionError);
  CHECK_THROWS_AS(adam_step(theta, vec({1.0}), m1, 0, cfg), DomainError);
}

TEST_CASE("train with zero epochs leaves the model unchanged") {
  const Dataset d = small_dataset(linear_scalar_system(), 3, 10, 1);
  const FlowModel m = FlowModel::random(kSpec, 1, 4, {}, Activation::Tanh, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train(m, d, cfg);
  CHECK(r.history.empty());
  CHECK(flatten_parameters(r.model) == flatten_parameters(m));
}

TEST_CASE("training reduces the loss on the linear scalar system and is deterministic") {
  const Dataset d = small_dataset(linear_scalar_system(), 8, 20, 3, 0.0);
  const FlowModel m = FlowModel::random(kSpec, 1, 6, {}, Activation::Tanh, 4);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.seed = 5;
  const double initial = mse_loss(m, full_batch(d));
  const TrainResult r = train(m, d, cfg);
  REQUIRE(r.history.size() == 200);
  CHECK(mse_loss(r.model, full_batch(d)) < 0.1 * initial);
  CHECK(r.state.epoch == 200);
  CHECK(r.state.step == 200 * 5);

  const TrainResult again = train(m, d, cfg);
  CHECK(again.history == r.history);
  CHECK(flatten_parameters(again.model) == flatten_parameters(r.model));
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  const Dataset d = small_dataset(fhn_system(), 5, 15, 6);
  const FlowModel m = FlowModel::random(kSpec, 2, 5, {}, Activation::Tanh, 7);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.seed = 8;
  const TrainResult full = train(m, d, cfg);
  cfg.epochs = 3;
  const TrainResult first = train(m, d, cfg);
  const TrainResult second = train(first.model, d, cfg, first.state);
  std::vector<double> joined = first.history;
  joined.insert(joined.end(), second.history.begin(), second.history.end());
  CHECK(joined == full.history);
  CHECK(flatten_parameters(second.model) == flatten_parameters(full.model));
}

TEST_CASE("gradient clipping rescales the batch gradient") {
  const Dataset d = small_dataset(linear_scalar_system(), 3, 6, 2);
  const FlowModel m = FlowModel::random(kSpec, 1, 4, {}, Activation::Tanh, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1000;
  const double gnorm = loss_gradient(m, full_batch(d)).params.norm();
  REQUIRE(gnorm > 1e-3);

  cfg.clip_norm = 1e-3;
  const TrainResult clipped = train(m, d, cfg);
  CHECK(clipped.state.moments.m.norm() == doctest::Approx((1.0 - cfg.beta1) * 1e-3).epsilon(1e-12));

  cfg.clip_norm = 0.0;
  const TrainResult plain = train(m, d, cfg);
  CHECK(plain.state.moments.m.norm() == doctest::Approx((1.0 - cfg.beta1) * gnorm).epsilon(1e-12));

  cfg.epochs = 4;
  cfg.clip_norm = 10.0 * gnorm + 1e6;
  const TrainResult loose = train(m, d, cfg);
  cfg.clip_norm = 0.0;
  CHECK(flatten_parameters(loose.model) == flatten_parameters(train(m, d, cfg).model));

  cfg.clip_norm = -1.0;
  CHECK_THROWS_AS(train(m, d, cfg), DomainError);
}

TEST_CASE("non-finite loss raises a divergence error with the epoch") {
  Dataset d = small_dataset(linear_scalar_system(), 2, 5, 1);
  d.records[1].samples[2].y[0] = std::nan("");
  const FlowModel m = FlowModel::random(kSpec, 1, 3, {}, Activation::Tanh, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  try {
    train(m, d, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 0);
  }
}

TEST_CASE("config validation") {
  TrainConfig t;
  t.beta1 = 1.0;
  CHECK_THROWS_AS(t.validate(), DomainError);
  GenConfig g;
  g.n_traj = 0;
  CHECK_THROWS_AS(g.validate(), DomainError);
}
