#include "flowrnn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flowrnn/errors.hpp"
#include "flowrnn/flow_model.hpp"
#include "flowrnn/io.hpp"
#include "flowrnn/lift.hpp"
#include "flowrnn/ode.hpp"
#include "flowrnn/training.hpp"
#include "flowrnn/verification.hpp"

namespace flowrnn {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string format_version = kModelFormat;
};

struct GenDataOpts {
  std::string system = "fhn";
  std::string control = "piecewise_constant";
  double delta = 0.2;
  double rel_tol = 1e-8;
  double abs_tol = 1e-8;
  GenConfig gen;
  std::string output = "dataset.jsonl";
  int dump_trajectory = -1;
  double dump_step = 0.01;
};

struct TrainOpts {
  std::string data;
  std::string model_in;
  std::vector<int> mlp_hidden;
  std::string activation = "tanh";
  TrainConfig train;
  std::string output = "model.json";
  std::string loss_csv = "loss.csv";
  bool quiet = false;
};

struct PredictOpts {
  std::string model;
  std::string x0;
  std::string omegas;
  std::string omega_file;
  std::string dataset;
  int record = -1;
  std::string times;
  double t_end = -1.0;
  double t_step = 0.01;
  bool hold_last = false;
  std::string compare;
  std::string output = "predict.csv";
};

struct LiftOpts {
  std::string model_in;
  int state_dim = 0;
  double rank_tol = 1e-10;
  int trials = 100;
  int horizon = 20;
  double x_bound = 1.0;
  double u_bound = 1.0;
  std::string output = "lifted.json";
  std::string report = "lift_report.txt";
};

struct VerifyOpts {
  std::string map = "affine";
  double a = 0.5;
  double b = 0.1;
  std::vector<double> kx{-1.0, 1.0};
  std::vector<double> ku{-1.0, 1.0};
  DemoConfig demo;
  std::string lifted_model;
  bool save_models = false;
  std::string certificate = "certificate.txt";
  std::string steps_csv = "steps.csv";
};

std::string out_path(const Globals& g, const std::string& name) {
  const fs::path p = fs::path(name).is_absolute() ? fs::path(name) : fs::path(g.out_dir) / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p.string();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_manifest(const std::string& artifact, const std::string& command, const Json& config,
                    const Globals& g, Clock::time_point start) {
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  const Json manifest = {{"command", command},
                         {"artifact", fs::path(artifact).filename().string()},
                         {"config", config},
                         {"seed", g.seed},
                         {"formats", {{"model", kModelFormat}, {"dataset", kDatasetFormat}}},
                         {"duration_seconds", seconds},
                         {"created", utc_timestamp()}};
  write_json_file(artifact + ".manifest.json", manifest);
}

Vec parse_vec(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    try {
      values.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
      throw DomainError(std::string("cannot parse ") + what + " '" + text + "'");
    }
  }
  if (values.empty()) throw DomainError(std::string(what) + " is empty");
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// "a,b;c,d": one parameter vector per period.
std::vector<Vec> parse_omegas(const std::string& text) {
  std::vector<Vec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) out.push_back(parse_vec(item, "omega"));
  return out;
}

BoxSet box_from_bounds(const std::vector<double>& b, const char* what) {
  if (b.size() % 2 != 0 || b.empty()) throw DomainError(std::string(what) + " needs lower,upper pairs");
  const auto d = static_cast<Eigen::Index>(b.size() / 2);
  Vec lo(d), hi(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    lo[i] = b[2 * i];
    hi[i] = b[2 * i + 1];
  }
  return BoxSet(lo, hi);
}

std::string join(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s;
}

std::string box_text(const BoxSet& b) {
  std::string s;
  for (int i = 0; i < b.dim(); ++i) {
    s += (i ? " x " : "") + std::string("[") + format_double(b.lower[i]) + ", " + format_double(b.upper[i]) + "]";
  }
  return s;
}

// gen-data

int cmd_gen_data(const Globals& g, GenDataOpts o) {
  const auto start = Clock::now();
  o.gen.seed = g.seed;
  const OdeSystem sys = system_by_name(o.system);
  const ControlSpec spec(control_kind_from_string(o.control), o.delta, sys.input_dim);
  IntegratorConfig icfg;
  icfg.rel_tol = o.rel_tol;
  icfg.abs_tol = o.abs_tol;
  const FlowEvaluator ev(sys, spec, icfg);
  const Dataset data = generate_dataset(ev, o.gen);

  const std::string path = out_path(g, o.output);
  write_dataset(path, data);
  const Json config = {{"system", o.system},
                       {"control", o.control},
                       {"delta", o.delta},
                       {"rel_tol", o.rel_tol},
                       {"abs_tol", o.abs_tol},
                       {"n_traj", o.gen.n_traj},
                       {"samples_per_traj", o.gen.samples_per_traj},
                       {"horizon", o.gen.horizon},
                       {"noise_std", o.gen.noise_std},
                       {"block_length", o.gen.block_length},
                       {"lognormal_mu", o.gen.lognormal_mu},
                       {"lognormal_sigma", o.gen.lognormal_sigma},
                       {"uniform_grid", o.gen.uniform_grid},
                       {"dump_trajectory", o.dump_trajectory},
                       {"dump_step", o.dump_step}};
  write_manifest(path, "gen-data", config, g, start);

  if (o.dump_trajectory >= 0) {
    if (o.dump_trajectory >= static_cast<int>(data.records.size())) {
      throw DomainError("--dump-trajectory index out of range");
    }
    if (!(o.dump_step > 0.0)) throw DomainError("--dump-step must be positive");
    const TrajectoryRecord& rec = data.records[static_cast<std::size_t>(o.dump_trajectory)];
    std::vector<double> times;
    const auto steps = static_cast<long>(std::floor(o.gen.horizon / o.dump_step + 1e-9));
    for (long i = 0; i <= steps; ++i) times.push_back(static_cast<double>(i) * o.dump_step);
    const auto states = integrate_trajectory(ev, rec.x0, rec.seq, times);
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= sys.state_dim; ++i) header.push_back("x_" + std::to_string(i));
    for (int i = 1; i <= sys.input_dim; ++i) header.push_back("u_" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < times.size(); ++i) {
      std::vector<double> row{times[i]};
      row.insert(row.end(), states[i].data(), states[i].data() + states[i].size());
      const Vec u = eval_control(rec.seq, std::min(times[i], rec.seq.horizon()));
      row.insert(row.end(), u.data(), u.data() + u.size());
      rows.push_back(std::move(row));
    }
    const std::string csv = out_path(g, "trajectory_" + std::to_string(o.dump_trajectory) + ".csv");
    write_csv(csv, header, rows);
    write_manifest(csv, "gen-data", config, g, start);
  }
  std::cout << "wrote " << data.records.size() << " trajectories (" << data.sample_count() << " samples) to "
            << path << "\n";
  return kExitOk;
}

// train

int cmd_train(const Globals& g, TrainOpts o) {
  const auto start = Clock::now();
  o.train.seed = g.seed;
  const Dataset data = read_dataset(o.data);
  if (data.records.empty()) throw DomainError("dataset '" + o.data + "' has no records");

  TrainState state;
  FlowModel model = [&] {
    if (!o.model_in.empty()) return flow_model_from_json(read_json_file(o.model_in), &state);
    const auto& rec = data.records.front();
    return FlowModel::random(rec.seq.spec(), static_cast<int>(rec.x0.size()), o.train.hidden_dim, o.mlp_hidden,
                             activation_from_string(o.activation), g.seed);
  }();
  if (!(model.spec == data.records.front().seq.spec())) {
    throw DomainError("model control parameterisation does not match the dataset");
  }
  const int first_epoch = state.epoch;
  const auto on_epoch = [&](int epoch, double loss) {
    if (!o.quiet) std::cout << "epoch " << epoch + 1 << " loss " << format_double(loss) << std::endl;
  };
  const TrainResult result = train(model, data, o.train, state, on_epoch);

  const std::string model_path = out_path(g, o.output);
  write_json_file(model_path, to_json(result.model, &result.state));
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    rows.push_back({static_cast<double>(first_epoch + static_cast<int>(i) + 1), result.history[i]});
  }
  const std::string loss_path = out_path(g, o.loss_csv);
  write_csv(loss_path, {"epoch", "loss"}, rows);

  const Json config = {{"data", o.data},
                       {"model_in", o.model_in},
                       {"epochs", o.train.epochs},
                       {"batch_size", o.train.batch_size},
                       {"learning_rate", o.train.learning_rate},
                       {"beta1", o.train.beta1},
                       {"beta2", o.train.beta2},
                       {"clip_norm", o.train.clip_norm},
                       {"eps_adam", o.train.eps_adam},
                       {"hidden_dim", result.model.hidden_dim()},
                       {"mlp_hidden", o.mlp_hidden},
                       {"activation", o.activation},
                       {"start_epoch", first_epoch}};
  write_manifest(model_path, "train", config, g, start);
  write_manifest(loss_path, "train", config, g, start);
  std::cout << "wrote " << model_path << " (" << parameter_count(result.model) << " parameters)\n";
  return kExitOk;
}

// predict

int cmd_predict(const Globals& g, const PredictOpts& o) {
  const auto start = Clock::now();
  const FlowModel model = flow_model_from_json(read_json_file(o.model));

  Vec x0;
  std::vector<Vec> omegas;
  if (!o.dataset.empty()) {
    if (o.record < 0) throw DomainError("--dataset needs --record");
    const Dataset data = read_dataset(o.dataset);
    if (o.record >= static_cast<int>(data.records.size())) throw DomainError("--record index out of range");
    const auto& rec = data.records[static_cast<std::size_t>(o.record)];
    x0 = rec.x0;
    omegas = rec.seq.omegas();
  }
  if (!o.x0.empty()) x0 = parse_vec(o.x0, "x0");
  if (!o.omegas.empty()) omegas = parse_omegas(o.omegas);
  if (!o.omega_file.empty()) {
    const Json j = read_json_file(o.omega_file);
    omegas = j.contains("spec") ? control_from_json(j).omegas() : control_from_json(
        Json{{"spec", {{"kind", to_string(model.spec.kind())}, {"delta", model.spec.delta()},
                       {"d_u", model.spec.input_dim()}}},
             {"omegas", j.contains("omegas") ? j.at("omegas") : j}}).omegas();
  }
  if (x0.size() == 0) throw DomainError("no initial state: pass --x0 or --dataset/--record");
  if (omegas.empty()) throw DomainError("no control: pass --omegas, --omega-file or --dataset/--record");

  std::vector<double> times;
  if (!o.times.empty()) {
    const Vec t = parse_vec(o.times, "times");
    times.assign(t.data(), t.data() + t.size());
  } else {
    if (!(o.t_end >= 0.0) || !(o.t_step > 0.0)) throw DomainError("pass --times or --t-end with a positive --t-step");
    const auto steps = static_cast<long>(std::floor(o.t_end / o.t_step + 1e-9));
    for (long i = 0; i <= steps; ++i) times.push_back(static_cast<double>(i) * o.t_step);
  }
  if (!std::is_sorted(times.begin(), times.end())) throw DomainError("times must be ascending");

  if (o.hold_last) {
    const TimeIndex last = time_decompose(times.back(), model.spec.delta());
    const std::size_t need = last.k + (last.tau > 0.0 ? 1 : 0);
    while (omegas.size() < need) omegas.push_back(omegas.back());
  }
  const ControlSequence seq(model.spec, omegas);
  const auto pred = flow_predict_batch(model, times, x0, seq);

  std::vector<Vec> truth;
  if (!o.compare.empty()) {
    const FlowEvaluator ev(system_by_name(o.compare), model.spec);
    truth = integrate_trajectory(ev, x0, seq, times);
  }
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= model.state_dim(); ++i) header.push_back("xhat_" + std::to_string(i));
  if (!truth.empty()) {
    for (int i = 1; i <= model.state_dim(); ++i) header.push_back("x_" + std::to_string(i));
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::vector<double> row{times[i]};
    row.insert(row.end(), pred[i].data(), pred[i].data() + pred[i].size());
    if (!truth.empty()) row.insert(row.end(), truth[i].data(), truth[i].data() + truth[i].size());
    rows.push_back(std::move(row));
  }
  const std::string path = out_path(g, o.output);
  write_csv(path, header, rows);
  const Json config = {{"model", o.model},       {"x0", o.x0},       {"omegas", o.omegas},
                       {"omega_file", o.omega_file}, {"dataset", o.dataset}, {"record", o.record},
                       {"times", o.times},       {"t_end", o.t_end}, {"t_step", o.t_step},
                       {"hold_last", o.hold_last}, {"compare", o.compare}};
  write_manifest(path, "predict", config, g, start);
  std::cout << "wrote " << rows.size() << " rows to " << path << "\n";
  return kExitOk;
}

// lift

int cmd_lift(const Globals& g, const LiftOpts& o) {
  const auto start = Clock::now();
  const FeedforwardNet net = feedforward_from_json(read_json_file(o.model_in));
  if (o.state_dim <= 0 || o.state_dim > net.output_dim() || net.output_dim() != o.state_dim) {
    throw DomainError("--state-dim must equal the output dimension of the network (" +
                      std::to_string(net.output_dim()) + ")");
  }
  if (net.input_dim() < o.state_dim) throw DomainError("network input is smaller than --state-dim");
  const LiftedRnn lift = lift_to_rnn(net, o.state_dim, o.rank_tol);
  const int du = lift.input_dim;
  const BoxSet xb = BoxSet::uniform(o.state_dim, -o.x_bound, o.x_bound);
  const BoxSet ub = BoxSet::uniform(std::max(du, 1), -o.u_bound, o.u_bound);
  const LiftReport rep = verify_lift(lift, net, o.trials, o.horizon, xb,
                                     du > 0 ? ub : BoxSet(Vec(0), Vec(0)), g.seed);

  const std::string model_path = out_path(g, o.output);
  write_json_file(model_path, to_json(lift));
  const std::string report_path = out_path(g, o.report);
  std::ofstream rep_out(report_path);
  if (!rep_out) throw Error("cannot write '" + report_path + "'");
  rep_out << "lifted RNN report\n"
          << "source: " << o.model_in << "\n"
          << "d_x = " << lift.state_dim << "\n"
          << "d_u = " << lift.input_dim << "\n"
          << "p = " << lift.hidden_dim << "\n"
          << "r = " << lift.rank << "\n"
          << "d_z = p + d_x - r = " << lift.lifted_dim() << "\n"
          << "cond(M) = " << format_double(lift.m_condition) << "\n"
          << "gamma o beta identity error = " << format_double(lift.pair.identity_error()) << "\n"
          << "rollout check: " << o.trials << " trials, horizon " << o.horizon << ", |x| <= "
          << format_double(o.x_bound) << ", |u| <= " << format_double(o.u_bound) << "\n"
          << "max abs error = " << format_double(rep.max_abs_error) << "\n"
          << "max rel error = " << format_double(rep.max_rel_error) << "\n";
  if (lift.warning) rep_out << "warning: " << *lift.warning << "\n";
  rep_out.close();

  const Json config = {{"model_in", o.model_in}, {"state_dim", o.state_dim}, {"rank_tol", o.rank_tol},
                       {"trials", o.trials},     {"horizon", o.horizon},     {"x_bound", o.x_bound},
                       {"u_bound", o.u_bound}};
  write_manifest(model_path, "lift", config, g, start);
  write_manifest(report_path, "lift", config, g, start);
  std::cout << "d_z = " << lift.lifted_dim() << ", max rel error " << format_double(rep.max_rel_error) << "\n";
  if (lift.warning) std::cerr << "warning: " << *lift.warning << "\n";
  return kExitOk;
}

// verify

DiscreteMap builtin_map(const VerifyOpts& o) {
  const double a = o.a;
  const double b = o.b;
  if (o.map == "affine") {
    return [a, b](const Vec& x, const Vec& u) -> Vec { return a * x + b * Vec::Constant(x.size(), u.sum()); };
  }
  if (o.map == "sine") {
    return [a, b](const Vec& x, const Vec& u) -> Vec {
      return a * x.array().sin().matrix() + b * Vec::Constant(x.size(), u.sum());
    };
  }
  throw DomainError("unknown map '" + o.map + "' (expected affine or sine)");
}

void write_steps(const std::string& path, const SimulationCertificate& cert, const ToleranceSchedule* schedule) {
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 0; n < cert.max_err.size(); ++n) {
    double eps_n = cert.eps;
    if (schedule != nullptr && n >= 1 && n <= schedule->eps_n.size()) eps_n = schedule->eps_n[n - 1];
    rows.push_back({static_cast<double>(n), cert.max_err[n], cert.eps, eps_n});
  }
  write_csv(path, {"n", "max_err", "eps", "eps_n"}, rows);
}

void write_certificate_body(std::ostream& out, const SimulationCertificate& cert) {
  out << "samples = " << cert.samples << "\n"
      << "eps = " << format_double(cert.eps) << "\n";
  for (std::size_t n = 0; n < cert.max_err.size(); ++n) {
    out << "  n = " << n << "  max_err = " << format_double(cert.max_err[n]) << "\n";
  }
  if (cert.first_failing_step) out << "first failing step = " << *cert.first_failing_step << "\n";
  out << "result: " << (cert.pass ? "PASS" : "FAIL") << "\n";
}

int cmd_verify(const Globals& g, VerifyOpts o) {
  const auto start = Clock::now();
  o.demo.seed = g.seed;
  o.demo.fit.seed = g.seed;
  const DiscreteMap f = builtin_map(o);
  const BoxSet kx = box_from_bounds(o.kx, "--kx");
  const BoxSet ku = box_from_bounds(o.ku, "--ku");
  const Json config = {{"map", o.map},
                       {"a", o.a},
                       {"b", o.b},
                       {"kx", o.kx},
                       {"ku", o.ku},
                       {"N", o.demo.N},
                       {"eps", o.demo.eps},
                       {"trials", o.demo.trials},
                       {"reach_density", o.demo.reach_density},
                       {"lipschitz_density", o.demo.lipschitz_density},
                       {"initial_width", o.demo.fit.initial_width},
                       {"max_width", o.demo.fit.max_width},
                       {"iterations", o.demo.fit.iterations},
                       {"lifted_model", o.lifted_model}};
  const std::string cert_path = out_path(g, o.certificate);
  const std::string steps_path = out_path(g, o.steps_csv);
  std::ofstream out(cert_path);
  if (!out) throw Error("cannot write '" + cert_path + "'");
  out << "simulation certificate\n"
      << "map: " << o.map << " (a = " << format_double(o.a) << ", b = " << format_double(o.b) << ")\n"
      << "K_x = " << box_text(kx) << "\n"
      << "K_u = " << box_text(ku) << "\n"
      << "N = " << o.demo.N << "\n";

  bool pass = false;
  if (!o.lifted_model.empty()) {
    const LiftedRnn lift = lifted_from_json(read_json_file(o.lifted_model));
    const SimulationCertificate cert =
        check_simulation(f, lift, kx, ku, o.demo.N, o.demo.eps, o.demo.trials, g.seed);
    out << "lifted model: " << o.lifted_model << "\n";
    write_certificate_body(out, cert);
    write_steps(steps_path, cert, nullptr);
    pass = cert.pass;
  } else {
    DemoReport report;
    try {
      report = theorem2_demo(f, kx, ku, o.demo);
    } catch (const BudgetExhaustedError& e) {
      out << "network fit failed: achieved sup error " << format_double(e.achieved()) << ", required "
          << format_double(e.target()) << "\n"
          << "result: FAIL\n";
      out.close();
      write_manifest(cert_path, "verify", config, g, start);
      throw;
    }
    for (std::size_t n = 0; n < report.reachable.size(); ++n) {
      out << "K^" << n << " = " << box_text(report.reachable[n]) << "\n";
    }
    for (std::size_t n = 0; n < report.inflated.size(); ++n) {
      out << "K~^" << n + 1 << " = " << box_text(report.inflated[n]) << "\n";
    }
    out << "fit domain = " << box_text(report.fit_domain) << "\n";
    const ToleranceSchedule& s = report.schedule;
    const auto list = [](const std::vector<double>& v) {
      return join(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    out << "L = (" << list(s.L) << ")\n"
        << "eta = (" << list(s.eta) << ")\n"
        << "eps_n = (" << list(s.eps_n) << ")\n"
        << "required sup error = " << format_double(report.target_sup) << "\n";
    if (report.fit) {
      out << "fitted width p = " << report.fit->net.hidden_dim() << ", sup error "
          << format_double(report.fit->sup_error) << " after " << report.fit->iterations << " iterations\n";
    }
    if (report.lift) {
      out << "lift: d_z = " << report.lift->lifted_dim() << ", rank " << report.lift->rank << ", cond(M) "
          << format_double(report.lift->m_condition) << "\n";
      if (report.lift->warning) out << "warning: " << *report.lift->warning << "\n";
    }
    write_certificate_body(out, report.certificate);
    write_steps(steps_path, report.certificate, &report.schedule);
    if (o.save_models && report.fit && report.lift) {
      const std::string fit_path = out_path(g, "fitted_net.json");
      const std::string lift_path = out_path(g, "lifted.json");
      write_json_file(fit_path, to_json(report.fit->net));
      write_json_file(lift_path, to_json(*report.lift));
      write_manifest(fit_path, "verify", config, g, start);
      write_manifest(lift_path, "verify", config, g, start);
    }
    pass = report.pass;
  }
  out.close();
  write_manifest(cert_path, "verify", config, g, start);
  write_manifest(steps_path, "verify", config, g, start);
  std::cout << (pass ? "PASS" : "FAIL") << ": certificate written to " << cert_path << "\n";
  return pass ? kExitOk : kExitCertification;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Learn and verify flow functions of control systems with recurrent networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for output artifacts")->capture_default_str();
  app.add_option("--format-version", g.format_version, "Model file format")
      ->check(CLI::IsMember({std::string(kModelFormat)}))
      ->capture_default_str();

  GenDataOpts gd;
  auto* gen = app.add_subcommand("gen-data", "Simulate a noisy trajectory dataset");
  gen->add_option("--system", gd.system, "fhn, linear-scalar or vdp")
      ->check(CLI::IsMember({"fhn", "linear-scalar", "vdp"}))
      ->capture_default_str();
  gen->add_option("--control", gd.control, "piecewise_constant or piecewise_linear")
      ->check(CLI::IsMember({"piecewise_constant", "piecewise_linear"}))
      ->capture_default_str();
  gen->add_option("--delta", gd.delta, "Control period")->capture_default_str();
  gen->add_option("--n-traj", gd.gen.n_traj, "Number of trajectories")->capture_default_str();
  gen->add_option("--samples", gd.gen.samples_per_traj, "Samples per trajectory")->capture_default_str();
  gen->add_option("--horizon", gd.gen.horizon, "Time horizon T")->capture_default_str();
  gen->add_option("--noise-std", gd.gen.noise_std, "Measurement noise standard deviation")->capture_default_str();
  gen->add_option("--block-length", gd.gen.block_length, "Periods per square-wave block")->capture_default_str();
  gen->add_option("--lognormal-mu", gd.gen.lognormal_mu, "Amplitude log-mean")->capture_default_str();
  gen->add_option("--lognormal-sigma", gd.gen.lognormal_sigma, "Amplitude log-std")->capture_default_str();
  gen->add_flag("--uniform-grid", gd.gen.uniform_grid, "Evenly spaced sample times");
  gen->add_option("--rel-tol", gd.rel_tol, "Integrator relative tolerance")->capture_default_str();
  gen->add_option("--abs-tol", gd.abs_tol, "Integrator absolute tolerance")->capture_default_str();
  gen->add_option("--output", gd.output, "Dataset file (JSON lines)")->capture_default_str();
  gen->add_option("--dump-trajectory", gd.dump_trajectory, "Also write the noiseless trajectory of this record");
  gen->add_option("--dump-step", gd.dump_step, "Time step of the trajectory dump")->capture_default_str();

  TrainOpts tr;
  auto* trn = app.add_subcommand("train", "Fit a flow model to a dataset");
  trn->add_option("--data", tr.data, "Dataset file")->required();
  trn->add_option("--model-in", tr.model_in, "Resume from this model file");
  trn->add_option("--epochs", tr.train.epochs)->capture_default_str();
  trn->add_option("--batch-size", tr.train.batch_size, "Samples per batch")->capture_default_str();
  trn->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  trn->add_option("--beta1", tr.train.beta1)->capture_default_str();
  trn->add_option("--beta2", tr.train.beta2)->capture_default_str();
  trn->add_option("--clip-norm", tr.train.clip_norm, "Gradient norm clip (0: off)")->capture_default_str();
  trn->add_option("--hidden-dim", tr.train.hidden_dim, "Hidden state dimension d_z")->capture_default_str();
  trn->add_option("--mlp-hidden", tr.mlp_hidden, "Hidden widths of encoder and decoder (empty: affine)");
  trn->add_option("--activation", tr.activation, "tanh or sigmoid")
      ->check(CLI::IsMember({"tanh", "sigmoid"}))
      ->capture_default_str();
  trn->add_option("--output", tr.output, "Model file")->capture_default_str();
  trn->add_option("--loss-csv", tr.loss_csv, "Per-epoch loss history")->capture_default_str();
  trn->add_flag("--quiet", tr.quiet, "Do not print per-epoch losses");

  PredictOpts pr;
  auto* prd = app.add_subcommand("predict", "Evaluate a flow model along a control input");
  prd->add_option("--model", pr.model, "Flow model file")->required();
  prd->add_option("--x0", pr.x0, "Initial state, comma separated");
  prd->add_option("--omegas", pr.omegas, "Control parameters per period: 'a,b;c,d'");
  prd->add_option("--omega-file", pr.omega_file, "JSON file with the control parameters");
  prd->add_option("--dataset", pr.dataset, "Take x0 and the control from a dataset record");
  prd->add_option("--record", pr.record, "Record index for --dataset");
  auto* times_opt = prd->add_option("--times", pr.times, "Query times, comma separated and ascending");
  prd->add_option("--t-end", pr.t_end, "Query a grid from 0 to this time")->excludes(times_opt);
  prd->add_option("--t-step", pr.t_step, "Grid step for --t-end")->capture_default_str();
  prd->add_flag("--hold-last", pr.hold_last, "Repeat the last control parameter to cover the query times");
  prd->add_option("--compare", pr.compare, "Append true-flow columns from this system")
      ->check(CLI::IsMember({"fhn", "linear-scalar", "vdp"}));
  prd->add_option("--output", pr.output, "CSV file")->capture_default_str();

  LiftOpts lo;
  auto* lft = app.add_subcommand("lift", "Lift a one-hidden-layer network to an RNN");
  lft->add_option("--model-in", lo.model_in, "Feedforward model file")->required();
  lft->add_option("--state-dim", lo.state_dim, "State dimension d_x")->required();
  lft->add_option("--rank-tol", lo.rank_tol, "Relative singular value cutoff")->capture_default_str();
  lft->add_option("--trials", lo.trials, "Rollouts in the check")->capture_default_str();
  lft->add_option("--horizon", lo.horizon, "Rollout length")->capture_default_str();
  lft->add_option("--x-bound", lo.x_bound, "Initial states drawn from [-b, b]")->capture_default_str();
  lft->add_option("--u-bound", lo.u_bound, "Inputs drawn from [-b, b]")->capture_default_str();
  lft->add_option("--output", lo.output, "Lifted model file")->capture_default_str();
  lft->add_option("--report", lo.report, "Text report")->capture_default_str();

  VerifyOpts vo;
  auto* ver = app.add_subcommand("verify", "Certify the N-step simulation bound for a discrete map");
  ver->add_option("--map", vo.map, "affine: a x + b u, sine: a sin(x) + b u")
      ->check(CLI::IsMember({"affine", "sine"}))
      ->capture_default_str();
  ver->add_option("--a", vo.a)->capture_default_str();
  ver->add_option("--b", vo.b)->capture_default_str();
  ver->add_option("--kx", vo.kx, "State box as lower,upper pairs")->delimiter(',')->capture_default_str();
  ver->add_option("--ku", vo.ku, "Input box as lower,upper pairs")->delimiter(',')->capture_default_str();
  ver->add_option("--steps,-N", vo.demo.N, "Horizon N")->capture_default_str();
  ver->add_option("--eps", vo.demo.eps, "Target tolerance")->capture_default_str();
  ver->add_option("--trials", vo.demo.trials, "Random rollouts")->capture_default_str();
  ver->add_option("--reach-density", vo.demo.reach_density)->capture_default_str();
  ver->add_option("--lipschitz-density", vo.demo.lipschitz_density)->capture_default_str();
  ver->add_option("--initial-width", vo.demo.fit.initial_width)->capture_default_str();
  ver->add_option("--max-width", vo.demo.fit.max_width)->capture_default_str();
  ver->add_option("--iterations", vo.demo.fit.iterations, "Adam iterations per width")->capture_default_str();
  ver->add_option("--lifted-model", vo.lifted_model, "Check this lifted RNN instead of fitting one");
  ver->add_flag("--save-models", vo.save_models, "Write the fitted network and its lift");
  ver->add_option("--certificate", vo.certificate, "Text certificate")->capture_default_str();
  ver->add_option("--steps-csv", vo.steps_csv, "Per-step error CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(g, gd);
    if (trn->parsed()) return cmd_train(g, tr);
    if (prd->parsed()) return cmd_predict(g, pr);
    if (lft->parsed()) return cmd_lift(g, lo);
    if (ver->parsed()) return cmd_verify(g, vo);
  } catch (const BudgetExhaustedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCertification;
  } catch (const BlowUpError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OutOfRangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedShiftError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace flowrnn
