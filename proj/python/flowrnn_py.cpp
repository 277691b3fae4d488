#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flowrnn/errors.hpp"
#include "flowrnn/flow_model.hpp"
#include "flowrnn/io.hpp"
#include "flowrnn/lift.hpp"
#include "flowrnn/training.hpp"
#include "flowrnn/verification.hpp"

namespace py = pybind11;
using namespace flowrnn;

namespace {

// Python callables may be invoked from worker threads.
DiscreteMap wrap_map(py::function f) {
  auto shared = std::make_shared<py::function>(std::move(f));
  return [shared](const Vec& x, const Vec& u) -> Vec {
    py::gil_scoped_acquire gil;
    return (*shared)(x, u).cast<Vec>();
  };
}

}  // namespace

PYBIND11_MODULE(_flowrnn, m) {
  m.doc() = "Flow-function learning with recurrent networks";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<OutOfRangeError>(m, "OutOfRangeError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<UnsupportedShiftError>(m, "UnsupportedShiftError", base.ptr());
  py::register_exception<BlowUpError>(m, "BlowUpError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<BudgetExhaustedError>(m, "BudgetExhaustedError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());

  // Controls.
  py::enum_<ControlKind>(m, "ControlKind")
      .value("PIECEWISE_CONSTANT", ControlKind::PiecewiseConstant)
      .value("PIECEWISE_LINEAR", ControlKind::PiecewiseLinear);

  py::class_<ControlSpec>(m, "ControlSpec")
      .def(py::init<ControlKind, double, int>(), py::arg("kind"), py::arg("delta"), py::arg("input_dim"))
      .def_property_readonly("kind", &ControlSpec::kind)
      .def_property_readonly("delta", &ControlSpec::delta)
      .def_property_readonly("input_dim", &ControlSpec::input_dim)
      .def_property_readonly("param_dim", &ControlSpec::param_dim)
      .def("alpha", &ControlSpec::alpha, py::arg("omega"), py::arg("s"))
      .def(py::self == py::self);

  py::class_<ControlSequence>(m, "ControlSequence")
      .def(py::init<ControlSpec, std::vector<Vec>>(), py::arg("spec"), py::arg("omegas"))
      .def_property_readonly("spec", &ControlSequence::spec)
      .def_property_readonly("omegas", &ControlSequence::omegas)
      .def_property_readonly("horizon", &ControlSequence::horizon)
      .def("__len__", &ControlSequence::size)
      .def("__call__", [](const ControlSequence& s, double t) { return eval_control(s, t); }, py::arg("t"));

  // Systems and flows.
  py::class_<OdeSystem>(m, "OdeSystem")
      .def_readonly("name", &OdeSystem::name)
      .def_readonly("state_dim", &OdeSystem::state_dim)
      .def_readonly("input_dim", &OdeSystem::input_dim)
      .def("rhs", &OdeSystem::eval, py::arg("x"), py::arg("u"))
      .def("jacobian", &OdeSystem::jacobian_x, py::arg("x"), py::arg("u"));
  m.def("fhn_system", &fhn_system);
  m.def("linear_scalar_system", &linear_scalar_system);
  m.def("van_der_pol_system", &van_der_pol_system);
  m.def("system_by_name", &system_by_name, py::arg("name"));

  py::enum_<IntegratorMethod>(m, "IntegratorMethod")
      .value("RK45", IntegratorMethod::RK45Adaptive)
      .value("RK4", IntegratorMethod::RK4Fixed);

  py::class_<IntegratorConfig>(m, "IntegratorConfig")
      .def(py::init<>())
      .def_readwrite("method", &IntegratorConfig::method)
      .def_readwrite("rel_tol", &IntegratorConfig::rel_tol)
      .def_readwrite("abs_tol", &IntegratorConfig::abs_tol)
      .def_readwrite("max_step", &IntegratorConfig::max_step)
      .def_readwrite("fixed_step", &IntegratorConfig::fixed_step);

  py::class_<FlowEvaluator>(m, "FlowEvaluator")
      .def(py::init<OdeSystem, ControlSpec, IntegratorConfig>(), py::arg("system"), py::arg("spec"),
           py::arg("config") = IntegratorConfig{})
      .def_property_readonly("system", &FlowEvaluator::system)
      .def_property_readonly("spec", &FlowEvaluator::spec);

  m.def("integrate_flow", &integrate_flow, py::arg("ev"), py::arg("x"), py::arg("seq"), py::arg("t"));
  m.def(
      "integrate_trajectory",
      [](const FlowEvaluator& ev, const Vec& x, const ControlSequence& seq, const std::vector<double>& times) {
        return integrate_trajectory(ev, x, seq, times);
      },
      py::arg("ev"), py::arg("x"), py::arg("seq"), py::arg("times"));
  m.def("phi_eval", &phi_eval, py::arg("ev"), py::arg("tau"), py::arg("x"), py::arg("omega"));
  m.def("psi_eval", &psi_eval, py::arg("ev"), py::arg("tau"), py::arg("x"), py::arg("omega"));
  m.def("flow_jacobian", &flow_jacobian, py::arg("ev"), py::arg("t"), py::arg("x"), py::arg("seq"));

  // Networks.
  py::enum_<Activation>(m, "Activation").value("TANH", Activation::Tanh).value("SIGMOID", Activation::Sigmoid);

  py::class_<FeedforwardNet>(m, "FeedforwardNet")
      .def(py::init([](Mat A, Vec b, Mat C, Vec d, Activation act) {
             FeedforwardNet net{std::move(A), std::move(b), std::move(C), std::move(d), act};
             net.validate();
             return net;
           }),
           py::arg("A"), py::arg("b"), py::arg("C"), py::arg("d"), py::arg("activation") = Activation::Tanh)
      .def_static(
          "random",
          [](int m_, int p, int n, Activation act, std::uint64_t seed) {
            Rng rng(seed);
            return FeedforwardNet::random(m_, p, n, act, rng);
          },
          py::arg("input_dim"), py::arg("hidden_dim"), py::arg("output_dim"), py::arg("activation") = Activation::Tanh,
          py::arg("seed") = 0)
      .def_readwrite("A", &FeedforwardNet::A)
      .def_readwrite("b", &FeedforwardNet::b)
      .def_readwrite("C", &FeedforwardNet::C)
      .def_readwrite("d", &FeedforwardNet::d)
      .def_readwrite("activation", &FeedforwardNet::activation)
      .def("__call__", &FeedforwardNet::eval, py::arg("x"));

  py::class_<RnnCell>(m, "RnnCell")
      .def_readwrite("A", &RnnCell::A)
      .def_readwrite("B", &RnnCell::B)
      .def_readwrite("b", &RnnCell::b)
      .def_readwrite("activation", &RnnCell::activation)
      .def("step", &RnnCell::step, py::arg("z"), py::arg("u"));

  py::class_<MlpNet>(m, "MlpNet")
      .def_property_readonly("input_dim", &MlpNet::input_dim)
      .def_property_readonly("output_dim", &MlpNet::output_dim)
      .def("__call__", &MlpNet::eval, py::arg("x"));

  py::class_<AffineMap>(m, "AffineMap")
      .def_readonly("M", &AffineMap::M)
      .def_readonly("offset", &AffineMap::offset)
      .def("__call__", &AffineMap::operator(), py::arg("x"));

  py::class_<AffinePair>(m, "AffinePair")
      .def_readonly("gamma", &AffinePair::gamma)
      .def_readonly("beta", &AffinePair::beta)
      .def("identity_error", &AffinePair::identity_error);

  py::class_<BoxSet>(m, "BoxSet")
      .def(py::init<Vec, Vec>(), py::arg("lower"), py::arg("upper"))
      .def_static("uniform", &BoxSet::uniform, py::arg("dim"), py::arg("lo"), py::arg("hi"))
      .def_readonly("lower", &BoxSet::lower)
      .def_readonly("upper", &BoxSet::upper)
      .def("contains", &BoxSet::contains, py::arg("x"), py::arg("slack") = 0.0);

  // Lift.
  py::class_<LiftedRnn>(m, "LiftedRnn")
      .def_readonly("cell", &LiftedRnn::cell)
      .def_readonly("pair", &LiftedRnn::pair)
      .def_readonly("rank", &LiftedRnn::rank)
      .def_readonly("state_dim", &LiftedRnn::state_dim)
      .def_readonly("hidden_dim", &LiftedRnn::hidden_dim)
      .def_readonly("m_condition", &LiftedRnn::m_condition)
      .def_readonly("warning", &LiftedRnn::warning)
      .def_property_readonly("lifted_dim", &LiftedRnn::lifted_dim);

  py::class_<LiftReport>(m, "LiftReport")
      .def_readonly("max_abs_error", &LiftReport::max_abs_error)
      .def_readonly("max_rel_error", &LiftReport::max_rel_error);

  m.def("lift_to_rnn", &lift_to_rnn, py::arg("g"), py::arg("state_dim"), py::arg("rank_tol") = 1e-10);
  m.def("verify_lift", &verify_lift, py::arg("lift"), py::arg("g"), py::arg("trials"), py::arg("horizon"),
        py::arg("x_box"), py::arg("u_box"), py::arg("seed") = 0);

  // Flow model.
  py::class_<FlowModel>(m, "FlowModel")
      .def_static("random", &FlowModel::random, py::arg("spec"), py::arg("state_dim"), py::arg("hidden_dim"),
                  py::arg("mlp_hidden") = std::vector<int>{}, py::arg("activation") = Activation::Tanh,
                  py::arg("seed") = 0)
      .def_static("with_affine_pair", &FlowModel::with_affine_pair, py::arg("spec"), py::arg("cell"), py::arg("pair"))
      .def_readonly("spec", &FlowModel::spec)
      .def_readonly("cell", &FlowModel::cell)
      .def_readonly("beta", &FlowModel::beta)
      .def_readonly("gamma", &FlowModel::gamma)
      .def_property_readonly("state_dim", &FlowModel::state_dim)
      .def_property_readonly("hidden_dim", &FlowModel::hidden_dim)
      .def_property(
          "parameters", [](const FlowModel& fm) { return flatten_parameters(fm); },
          [](FlowModel& fm, const Vec& p) { assign_parameters(fm, p); });

  m.def("flow_predict", &flow_predict, py::arg("model"), py::arg("t"), py::arg("x"), py::arg("seq"));
  m.def(
      "flow_predict_batch",
      [](const FlowModel& model, const std::vector<double>& times, const Vec& x, const ControlSequence& seq) {
        return flow_predict_batch(model, times, x, seq);
      },
      py::arg("model"), py::arg("times"), py::arg("x"), py::arg("seq"));
  m.def("true_flow_recursive", &true_flow_recursive, py::arg("ev"), py::arg("t"), py::arg("x"), py::arg("seq"));

  // Data and training.
  py::class_<Sample>(m, "Sample").def_readonly("t", &Sample::t).def_readonly("y", &Sample::y);

  py::class_<TrajectoryRecord>(m, "TrajectoryRecord")
      .def_readonly("x0", &TrajectoryRecord::x0)
      .def_readonly("seq", &TrajectoryRecord::seq)
      .def_readonly("samples", &TrajectoryRecord::samples);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("records", &Dataset::records)
      .def("__len__", [](const Dataset& d) { return d.records.size(); })
      .def("sample_count", &Dataset::sample_count);

  py::class_<GenConfig>(m, "GenConfig")
      .def(py::init<>())
      .def_readwrite("n_traj", &GenConfig::n_traj)
      .def_readwrite("samples_per_traj", &GenConfig::samples_per_traj)
      .def_readwrite("horizon", &GenConfig::horizon)
      .def_readwrite("noise_std", &GenConfig::noise_std)
      .def_readwrite("block_length", &GenConfig::block_length)
      .def_readwrite("lognormal_mu", &GenConfig::lognormal_mu)
      .def_readwrite("lognormal_sigma", &GenConfig::lognormal_sigma)
      .def_readwrite("uniform_grid", &GenConfig::uniform_grid)
      .def_readwrite("seed", &GenConfig::seed);

  m.def("generate_dataset", &generate_dataset, py::arg("ev"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "mse_loss", [](const FlowModel& model, const Dataset& d) { return mse_loss(model, full_batch(d)); },
      py::arg("model"), py::arg("data"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("eps_adam", &TrainConfig::eps_adam)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("hidden_dim", &TrainConfig::hidden_dim);

  py::class_<TrainState>(m, "TrainState")
      .def(py::init<>())
      .def_readonly("step", &TrainState::step)
      .def_readonly("epoch", &TrainState::epoch);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("history", &TrainResult::history)
      .def_readonly("state", &TrainResult::state);

  m.def(
      "train",
      [](const FlowModel& model, const Dataset& data, const TrainConfig& cfg, const TrainState& state) {
        return train(model, data, cfg, state);
      },
      py::arg("model"), py::arg("data"), py::arg("config"), py::arg("state") = TrainState{},
      py::call_guard<py::gil_scoped_release>());

  // Verification.
  py::class_<ToleranceSchedule>(m, "ToleranceSchedule")
      .def_readonly("L", &ToleranceSchedule::L)
      .def_readonly("eta", &ToleranceSchedule::eta)
      .def_readonly("eps_n", &ToleranceSchedule::eps_n)
      .def_readonly("eps", &ToleranceSchedule::eps)
      .def_readonly("N", &ToleranceSchedule::N);

  m.def(
      "tolerance_schedule",
      [](double eps, int N, const std::vector<double>& L) { return tolerance_schedule(eps, N, L); }, py::arg("eps"),
      py::arg("N"), py::arg("L"));
  m.def(
      "reachable_boxes",
      [](py::function f, const BoxSet& kx, const BoxSet& ku, int N, int density) {
        const DiscreteMap map = wrap_map(std::move(f));
        py::gil_scoped_release release;
        return reachable_boxes(map, kx, ku, N, density);
      },
      py::arg("f"), py::arg("kx"), py::arg("ku"), py::arg("N"), py::arg("density"));
  m.def(
      "lipschitz_estimate",
      [](py::function f, const BoxSet& box, const BoxSet& ku, int density) {
        const DiscreteMap map = wrap_map(std::move(f));
        py::gil_scoped_release release;
        return lipschitz_estimate(map, box, ku, density);
      },
      py::arg("f"), py::arg("box"), py::arg("ku"), py::arg("density"));

  py::class_<SimulationCertificate>(m, "SimulationCertificate")
      .def_readonly("max_err", &SimulationCertificate::max_err)
      .def_readonly("eps", &SimulationCertificate::eps)
      .def_readonly("samples", &SimulationCertificate::samples)
      .def_readonly("passed", &SimulationCertificate::pass)
      .def_readonly("first_failing_step", &SimulationCertificate::first_failing_step);

  m.def(
      "check_simulation",
      [](py::function f, const LiftedRnn& lift, const BoxSet& kx, const BoxSet& ku, int N, double eps, int trials,
         std::uint64_t seed) {
        const DiscreteMap map = wrap_map(std::move(f));
        py::gil_scoped_release release;
        return check_simulation(map, lift, kx, ku, N, eps, trials, seed);
      },
      py::arg("f"), py::arg("lift"), py::arg("kx"), py::arg("ku"), py::arg("N"), py::arg("eps"),
      py::arg("trials") = 500, py::arg("seed") = 0);

  py::class_<FitBudget>(m, "FitBudget")
      .def(py::init<>())
      .def_readwrite("initial_width", &FitBudget::initial_width)
      .def_readwrite("max_width", &FitBudget::max_width)
      .def_readwrite("iterations", &FitBudget::iterations)
      .def_readwrite("train_density", &FitBudget::train_density)
      .def_readwrite("check_density", &FitBudget::check_density)
      .def_readwrite("learning_rate", &FitBudget::learning_rate)
      .def_readwrite("activation", &FitBudget::activation)
      .def_readwrite("seed", &FitBudget::seed);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("net", &FitResult::net)
      .def_readonly("sup_error", &FitResult::sup_error)
      .def_readonly("iterations", &FitResult::iterations);

  py::class_<DemoConfig>(m, "DemoConfig")
      .def(py::init<>())
      .def_readwrite("N", &DemoConfig::N)
      .def_readwrite("eps", &DemoConfig::eps)
      .def_readwrite("reach_density", &DemoConfig::reach_density)
      .def_readwrite("lipschitz_density", &DemoConfig::lipschitz_density)
      .def_readwrite("trials", &DemoConfig::trials)
      .def_readwrite("fit", &DemoConfig::fit)
      .def_readwrite("seed", &DemoConfig::seed);

  py::class_<DemoReport>(m, "DemoReport")
      .def_readonly("reachable", &DemoReport::reachable)
      .def_readonly("inflated", &DemoReport::inflated)
      .def_readonly("fit_domain", &DemoReport::fit_domain)
      .def_readonly("schedule", &DemoReport::schedule)
      .def_readonly("target_sup", &DemoReport::target_sup)
      .def_readonly("fit", &DemoReport::fit)
      .def_readonly("lift", &DemoReport::lift)
      .def_readonly("certificate", &DemoReport::certificate)
      .def_readonly("passed", &DemoReport::pass);

  m.def(
      "theorem2_demo",
      [](py::function f, const BoxSet& kx, const BoxSet& ku, const DemoConfig& cfg) {
        const DiscreteMap map = wrap_map(std::move(f));
        py::gil_scoped_release release;
        return theorem2_demo(map, kx, ku, cfg);
      },
      py::arg("f"), py::arg("kx"), py::arg("ku"), py::arg("config") = DemoConfig{});

  // Files.
  m.def(
      "save_model",
      [](const std::string& path, const FlowModel& model) { write_json_file(path, to_json(model)); },
      py::arg("path"), py::arg("model"));
  m.def(
      "load_model", [](const std::string& path) { return flow_model_from_json(read_json_file(path)); },
      py::arg("path"));
  m.def(
      "save_lifted", [](const std::string& path, const LiftedRnn& lift) { write_json_file(path, to_json(lift)); },
      py::arg("path"), py::arg("lift"));
  m.def(
      "load_lifted", [](const std::string& path) { return lifted_from_json(read_json_file(path)); },
      py::arg("path"));
  m.def("write_dataset", &write_dataset, py::arg("path"), py::arg("data"));
  m.def("read_dataset", &read_dataset, py::arg("path"));
}
