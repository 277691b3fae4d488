#include "flowrnn/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowrnn/errors.hpp"

namespace flowrnn {

namespace {

Json vec_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json mat_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw ParseError(std::string("missing field '") + name + "'", 0);
  return j.at(name);
}

Vec vec_from(const Json& j, const char* name) {
  const Json& a = field(j, name);
  if (!a.is_array()) throw ParseError(std::string("field '") + name + "' must be an array", 0);
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ParseError(std::string("field '") + name + "' must hold numbers", 0);
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

// Row-major nested arrays; `cols` disambiguates matrices without rows.
Mat mat_from(const Json& j, const char* name, Eigen::Index cols) {
  const Json& a = field(j, name);
  if (!a.is_array()) throw ParseError(std::string("tensor '") + name + "' must be a nested array", 0);
  Mat m(static_cast<Eigen::Index>(a.size()), cols);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Json& row = a[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(std::string("tensor '") + name + "' row " + std::to_string(i) + " has the wrong length", 0);
    }
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_number()) throw ParseError(std::string("tensor '") + name + "' must hold numbers", 0);
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
    }
  }
  return m;
}

int int_from(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_number_integer()) throw ParseError(std::string("field '") + name + "' must be an integer", 0);
  return v.get<int>();
}

double double_from(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_number()) throw ParseError(std::string("field '") + name + "' must be a number", 0);
  return v.get<double>();
}

std::string string_from(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_string()) throw ParseError(std::string("field '") + name + "' must be a string", 0);
  return v.get<std::string>();
}

void expect_kind(const Json& j, const char* kind) {
  if (model_kind(j) != kind) throw ParseError(std::string("expected a model of kind '") + kind + "'", 0);
}

Json mlp_json(const MlpNet& net) {
  Json layers = Json::array();
  for (const auto& l : net.layers) layers.push_back({{"W", mat_json(l.W)}, {"b", vec_json(l.b)}});
  return {{"activation", to_string(net.activation)}, {"layers", layers}};
}

MlpNet mlp_from(const Json& j, Eigen::Index input_dim) {
  MlpNet net;
  net.activation = activation_from_string(string_from(j, "activation"));
  const Json& layers = field(j, "layers");
  if (!layers.is_array() || layers.empty()) throw ParseError("'layers' must be a non-empty array", 0);
  Eigen::Index cols = input_dim;
  for (const Json& l : layers) {
    DenseLayer layer{mat_from(l, "W", cols), vec_from(l, "b")};
    cols = layer.W.rows();
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

// Converts a nlohmann error raised while reading fields into a ParseError.
template <class Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError&) {
    throw;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed model: ") + e.what(), 0);
  } catch (const DimensionError& e) {
    throw ParseError(std::string("inconsistent tensor shapes: ") + e.what(), 0);
  }
}

}  // namespace

std::string to_string(ControlKind kind) {
  return kind == ControlKind::PiecewiseConstant ? "piecewise_constant" : "piecewise_linear";
}

ControlKind control_kind_from_string(const std::string& name) {
  if (name == "piecewise_constant") return ControlKind::PiecewiseConstant;
  if (name == "piecewise_linear") return ControlKind::PiecewiseLinear;
  throw ParseError("unknown control kind '" + name + "'", 0);
}

Json to_json(const ControlSequence& seq) {
  Json omegas = Json::array();
  for (const Vec& w : seq.omegas()) omegas.push_back(vec_json(w));
  return {{"spec",
           {{"kind", to_string(seq.spec().kind())}, {"delta", seq.spec().delta()}, {"d_u", seq.spec().input_dim()}}},
          {"omegas", omegas}};
}

ControlSequence control_from_json(const Json& j) {
  return guarded([&] {
    const Json& s = field(j, "spec");
    const ControlSpec spec(control_kind_from_string(string_from(s, "kind")), double_from(s, "delta"),
                           int_from(s, "d_u"));
    std::vector<Vec> omegas;
    for (const Json& w : field(j, "omegas")) {
      Json wrapper = {{"w", w}};
      omegas.push_back(vec_from(wrapper, "w"));
    }
    return ControlSequence(spec, std::move(omegas));
  });
}

Json to_json(const FeedforwardNet& net) {
  return {{"format", kModelFormat},
          {"kind", "feedforward"},
          {"activation", to_string(net.activation)},
          {"dims", {{"m", net.input_dim()}, {"p", net.hidden_dim()}, {"n", net.output_dim()}}},
          {"tensors", {{"A", mat_json(net.A)}, {"b", vec_json(net.b)}, {"C", mat_json(net.C)}, {"d", vec_json(net.d)}}}};
}

FeedforwardNet feedforward_from_json(const Json& j) {
  return guarded([&] {
    expect_kind(j, "feedforward");
    const Json& dims = field(j, "dims");
    const Json& t = field(j, "tensors");
    FeedforwardNet net;
    net.activation = activation_from_string(string_from(j, "activation"));
    net.A = mat_from(t, "A", int_from(dims, "m"));
    net.b = vec_from(t, "b");
    net.C = mat_from(t, "C", int_from(dims, "p"));
    net.d = vec_from(t, "d");
    net.validate();
    if (net.hidden_dim() != int_from(dims, "p") || net.output_dim() != int_from(dims, "n")) {
      throw ParseError("feedforward tensors disagree with declared dims", 0);
    }
    return net;
  });
}

Json to_json(const LiftedRnn& lift) {
  Json j = {{"format", kModelFormat},
            {"kind", "lifted_rnn"},
            {"activation", to_string(lift.cell.activation)},
            {"dims",
             {{"d_x", lift.state_dim},
              {"d_u", lift.input_dim},
              {"d_z", lift.lifted_dim()},
              {"p", lift.hidden_dim},
              {"rank", lift.rank}}},
            {"m_condition", lift.m_condition},
            {"tensors",
             {{"A", mat_json(lift.cell.A)},
              {"B", mat_json(lift.cell.B)},
              {"b", vec_json(lift.cell.b)},
              {"gamma_Q", mat_json(lift.pair.gamma.M)},
              {"gamma_offset", vec_json(lift.pair.gamma.offset)},
              {"beta_P", mat_json(lift.pair.beta.M)},
              {"beta_offset", vec_json(lift.pair.beta.offset)}}},
            {"source", to_json(lift.source)}};
  if (lift.warning) j["warning"] = *lift.warning;
  return j;
}

LiftedRnn lifted_from_json(const Json& j) {
  return guarded([&] {
    expect_kind(j, "lifted_rnn");
    const Json& dims = field(j, "dims");
    const Json& t = field(j, "tensors");
    LiftedRnn lift;
    lift.state_dim = int_from(dims, "d_x");
    lift.input_dim = int_from(dims, "d_u");
    lift.hidden_dim = int_from(dims, "p");
    lift.rank = int_from(dims, "rank");
    const int dz = int_from(dims, "d_z");
    lift.cell.activation = activation_from_string(string_from(j, "activation"));
    lift.cell.A = mat_from(t, "A", dz);
    lift.cell.B = mat_from(t, "B", lift.input_dim);
    lift.cell.b = vec_from(t, "b");
    lift.cell.validate();
    lift.pair.gamma = AffineMap{mat_from(t, "gamma_Q", dz), vec_from(t, "gamma_offset")};
    lift.pair.beta = AffineMap{mat_from(t, "beta_P", lift.state_dim), vec_from(t, "beta_offset")};
    lift.m_condition = double_from(j, "m_condition");
    lift.source = feedforward_from_json(field(j, "source"));
    if (j.contains("warning")) lift.warning = string_from(j, "warning");
    return lift;
  });
}

Json to_json(const FlowModel& model, const TrainState* state) {
  Json j = {{"format", kModelFormat},
            {"kind", "flow_model"},
            {"spec",
             {{"delta", model.spec.delta()},
              {"alpha", to_string(model.spec.kind())},
              {"d_u", model.spec.input_dim()},
              {"d_x", model.state_dim()},
              {"d_omega", model.spec.param_dim()},
              {"d_z", model.hidden_dim()}}},
            {"cell",
             {{"activation", to_string(model.cell.activation)},
              {"A", mat_json(model.cell.A)},
              {"B", mat_json(model.cell.B)},
              {"b", vec_json(model.cell.b)}}},
            {"beta", mlp_json(model.beta)},
            {"gamma", mlp_json(model.gamma)}};
  if (state != nullptr) {
    j["optimizer"] = {{"step", state->step},
                      {"epoch", state->epoch},
                      {"m", vec_json(state->moments.m)},
                      {"v", vec_json(state->moments.v)}};
  }
  return j;
}

FlowModel flow_model_from_json(const Json& j, TrainState* state) {
  return guarded([&] {
    expect_kind(j, "flow_model");
    const Json& s = field(j, "spec");
    const ControlSpec spec(control_kind_from_string(string_from(s, "alpha")), double_from(s, "delta"),
                           int_from(s, "d_u"));
    const int dx = int_from(s, "d_x");
    const int dz = int_from(s, "d_z");
    if (int_from(s, "d_omega") != spec.param_dim()) throw ParseError("d_omega disagrees with the control kind", 0);
    const Json& c = field(j, "cell");
    RnnCell cell;
    cell.activation = activation_from_string(string_from(c, "activation"));
    cell.A = mat_from(c, "A", dz);
    cell.B = mat_from(c, "B", 1 + spec.param_dim());
    cell.b = vec_from(c, "b");
    FlowModel model{mlp_from(field(j, "beta"), dx), std::move(cell), mlp_from(field(j, "gamma"), dz), spec};
    model.validate();
    if (state != nullptr) {
      *state = TrainState{};
      if (j.contains("optimizer")) {
        const Json& o = j.at("optimizer");
        state->step = field(o, "step").get<long>();
        state->epoch = int_from(o, "epoch");
        state->moments.m = vec_from(o, "m");
        state->moments.v = vec_from(o, "v");
      }
    }
    return model;
  });
}

Json to_json(const TrajectoryRecord& rec) {
  Json samples = Json::array();
  for (const auto& s : rec.samples) samples.push_back({{"t", s.t}, {"y", vec_json(s.y)}});
  return {{"format", kDatasetFormat}, {"x0", vec_json(rec.x0)}, {"control", to_json(rec.seq)}, {"samples", samples}};
}

TrajectoryRecord record_from_json(const Json& j) {
  return guarded([&] {
    if (string_from(j, "format") != kDatasetFormat) throw ParseError("unsupported dataset format", 0);
    TrajectoryRecord rec{vec_from(j, "x0"), control_from_json(field(j, "control")), {}};
    for (const Json& s : field(j, "samples")) rec.samples.push_back({double_from(s, "t"), vec_from(s, "y")});
    return rec;
  });
}

std::string model_kind(const Json& j) {
  if (!j.is_object()) throw ParseError("model file must hold a JSON object", 0);
  const std::string format = string_from(j, "format");
  if (format != kModelFormat) throw ParseError("unsupported model format '" + format + "'", 0);
  return string_from(j, "kind");
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t end = std::min(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + end, '\n'));
    throw ParseError("'" + path + "': " + e.what(), line);
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& rec : data.records) out << to_json(rec).dump() << '\n';
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      data.records.push_back(record_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      throw ParseError("'" + path + "': " + e.what(), lineno);
    } catch (const Error& e) {
      throw ParseError("'" + path + "': " + e.what(), lineno);
    }
  }
  data.validate();
  return data;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
}

}  // namespace flowrnn
