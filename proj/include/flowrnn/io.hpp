#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "flowrnn/flow_model.hpp"
#include "flowrnn/lift.hpp"
#include "flowrnn/training.hpp"

namespace flowrnn {

using Json = nlohmann::json;

inline constexpr const char* kModelFormat = "flowrnn-v1";
inline constexpr const char* kDatasetFormat = "flowrnn-ds-v1";

std::string to_string(ControlKind kind);
ControlKind control_kind_from_string(const std::string& name);

Json to_json(const ControlSequence& seq);
ControlSequence control_from_json(const Json& j);

Json to_json(const FeedforwardNet& net);
FeedforwardNet feedforward_from_json(const Json& j);

Json to_json(const LiftedRnn& lift);
LiftedRnn lifted_from_json(const Json& j);

/// Flow model file; the optimiser state is embedded when given.
Json to_json(const FlowModel& model, const TrainState* state = nullptr);
FlowModel flow_model_from_json(const Json& j, TrainState* state = nullptr);

Json to_json(const TrajectoryRecord& rec);
TrajectoryRecord record_from_json(const Json& j);

/// The "kind" field of a model file, after checking its format tag.
std::string model_kind(const Json& j);

/// Parses a JSON file; syntax errors carry the offending line.
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

/// One trajectory record per line.
void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

/// %.17g: exact round trip, stable text for diffing.
std::string format_double(double v);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace flowrnn
