#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "wimp/counterfactual.hpp"
#include "wimp/error.hpp"
#include "wimp/evaluation.hpp"
#include "wimp/geometry.hpp"
#include "wimp/lane_graph.hpp"
#include "wimp/model.hpp"
#include "wimp/scenario.hpp"
#include "wimp/training.hpp"

namespace wimp {

using nlohmann::json;

json points_to_json(std::span<const Point2> pts);
// `pointer` prefixes schema-violation messages.
Trajectory points_from_json(const json& j, const std::string& pointer);

json scenario_to_json(const Scenario& s);
// Unknown fields are reported through `warnings` (when given) and ignored.
Scenario scenario_from_json(const json& j, std::vector<std::string>* warnings = nullptr);

json lane_graph_to_json(const LaneGraph& g);
LaneGraph lane_graph_from_json(const json& j, std::vector<std::string>* warnings = nullptr);

json candidate_to_json(const CandidatePolyline& c);
json model_config_to_json(const ModelConfig& c);
json prediction_set_to_json(const PredictionSet& p);

json scene_edit_to_json(const SceneEdit& e);
SceneEdit scene_edit_from_json(const json& j, const std::string& pointer);
std::vector<SceneEdit> scene_edits_from_json(const json& j, const std::string& pointer);

json counterfactual_to_json(const CounterfactualResult& r);
json metrics_to_json(const MetricsReport& m);
json epoch_log_to_json(const EpochLog& e);

json error_to_json(const std::exception& e);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const json& j, const std::filesystem::path& path);

}  // namespace wimp
