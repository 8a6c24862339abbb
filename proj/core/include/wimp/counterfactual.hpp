#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wimp/geometry.hpp"
#include "wimp/lane_graph.hpp"
#include "wimp/model.hpp"
#include "wimp/scenario.hpp"

namespace wimp {

struct ReplacePolyline {
  Polyline2 polyline;
  friend bool operator==(const ReplacePolyline&, const ReplacePolyline&) = default;
};
struct InjectActor {
  std::string id;
  Trajectory trajectory;
  friend bool operator==(const InjectActor&, const InjectActor&) = default;
};
struct RemoveActor {
  std::string id;
  friend bool operator==(const RemoveActor&, const RemoveActor&) = default;
};
// Freezes the actor at observed[at_index] from that index onward (future too).
struct HaltActor {
  std::string id;
  std::size_t at_index = 0;
  friend bool operator==(const HaltActor&, const HaltActor&) = default;
};

using SceneEdit = std::variant<ReplacePolyline, InjectActor, RemoveActor, HaltActor>;

// Applies actor edits left to right. ReplacePolyline entries leave the scenario
// unchanged; see polyline_override().
Scenario apply_edits(const Scenario& scenario, std::span<const SceneEdit> edits);

// Last ReplacePolyline in the list, if any.
std::optional<Polyline2> polyline_override(std::span<const SceneEdit> edits);

struct TrajectoryDelta {
  std::size_t mixture = 0;
  double endpoint_displacement = 0.0;
  double baseline_vf = 0.0;
  double edited_vf = 0.0;
  double delta_vf = 0.0;
};

struct CounterfactualResult {
  PredictionSet baseline;
  PredictionSet edited;
  std::vector<TrajectoryDelta> deltas;
};

// Speed over the final predicted step (100 ms).
double terminal_speed(std::span<const Point2> trajectory, double dt = 0.1);

// Forward on the top proposals, then the k best-ranked mixtures in rank order.
PredictionSet ranked_forward(const WimpModel& model, const Scenario& scenario,
                             const LaneGraph& graph, std::size_t k,
                             const std::optional<Polyline2>& focal_polyline = std::nullopt,
                             const ProposalConfig& cfg = {});

// Baseline on the original scene, edited pass on apply_edits(). The focal
// polyline of the edited pass is `override` if given, else the last
// ReplacePolyline edit.
CounterfactualResult counterfactual_predict(const WimpModel& model, const Scenario& scenario,
                                            const LaneGraph& graph,
                                            std::span<const SceneEdit> edits,
                                            const std::optional<Polyline2>& override_polyline,
                                            std::size_t k, const ProposalConfig& cfg = {});

}  // namespace wimp
